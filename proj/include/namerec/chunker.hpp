#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "namerec/tokenizer.hpp"

namespace namerec {

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kContinuationToken = "$$";
inline constexpr std::string_view kSepToken = "[SEP]";

class ChunkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sentence end positions (exclusive token indices, ascending, last == tokens.size()).
/// Boundaries follow standalone ".", "!", "?" tokens and blank lines in `text`.
std::vector<std::size_t> split_sentences(std::span<const Token> tokens, std::string_view text = {});

/// A document's sub-token stream with sentence ends expressed in piece indices.
struct PieceStream {
  std::vector<std::string> pieces;
  std::vector<std::size_t> sentence_ends;  // exclusive piece indices, ascending, last == pieces.size()
};

/// Maps token-level sentence ends onto the sub-token stream of `doc`.
PieceStream to_piece_stream(const TokenizedDocument& doc, std::span<const std::size_t> token_sentence_ends);

struct FixedOverlap {
  double ratio = 0.5;
};

struct AdaptiveOverlap {
  std::vector<std::size_t> thresholds;  // strictly ascending content-piece lengths
  std::vector<double> ratios;           // same length, each in [0, 0.5]
};

struct OverlapPolicy {
  std::variant<FixedOverlap, AdaptiveOverlap> mode = FixedOverlap{};

  static OverlapPolicy fixed(double ratio) { return {FixedOverlap{ratio}}; }
  /// Length <= capacity: 0; <= 2x: 0.1; <= 3x: 0.2; <= 4x: 0.3; <= 6x: 0.4; longer: 0.5.
  static OverlapPolicy adaptive_default(std::size_t capacity);

  bool is_adaptive() const { return std::holds_alternative<AdaptiveOverlap>(mode); }
  /// Throws std::invalid_argument when the policy breaks its invariants.
  void validate() const;
};

/// Ratio of the first threshold >= doc_length, else the last ratio.
double select_ratio(std::size_t doc_length, const AdaptiveOverlap& policy);

/// floor(ratio * capacity).
std::size_t effective_overlap(double ratio, std::size_t capacity);

struct Chunk {
  std::vector<std::string> pieces;  // including specials
  std::vector<int> source;          // content index per piece, -1 for specials
  std::size_t content_begin = 0;    // [content_begin, content_end) of the document stream
  std::size_t content_end = 0;
  std::size_t overlap_prev = 0;

  std::size_t content_size() const { return content_end - content_begin; }
  /// Positions (into `pieces`) of content pieces, in order.
  std::vector<std::size_t> content_positions() const;
};

struct ChunkedDocument {
  std::string doc_id;
  std::vector<Chunk> chunks;
  std::size_t capacity = 0;
  std::size_t effective_k = 0;
  double ratio = 0.0;
};

/// Overlapped chunking: chunks are filled greedily by sentences (oversized sentences are broken at
/// the capacity boundary) and adjacent chunks share exactly effective_k content pieces. Throws
/// ChunkError when the capacity cannot fit the specials plus more than effective_k content pieces.
ChunkedDocument chunk_document(const PieceStream& doc, std::size_t capacity, const OverlapPolicy& policy,
                               std::string doc_id = {});

/// Drops specials and each chunk's leading overlap; validates chunk metadata on the way.
std::vector<std::string> reassemble(const ChunkedDocument& cd);

/// Document-level shuffle. Elements are moved as units, so per-document chunk order is untouched.
template <typename Doc>
std::vector<Doc> shuffle_dataset(std::vector<Doc> docs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(docs.begin(), docs.end(), rng);
  return docs;
}

}  // namespace namerec
