#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "namerec/labels.hpp"

namespace namerec {

struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the source text, [begin, end)
  std::size_t end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

/// Splits on whitespace; punctuation becomes standalone tokens except hyphens/apostrophes between
/// word characters and a dot directly after a lone uppercase letter ("J.").
std::vector<Token> basic_tokenize(std::string_view text);

/// True for tokens consisting of a single punctuation code point.
bool is_punctuation_token(std::string_view token);

/// Subword vocabulary. Continuation pieces carry a "##" prefix. Piece ids are positions in the
/// ordered piece list; the unknown piece is id 0.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws std::invalid_argument if a piece is empty or repeated.
  Vocabulary(std::string unknown_piece, std::vector<std::string> pieces);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Whole-word entries by descending frequency (up to `max_words`) plus every character seen,
  /// as both an initial and a "##" continuation piece, so that any training word segments.
  static Vocabulary build(std::span<const std::string> words, std::size_t max_words,
                          std::size_t min_count = 1, std::string unknown_piece = "[UNK]");

  bool contains(std::string_view piece) const;
  /// Id of the piece, or the unknown id.
  int id(std::string_view piece) const;
  const std::string& piece(int id) const { return pieces_.at(id); }
  const std::string& unknown_piece() const { return pieces_.front(); }
  int unknown_id() const { return 0; }
  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
};

/// Greedy longest-prefix segmentation; the whole token maps to the unknown piece when some
/// position has no matching prefix.
std::vector<std::string> wordpiece(std::string_view token, const Vocabulary& vocab);

struct SubToken {
  std::string piece;
  int parent = 0;  // index of the source token
};

struct TokenizedDocument {
  std::vector<Token> tokens;
  std::vector<SubToken> subtokens;

  std::vector<int> parents() const;
};

TokenizedDocument tokenize_document(std::string_view text, const Vocabulary& vocab);
TokenizedDocument tokenize_tokens(std::vector<Token> tokens, const Vocabulary& vocab);

/// Each sub-token takes its parent token's label.
template <typename Label>
std::vector<Label> propagate_labels(std::span<const Label> token_labels, std::span<const int> parents) {
  std::vector<Label> out;
  out.reserve(parents.size());
  for (int p : parents) out.push_back(token_labels[static_cast<std::size_t>(p)]);
  return out;
}

/// Majority vote of sub-token class predictions per parent token, ties broken uniformly at random
/// from a generator seeded with `seed`. Tokens with no sub-token get kOutsideId.
std::vector<int> resolve_predictions(std::span<const int> subtoken_predictions,
                                     std::span<const int> parents, std::size_t token_count,
                                     std::uint64_t seed);

}  // namespace namerec
