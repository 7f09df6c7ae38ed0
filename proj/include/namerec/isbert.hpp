#pragma once

// Inter-sentence encoder over overlapped chunks. A document's sub-token stream is cut into chunks
// that share `effective_k` content pieces with their neighbours. One hop runs a forward sweep, in
// which each chunk's leading overlap inputs are replaced by the previous chunk's contextual
// outputs, and then a reverse sweep, in which each chunk's trailing overlap is replaced by the
// next chunk's fresh outputs. Hop t + 1 reads the sum of the outputs of hops t and t - 1, where
// hop 0's output is the context-free embedding. A linear layer maps the final blocks to the 19
// early-fused classes.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "namerec/chunker.hpp"
#include "namerec/corpus.hpp"
#include "namerec/labels.hpp"
#include "namerec/layers.hpp"
#include "namerec/tokenizer.hpp"

namespace namerec {

/// Which copy of a piece repeated in two chunks supplies its prediction.
enum class OverlapOwner : std::uint8_t { First, Last, Average };

std::string_view to_string(OverlapOwner o);
std::optional<OverlapOwner> parse_owner(std::string_view s);

struct IsConfig {
  nn::TransformerConfig encoder;  // encoder.max_len is forced to `capacity`
  std::size_t capacity = 64;      // pieces per chunk, specials included
  OverlapPolicy policy = OverlapPolicy::fixed(0.5);
  int hops = 2;
  OverlapOwner owner = OverlapOwner::Last;
  double dropout = 0.1;  // on the context-free embeddings, training only

  /// Throws std::invalid_argument on a broken invariant.
  void validate() const;
};

struct IsTrainConfig {
  int max_epochs = 30;
  int patience = 10;
  int batch_docs = 1;  // documents per optimiser step
  double lr = 1e-3;
  double lr_decay = 0.05;  // lr at epoch e is lr * (1 - lr_decay)^(e - 1)
  double clip = 1.0;       // joint gradient norm bound; 0 disables
  std::uint64_t seed = 1;
  std::size_t max_words = 2000;  // whole-word pieces kept in the vocabulary
  std::size_t min_word_count = 2;
};

/// A document cut into chunks with everything the encoder needs.
struct PreparedDocument {
  ChunkedDocument chunks;
  std::vector<std::vector<int>> ids;       // per chunk, per piece
  std::vector<nn::Matrix> cases;           // per chunk, pieces x 3
  std::vector<std::vector<int>> targets;   // per chunk, early class per piece, -1 for specials
  std::vector<int> parents;                // token index per stream piece
  std::size_t token_count = 0;
};

struct IsPrediction {
  std::vector<TokenLabel> labels;
  std::vector<NameSpan> spans;
  std::vector<int> piece_classes;  // one per stream piece after de-duplication
};

/// Piece vocabulary over the words of `docs`.
Vocabulary build_piece_vocab(const std::vector<LabeledDocument>& docs, std::size_t max_words, std::size_t min_count);

class IsBert {
 public:
  IsBert(const IsConfig& cfg, Vocabulary pieces, std::uint64_t seed);

  /// Tokenises, chunks and (when `doc.labels` is non-empty) attaches piece targets.
  PreparedDocument prepare(const LabeledDocument& doc) const;

  /// Context-free blocks E: piece embedding concatenated with the case bits, one block per chunk.
  std::vector<nn::Var> embed(nn::Tape& t, const PreparedDocument& d, std::mt19937_64* rng = nullptr) const;

  /// Sequential sweep i = 1..M; chunk i's first k content inputs come from chunk i - 1's last k
  /// content outputs. Throws ChunkError when a chunk's overlap metadata disagrees with k.
  std::vector<nn::Var> forward_pass(nn::Tape& t, const std::vector<nn::Var>& blocks, const ChunkedDocument& cd,
                                    std::size_t k) const;
  /// Reverse sweep i = M..1 over forward blocks; the last block is passed through unchanged.
  std::vector<nn::Var> backward_pass(nn::Tape& t, const std::vector<nn::Var>& forward, const ChunkedDocument& cd,
                                     std::size_t k) const;
  /// `hops` forward/backward rounds with the residual input rule; returns the final blocks.
  std::vector<nn::Var> multi_hop(nn::Tape& t, const std::vector<nn::Var>& E, const ChunkedDocument& cd,
                                 int hops) const;

  /// Per-chunk logits over the early-fused classes.
  std::vector<nn::Var> logits(nn::Tape& t, const PreparedDocument& d, std::mt19937_64* rng = nullptr) const;

  /// Summed cross-entropy over content pieces of every chunk. Throws std::invalid_argument
  /// when the document has no targets.
  nn::Var loss(nn::Tape& t, const PreparedDocument& d, std::mt19937_64* rng = nullptr) const;

  IsPrediction predict(const PreparedDocument& d) const;
  IsPrediction predict(const LabeledDocument& doc) const { return predict(prepare(doc)); }

  const IsConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const LabelSpace& label_space() const { return space_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  void save(const std::filesystem::path& path) const;
  static IsBert load(const std::filesystem::path& path);

 private:
  nn::Var encode(nn::Tape& t, nn::Var x) const;

  IsConfig cfg_;
  Vocabulary vocab_;
  LabelSpace space_;
  nn::ParameterSet params_;
  nn::Parameter* table_ = nullptr;
  nn::TransformerEncoder encoder_;
  nn::Linear out_;
};

struct IsMetrics {
  int epoch = 0;
  std::string split;
  double token_p = 0, token_r = 0, token_f = 0;  // span-only token detection
  double fine_f = 0;                             // exact fused class
  double name_p = 0, name_r = 0, name_f = 0;
  double accuracy = 0;  // share of tokens with the exact fused class, the early-stopping criterion
  double loss = 0;
};

std::string metrics_csv(const std::vector<IsMetrics>& log);

/// Token decisions of one evaluation, kept for paired significance tests.
struct IsEvaluation {
  IsMetrics metrics;
  std::vector<bool> token_correct;  // exact fused class per token, documents concatenated
};

IsEvaluation evaluate_isbert(const IsBert& model, const std::vector<PreparedDocument>& docs,
                             const std::vector<LabeledDocument>& gold);

struct IsTrainResult {
  std::vector<IsMetrics> log;
  int best_epoch = 0;
  double best_accuracy = 0;
};

/// Adam with per-epoch decay, document-level shuffling and early stopping on dev accuracy. The
/// model ends holding the best-dev parameters. Throws std::invalid_argument on empty splits.
IsTrainResult train_isbert(IsBert& model, const std::vector<LabeledDocument>& train,
                           const std::vector<LabeledDocument>& dev, const IsTrainConfig& cfg,
                           const std::function<void(const IsMetrics&)>& on_epoch = {});

/// Key = value text shared by the CLI; unknown keys throw std::invalid_argument.
void parse_isbert_config(const std::string& text, IsConfig& model, IsTrainConfig& train);

}  // namespace namerec
