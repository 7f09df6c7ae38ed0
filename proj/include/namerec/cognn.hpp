#pragma once

// Two coupled BiLSTM-CRF taggers. The name-token network labels BIE spans, the name-form network
// labels one form axis (FML or FI). A shared attention over positions rescales both hidden
// matrices and per-network gates decide how much of the rescaled view each network accepts. The
// joint loss is the sum of both CRF negative log-likelihoods.
//
// With `in_network` off the model degenerates to a single BiLSTM-CRF over BIE labels, the
// no-fusion baseline trained by the same loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "namerec/corpus.hpp"
#include "namerec/crf.hpp"
#include "namerec/labels.hpp"
#include "namerec/layers.hpp"
#include "namerec/tokenizer.hpp"

namespace namerec {

/// One training or evaluation sentence.
struct Sequence {
  std::vector<std::string> words;
  std::vector<TokenLabel> labels;  // empty when unlabelled
};

/// Splits a labelled document at its sentence ends.
std::vector<Sequence> sentences_of(const LabeledDocument& doc);

/// Word-level vocabulary: words seen at least `min_count` times; the rest map to [UNK].
Vocabulary build_word_vocab(const std::vector<Sequence>& data, std::size_t min_count);

struct CogNNConfig {
  int embed_dim = 50;
  int hidden = 100;
  int attention_dim = 0;  // k; 0 means the encoder width 2 * hidden
  double dropout = 0.5;
  Axis form_axis = Axis::Fml;
  bool separate_maps = false;
  bool in_network = true;
  bool shared_embedding = false;  // one table for both networks instead of two equal copies
};

/// Key = value text, one pair per line, '#' comments. Unknown keys throw std::invalid_argument.
struct TrainConfig {
  int max_epochs = 100;
  int patience = 10;
  int batch_size = 32;
  double lr = 0.01;
  double lr_decay = 0.05;  // lr at epoch e is lr * (1 - lr_decay)^e
  double clip = 5.0;       // joint gradient norm bound; 0 disables
  std::uint64_t seed = 1;
  std::size_t min_word_count = 2;
};

/// Reads the keys of both configs from key = value text. Keys not named here throw.
void parse_config_text(const std::string& text, CogNNConfig& model, TrainConfig& train);
std::string config_text(const CogNNConfig& model, const TrainConfig& train);

struct CogNNPrediction {
  std::vector<TokenLabel> labels;
  std::vector<NameSpan> spans;
  std::vector<int> bie_path;
  std::vector<int> form_path;  // empty for the baseline
};

class CogNN {
 public:
  CogNN(const CogNNConfig& cfg, Vocabulary words, std::uint64_t seed);

  struct Forward {
    nn::Var F;       // name-token network features
    nn::Var F_form;  // name-form network features (invalid for the baseline)
    nn::CoattentionOutput attention;
  };
  /// Dropout is applied only when `rng` is given.
  Forward forward(nn::Tape& t, const std::vector<std::string>& words, std::mt19937_64* rng = nullptr) const;

  struct Losses {
    nn::Var token;
    nn::Var form;  // invalid for the baseline
    nn::Var total;
  };
  /// Throws std::invalid_argument when the sequence has no gold labels.
  Losses loss(nn::Tape& t, const Sequence& s, std::mt19937_64* rng = nullptr) const;

  CogNNPrediction predict(const std::vector<std::string>& words) const;

  /// Class ids of a gold sequence in the BIE view and the form view.
  std::vector<int> bie_targets(const std::vector<TokenLabel>& labels) const;
  std::vector<int> form_targets(const std::vector<TokenLabel>& labels) const;

  const CogNNConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Each network's encoder and embedding parameters, for gradient-flow checks.
  std::vector<nn::Parameter*> token_network_encoder();
  std::vector<nn::Parameter*> form_network_encoder();
  const crf::CrfHead& token_head() const { return crf_y_; }
  const crf::CrfHead& form_head() const { return crf_f_; }
  nn::Coattention& coattention() { return coatt_; }

  void save(const std::filesystem::path& path) const;
  static CogNN load(const std::filesystem::path& path);

 private:
  std::vector<int> ids(const std::vector<std::string>& words) const;

  CogNNConfig cfg_;
  Vocabulary vocab_;
  nn::ParameterSet params_;
  nn::Parameter* emb_y_ = nullptr;
  nn::Parameter* emb_f_ = nullptr;
  nn::BiLstm enc_y_, enc_f_;
  nn::Coattention coatt_;
  nn::GatedFusion fuse_y_, fuse_f_;
  crf::CrfHead crf_y_, crf_f_;
  LabelSpace bie_space_, form_space_;
};

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double token_p = 0, token_r = 0, token_f = 0, name_f = 0;
  double accuracy = 0;  // early-stopping criterion
  double loss = 0;
};

/// "epoch,split,tokenP,tokenR,tokenF,nameF" rows with a header line.
std::string metrics_csv(const std::vector<EpochMetrics>& log);

struct TrainResult {
  std::vector<EpochMetrics> log;
  int best_epoch = 0;
  double best_accuracy = 0;
};

/// Token scores use name-token detection (span-only) over sentences; accuracy is the share of
/// tokens whose BIE label is right, so both model variants stop on the same criterion.
EpochMetrics evaluate_cognn(const CogNN& model, const std::vector<Sequence>& data);

/// Mini-batch SGD with per-epoch decay, gradient clipping and early stopping on dev accuracy. The
/// model ends holding the best-dev parameters. Throws std::invalid_argument on empty splits.
TrainResult train_cognn(CogNN& model, const std::vector<Sequence>& train, const std::vector<Sequence>& dev,
                        const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace namerec
