#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "namerec/tape.hpp"

namespace namerec::nn {

/// (first alphabetic char upper, all alphabetic chars upper and at least one, any char upper).
std::array<double, 3> case_vector(std::string_view token);
/// n x 3 matrix of case_vector rows.
Matrix case_matrix(std::span<const std::string> tokens);

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng);
/// Glorot-uniform initialisation.
Matrix xavier_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Row i = table[ids[i]] concatenated with case_bits row i.
Var embed(Tape& t, Parameter& table, std::span<const int> ids, const Matrix& case_bits);

struct Linear {
  Parameter* W = nullptr;  // in x out
  Parameter* b = nullptr;  // 1 x out

  static Linear create(ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                       std::mt19937_64& rng);
  Var operator()(Tape& t, Var x) const;
};

struct BiLstm {
  Parameter* Wf = nullptr;
  Parameter* Uf = nullptr;
  Parameter* bf = nullptr;
  Parameter* Wb = nullptr;
  Parameter* Ub = nullptr;
  Parameter* bb = nullptr;
  Eigen::Index hidden = 0;

  /// Forget-gate biases start at 1.
  static BiLstm create(ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
                       std::mt19937_64& rng);
  /// n x 2*hidden: forward state in the left half, backward state in the right half.
  Var operator()(Tape& t, Var x) const;
};

struct CoattentionOutput {
  Var weights;  // n x 1, sums to 1
  Var H_tilde;
  Var H2_tilde;
  Var weights2;  // equals `weights` unless two attention maps are configured
};

/// P = tanh([H W_h, H' W_h' + b_h']) (n x 2k); A = softmax over positions of P W_p + b_p.
/// With `separate_maps`, H' is rescaled by a second map computed with its own parameters.
struct Coattention {
  Parameter* Wh = nullptr;   // d x k
  Parameter* Wh2 = nullptr;  // d' x k
  Parameter* bh2 = nullptr;  // 1 x k
  Parameter* Wp = nullptr;   // 2k x 1
  Parameter* bp = nullptr;   // 1 x 1
  bool separate_maps = false;
  Parameter* Wh_b = nullptr;
  Parameter* Wh2_b = nullptr;
  Parameter* bh2_b = nullptr;
  Parameter* Wp_b = nullptr;
  Parameter* bp_b = nullptr;

  static Coattention create(ParameterSet& ps, const std::string& prefix, Eigen::Index d, Eigen::Index d2,
                            Eigen::Index k, std::mt19937_64& rng, bool separate_maps = false);
  CoattentionOutput operator()(Tape& t, Var H, Var H2) const;
};

/// f = g * tanh(H W_h + b_h) + (1 - g) * tanh(H~ W_t + b_t), g = sigmoid([.., ..] W_g).
struct GatedFusion {
  Parameter* Wt = nullptr;
  Parameter* bt = nullptr;
  Parameter* Wh = nullptr;
  Parameter* bh = nullptr;
  Parameter* Wg = nullptr;  // 2d x d

  static GatedFusion create(ParameterSet& ps, const std::string& prefix, Eigen::Index d, std::mt19937_64& rng);
  Var operator()(Tape& t, Var H, Var H_tilde) const;
};

struct TransformerConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int ff_mult = 4;
  int max_len = 64;
};

/// Post-layer-norm transformer encoder with GELU feed-forward and sinusoidal positions added to
/// the input.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterSet& ps, const std::string& prefix, const TransformerConfig& cfg, std::mt19937_64& rng);

  const TransformerConfig& config() const { return cfg_; }
  /// Throws std::invalid_argument when x has more than max_len rows or the wrong width.
  Var operator()(Tape& t, Var x) const;
  /// Same, also returning every attention matrix (layer-major, then head).
  Var encode_with_attention(Tape& t, Var x, std::vector<Matrix>* attention) const;

 private:
  struct Layer {
    Linear q, k, v, o, ff1, ff2;
    Parameter* ln1_g = nullptr;
    Parameter* ln1_b = nullptr;
    Parameter* ln2_g = nullptr;
    Parameter* ln2_b = nullptr;
  };
  TransformerConfig cfg_;
  std::vector<Layer> layers_;
  Matrix positions_;
};

Matrix sinusoidal_positions(int max_len, int d);

}  // namespace namerec::nn
