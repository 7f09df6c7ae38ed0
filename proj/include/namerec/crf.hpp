#pragma once

// Linear-chain CRF over C classes. Transitions form a (C + 2) x (C + 2) matrix T(from, to) whose
// index C is the virtual start state and C + 1 the virtual stop state:
//   score(y) = T(start, y_0) + sum_t E(t, y_t) + sum_{t>0} T(y_{t-1}, y_t) + T(y_{n-1}, stop).

#include <span>
#include <vector>

#include "namerec/layers.hpp"
#include "namerec/tape.hpp"

namespace namerec::crf {

using nn::Matrix;

inline Eigen::Index start_state(Eigen::Index classes) { return classes; }
inline Eigen::Index stop_state(Eigen::Index classes) { return classes + 1; }

/// Throws std::invalid_argument for shape errors and std::out_of_range for bad labels.
double sequence_score(const Matrix& emissions, const Matrix& transitions, std::span<const int> labels);
double log_partition(const Matrix& emissions, const Matrix& transitions);
double log_likelihood(const Matrix& emissions, const Matrix& transitions, std::span<const int> labels);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};
/// Ties resolve to the lowest class index.
ViterbiResult viterbi_decode(const Matrix& emissions, const Matrix& transitions);

struct NllGradient {
  double nll = 0.0;
  Matrix d_emissions;    // marginals - onehot(gold)
  Matrix d_transitions;  // expected pair counts - gold pair counts
};
/// -log p(labels) and its gradient via forward-backward marginals.
NllGradient nll_gradient(const Matrix& emissions, const Matrix& transitions, std::span<const int> labels);

/// Per-position class marginals p(y_t = c).
Matrix marginals(const Matrix& emissions, const Matrix& transitions);

/// Tape op for -log p(labels | emissions, transitions); 1 x 1.
nn::Var nll(nn::Var emissions, nn::Var transitions, std::span<const int> labels);

/// Emission projection plus transition matrix.
struct CrfHead {
  nn::Linear emission;
  nn::Parameter* transitions = nullptr;
  Eigen::Index classes = 0;

  static CrfHead create(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index classes,
                        std::mt19937_64& rng);
  nn::Var emissions(nn::Tape& t, nn::Var features) const { return emission(t, features); }
  nn::Var loss(nn::Tape& t, nn::Var features, std::span<const int> labels) const;
  ViterbiResult decode(nn::Tape& t, nn::Var features) const;
};

}  // namespace namerec::crf
