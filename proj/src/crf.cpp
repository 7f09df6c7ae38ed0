#include "namerec/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace namerec::crf {

namespace {

void check_shapes(const Matrix& E, const Matrix& T) {
  const Eigen::Index C = E.cols();
  if (C < 1) throw std::invalid_argument("crf: no classes");
  if (T.rows() != C + 2 || T.cols() != C + 2) throw std::invalid_argument("crf: transitions must be (C+2) x (C+2)");
}

void check_labels(const Matrix& E, std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != E.rows()) throw std::invalid_argument("crf: label count differs from length");
  for (int v : y)
    if (v < 0 || v >= E.cols()) throw std::out_of_range("crf: label out of range");
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// alpha(t, c): log-sum of scores of prefixes ending at (t, c), start transition included.
Matrix forward_scores(const Matrix& E, const Matrix& T) {
  const Eigen::Index n = E.rows(), C = E.cols();
  Matrix alpha(n, C);
  if (n == 0) return alpha;
  alpha.row(0) = T.row(start_state(C)).head(C) + E.row(0);
  Eigen::RowVectorXd tmp(C);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index c = 0; c < C; ++c) {
      for (Eigen::Index p = 0; p < C; ++p) tmp(p) = alpha(t - 1, p) + T(p, c);
      alpha(t, c) = log_sum_exp(tmp) + E(t, c);
    }
  }
  return alpha;
}

// beta(t, c): log-sum of suffix scores after (t, c), stop transition included.
Matrix backward_scores(const Matrix& E, const Matrix& T) {
  const Eigen::Index n = E.rows(), C = E.cols();
  Matrix beta(n, C);
  if (n == 0) return beta;
  beta.row(n - 1) = T.col(stop_state(C)).head(C).transpose();
  Eigen::RowVectorXd tmp(C);
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    for (Eigen::Index c = 0; c < C; ++c) {
      for (Eigen::Index q = 0; q < C; ++q) tmp(q) = T(c, q) + E(t + 1, q) + beta(t + 1, q);
      beta(t, c) = log_sum_exp(tmp);
    }
  }
  return beta;
}

double partition_from_alpha(const Matrix& alpha, const Matrix& T) {
  const Eigen::Index n = alpha.rows(), C = alpha.cols();
  if (n == 0) return T(start_state(C), stop_state(C));
  Eigen::RowVectorXd last = alpha.row(n - 1) + T.col(stop_state(C)).head(C).transpose();
  return log_sum_exp(last);
}

}  // namespace

double sequence_score(const Matrix& E, const Matrix& T, std::span<const int> y) {
  check_shapes(E, T);
  check_labels(E, y);
  const Eigen::Index C = E.cols();
  if (y.empty()) return T(start_state(C), stop_state(C));
  double s = T(start_state(C), y[0]);
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += E(static_cast<Eigen::Index>(t), y[t]);
    if (t > 0) s += T(y[t - 1], y[t]);
  }
  return s + T(y.back(), stop_state(C));
}

double log_partition(const Matrix& E, const Matrix& T) {
  check_shapes(E, T);
  return partition_from_alpha(forward_scores(E, T), T);
}

double log_likelihood(const Matrix& E, const Matrix& T, std::span<const int> y) {
  return sequence_score(E, T, y) - log_partition(E, T);
}

ViterbiResult viterbi_decode(const Matrix& E, const Matrix& T) {
  check_shapes(E, T);
  const Eigen::Index n = E.rows(), C = E.cols();
  ViterbiResult r;
  if (n == 0) {
    r.score = T(start_state(C), stop_state(C));
    return r;
  }
  Matrix delta(n, C);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(n, C);
  delta.row(0) = T.row(start_state(C)).head(C) + E.row(0);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index c = 0; c < C; ++c) {
      int best = 0;
      double best_score = delta(t - 1, 0) + T(0, c);
      for (Eigen::Index p = 1; p < C; ++p) {
        double s = delta(t - 1, p) + T(p, c);
        if (s > best_score) {
          best_score = s;
          best = static_cast<int>(p);
        }
      }
      delta(t, c) = best_score + E(t, c);
      back(t, c) = best;
    }
  }
  int best = 0;
  double best_score = delta(n - 1, 0) + T(0, stop_state(C));
  for (Eigen::Index c = 1; c < C; ++c) {
    double s = delta(n - 1, c) + T(c, stop_state(C));
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c);
    }
  }
  r.score = best_score;
  r.path.assign(static_cast<std::size_t>(n), 0);
  r.path[static_cast<std::size_t>(n - 1)] = best;
  for (Eigen::Index t = n - 1; t > 0; --t) r.path[static_cast<std::size_t>(t - 1)] = back(t, r.path[static_cast<std::size_t>(t)]);
  return r;
}

Matrix marginals(const Matrix& E, const Matrix& T) {
  check_shapes(E, T);
  Matrix alpha = forward_scores(E, T), beta = backward_scores(E, T);
  double logZ = partition_from_alpha(alpha, T);
  return (alpha + beta).array().unaryExpr([logZ](double v) { return std::exp(v - logZ); }).matrix();
}

NllGradient nll_gradient(const Matrix& E, const Matrix& T, std::span<const int> y) {
  check_shapes(E, T);
  check_labels(E, y);
  const Eigen::Index n = E.rows(), C = E.cols();
  Matrix alpha = forward_scores(E, T), beta = backward_scores(E, T);
  double logZ = partition_from_alpha(alpha, T);
  NllGradient g;
  g.nll = logZ - sequence_score(E, T, y);
  g.d_emissions = Matrix::Zero(n, C);
  g.d_transitions = Matrix::Zero(C + 2, C + 2);
  if (n == 0) return g;
  const Eigen::Index S = start_state(C), P = stop_state(C);
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index c = 0; c < C; ++c) g.d_emissions(t, c) = std::exp(alpha(t, c) + beta(t, c) - logZ);
  for (Eigen::Index c = 0; c < C; ++c) {
    g.d_transitions(S, c) += g.d_emissions(0, c);
    g.d_transitions(c, P) += g.d_emissions(n - 1, c);
  }
  for (Eigen::Index t = 1; t < n; ++t)
    for (Eigen::Index p = 0; p < C; ++p)
      for (Eigen::Index c = 0; c < C; ++c)
        g.d_transitions(p, c) += std::exp(alpha(t - 1, p) + T(p, c) + E(t, c) + beta(t, c) - logZ);
  g.d_transitions(S, y[0]) -= 1.0;
  g.d_transitions(y.back(), P) -= 1.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    g.d_emissions(static_cast<Eigen::Index>(t), y[t]) -= 1.0;
    if (t > 0) g.d_transitions(y[t - 1], y[t]) -= 1.0;
  }
  return g;
}

nn::Var nll(nn::Var emissions, nn::Var transitions, std::span<const int> labels) {
  if (&emissions.tape() != &transitions.tape()) throw std::invalid_argument("crf::nll: operands on different tapes");
  auto g = std::make_shared<NllGradient>(nll_gradient(emissions.value(), transitions.value(), labels));
  Matrix out(1, 1);
  out(0, 0) = g->nll;
  int ei = emissions.id(), ti = transitions.id();
  return emissions.tape().push(std::move(out), {emissions, transitions}, [ei, ti, g](nn::Tape& t, int self) {
    double s = t.grad(self)(0, 0);
    if (t.needs_grad(ei)) t.grad(ei) += s * g->d_emissions;
    if (t.needs_grad(ti)) t.grad(ti) += s * g->d_transitions;
  });
}

CrfHead CrfHead::create(nn::ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index classes,
                        std::mt19937_64& rng) {
  CrfHead h;
  h.classes = classes;
  h.emission = nn::Linear::create(ps, prefix + ".emission", in, classes, rng);
  h.transitions = &ps.add(prefix + ".transitions", Matrix::Zero(classes + 2, classes + 2));
  return h;
}

nn::Var CrfHead::loss(nn::Tape& t, nn::Var features, std::span<const int> labels) const {
  return nll(emissions(t, features), t.param(*transitions), labels);
}

ViterbiResult CrfHead::decode(nn::Tape& t, nn::Var features) const {
  return viterbi_decode(emissions(t, features).value(), transitions->value);
}

}  // namespace namerec::crf
