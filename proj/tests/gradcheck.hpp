#pragma once

// Central finite-difference oracle for tape gradients. Independent of the backward code: it only
// evaluates the forward pass with perturbed parameter values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "namerec/tape.hpp"

namespace gradcheck {

using namerec::nn::Matrix;
using namerec::nn::Parameter;
using namerec::nn::Tape;
using namerec::nn::Var;

struct Result {
  double worst = 0.0;
  std::string worst_param;
};

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||); 0 when both norms are below 1e-8.
inline double relative_error(const Matrix& a, const Matrix& n) {
  double scale = std::max(a.norm(), n.norm());
  if (scale < 1e-8) return 0.0;
  return (a - n).norm() / scale;
}

inline double evaluate(const std::function<Var(Tape&)>& build) {
  Tape t;
  return build(t).value()(0, 0);
}

/// `build` must return a 1 x 1 loss and be deterministic.
inline Result check(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& build,
                    double step = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(build(t));
  }
  Result r;
  for (Parameter* p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double orig = p->value.data()[i];
      p->value.data()[i] = orig + step;
      double up = evaluate(build);
      p->value.data()[i] = orig - step;
      double down = evaluate(build);
      p->value.data()[i] = orig;
      numeric.data()[i] = (up - down) / (2 * step);
    }
    double e = relative_error(p->grad, numeric);
    if (e >= r.worst) {
      r.worst = e;
      r.worst_param = p->name;
    }
  }
  return r;
}

/// Scalarises an arbitrary output with fixed random weights so every entry affects the loss.
inline Var weighted_sum(Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix w(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
  return namerec::nn::sum(namerec::nn::mul(out, out.tape().constant(std::move(w))));
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

}  // namespace gradcheck
