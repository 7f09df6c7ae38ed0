#pragma once

#include <unordered_map>
#include <vector>

#include "namerec/tape.hpp"

namespace namerec::nn {

double grad_norm(const std::vector<Parameter*>& params);
/// Rescales all gradients so their joint norm is at most `max_norm`; returns the norm before.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

/// Plain gradient descent; frozen parameters are skipped.
struct Sgd {
  double lr = 0.01;
  void step(const std::vector<Parameter*>& params) const;
};

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Parameter*>& params);

  double lr;

 private:
  struct Moments {
    Matrix m, v;
  };
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::unordered_map<const Parameter*, Moments> state_;
};

}  // namespace namerec::nn
