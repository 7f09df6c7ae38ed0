#include "namerec/optim.hpp"

#include <cmath>

namespace namerec::nn {

double grad_norm(const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (const Parameter* p : params)
    if (p->trainable && p->grad.size() == p->value.size()) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    double f = max_norm / norm;
    for (Parameter* p : params)
      if (p->trainable && p->grad.size() == p->value.size()) p->grad *= f;
  }
  return norm;
}

void Sgd::step(const std::vector<Parameter*>& params) const {
  for (Parameter* p : params)
    if (p->trainable && p->grad.size() == p->value.size()) p->value -= lr * p->grad;
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (!p->trainable || p->grad.size() != p->value.size()) continue;
    auto& s = state_[p];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * p->grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

}  // namespace namerec::nn
