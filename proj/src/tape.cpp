#include "namerec/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace namerec::nn {

Parameter& ParameterSet::add(std::string name, Matrix init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->trainable = trainable;
  p->zero_grad();
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), raw);
  return *raw;
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParameterSet::get(std::string_view name) {
  Parameter* p = find(name);
  if (!p) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& p : params_) {
    const Parameter* src = other.find(p->name);
    if (!src) throw std::invalid_argument("missing parameter: " + p->name);
    if (src->value.rows() != p->value.rows() || src->value.cols() != p->value.cols())
      throw std::invalid_argument("shape mismatch for parameter: " + p->name);
    p->value = src->value;
  }
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw std::invalid_argument("operands belong to different tapes");
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() > 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward(root) needs a 1x1 root");
  backward(root, Matrix::Ones(1, 1));
}

void Tape::backward(Var root, const Matrix& seed) {
  if (seed.rows() != root.rows() || seed.cols() != root.cols())
    throw std::invalid_argument("seed shape differs from root");
  grad(root.id()) += seed;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands belong to different tapes");
  return a.tape();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv_from_xy) {
  Matrix y = a.value().unaryExpr(fwd);
  int ai = a.id();
  return a.tape().push(std::move(y), {a}, [ai, deriv_from_xy](Tape& t, int self) {
    if (!t.needs_grad(ai)) return;
    const Matrix& x = t.value(ai);
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ai);
    for (Eigen::Index i = 0; i < x.size(); ++i) ga.data()[i] += g.data()[i] * deriv_from_xy(x.data()[i], y.data()[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  int ai = a.id(), bi = b.id();
  return t.push(a.value() * b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai).noalias() += g * t.value(bi).transpose();
    if (t.needs_grad(bi)) t.grad(bi).noalias() += t.value(ai).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: column counts differ");
  int ai = a.id(), bi = b.id();
  return t.push(a.value() * b.value().transpose(), {a, b}, [ai, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai).noalias() += g * t.value(bi);
    if (t.needs_grad(bi)) t.grad(bi).noalias() += g.transpose() * t.value(ai);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  int ai = a.id(), bi = b.id();
  return t.push(a.value() + b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(bi)) t.grad(bi) += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  int ai = a.id(), bi = b.id();
  return t.push(a.value() - b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(bi)) t.grad(bi) -= g;
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "mul");
  int ai = a.id(), bi = b.id();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [ai, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g.cwiseProduct(t.value(bi));
    if (t.needs_grad(bi)) t.grad(bi) += g.cwiseProduct(t.value(ai));
  });
}

Var scale(Var a, double s) {
  int ai = a.id();
  return a.tape().push(a.value() * s, {a}, [ai, s](Tape& t, int self) {
    if (t.needs_grad(ai)) t.grad(ai) += t.grad(self) * s;
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row shape mismatch");
  int ai = a.id(), ri = row.id();
  Matrix y = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(y), {a, row}, [ai, ri](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(ri)) t.grad(ri) += g.colwise().sum();
  });
}

Var scale_rows(Var a, Var w) {
  Tape& t = same_tape(a, w);
  if (w.cols() != 1 || w.rows() != a.rows()) throw std::invalid_argument("scale_rows: weight must be n x 1");
  int ai = a.id(), wi = w.id();
  Matrix y = a.value().array().colwise() * w.value().col(0).array();
  return t.push(std::move(y), {a, w}, [ai, wi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai).array() += g.array().colwise() * t.value(wi).col(0).array();
    if (t.needs_grad(wi)) t.grad(wi).col(0) += g.cwiseProduct(t.value(ai)).rowwise().sum();
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var a) {
  static constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        double u = c * (x + 0.044715 * x * x * x);
        double th = std::tanh(u);
        double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var softmax_rows(Var a) {
  Matrix y(a.rows(), a.cols());
  const Matrix& x = a.value();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  int ai = a.id();
  return a.tape().push(std::move(y), {a}, [ai](Tape& t, int self) {
    if (!t.needs_grad(ai)) return;
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.grad(ai).array() += y.array() * (g.array().colwise() - dots.array());
  });
}

Var softmax_all(Var a) {
  const Matrix& x = a.value();
  double m = x.maxCoeff();
  Matrix y = (x.array() - m).exp().matrix();
  y /= y.sum();
  int ai = a.id();
  return a.tape().push(std::move(y), {a}, [ai](Tape& t, int self) {
    if (!t.needs_grad(ai)) return;
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    double dot = g.cwiseProduct(y).sum();
    t.grad(ai).array() += y.array() * (g.array() - dot);
  });
}

Var sum(Var a) {
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  int ai = a.id();
  return a.tape().push(std::move(y), {a}, [ai](Tape& t, int self) {
    if (t.needs_grad(ai)) t.grad(ai).array() += t.grad(self)(0, 0);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = parts[0].tape();
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return t.push(std::move(y), parts, [ids, offsets](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.needs_grad(ids[i])) t.grad(ids[i]) += g.middleCols(offsets[i], t.value(ids[i]).cols());
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = parts[0].tape();
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return t.push(std::move(y), parts, [ids, offsets](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.needs_grad(ids[i])) t.grad(ids[i]) += g.middleRows(offsets[i], t.value(ids[i]).rows());
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows: range");
  int ai = a.id();
  return a.tape().push(a.value().middleRows(start, count), {a}, [ai, start, count](Tape& t, int self) {
    if (t.needs_grad(ai)) t.grad(ai).middleRows(start, count) += t.grad(self);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: range");
  int ai = a.id();
  return a.tape().push(a.value().middleCols(start, count), {a}, [ai, start, count](Tape& t, int self) {
    if (t.needs_grad(ai)) t.grad(ai).middleCols(start, count) += t.grad(self);
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& v = table.value();
  Matrix y(static_cast<Eigen::Index>(ids.size()), v.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= v.rows()) throw std::out_of_range("gather_rows: id out of range");
    y.row(static_cast<Eigen::Index>(r)) = v.row(ids[r]);
  }
  int ti = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return table.tape().push(std::move(y), {table}, [ti, rows](Tape& t, int self) {
    if (!t.needs_grad(ti)) return;
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(ti);
    for (std::size_t r = 0; r < rows.size(); ++r) gt.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var stack_rows(std::span<const RowRef> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  Tape& t = rows[0].source.tape();
  Eigen::Index cols = rows[0].source.cols();
  Matrix y(static_cast<Eigen::Index>(rows.size()), cols);
  std::vector<Var> inputs;
  std::vector<std::pair<int, Eigen::Index>> refs;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const RowRef& ref = rows[r];
    if (&ref.source.tape() != &t) throw std::invalid_argument("stack_rows: operands belong to different tapes");
    if (ref.source.cols() != cols) throw std::invalid_argument("stack_rows: column counts differ");
    if (ref.row < 0 || ref.row >= ref.source.rows()) throw std::out_of_range("stack_rows: row out of range");
    y.row(static_cast<Eigen::Index>(r)) = ref.source.value().row(ref.row);
    refs.emplace_back(ref.source.id(), ref.row);
    bool seen = false;
    for (const Var& v : inputs) seen = seen || v.id() == ref.source.id();
    if (!seen) inputs.push_back(ref.source);
  }
  return t.push(std::move(y), std::span<const Var>(inputs), [refs](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (std::size_t r = 0; r < refs.size(); ++r)
      if (t.needs_grad(refs[r].first)) t.grad(refs[r].first).row(refs[r].second) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  Tape& t = same_tape(a, gamma);
  same_tape(a, beta);
  const Eigen::Index n = a.rows(), d = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x d");
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  const Matrix& x = a.value();
  for (Eigen::Index r = 0; r < n; ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.row(r).array() - mu) * (*inv_std)(r);
  }
  Matrix y = (xhat->array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  int ai = a.id(), gi = gamma.id(), bi = beta.id();
  return t.push(std::move(y), {a, gamma, beta}, [ai, gi, bi, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(gi)) t.grad(gi) += g.cwiseProduct(*xhat).colwise().sum();
    if (t.needs_grad(bi)) t.grad(bi) += g.colwise().sum();
    if (!t.needs_grad(ai)) return;
    Matrix dxhat = g.array().rowwise() * t.value(gi).row(0).array();
    Matrix& ga = t.grad(ai);
    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
      double m1 = dxhat.row(r).mean();
      double m2 = dxhat.row(r).cwiseProduct(xhat->row(r)).mean();
      ga.row(r).array() += (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows())
    throw std::invalid_argument("softmax_cross_entropy: one target per row required");
  auto probs = std::make_shared<Matrix>(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double m = z.row(r).maxCoeff();
    probs->row(r) = (z.row(r).array() - m).exp();
    double s = probs->row(r).sum();
    probs->row(r) /= s;
    int y = targets[static_cast<std::size_t>(r)];
    if (y < 0) continue;
    if (y >= z.cols()) throw std::out_of_range("softmax_cross_entropy: target out of range");
    loss += m + std::log(s) - z(r, y);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  int li = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape().push(std::move(out), {logits}, [li, tg, probs](Tape& t, int self) {
    if (!t.needs_grad(li)) return;
    double g = t.grad(self)(0, 0);
    Matrix& gl = t.grad(li);
    for (std::size_t r = 0; r < tg.size(); ++r) {
      if (tg[r] < 0) continue;
      auto row = static_cast<Eigen::Index>(r);
      gl.row(row) += g * probs->row(row);
      gl(row, tg[r]) -= g;
    }
  });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(a, a.tape().constant(std::move(mask)));
}

Var lstm(Var x, Var W, Var U, Var b, bool reverse) {
  Tape& t = same_tape(x, W);
  same_tape(x, U);
  same_tape(x, b);
  const Eigen::Index n = x.rows(), H = U.rows();
  if (W.rows() != x.cols() || W.cols() != 4 * H || U.cols() != 4 * H || b.rows() != 1 || b.cols() != 4 * H)
    throw std::invalid_argument("lstm: weight shapes do not match");

  // Per-step caches in original row positions: gates [i f g o], cell c, tanh(c).
  auto gates = std::make_shared<Matrix>(n, 4 * H);
  auto cells = std::make_shared<Matrix>(n, H);
  auto tcells = std::make_shared<Matrix>(n, H);
  Matrix h_out(n, H);
  Matrix Z = x.value() * W.value();
  Z.rowwise() += b.value().row(0);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H), c = Eigen::RowVectorXd::Zero(H);
  for (Eigen::Index s = 0; s < n; ++s) {
    Eigen::Index r = reverse ? n - 1 - s : s;
    Eigen::RowVectorXd z = Z.row(r) + h * U.value();
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    Eigen::RowVectorXd ig = z.segment(0, H).unaryExpr(sig);
    Eigen::RowVectorXd fg = z.segment(H, H).unaryExpr(sig);
    Eigen::RowVectorXd gg = z.segment(2 * H, H).array().tanh();
    Eigen::RowVectorXd og = z.segment(3 * H, H).unaryExpr(sig);
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    Eigen::RowVectorXd tc = c.array().tanh();
    h = og.cwiseProduct(tc);
    gates->row(r) << ig, fg, gg, og;
    cells->row(r) = c;
    tcells->row(r) = tc;
    h_out.row(r) = h;
  }

  int xi = x.id(), wi = W.id(), ui = U.id(), bi = b.id();
  return t.push(std::move(h_out), {x, W, U, b}, [=](Tape& t, int self) {
    const Matrix& dH = t.grad(self);
    const Matrix& hs = t.value(self);
    const Matrix& Uv = t.value(ui);
    Matrix dZ(n, 4 * H);
    Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(H), dc_next = Eigen::RowVectorXd::Zero(H);
    Matrix dU = Matrix::Zero(H, 4 * H);
    for (Eigen::Index s = n - 1; s >= 0; --s) {
      Eigen::Index r = reverse ? n - 1 - s : s;
      bool has_prev = s > 0;
      Eigen::Index rp = reverse ? r + 1 : r - 1;
      auto ig = gates->row(r).segment(0, H).array();
      auto fg = gates->row(r).segment(H, H).array();
      auto gg = gates->row(r).segment(2 * H, H).array();
      auto og = gates->row(r).segment(3 * H, H).array();
      auto tc = tcells->row(r).array();
      Eigen::ArrayXXd c_prev = has_prev ? Eigen::ArrayXXd(cells->row(rp).array()) : Eigen::ArrayXXd::Zero(1, H);
      Eigen::RowVectorXd dh = dH.row(r) + dh_next;
      Eigen::ArrayXXd dh_a = dh.array();
      Eigen::ArrayXXd dc = dh_a * og * (1.0 - tc * tc) + dc_next.array();
      Eigen::ArrayXXd dzi = dc * gg * ig * (1.0 - ig);
      Eigen::ArrayXXd dzf = dc * c_prev * fg * (1.0 - fg);
      Eigen::ArrayXXd dzg = dc * ig * (1.0 - gg * gg);
      Eigen::ArrayXXd dzo = dh_a * tc * og * (1.0 - og);
      dZ.row(r) << dzi, dzf, dzg, dzo;
      dc_next = (dc * fg).matrix();
      if (has_prev) {
        dU.noalias() += hs.row(rp).transpose() * dZ.row(r);
        dh_next = dZ.row(r) * Uv.transpose();
      } else {
        dh_next.setZero();
      }
    }
    if (t.needs_grad(ui)) t.grad(ui) += dU;
    if (t.needs_grad(wi)) t.grad(wi).noalias() += t.value(xi).transpose() * dZ;
    if (t.needs_grad(bi)) t.grad(bi) += dZ.colwise().sum();
    if (t.needs_grad(xi)) t.grad(xi).noalias() += dZ * t.value(wi).transpose();
  });
}

}  // namespace namerec::nn
