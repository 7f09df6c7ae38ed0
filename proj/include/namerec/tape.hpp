#pragma once

// Reverse-mode automatic differentiation over dense float64 matrices.
//
// A Tape records every operation applied to Vars; backward() walks the records in reverse creation
// order (a valid topological order) and accumulates gradients. Parameters live outside the tape and
// receive their gradients when backward() finishes, so one Parameter can be used by many tapes.

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace namerec::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Ordered registry of named parameters with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix init, bool trainable = true);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& get(std::string_view name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Copies values of same-named parameters; throws on missing names or shape mismatch.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

class Tape;

/// Handle to a recorded value.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a parameter; repeated calls with the same parameter return the same node.
  Var param(Parameter& p);

  /// Records an operation. `backward` may be empty for non-differentiable results.
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Gradient accumulator of node `id`, zero-initialised on first use.
  Matrix& grad(int id);
  /// Gradient after backward(); an empty matrix if nothing flowed into the node.
  const Matrix& grad_of(Var v) const { return nodes_[v.id()].grad; }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root, then propagates; parameter gradients are added to
  /// Parameter::grad.
  void backward(Var root);
  void backward(Var root, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;  // push_back keeps references to earlier values valid
  std::unordered_map<Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// Elementwise and linear-algebra operations. All operands must belong to the same tape.
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
/// out(i, j) = a(i, j) * w(i, 0) for an n x 1 weight column w.
Var scale_rows(Var a, Var w);

Var tanh(Var a);
Var sigmoid(Var a);
/// tanh approximation of GELU.
Var gelu(Var a);
Var softmax_rows(Var a);
/// Softmax over every entry of `a` (typically an n x 1 column of position scores).
Var softmax_all(Var a);
Var sum(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var table, std::span<const int> ids);

struct RowRef {
  Var source;
  Eigen::Index row = 0;
};
/// Builds a matrix whose row r is rows[r].source.row(rows[r].row); gradients scatter back.
Var stack_rows(std::span<const RowRef> rows);

Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

/// Sum over rows with target >= 0 of logsumexp(row) - row(target).
Var softmax_cross_entropy(Var logits, std::span<const int> targets);

/// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);

/// Standard LSTM over the rows of x (gate order input, forget, candidate, output), zero initial
/// state. W: in x 4H, U: H x 4H, b: 1 x 4H. With `reverse`, rows are consumed last to first and
/// row t of the output is the state after consuming row t.
Var lstm(Var x, Var W, Var U, Var b, bool reverse);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace namerec::nn
