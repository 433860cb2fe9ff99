#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records primitive operations in insertion order; Var is a cheap
// handle (tape pointer + node id). Gradients flow only into nodes that
// transitively depend on a trainable leaf. `detach` produces a constant
// copy, which is how truncated unrolls cut the graph.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "l2o/types.hpp"

namespace l2o::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  AddRow,  // matrix + row vector broadcast over rows
  Sub,
  Mul,     // elementwise
  MatMul,
  Sigmoid,
  Tanh,
  Square,
  Sum,
  Scale,
  ConcatCols,
  SliceCols,
  Detach,
  External,  // scalar function of a column vector with a supplied gradient
};

/// Scalar function of a column vector used by External nodes. Must write the
/// gradient into `grad` (already sized) and return the value.
using ScalarFunction = std::function<double(const VectorXd& x, VectorXd& grad)>;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  [[nodiscard]] const MatrixXd& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Per-node gradients from one backward pass. Nodes that received no
/// gradient report a zero matrix of their value's shape.
class Gradients {
 public:
  Gradients(const Tape& tape, std::vector<MatrixXd> grads);

  [[nodiscard]] MatrixXd of(Var v) const;
  [[nodiscard]] bool has(Var v) const;
  [[nodiscard]] const std::vector<MatrixXd>& raw() const { return grads_; }

 private:
  const Tape* tape_;
  std::vector<MatrixXd> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(MatrixXd value, bool trainable);
  Var constant(MatrixXd value) { return leaf(std::move(value), false); }
  Var parameter(MatrixXd value) { return leaf(std::move(value), true); }

  /// Records f(x) for a column vector x. The gradient of f at x is computed
  /// once at record time and reused by backward, so f is never
  /// differentiated twice.
  Var external(Var x, ScalarFunction f);
  /// Same as `external`, for callers that already evaluated f and its
  /// gradient at x.value().
  Var external(Var x, double value, VectorXd grad, ScalarFunction f = {});

  [[nodiscard]] Gradients backward(Var root) const;

  /// Recomputes every non-leaf value in insertion order and reports whether
  /// all of them match the stored values bit for bit.
  [[nodiscard]] bool replay_matches() const;

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const MatrixXd& value(int id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  [[nodiscard]] bool trainable(int id) const;
  [[nodiscard]] Op op(int id) const { return nodes_.at(id).op; }

  // Used by the free-function operators below.
  Var record(Op op, int a, int b = -1, double scalar = 0.0, Eigen::Index start = 0,
             Eigen::Index len = 0);

 private:
  struct Node {
    Op op = Op::Leaf;
    MatrixXd value;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    Eigen::Index start = 0;
    Eigen::Index len = 0;
    bool requires_grad = false;
    bool trainable = false;
    VectorXd external_grad;
    std::shared_ptr<const ScalarFunction> external_fn;
  };

  MatrixXd compute(const Node& node) const;
  void backprop_node(const Node& node, const MatrixXd& g, std::vector<MatrixXd>& grads) const;

  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product.
Var operator*(Var a, Var b);
Var operator*(double s, Var a);
Var operator*(Var a, double s);

Var add_row(Var m, Var row);
Var matmul(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var sum(Var a);
Var scale(Var a, double s);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var detach(Var v);

[[nodiscard]] inline double scalar_value(Var v) { return v.value()(0, 0); }

/// Central-difference check of an analytic gradient.
///
/// Returns max_j |analytic_j - fd_j| / max(1, |fd_j|). Throws
/// std::domain_error when f is non-finite at any probe point.
double grad_check(const std::function<double(const VectorXd&)>& f, const VectorXd& analytic,
                  const VectorXd& p, double eps);

/// Tape-driven variant: `build` records a scalar function of the column
/// vector leaf it is given. The analytic gradient comes from backward on one
/// tape; the probes rebuild the graph on fresh tapes.
double grad_check(const std::function<Var(Tape&, Var)>& build, const VectorXd& p, double eps);

}  // namespace l2o::ad
