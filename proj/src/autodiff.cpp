#include "l2o/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace l2o::ad {

namespace {

Tape& common_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) {
    throw std::invalid_argument("autodiff: operation on an unbound Var");
  }
  if (a.tape() != b.tape()) {
    throw std::invalid_argument("autodiff: operands belong to different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) {
    throw std::invalid_argument("autodiff: operation on an unbound Var");
  }
  return *a.tape();
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + what);
  }
}

MatrixXd sigmoid_of(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

void accumulate(std::vector<MatrixXd>& grads, int id, const MatrixXd& g) {
  auto& slot = grads[static_cast<std::size_t>(id)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

}  // namespace

const MatrixXd& Var::value() const {
  if (!valid()) {
    throw std::invalid_argument("autodiff: value() on an unbound Var");
  }
  return tape_->value(id_);
}

Gradients::Gradients(const Tape& tape, std::vector<MatrixXd> grads)
    : tape_(&tape), grads_(std::move(grads)) {}

MatrixXd Gradients::of(Var v) const {
  if (v.tape() != tape_) {
    throw std::invalid_argument("autodiff: gradient lookup for a Var from another tape");
  }
  const auto& g = grads_.at(static_cast<std::size_t>(v.id()));
  if (g.size() == 0) {
    return MatrixXd::Zero(v.rows(), v.cols());
  }
  return g;
}

bool Gradients::has(Var v) const {
  return v.tape() == tape_ && grads_.at(static_cast<std::size_t>(v.id())).size() != 0;
}

bool Tape::trainable(int id) const { return nodes_.at(id).trainable; }

Var Tape::leaf(MatrixXd value, bool trainable) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = trainable;
  n.trainable = trainable;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Op op, int a, int b, double scalar, Eigen::Index start, Eigen::Index len) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.scalar = scalar;
  n.start = start;
  n.len = len;
  n.value = compute(n);
  if (op != Op::Detach) {
    n.requires_grad = (a >= 0 && nodes_[a].requires_grad) || (b >= 0 && nodes_[b].requires_grad);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::external(Var x, ScalarFunction f) {
  if (x.tape() != this) {
    throw std::invalid_argument("autodiff: external() on a Var from another tape");
  }
  VectorXd grad(x.rows());
  const double value = f(x.value(), grad);
  return external(x, value, std::move(grad), std::move(f));
}

Var Tape::external(Var x, double value, VectorXd grad, ScalarFunction f) {
  if (x.tape() != this) {
    throw std::invalid_argument("autodiff: external() on a Var from another tape");
  }
  if (x.cols() != 1 || grad.size() != x.rows()) {
    throw std::invalid_argument("autodiff: external() expects a column vector and matching gradient");
  }
  Node n;
  n.op = Op::External;
  n.a = x.id();
  n.value = MatrixXd::Constant(1, 1, value);
  n.requires_grad = nodes_[x.id()].requires_grad;
  n.external_grad = std::move(grad);
  if (f) {
    n.external_fn = std::make_shared<const ScalarFunction>(std::move(f));
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

MatrixXd Tape::compute(const Node& n) const {
  const MatrixXd* a = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const MatrixXd* b = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  switch (n.op) {
    case Op::Leaf:
      return n.value;
    case Op::Add:
      return *a + *b;
    case Op::AddRow:
      return a->rowwise() + b->row(0);
    case Op::Sub:
      return *a - *b;
    case Op::Mul:
      return a->cwiseProduct(*b);
    case Op::MatMul:
      return row_stable_product(*a, *b);
    case Op::Sigmoid:
      return sigmoid_of(*a);
    case Op::Tanh:
      return tanh_of(*a);
    case Op::Square:
      return a->array().square().matrix();
    case Op::Sum:
      return MatrixXd::Constant(1, 1, a->sum());
    case Op::Scale:
      return n.scalar * *a;
    case Op::ConcatCols: {
      MatrixXd out(a->rows(), a->cols() + b->cols());
      out << *a, *b;
      return out;
    }
    case Op::SliceCols:
      return a->middleCols(n.start, n.len);
    case Op::Detach:
      return *a;
    case Op::External: {
      if (!n.external_fn) {
        return n.value;
      }
      VectorXd grad(a->rows());
      return MatrixXd::Constant(1, 1, (*n.external_fn)(a->col(0), grad));
    }
  }
  throw std::logic_error("autodiff: unknown op");
}

void Tape::backprop_node(const Node& n, const MatrixXd& g, std::vector<MatrixXd>& grads) const {
  auto wants = [&](int id) { return id >= 0 && nodes_[id].requires_grad; };
  const MatrixXd* a = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const MatrixXd* b = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  switch (n.op) {
    case Op::Leaf:
    case Op::Detach:
      return;
    case Op::Add:
      if (wants(n.a)) accumulate(grads, n.a, g);
      if (wants(n.b)) accumulate(grads, n.b, g);
      return;
    case Op::AddRow:
      if (wants(n.a)) accumulate(grads, n.a, g);
      if (wants(n.b)) accumulate(grads, n.b, g.colwise().sum());
      return;
    case Op::Sub:
      if (wants(n.a)) accumulate(grads, n.a, g);
      if (wants(n.b)) accumulate(grads, n.b, -g);
      return;
    case Op::Mul:
      if (wants(n.a)) accumulate(grads, n.a, g.cwiseProduct(*b));
      if (wants(n.b)) accumulate(grads, n.b, g.cwiseProduct(*a));
      return;
    case Op::MatMul:
      if (wants(n.a)) accumulate(grads, n.a, g * b->transpose());
      if (wants(n.b)) accumulate(grads, n.b, a->transpose() * g);
      return;
    case Op::Sigmoid: {
      const auto s = n.value.array();
      accumulate(grads, n.a, (g.array() * s * (1.0 - s)).matrix());
      return;
    }
    case Op::Tanh: {
      const auto t = n.value.array();
      accumulate(grads, n.a, (g.array() * (1.0 - t.square())).matrix());
      return;
    }
    case Op::Square:
      accumulate(grads, n.a, (2.0 * g.array() * a->array()).matrix());
      return;
    case Op::Sum:
      accumulate(grads, n.a, MatrixXd::Constant(a->rows(), a->cols(), g(0, 0)));
      return;
    case Op::Scale:
      accumulate(grads, n.a, n.scalar * g);
      return;
    case Op::ConcatCols:
      if (wants(n.a)) accumulate(grads, n.a, g.leftCols(a->cols()));
      if (wants(n.b)) accumulate(grads, n.b, g.rightCols(b->cols()));
      return;
    case Op::SliceCols: {
      MatrixXd full = MatrixXd::Zero(a->rows(), a->cols());
      full.middleCols(n.start, n.len) = g;
      accumulate(grads, n.a, full);
      return;
    }
    case Op::External:
      accumulate(grads, n.a, g(0, 0) * n.external_grad);
      return;
  }
}

Gradients Tape::backward(Var root) const {
  if (root.tape() != this) {
    throw std::invalid_argument("autodiff: backward root is not on this tape");
  }
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("autodiff: backward root must be a scalar");
  }
  std::vector<MatrixXd> grads(nodes_.size());
  if (!nodes_[root.id()].requires_grad) {
    return {*this, std::move(grads)};
  }
  grads[static_cast<std::size_t>(root.id())] = MatrixXd::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    const Node& n = nodes_[i];
    const MatrixXd& g = grads[static_cast<std::size_t>(i)];
    if (!n.requires_grad || g.size() == 0) {
      continue;
    }
    backprop_node(n, g, grads);
  }
  // Only leaves keep their gradient; interior slots are dropped so callers
  // cannot mistake a partial adjoint for a result.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::Leaf) {
      grads[i].resize(0, 0);
    }
  }
  return {*this, std::move(grads)};
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) {
      continue;
    }
    const MatrixXd v = compute(n);
    if (v.rows() != n.value.rows() || v.cols() != n.value.cols()) {
      return false;
    }
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double x = v.data()[k];
      const double y = n.value.data()[k];
      if (!(x == y || (std::isnan(x) && std::isnan(y)))) {
        return false;
      }
    }
  }
  return true;
}

Var operator+(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "add");
  return t.record(Op::Add, a.id(), b.id());
}

Var operator-(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  return t.record(Op::Sub, a.id(), b.id());
}

Var operator*(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "mul");
  return t.record(Op::Mul, a.id(), b.id());
}

Var operator*(double s, Var a) { return scale(a, s); }
Var operator*(Var a, double s) { return scale(a, s); }

Var add_row(Var m, Var row) {
  Tape& t = common_tape(m, row);
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw std::invalid_argument("autodiff: add_row expects a 1 x cols row vector");
  }
  return t.record(Op::AddRow, m.id(), row.id());
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("autodiff: shape mismatch in matmul");
  }
  return t.record(Op::MatMul, a.id(), b.id());
}

Var sigmoid(Var a) { return tape_of(a).record(Op::Sigmoid, a.id()); }
Var tanh(Var a) { return tape_of(a).record(Op::Tanh, a.id()); }
Var square(Var a) { return tape_of(a).record(Op::Square, a.id()); }
Var sum(Var a) { return tape_of(a).record(Op::Sum, a.id()); }
Var scale(Var a, double s) { return tape_of(a).record(Op::Scale, a.id(), -1, s); }

Var concat_cols(Var a, Var b) {
  Tape& t = common_tape(a, b);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("autodiff: row mismatch in concat_cols");
  }
  return t.record(Op::ConcatCols, a.id(), b.id());
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("autodiff: slice_cols range outside operand");
  }
  return t.record(Op::SliceCols, a.id(), -1, 0.0, start, count);
}

Var detach(Var v) { return tape_of(v).record(Op::Detach, v.id()); }

double grad_check(const std::function<double(const VectorXd&)>& f, const VectorXd& analytic,
                  const VectorXd& p, double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("grad_check: eps must be positive");
  }
  if (analytic.size() != p.size()) {
    throw std::invalid_argument("grad_check: analytic gradient size mismatch");
  }
  double worst = 0.0;
  VectorXd probe = p;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    probe[j] = p[j] + eps;
    const double up = f(probe);
    probe[j] = p[j] - eps;
    const double down = f(probe);
    probe[j] = p[j];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("grad_check: non-finite function value at probe " + std::to_string(j));
    }
    const double fd = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[j] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&, Var)>& build, const VectorXd& p, double eps) {
  Tape tape;
  Var x = tape.parameter(p);
  Var root = build(tape, x);
  const MatrixXd g = tape.backward(root).of(x);
  const VectorXd analytic = Eigen::Map<const VectorXd>(g.data(), g.size());
  auto f = [&build](const VectorXd& q) {
    Tape probe_tape;
    Var xq = probe_tape.parameter(q);
    return scalar_value(build(probe_tape, xq));
  };
  return grad_check(f, analytic, p, eps);
}

}  // namespace l2o::ad
