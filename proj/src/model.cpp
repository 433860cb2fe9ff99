#include "l2o/model.hpp"

#include <random>
#include <stdexcept>

#include "l2o/seeds.hpp"

namespace l2o {

namespace {

MatrixXd sigmoid_of(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

struct CellOut {
  MatrixXd h, c;
};

// Mirrors lstm_cell on the tape below op for op, so both paths produce
// identical values.
CellOut lstm_cell(const MatrixXd& x, const MatrixXd& h, const MatrixXd& c, const MatrixXd& wx,
                  const MatrixXd& wh, const MatrixXd& b, int hidden) {
  const MatrixXd xw = row_stable_product(x, wx);
  const MatrixXd hw = row_stable_product(h, wh);
  MatrixXd gates = xw + hw;
  gates = gates.rowwise() + b.row(0);
  const MatrixXd i = sigmoid_of(gates.middleCols(kInputGate * hidden, hidden));
  const MatrixXd f = sigmoid_of(gates.middleCols(kForgetGate * hidden, hidden));
  const MatrixXd g = tanh_of(gates.middleCols(kCellGate * hidden, hidden));
  const MatrixXd o = sigmoid_of(gates.middleCols(kOutputGate * hidden, hidden));
  CellOut out;
  out.c = f.cwiseProduct(c) + i.cwiseProduct(g);
  out.h = o.cwiseProduct(tanh_of(out.c));
  return out;
}

struct TapeCellOut {
  ad::Var h, c;
};

TapeCellOut lstm_cell(ad::Var x, ad::Var h, ad::Var c, ad::Var wx, ad::Var wh, ad::Var b,
                      int hidden) {
  using namespace ad;
  const Var gates = add_row(matmul(x, wx) + matmul(h, wh), b);
  const Var i = sigmoid(slice_cols(gates, kInputGate * hidden, hidden));
  const Var f = sigmoid(slice_cols(gates, kForgetGate * hidden, hidden));
  const Var g = ad::tanh(slice_cols(gates, kCellGate * hidden, hidden));
  const Var o = sigmoid(slice_cols(gates, kOutputGate * hidden, hidden));
  TapeCellOut out;
  out.c = f * c + i * g;
  out.h = o * ad::tanh(out.c);
  return out;
}

void fill_uniform(MatrixXd& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

}  // namespace

L2OParams L2OParams::zeros(int hidden, double preprocess_p, double output_scale) {
  if (hidden < 1) throw std::invalid_argument("l2o hidden size must be >= 1");
  L2OParams p;
  p.hidden = hidden;
  p.preprocess_p = preprocess_p;
  p.output_scale = output_scale;
  const int g = 4 * hidden;
  p.w1x = MatrixXd::Zero(kInputFeatures, g);
  p.w1h = MatrixXd::Zero(hidden, g);
  p.b1 = MatrixXd::Zero(1, g);
  p.w2x = MatrixXd::Zero(hidden, g);
  p.w2h = MatrixXd::Zero(hidden, g);
  p.b2 = MatrixXd::Zero(1, g);
  p.w_out = MatrixXd::Zero(hidden, 1);
  p.b_out = MatrixXd::Zero(1, 1);
  return p;
}

std::array<const MatrixXd*, L2OParams::kTensorCount> L2OParams::tensors() const {
  return {&w1x, &w1h, &b1, &w2x, &w2h, &b2, &w_out, &b_out};
}

std::array<MatrixXd*, L2OParams::kTensorCount> L2OParams::tensors() {
  return {&w1x, &w1h, &b1, &w2x, &w2h, &b2, &w_out, &b_out};
}

Eigen::Index L2OParams::parameter_count() const {
  Eigen::Index n = 0;
  for (const MatrixXd* t : tensors()) n += t->size();
  return n;
}

VectorXd L2OParams::flatten() const {
  VectorXd flat(parameter_count());
  Eigen::Index off = 0;
  for (const MatrixXd* t : tensors()) {
    flat.segment(off, t->size()) = Eigen::Map<const VectorXd>(t->data(), t->size());
    off += t->size();
  }
  return flat;
}

void L2OParams::assign_flat(const VectorXd& flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("assign_flat: size mismatch");
  }
  Eigen::Index off = 0;
  for (MatrixXd* t : tensors()) {
    Eigen::Map<VectorXd>(t->data(), t->size()) = flat.segment(off, t->size());
    off += t->size();
  }
}

bool L2OParams::operator==(const L2OParams& other) const {
  if (hidden != other.hidden || preprocess_p != other.preprocess_p ||
      output_scale != other.output_scale) {
    return false;
  }
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t k = 0; k < kTensorCount; ++k) {
    if (a[k]->rows() != b[k]->rows() || a[k]->cols() != b[k]->cols() || *a[k] != *b[k]) {
      return false;
    }
  }
  return true;
}

L2OParams init_l2o(std::uint64_t seed, int hidden, double preprocess_p, double output_scale) {
  L2OParams p = L2OParams::zeros(hidden, preprocess_p, output_scale);
  Rng rng = make_rng(seed, "l2o-init");
  const double s1 = 1.0 / std::sqrt(static_cast<double>(L2OParams::kInputFeatures + hidden));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(2 * hidden));
  fill_uniform(p.w1x, s1, rng);
  fill_uniform(p.w1h, s1, rng);
  fill_uniform(p.b1, s1, rng);
  fill_uniform(p.w2x, s2, rng);
  fill_uniform(p.w2h, s2, rng);
  fill_uniform(p.b2, s2, rng);
  p.b1.middleCols(kForgetGate * hidden, hidden).setOnes();
  p.b2.middleCols(kForgetGate * hidden, hidden).setOnes();
  return p;
}

VectorXd l2o_step(const L2OParams& phi, L2OState& state, const VectorXd& g) {
  if (state.coordinates() != g.size() || state.h1.cols() != phi.hidden) {
    throw std::invalid_argument("l2o_step: state does not match gradient dimension or hidden size");
  }
  const MatrixXd x = preprocess(g, phi.preprocess_p);
  CellOut l1 = lstm_cell(x, state.h1, state.c1, phi.w1x, phi.w1h, phi.b1, phi.hidden);
  CellOut l2 = lstm_cell(l1.h, state.h2, state.c2, phi.w2x, phi.w2h, phi.b2, phi.hidden);
  MatrixXd out = row_stable_product(l2.h, phi.w_out);
  out = out.rowwise() + phi.b_out.row(0);
  state.h1 = std::move(l1.h);
  state.c1 = std::move(l1.c);
  state.h2 = l2.h;
  state.c2 = std::move(l2.c);
  return phi.output_scale * out.col(0);
}

TapeParams bind(ad::Tape& tape, const L2OParams& phi) {
  TapeParams tp;
  const auto ts = phi.tensors();
  for (std::size_t k = 0; k < L2OParams::kTensorCount; ++k) {
    tp.vars[k] = tape.parameter(*ts[k]);
  }
  tp.output_scale = phi.output_scale;
  tp.preprocess_p = phi.preprocess_p;
  tp.hidden = phi.hidden;
  return tp;
}

TapeState TapeState::constant(ad::Tape& tape, const L2OState& s) {
  return {tape.constant(s.h1), tape.constant(s.c1), tape.constant(s.h2), tape.constant(s.c2)};
}

L2OState TapeState::values() const { return {h1.value(), c1.value(), h2.value(), c2.value()}; }

ad::Var l2o_step(const TapeParams& params, TapeState& state, const VectorXd& g) {
  if (state.h1.rows() != g.size()) {
    throw std::invalid_argument("l2o_step: state does not match gradient dimension");
  }
  ad::Tape& tape = *params.w1x().tape();
  const ad::Var x = tape.constant(preprocess(g, params.preprocess_p));
  TapeCellOut l1 = lstm_cell(x, state.h1, state.c1, params.w1x(), params.w1h(), params.b1(), params.hidden);
  TapeCellOut l2 = lstm_cell(l1.h, state.h2, state.c2, params.w2x(), params.w2h(), params.b2(), params.hidden);
  const ad::Var out = add_row(matmul(l2.h, params.w_out()), params.b_out());
  state = {l1.h, l1.c, l2.h, l2.c};
  return ad::scale(out, params.output_scale);
}

VectorXd flat_gradient(const ad::Gradients& grads, const TapeParams& params) {
  Eigen::Index total = 0;
  for (const ad::Var& v : params.vars) total += v.value().size();
  VectorXd flat(total);
  Eigen::Index off = 0;
  for (const ad::Var& v : params.vars) {
    const MatrixXd g = grads.of(v);
    flat.segment(off, g.size()) = Eigen::Map<const VectorXd>(g.data(), g.size());
    off += g.size();
  }
  return flat;
}

}  // namespace l2o
