#pragma once

// Coordinate-wise two-layer LSTM optimizer. Every coordinate of the
// optimizee runs through the same weights; coordinates are the rows of the
// per-step input and state matrices.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "l2o/autodiff.hpp"
#include "l2o/types.hpp"

namespace l2o {

/// Gate column blocks inside the 4*hidden pre-activation: input, forget,
/// cell candidate, output.
enum Gate : int { kInputGate = 0, kForgetGate = 1, kCellGate = 2, kOutputGate = 3 };

struct L2OParams {
  static constexpr int kInputFeatures = 2;
  static constexpr std::size_t kTensorCount = 8;

  int hidden = 20;
  double preprocess_p = 10.0;
  double output_scale = 0.01;

  MatrixXd w1x;   // 2 x 4h
  MatrixXd w1h;   // h x 4h
  MatrixXd b1;    // 1 x 4h
  MatrixXd w2x;   // h x 4h
  MatrixXd w2h;   // h x 4h
  MatrixXd b2;    // 1 x 4h
  MatrixXd w_out; // h x 1
  MatrixXd b_out; // 1 x 1

  /// Zero weights of the right shapes.
  static L2OParams zeros(int hidden, double preprocess_p = 10.0, double output_scale = 0.01);

  /// Tensors in checkpoint order.
  [[nodiscard]] std::array<const MatrixXd*, kTensorCount> tensors() const;
  [[nodiscard]] std::array<MatrixXd*, kTensorCount> tensors();

  [[nodiscard]] Eigen::Index parameter_count() const;
  [[nodiscard]] VectorXd flatten() const;
  void assign_flat(const VectorXd& flat);

  bool operator==(const L2OParams& other) const;
};

/// Recurrent state for d coordinates; each matrix is d x hidden.
template <typename Scalar>
struct LstmState {
  Matrix<Scalar> h1, c1, h2, c2;

  static LstmState zeros(Eigen::Index d, int hidden) {
    return {Matrix<Scalar>::Zero(d, hidden), Matrix<Scalar>::Zero(d, hidden),
            Matrix<Scalar>::Zero(d, hidden), Matrix<Scalar>::Zero(d, hidden)};
  }
  [[nodiscard]] Eigen::Index coordinates() const { return h1.rows(); }
};

using L2OState = LstmState<double>;

/// Log/sign gradient preprocessing, one row per coordinate:
/// |g| >= e^-p gives (log|g| / p, sign g), otherwise (-1, e^p g).
template <typename Derived>
Matrix<typename Derived::Scalar> preprocess(const Eigen::MatrixBase<Derived>& g,
                                            typename Derived::Scalar p) {
  using Scalar = typename Derived::Scalar;
  const Scalar threshold = std::exp(-p);
  const Scalar boost = std::exp(p);
  Matrix<Scalar> out(g.size(), 2);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const Scalar gi = g(i);
    if (std::abs(gi) >= threshold) {
      out(i, 0) = std::log(std::abs(gi)) / p;
      out(i, 1) = gi > Scalar(0) ? Scalar(1) : Scalar(-1);
    } else {
      out(i, 0) = Scalar(-1);
      out(i, 1) = boost * gi;
    }
  }
  return out;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate biases 1,
/// zero output projection (the untrained optimizer proposes no update).
L2OParams init_l2o(std::uint64_t seed, int hidden, double preprocess_p = 10.0,
                   double output_scale = 0.01);

/// Evaluative step (no tape). Advances `state` and returns the additive
/// update for each coordinate.
VectorXd l2o_step(const L2OParams& phi, L2OState& state, const VectorXd& g);

/// The parameters bound to a tape as trainable leaves.
struct TapeParams {
  std::array<ad::Var, L2OParams::kTensorCount> vars;
  double output_scale = 0.01;
  double preprocess_p = 10.0;
  int hidden = 20;

  [[nodiscard]] ad::Var w1x() const { return vars[0]; }
  [[nodiscard]] ad::Var w1h() const { return vars[1]; }
  [[nodiscard]] ad::Var b1() const { return vars[2]; }
  [[nodiscard]] ad::Var w2x() const { return vars[3]; }
  [[nodiscard]] ad::Var w2h() const { return vars[4]; }
  [[nodiscard]] ad::Var b2() const { return vars[5]; }
  [[nodiscard]] ad::Var w_out() const { return vars[6]; }
  [[nodiscard]] ad::Var b_out() const { return vars[7]; }
};

TapeParams bind(ad::Tape& tape, const L2OParams& phi);

/// State on a tape. Created from values as constants, so each tape starts a
/// fresh truncation segment.
struct TapeState {
  ad::Var h1, c1, h2, c2;

  static TapeState constant(ad::Tape& tape, const L2OState& s);
  [[nodiscard]] L2OState values() const;
};

/// Differentiable step on a tape; returns a d x 1 update.
ad::Var l2o_step(const TapeParams& params, TapeState& state, const VectorXd& g);

/// Gradient of a tape root with respect to the bound parameters, in the
/// same layout as L2OParams::flatten().
VectorXd flat_gradient(const ad::Gradients& grads, const TapeParams& params);

}  // namespace l2o
