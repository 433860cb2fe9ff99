#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace l2o {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;
using RowVectorXd = RowVector<double>;

}  // namespace l2o

namespace l2o {

/// a * b with every output row computed by the same instruction sequence.
/// Eigen's GEMM kernels treat trailing rows differently, so a row's rounding
/// can depend on its position; the learned optimizer needs bitwise
/// permutation equivariance over coordinates (rows).
inline MatrixXd row_stable_product(const MatrixXd& a, const MatrixXd& b) {
  eigen_assert(a.cols() == b.rows());
  MatrixXd out = MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    double* dst = out.col(j).data();
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      const double bkj = b(k, j);
      const double* src = a.col(k).data();
      for (Eigen::Index i = 0; i < a.rows(); ++i) dst[i] += src[i] * bkj;
    }
  }
  return out;
}

/// Elementwise tanh through std::tanh; Eigen may vectorize its own tanh with
/// an approximation that differs from the scalar tail.
inline MatrixXd tanh_of(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

}  // namespace l2o
