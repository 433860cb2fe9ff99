#pragma once

// Hand-crafted optimizers. Every step returns an additive update
// (theta_next = theta + update), so a descent step opposes the gradient.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "l2o/types.hpp"

namespace l2o {

enum class TeacherType { SGD, Adam, Adagrad, RMSProp };

struct TeacherKind {
  TeacherType type = TeacherType::SGD;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.9;  // RMSProp accumulator decay

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("teacher lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("teacher betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("teacher eps must be > 0");
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("rmsprop decay must lie in [0, 1)");
  }

  bool operator==(const TeacherKind&) const = default;

  static TeacherKind sgd(double lr = 0.01) { return {TeacherType::SGD, lr}; }
  static TeacherKind adam(double lr = 0.01, double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8) {
    return {TeacherType::Adam, lr, beta1, beta2, eps};
  }
  static TeacherKind adagrad(double lr = 0.01, double eps = 1e-10) {
    TeacherKind k{TeacherType::Adagrad, lr};
    k.eps = eps;
    return k;
  }
  static TeacherKind rmsprop(double lr = 0.01, double decay = 0.9, double eps = 1e-10) {
    TeacherKind k{TeacherType::RMSProp, lr};
    k.decay = decay;
    k.eps = eps;
    return k;
  }
};

inline std::string to_string(TeacherType t) {
  switch (t) {
    case TeacherType::SGD:
      return "sgd";
    case TeacherType::Adam:
      return "adam";
    case TeacherType::Adagrad:
      return "adagrad";
    case TeacherType::RMSProp:
      return "rmsprop";
  }
  return "unknown";
}

/// Defaults per kind: lr 0.01; Adam eps 1e-8; Adagrad and RMSProp eps 1e-10.
inline TeacherKind teacher_from_string(const std::string& name, double lr = 0.01) {
  if (name == "sgd") return TeacherKind::sgd(lr);
  if (name == "adam") return TeacherKind::adam(lr);
  if (name == "adagrad") return TeacherKind::adagrad(lr);
  if (name == "rmsprop") return TeacherKind::rmsprop(lr);
  throw std::invalid_argument("unknown teacher '" + name + "'");
}

template <typename Scalar>
struct TeacherState {
  std::int64_t step = 0;
  Vector<Scalar> m;    // Adam first moment
  Vector<Scalar> v;    // Adam second moment
  Vector<Scalar> acc;  // Adagrad / RMSProp accumulator

  static TeacherState zeros(Eigen::Index dim) {
    return {0, Vector<Scalar>::Zero(dim), Vector<Scalar>::Zero(dim), Vector<Scalar>::Zero(dim)};
  }
};

/// One optimizer step. `state` is advanced in place; the returned vector is
/// the additive update.
template <typename Scalar, typename Derived>
Vector<Scalar> teacher_step(const TeacherKind& kind, TeacherState<Scalar>& state,
                            const Eigen::MatrixBase<Derived>& g) {
  const Eigen::Index d = g.size();
  if (state.m.size() != d || state.v.size() != d || state.acc.size() != d) {
    throw std::invalid_argument("teacher_step: state dimension " + std::to_string(state.m.size()) +
                                " does not match gradient dimension " + std::to_string(d));
  }
  const Scalar lr = static_cast<Scalar>(kind.lr);
  const Scalar eps = static_cast<Scalar>(kind.eps);
  ++state.step;
  switch (kind.type) {
    case TeacherType::SGD:
      return -lr * g;
    case TeacherType::Adam: {
      const Scalar b1 = static_cast<Scalar>(kind.beta1);
      const Scalar b2 = static_cast<Scalar>(kind.beta2);
      state.m = b1 * state.m + (Scalar(1) - b1) * g;
      state.v = b2 * state.v + (Scalar(1) - b2) * g.cwiseAbs2();
      const auto t = static_cast<Scalar>(state.step);
      const Scalar c1 = Scalar(1) - std::pow(b1, t);
      const Scalar c2 = Scalar(1) - std::pow(b2, t);
      return (-lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps)).matrix();
    }
    case TeacherType::Adagrad:
      state.acc += g.cwiseAbs2();
      return (-lr * g.array() / (state.acc.array() + eps).sqrt()).matrix();
    case TeacherType::RMSProp: {
      const Scalar rho = static_cast<Scalar>(kind.decay);
      state.acc = rho * state.acc + (Scalar(1) - rho) * g.cwiseAbs2();
      return (-lr * g.array() / (state.acc.array() + eps).sqrt()).matrix();
    }
  }
  throw std::logic_error("teacher_step: unknown teacher type");
}

}  // namespace l2o
