#include "l2o/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "l2o/autodiff.hpp"
#include "l2o/imitation.hpp"
#include "l2o/meta_trainer.hpp"
#include "l2o/seeds.hpp"

namespace l2o {

namespace {

// Non-zero output weights and a larger output scale so every phi tensor
// moves the loss.
L2OParams probe_params(std::uint64_t seed, int hidden) {
  L2OParams phi = init_l2o(seed, hidden);
  Rng rng = make_rng(seed, "gradcheck-phi");
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : phi.w_out.reshaped()) v = u(rng);
  phi.b_out(0, 0) = u(rng);
  phi.output_scale = 0.1;
  return phi;
}

VectorXd fd_gradient(const L2OParams& phi, const std::function<double(const L2OParams&)>& loss, double eps) {
  const VectorXd p0 = phi.flatten();
  VectorXd out(p0.size());
  L2OParams probe = phi;
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    VectorXd v = p0;
    v[i] = p0[i] + eps;
    probe.assign_flat(v);
    const double up = loss(probe);
    v[i] = p0[i] - eps;
    probe.assign_flat(v);
    out[i] = (up - loss(probe)) / (2.0 * eps);
  }
  return out;
}

double rel_error(const VectorXd& analytic, const VectorXd& fd) {
  return (analytic - fd).cwiseAbs().maxCoeff() / std::max(1e-8, fd.cwiseAbs().maxCoeff());
}

OptimizeeInstance small_quadratic(std::uint64_t seed) {
  OptimizeeSpec spec;
  spec.quad_dim = 3;
  spec.quad_rows = 3;
  return sample_instance(spec, seed);
}

double primitives(std::uint64_t seed, double eps) {
  Rng rng = make_rng(seed, "gradcheck-primitives");
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd p(6);
  for (auto& v : p) v = n(rng);
  MatrixXd m(4, 6);
  for (auto& v : m.reshaped()) v = n(rng);
  return ad::grad_check(
      [m](ad::Tape& tape, ad::Var x) {
        const ad::Var a = tape.constant(m);
        const ad::Var h = ad::tanh(ad::matmul(a, x));
        const ad::Var s = ad::sigmoid(h);
        return ad::sum(ad::square(s * h));
      },
      p, eps);
}

double frozen_meta_loss(std::uint64_t seed, double eps) {
  auto inst = small_quadratic(seed);
  const L2OParams phi = probe_params(seed, 4);
  const VectorXd theta0 = init_params(inst, seed) * 50.0;
  auto cursor = start_unroll(phi, inst, theta0);
  auto spec = MetaLossSpec::uniform(5, 5);
  spec.omega = {1.0, 0.5, 2.0, 1.0, 0.25};
  const SegmentResult seg = unroll_segment(phi, inst, cursor, 5, spec, {});
  std::vector<VectorXd> gs;
  for (const auto& r : seg.records) gs.push_back(r.g);
  const auto rows = inst.full_batch_rows();
  const VectorXd fd = fd_gradient(
      phi,
      [&](const L2OParams& p) {
        VectorXd theta = theta0;
        auto state = L2OState::zeros(theta.size(), p.hidden);
        double total = 0.0;
        for (std::size_t t = 0; t < gs.size(); ++t) {
          theta += l2o_step(p, state, gs[t]);
          total += spec.omega[t] * inst.loss(theta, rows);
        }
        return total;
      },
      eps);
  return rel_error(seg.grad, fd);
}

double one_step_meta_loss(std::uint64_t seed, double eps) {
  auto inst = small_quadratic(seed + 100);
  const L2OParams phi = probe_params(seed + 100, 4);
  const VectorXd theta0 = init_params(inst, seed) * 50.0;
  auto cursor = start_unroll(phi, inst, theta0);
  const SegmentResult seg = unroll_segment(phi, inst, cursor, 1, MetaLossSpec::uniform(1, 1), {});
  const VectorXd fd = fd_gradient(
      phi,
      [&](const L2OParams& p) {
        OptimizeeInstance copy = inst;
        const Trajectory traj = rollout_l2o(p, copy, theta0, 1);
        return traj.steps.front().loss;
      },
      eps);
  return rel_error(seg.grad, fd);
}

double imitation_loss(std::uint64_t seed, double eps) {
  auto inst = small_quadratic(seed + 200);
  const VectorXd theta0 = init_params(inst, seed) * 50.0;
  const Trajectory traj = teacher_trajectory(TeacherKind::adam(), inst, theta0, 5);
  const L2OParams phi = probe_params(seed + 200, 4);
  const std::vector<double> omega{1.0, 2.0, 0.5, 1.0, 1.5};
  L2OState state = L2OState::zeros(theta0.size(), 4);
  const auto seg = imitation_segment(phi, traj, omega, 0, traj.size(), state);
  const VectorXd fd = fd_gradient(
      phi,
      [&](const L2OParams& p) {
        auto s = L2OState::zeros(theta0.size(), p.hidden);
        double total = 0.0;
        for (std::size_t t = 0; t < traj.size(); ++t) {
          total += omega[t] * (traj.steps[t].update - l2o_step(p, s, traj.steps[t].g)).squaredNorm();
        }
        return total;
      },
      eps);
  return rel_error(seg.grad, fd);
}

}  // namespace

std::vector<GradcheckResult> run_gradchecks(std::uint64_t seed, double eps) {
  std::vector<GradcheckResult> out{{"tape-primitives", 0.0},
                                   {"meta-loss-frozen-n5", 0.0},
                                   {"meta-loss-exact-n1", 0.0},
                                   {"imitation-loss", 0.0}};
  for (std::uint64_t k = 0; k < 3; ++k) {
    const std::uint64_t s = derive_seed(seed, "gradcheck", k);
    out[0].max_rel_error = std::max(out[0].max_rel_error, primitives(s, eps));
    out[1].max_rel_error = std::max(out[1].max_rel_error, frozen_meta_loss(s, eps));
    out[2].max_rel_error = std::max(out[2].max_rel_error, one_step_meta_loss(s, eps));
    out[3].max_rel_error = std::max(out[3].max_rel_error, imitation_loss(s, eps));
  }
  return out;
}

}  // namespace l2o
