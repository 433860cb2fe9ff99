#include "l2o/meta_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "l2o/seeds.hpp"

namespace l2o {

namespace {

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

bool DivergenceRule::diverged(double loss, double initial_loss) const {
  if (!std::isfinite(loss)) return true;
  const double base = std::isfinite(initial_loss) ? std::max(1.0, std::abs(initial_loss)) : 1.0;
  return loss > factor * base;
}

MetaLossSpec MetaLossSpec::uniform(int horizon, int unroll_segment) {
  MetaLossSpec s;
  s.horizon = horizon;
  s.omega.assign(static_cast<std::size_t>(std::max(horizon, 0)), 1.0);
  s.unroll_segment = std::min(unroll_segment, horizon);
  s.validate();
  return s;
}

void MetaLossSpec::validate() const {
  if (horizon < 1) throw std::invalid_argument("meta-loss horizon must be >= 1");
  if (omega.size() != static_cast<std::size_t>(horizon)) {
    throw std::invalid_argument("meta-loss omega length must equal the horizon");
  }
  for (double w : omega) {
    if (!(w >= 0.0)) throw std::invalid_argument("meta-loss omega entries must be >= 0");
  }
  if (unroll_segment < 1 || unroll_segment > horizon) {
    throw std::invalid_argument("unroll segment must lie in [1, horizon]");
  }
}

void TrainConfig::validate() const {
  optimizee.validate();
  if (!(meta_lr > 0.0)) throw std::invalid_argument("meta_lr must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (n_train < 1) throw std::invalid_argument("n_train must be >= 1");
  if (unroll < 1) throw std::invalid_argument("unroll must be >= 1");
  if (train_instances < 1) throw std::invalid_argument("train_instances must be >= 1");
  if (valid_instances < 1) throw std::invalid_argument("valid_instances must be >= 1");
  for (int i = 0; i < train_instances; ++i) {
    for (int j = 0; j < valid_instances; ++j) {
      if (train_instance_seed(i) == valid_instance_seed(j)) {
        throw std::invalid_argument("validation seeds collide with training seeds");
      }
    }
  }
}

std::uint64_t TrainConfig::train_instance_seed(int k) const {
  return derive_seed(seed, "train-instance", static_cast<std::uint64_t>(k));
}

std::uint64_t TrainConfig::valid_instance_seed(int k) const {
  return derive_seed(seed, "valid-instance", static_cast<std::uint64_t>(k));
}

void MetaOptimizer::apply(L2OParams& phi, const VectorXd& grad) {
  if (state_.m.size() == 0) {
    state_ = TeacherState<double>::zeros(grad.size());
  }
  const VectorXd update = teacher_step(kind_, state_, grad);
  phi.assign_flat(phi.flatten() + update);
}

Trajectory rollout_l2o(const L2OParams& phi, OptimizeeInstance& inst, const VectorXd& theta0, int steps,
                       const DivergenceRule& rule, const StepObserver& observer) {
  if (steps < 1) throw std::invalid_argument("rollout_l2o: steps must be >= 1");
  Trajectory traj;
  traj.produced_by = Producer::L2O;
  VectorXd theta = theta0;
  L2OState state = L2OState::zeros(theta.size(), phi.hidden);
  LossGrad cur = inst.loss_and_grad(theta, inst.next_batch());
  traj.initial_loss = cur.loss;
  if (observer) observer(0, theta);
  if (rule.diverged(cur.loss, cur.loss) || !all_finite(cur.grad)) {
    traj.diverged_at = 0;
    return traj;
  }
  traj.steps.reserve(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    VectorXd update = l2o_step(phi, state, cur.grad);
    VectorXd next_theta = theta + update;
    if (!all_finite(next_theta)) {
      traj.diverged_at = t;
      break;
    }
    LossGrad next = inst.loss_and_grad(next_theta, inst.next_batch());
    if (rule.diverged(next.loss, traj.initial_loss) || !all_finite(next.grad)) {
      traj.diverged_at = t;
      break;
    }
    traj.steps.push_back({std::move(cur.grad), std::move(update), next.loss});
    theta = std::move(next_theta);
    cur = std::move(next);
    if (observer) observer(t, theta);
  }
  return traj;
}

UnrollCursor start_unroll(const L2OParams& phi, OptimizeeInstance& inst, const VectorXd& theta0) {
  UnrollCursor c;
  c.theta = theta0;
  c.state = L2OState::zeros(theta0.size(), phi.hidden);
  LossGrad lg = inst.loss_and_grad(theta0, inst.next_batch());
  c.g = std::move(lg.grad);
  c.initial_loss = lg.loss;
  return c;
}

SegmentResult unroll_segment(const L2OParams& phi, OptimizeeInstance& inst, UnrollCursor& cursor,
                             int count, const MetaLossSpec& spec, const DivergenceRule& rule,
                             const UpdateOverride& override_update) {
  SegmentResult result;
  ad::Tape tape;
  const TapeParams params = bind(tape, phi);
  TapeState state = TapeState::constant(tape, cursor.state);
  ad::Var theta = tape.constant(cursor.theta);
  ad::Var total;
  VectorXd g = cursor.g;

  for (int k = 0; k < count; ++k) {
    const int t = cursor.step + k + 1;
    if (t > spec.horizon) break;
    const ad::Var learned = l2o_step(params, state, g);
    ad::Var update = learned;
    if (override_update) {
      if (auto forced = override_update(t, g)) {
        update = tape.constant(*forced);
      }
    }
    const ad::Var next_theta = theta + update;
    if (!next_theta.value().allFinite()) {
      result.diverged = true;
      break;
    }
    LossGrad next = inst.loss_and_grad(next_theta.value().col(0), inst.next_batch());
    if (rule.diverged(next.loss, cursor.initial_loss) || !next.grad.allFinite()) {
      result.diverged = true;
      break;
    }
    const ad::Var f = tape.external(next_theta, next.loss, next.grad);
    const ad::Var term = ad::scale(f, spec.omega[static_cast<std::size_t>(t - 1)]);
    total = total.valid() ? total + term : term;
    result.records.push_back({g, update.value().col(0), next.loss});
    theta = next_theta;
    g = std::move(next.grad);
    ++result.steps;
  }

  if (result.steps > 0) {
    result.loss = ad::scalar_value(total);
    result.grad = flat_gradient(tape.backward(total), params);
  } else {
    result.grad = VectorXd::Zero(phi.parameter_count());
  }
  if (!result.diverged) {
    cursor.theta = theta.value().col(0);
    cursor.state = state.values();
    cursor.g = std::move(g);
  }
  cursor.step += result.steps;
  return result;
}

MetaUpdateResult meta_update(L2OParams& phi, MetaOptimizer& opt, OptimizeeInstance& inst,
                             const VectorXd& theta0, const MetaLossSpec& spec, const DivergenceRule& rule,
                             const UpdateOverride& override_update) {
  spec.validate();
  MetaUpdateResult out;
  UnrollCursor cursor = start_unroll(phi, inst, theta0);
  int segment = 0;
  while (cursor.step < spec.horizon) {
    SegmentResult seg = unroll_segment(phi, inst, cursor, spec.unroll_segment, spec, rule, override_update);
    if (seg.diverged || !std::isfinite(seg.loss) || !seg.grad.allFinite()) {
      out.events.push_back({-1, segment, "diverged: segment update skipped"});
      out.diverged = true;
      break;
    }
    out.meta_loss += seg.loss;
    opt.apply(phi, seg.grad);
    ++out.segments_applied;
    ++segment;
  }
  return out;
}

MetaTrainer::MetaTrainer(TrainConfig cfg) : cfg_(std::move(cfg)), opt_(cfg_.meta_lr) {
  cfg_.validate();
  for (int k = 0; k < cfg_.train_instances; ++k) {
    train_.push_back(sample_instance(cfg_.optimizee, cfg_.train_instance_seed(k)));
  }
  for (int k = 0; k < cfg_.valid_instances; ++k) {
    valid_.push_back(sample_instance(cfg_.optimizee, cfg_.valid_instance_seed(k)));
  }
}

OptimizeeInstance& MetaTrainer::epoch_instance(int epoch) {
  auto& inst = train_[static_cast<std::size_t>(epoch) % train_.size()];
  inst.reseed_batches(derive_seed(cfg_.seed, "train-batches", static_cast<std::uint64_t>(epoch)));
  return inst;
}

VectorXd MetaTrainer::epoch_theta0(int epoch) {
  const auto& inst = train_[static_cast<std::size_t>(epoch) % train_.size()];
  return init_params(inst, derive_seed(cfg_.seed, "train-theta0", static_cast<std::uint64_t>(epoch)));
}

EpochResult MetaTrainer::train_epoch(L2OParams& phi, int epoch, int n_train) {
  const VectorXd theta0 = epoch_theta0(epoch);
  OptimizeeInstance& inst = epoch_instance(epoch);
  const MetaLossSpec spec = MetaLossSpec::uniform(n_train, cfg_.unroll);
  MetaUpdateResult r = meta_update(phi, opt_, inst, theta0, spec, cfg_.divergence());
  for (auto& e : r.events) e.epoch = epoch;
  return {r.meta_loss, std::move(r.events)};
}

double MetaTrainer::validate(const L2OParams& phi, int n_valid) {
  if (valid_.empty()) throw std::logic_error("validate: no validation instances");
  double total = 0.0;
  for (std::size_t k = 0; k < valid_.size(); ++k) {
    OptimizeeInstance& inst = valid_[k];
    inst.reseed_batches(derive_seed(cfg_.seed, "valid-batches", k));
    const VectorXd theta0 = init_params(inst, derive_seed(cfg_.seed, "valid-theta0", k));
    const Trajectory traj = rollout_l2o(phi, inst, theta0, n_valid, cfg_.divergence());
    if (traj.diverged_at) {
      total += cfg_.valid_penalty;
      continue;
    }
    double sum = 0.0;
    for (const auto& s : traj.steps) sum += s.loss;
    total += sum;
  }
  return total / static_cast<double>(valid_.size());
}

}  // namespace l2o
