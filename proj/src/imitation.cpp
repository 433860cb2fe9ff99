#include "l2o/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "l2o/seeds.hpp"

namespace l2o {

void ImitationConfig::validate() const {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("r must lie in [0, 1]");
  if (teachers.empty()) throw std::invalid_argument("imitation needs at least one teacher");
  for (const auto& t : teachers) t.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

Trajectory teacher_trajectory(const TeacherKind& kind, OptimizeeInstance& inst, const VectorXd& theta0,
                              int steps, const DivergenceRule& rule) {
  if (steps < 1) throw std::invalid_argument("teacher_trajectory: steps must be >= 1");
  Trajectory traj;
  traj.produced_by = Producer::Teacher;
  traj.teacher = kind.type;
  VectorXd theta = theta0;
  auto state = TeacherState<double>::zeros(theta.size());
  LossGrad cur = inst.loss_and_grad(theta, inst.next_batch());
  traj.initial_loss = cur.loss;
  if (rule.diverged(cur.loss, cur.loss) || !cur.grad.allFinite()) {
    traj.diverged_at = 0;
    return traj;
  }
  traj.steps.reserve(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    VectorXd update = teacher_step(kind, state, cur.grad);
    VectorXd next_theta = theta + update;
    LossGrad next = inst.loss_and_grad(next_theta, inst.next_batch());
    if (!next_theta.allFinite() || rule.diverged(next.loss, traj.initial_loss) || !next.grad.allFinite()) {
      traj.diverged_at = t;
      break;
    }
    traj.steps.push_back({std::move(cur.grad), std::move(update), next.loss});
    theta = std::move(next_theta);
    cur = std::move(next);
  }
  return traj;
}

ImitationSegment imitation_segment(const L2OParams& phi, const Trajectory& traj,
                                   const std::vector<double>& omega, std::size_t begin, std::size_t count,
                                   L2OState& state) {
  ad::Tape tape;
  const TapeParams params = bind(tape, phi);
  TapeState ts = TapeState::constant(tape, state);
  ad::Var total;
  const std::size_t end = std::min(traj.size(), begin + count);
  for (std::size_t t = begin; t < end; ++t) {
    const auto& rec = traj.steps[t];
    const ad::Var learned = l2o_step(params, ts, rec.g);
    const ad::Var diff = tape.constant(rec.update) - learned;
    const ad::Var term = ad::scale(ad::sum(ad::square(diff)), omega.at(t));
    total = total.valid() ? total + term : term;
  }
  ImitationSegment out;
  if (!total.valid()) {
    out.grad = VectorXd::Zero(phi.parameter_count());
    return out;
  }
  out.loss = ad::scalar_value(total);
  out.grad = flat_gradient(tape.backward(total), params);
  state = ts.values();
  return out;
}

ImitationResult imitation_update(L2OParams& phi, const Trajectory& traj, const std::vector<double>& omega,
                                 MetaOptimizer& opt, int segment) {
  if (traj.size() < 1) throw std::invalid_argument("imitation_update: trajectory is empty");
  if (segment < 1) throw std::invalid_argument("imitation_update: segment must be >= 1");
  if (omega.size() < traj.size()) throw std::invalid_argument("imitation_update: omega shorter than trajectory");
  ImitationResult out;
  L2OState state = L2OState::zeros(traj.steps.front().g.size(), phi.hidden);
  for (std::size_t begin = 0; begin < traj.size(); begin += static_cast<std::size_t>(segment)) {
    ImitationSegment seg = imitation_segment(phi, traj, omega, begin, static_cast<std::size_t>(segment), state);
    if (!std::isfinite(seg.loss) || !seg.grad.allFinite()) break;
    out.loss += seg.loss;
    opt.apply(phi, seg.grad);
    ++out.segments_applied;
  }
  return out;
}

EpisodePlan plan_episode(std::uint64_t seed, int epoch, double r, std::size_t teacher_count) {
  Rng rng = make_rng(seed, "il-episode", static_cast<std::uint64_t>(epoch));
  const double u = uniform01(rng);
  if (!(u < r) || teacher_count == 0) return {EpisodeKind::MetaLoss, -1};
  const auto pick = static_cast<int>(uniform01(rng) * static_cast<double>(teacher_count));
  return {EpisodeKind::Imitation, std::min(pick, static_cast<int>(teacher_count) - 1)};
}

EpisodeLog il_episode(L2OParams& phi, MetaTrainer& trainer, const ImitationConfig& ic, int epoch,
                      int n_train) {
  const auto& cfg = trainer.config();
  const EpisodePlan plan = plan_episode(cfg.seed, epoch, ic.r, ic.teachers.size());
  if (plan.kind == EpisodeKind::MetaLoss) {
    const EpochResult r = trainer.train_epoch(phi, epoch, n_train);
    return {epoch, "Lf", r.loss, n_train};
  }
  const TeacherKind& teacher = ic.teachers[static_cast<std::size_t>(plan.teacher)];
  const VectorXd theta0 = trainer.epoch_theta0(epoch);
  OptimizeeInstance& inst = trainer.epoch_instance(epoch);
  const Trajectory traj = teacher_trajectory(teacher, inst, theta0, n_train, cfg.divergence());
  const std::string kind = "IL:" + to_string(teacher.type);
  if (traj.size() == 0) return {epoch, kind, 0.0, n_train};
  const MetaLossSpec spec = MetaLossSpec::uniform(n_train, cfg.unroll);
  const ImitationResult r = imitation_update(phi, traj, spec.omega, trainer.meta_optimizer(), spec.unroll_segment);
  return {epoch, kind, r.loss, n_train};
}

L2OParams il_train(L2OParams phi0, const ImitationConfig& ic, MetaTrainer& trainer, int n_train,
                   std::vector<EpisodeLog>* log) {
  ic.validate();
  L2OParams phi = std::move(phi0);
  for (int epoch = 0; epoch < ic.epochs; ++epoch) {
    EpisodeLog e = il_episode(phi, trainer, ic, epoch, n_train);
    if (log) log->push_back(std::move(e));
  }
  return phi;
}

void SelfImprovingSchedule::validate() const {
  if (teachers.empty()) throw std::invalid_argument("self-improving needs at least one teacher");
  for (const auto& t : teachers) t.validate();
  if (anneal_epochs < 1) throw std::invalid_argument("anneal_epochs must be >= 1");
  const double k = static_cast<double>(teachers.size());
  if (initial_teacher_prob * k > 1.0 + 1e-12) {
    throw std::invalid_argument("initial teacher probabilities must sum to at most 1");
  }
}

std::vector<double> SelfImprovingSchedule::probabilities(int epoch) const {
  const std::size_t k = teachers.size();
  const double start = initial_teacher_prob >= 0.0 ? initial_teacher_prob : 1.0 / static_cast<double>(k + 1);
  const double remaining = std::max(0.0, 1.0 - static_cast<double>(epoch) / static_cast<double>(anneal_epochs));
  std::vector<double> p(k + 1, start * remaining);
  if (remaining == 0.0) {
    std::fill(p.begin(), p.end(), 0.0);
  }
  double teacher_mass = 0.0;
  for (std::size_t j = 1; j <= k; ++j) teacher_mass += p[j];
  p[0] = 1.0 - teacher_mass;
  return p;
}

EpisodeLog self_improving_epoch(L2OParams& phi, MetaTrainer& trainer, const SelfImprovingSchedule& sis,
                                int epoch, int n_train) {
  const auto& cfg = trainer.config();
  const std::vector<double> p = sis.probabilities(epoch);
  const VectorXd theta0 = trainer.epoch_theta0(epoch);
  OptimizeeInstance& inst = trainer.epoch_instance(epoch);

  Rng choice = make_rng(cfg.seed, "si-choice", static_cast<std::uint64_t>(epoch));
  std::vector<TeacherState<double>> states(sis.teachers.size(), TeacherState<double>::zeros(theta0.size()));
  UpdateOverride pick = [&](int, const VectorXd& g) -> std::optional<VectorXd> {
    // Every teacher sees every gradient so its moments follow the trajectory.
    std::vector<VectorXd> proposals;
    proposals.reserve(sis.teachers.size());
    for (std::size_t j = 0; j < sis.teachers.size(); ++j) {
      proposals.push_back(teacher_step(sis.teachers[j], states[j], g));
    }
    const double u = uniform01(choice);
    double cumulative = p[0];
    if (u < cumulative) return std::nullopt;
    for (std::size_t j = 1; j < p.size(); ++j) {
      cumulative += p[j];
      if (u < cumulative) return proposals[j - 1];
    }
    // Rounding left u past the last bucket: fall back to the last teacher
    // that still has mass.
    for (std::size_t j = p.size() - 1; j >= 1; --j) {
      if (p[j] > 0.0) return proposals[j - 1];
    }
    return std::nullopt;
  };
  const MetaLossSpec spec = MetaLossSpec::uniform(n_train, cfg.unroll);
  const MetaUpdateResult r = meta_update(phi, trainer.meta_optimizer(), inst, theta0, spec, cfg.divergence(), pick);
  return {epoch, "SI:mixed", r.meta_loss, n_train};
}

L2OParams self_improving_train(L2OParams phi0, const SelfImprovingSchedule& sis, MetaTrainer& trainer,
                               int epochs, int n_train, std::vector<EpisodeLog>* log) {
  sis.validate();
  L2OParams phi = std::move(phi0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    EpisodeLog e = self_improving_epoch(phi, trainer, sis, epoch, n_train);
    if (log) log->push_back(std::move(e));
  }
  return phi;
}

}  // namespace l2o
