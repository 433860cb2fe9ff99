#pragma once

// Imitation of analytical optimizers as a multi-task regularizer, and the
// self-improving mixed-trajectory baseline. Both run on top of MetaTrainer.

#include <cstdint>
#include <string>
#include <vector>

#include "l2o/meta_trainer.hpp"
#include "l2o/teachers.hpp"

namespace l2o {

struct ImitationConfig {
  double r = 0.3;
  std::vector<TeacherKind> teachers{TeacherKind::adam(0.01), TeacherKind::sgd(0.01),
                                    TeacherKind::adagrad(0.01)};
  int epochs = 300;

  void validate() const;
};

/// Rolls an analytical optimizer for `steps` steps, recording
/// (g_t, update_t, loss_t) under the same step convention as rollout_l2o.
Trajectory teacher_trajectory(const TeacherKind& kind, OptimizeeInstance& inst, const VectorXd& theta0,
                              int steps, const DivergenceRule& rule = {});

struct ImitationSegment {
  double loss = 0.0;
  VectorXd grad;
};

/// sum_{t in [begin, begin+count)} omega_t |teacher_update_t - l2o_update_t|^2
/// with the recurrent state entering as a constant and advanced in place.
ImitationSegment imitation_segment(const L2OParams& phi, const Trajectory& traj,
                                   const std::vector<double>& omega, std::size_t begin, std::size_t count,
                                   L2OState& state);

struct ImitationResult {
  double loss = 0.0;
  int segments_applied = 0;
};

/// Replays the teacher's gradients through the learned optimizer and takes a
/// meta-optimizer step per segment on the squared imitation error.
ImitationResult imitation_update(L2OParams& phi, const Trajectory& traj, const std::vector<double>& omega,
                                 MetaOptimizer& opt, int segment);

enum class EpisodeKind { MetaLoss, Imitation, SelfImproving };

struct EpisodePlan {
  EpisodeKind kind = EpisodeKind::MetaLoss;
  int teacher = -1;
};

/// Draws u ~ U(0,1) from the epoch's own stream; u < r selects an imitation
/// episode with a uniformly chosen teacher.
EpisodePlan plan_episode(std::uint64_t seed, int epoch, double r, std::size_t teacher_count);

struct EpisodeLog {
  int epoch = 0;
  std::string kind;  // "Lf", "IL:<teacher>", "SI:mixed"
  double loss = 0.0;
  int horizon = 0;
};

/// One epoch of the imitation mixture at horizon n_train.
EpisodeLog il_episode(L2OParams& phi, MetaTrainer& trainer, const ImitationConfig& ic, int epoch,
                      int n_train);

/// Runs ic.epochs episodes at a fixed horizon and returns the final phi.
L2OParams il_train(L2OParams phi0, const ImitationConfig& ic, MetaTrainer& trainer, int n_train,
                   std::vector<EpisodeLog>* log = nullptr);

struct SelfImprovingSchedule {
  std::vector<TeacherKind> teachers{TeacherKind::adam(0.01), TeacherKind::sgd(0.01),
                                    TeacherKind::adagrad(0.01)};
  /// Starting probability of each teacher; negative selects 1/(k+1).
  double initial_teacher_prob = -1.0;
  int anneal_epochs = 100;

  void validate() const;
  /// p_0 (learned optimizer) followed by p_1..p_k at `epoch`.
  [[nodiscard]] std::vector<double> probabilities(int epoch) const;
};

/// One epoch on a single trajectory whose steps are drawn from the current
/// mixture; teacher updates enter the tape as constants and the loss is the
/// ordinary meta-loss.
EpisodeLog self_improving_epoch(L2OParams& phi, MetaTrainer& trainer, const SelfImprovingSchedule& sis,
                                int epoch, int n_train);

L2OParams self_improving_train(L2OParams phi0, const SelfImprovingSchedule& sis, MetaTrainer& trainer,
                               int epochs, int n_train, std::vector<EpisodeLog>* log = nullptr);

}  // namespace l2o
