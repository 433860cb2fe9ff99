#pragma once

// On-policy rollouts, truncated meta-gradients and validation for the
// learned optimizer.
//
// Step convention used everywhere: theta_0 is the start point and
// g_1 = grad f(theta_0). Step t applies update_t to reach theta_t and records
// loss_t = f(theta_t) on the batch drawn for that step; the same evaluation
// supplies g_{t+1}. The meta-loss is sum_t omega_t * loss_t.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "l2o/model.hpp"
#include "l2o/optimizee.hpp"
#include "l2o/teachers.hpp"

namespace l2o {

enum class Producer { L2O, Teacher, Mixed };

struct StepRecord {
  VectorXd g;
  VectorXd update;
  double loss = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  Producer produced_by = Producer::L2O;
  std::optional<TeacherType> teacher;
  double initial_loss = 0.0;
  /// 1-based index of the first divergent step; that step is not recorded.
  std::optional<int> diverged_at;

  [[nodiscard]] std::size_t size() const { return steps.size(); }
};

/// A loss is divergent when non-finite or above factor * max(1, initial).
struct DivergenceRule {
  double factor = 1e4;

  [[nodiscard]] bool diverged(double loss, double initial_loss) const;
};

struct MetaLossSpec {
  int horizon = 20;
  std::vector<double> omega;
  int unroll_segment = 20;

  /// omega_t = 1 for all t; the segment is clamped to the horizon.
  static MetaLossSpec uniform(int horizon, int unroll_segment = 20);
  void validate() const;
};

struct TrainConfig {
  OptimizeeSpec optimizee;
  double meta_lr = 1e-3;
  int epochs = 300;
  int n_train = 20;
  int unroll = 20;
  std::uint64_t seed = 0;
  int train_instances = 8;
  int valid_instances = 5;
  double valid_penalty = 1e6;
  double divergence_factor = 1e4;

  void validate() const;
  [[nodiscard]] std::uint64_t train_instance_seed(int k) const;
  [[nodiscard]] std::uint64_t valid_instance_seed(int k) const;
  [[nodiscard]] DivergenceRule divergence() const { return {divergence_factor}; }
};

/// Adam over the flattened optimizer parameters.
class MetaOptimizer {
 public:
  explicit MetaOptimizer(double lr = 1e-3) : kind_(TeacherKind::adam(lr)) {}

  void apply(L2OParams& phi, const VectorXd& grad);
  void reset() { state_ = {}; }
  [[nodiscard]] std::int64_t steps() const { return state_.step; }

 private:
  TeacherKind kind_;
  TeacherState<double> state_;
};

struct TrainEvent {
  int epoch = -1;
  int segment = -1;
  std::string what;
};

/// Observer for rollouts: called with the step index t (0 for the start
/// point) and theta_t. Used by the evaluation harness.
using StepObserver = std::function<void(int, const VectorXd&)>;

/// Evaluative rollout; never touches phi. Stops at the first divergent step.
Trajectory rollout_l2o(const L2OParams& phi, OptimizeeInstance& inst, const VectorXd& theta0, int steps,
                       const DivergenceRule& rule = {}, const StepObserver& observer = {});

/// Where an unroll stands between truncation segments.
struct UnrollCursor {
  VectorXd theta;
  L2OState state;
  VectorXd g;
  double initial_loss = 0.0;
  int step = 0;  // steps taken so far
};

/// Starts an unroll at theta0: draws the first batch and computes g_1.
UnrollCursor start_unroll(const L2OParams& phi, OptimizeeInstance& inst, const VectorXd& theta0);

/// Per-step update override for mixed trajectories. Given the 1-based step
/// and g_t, returns the update to apply instead of the learned one, or
/// nullopt to apply the learned update.
using UpdateOverride = std::function<std::optional<VectorXd>(int, const VectorXd&)>;

struct SegmentResult {
  double loss = 0.0;
  VectorXd grad;  // d loss / d phi, flattened
  bool diverged = false;
  int steps = 0;
  std::vector<StepRecord> records;
};

/// Runs `count` steps from the cursor on a fresh tape and backpropagates
/// sum_t omega_t f(theta_t) into phi. Gradients inputs g_t are constants;
/// theta and the recurrent state enter the tape as constants, so nothing
/// flows across segments. On divergence the cursor is left at the last good
/// step and `diverged` is set.
SegmentResult unroll_segment(const L2OParams& phi, OptimizeeInstance& inst, UnrollCursor& cursor,
                             int count, const MetaLossSpec& spec, const DivergenceRule& rule,
                             const UpdateOverride& override_update = {});

struct MetaUpdateResult {
  double meta_loss = 0.0;
  int segments_applied = 0;
  std::vector<TrainEvent> events;
  bool diverged = false;
};

/// One truncated meta-training pass over spec.horizon steps: a meta-optimizer
/// step per segment. A divergent segment is skipped and ends the pass.
MetaUpdateResult meta_update(L2OParams& phi, MetaOptimizer& opt, OptimizeeInstance& inst,
                             const VectorXd& theta0, const MetaLossSpec& spec,
                             const DivergenceRule& rule = {}, const UpdateOverride& override_update = {});

struct EpochResult {
  double loss = 0.0;
  std::vector<TrainEvent> events;
};

/// Owns the training and validation optimizee pools and the meta-optimizer.
class MetaTrainer {
 public:
  explicit MetaTrainer(TrainConfig cfg);

  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  MetaOptimizer& meta_optimizer() { return opt_; }

  /// Instance for `epoch` with its batch stream reseeded for that epoch,
  /// plus the epoch's exploring-start theta0.
  OptimizeeInstance& epoch_instance(int epoch);
  [[nodiscard]] VectorXd epoch_theta0(int epoch);

  /// One meta-training epoch: a single n_train-step trajectory from a fresh
  /// theta0.
  EpochResult train_epoch(L2OParams& phi, int epoch, int n_train);

  /// Mean over validation instances of sum_{t<=n_valid} f(theta_t);
  /// divergent rollouts score the configured penalty.
  double validate(const L2OParams& phi, int n_valid);

  [[nodiscard]] std::size_t validation_size() const { return valid_.size(); }

 private:
  TrainConfig cfg_;
  std::vector<OptimizeeInstance> train_;
  std::vector<OptimizeeInstance> valid_;
  MetaOptimizer opt_;
};

}  // namespace l2o
