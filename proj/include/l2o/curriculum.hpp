#pragma once

// Progressive-unrolling scheduler.
//
// Each stage i trains at horizon ladder[i] in periods of t_period epochs and
// validates at n_valid_for(i) after every period. A stage runs at least
// n_period periods and keeps going while the latest period set a new best.
// If a stage never improves on its baseline, training stops and the best
// snapshot from earlier stages is returned. Entering a new stage restarts
// from the best snapshot and re-baselines the best loss by validating that
// snapshot at the new stage's validation horizon.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2o {

struct CurriculumConfig {
  std::vector<int> ladder{20, 40, 100, 200};
  int n_period = 3;
  int t_period = 25;
  /// Upper bound on periods within one stage; 0 means unbounded.
  int max_periods = 10;

  void validate() const {
    if (ladder.size() < 2) {
      throw std::invalid_argument("curriculum ladder needs at least two horizons");
    }
    for (std::size_t k = 0; k < ladder.size(); ++k) {
      if (ladder[k] < 1) throw std::invalid_argument("curriculum ladder entries must be >= 1");
      if (k > 0 && ladder[k] <= ladder[k - 1]) {
        throw std::invalid_argument("curriculum ladder must be strictly increasing");
      }
    }
    if (n_period < 1) throw std::invalid_argument("n_period must be >= 1");
    if (t_period < 1) throw std::invalid_argument("t_period must be >= 1");
    if (max_periods < 0) throw std::invalid_argument("max_periods must be >= 0");
    if (max_periods != 0 && max_periods < n_period) {
      throw std::invalid_argument("max_periods must be 0 or >= n_period");
    }
  }

  bool operator==(const CurriculumConfig&) const = default;
};

/// Validation horizon for stage i: the next training horizon, or for the last
/// stage a geometric continuation round(last * last / previous).
inline int n_valid_for(const CurriculumConfig& cc, std::size_t stage) {
  const auto& l = cc.ladder;
  if (l.size() < 2) {
    throw std::invalid_argument("n_valid_for: a single-horizon ladder has no validation horizon");
  }
  if (stage >= l.size()) throw std::out_of_range("n_valid_for: stage outside ladder");
  if (stage + 1 < l.size()) return l[stage + 1];
  const double last = l.back();
  const double prev = l[l.size() - 2];
  return static_cast<int>(std::lround(last * last / prev));
}

struct CurriculumTraceRow {
  int stage = 0;
  int period = 0;  // 0 marks the stage-entry re-baseline
  int epoch = 0;   // epochs completed when the row was written
  int n_train = 0;
  int n_valid = 0;
  double l_val = 0.0;
  double l_min = 0.0;
  bool improved = false;

  bool operator==(const CurriculumTraceRow&) const = default;
};

enum class CurriculumExit { Stopped, LadderExhausted };

template <typename Model>
struct CurriculumResult {
  Model best;
  /// L_min at exit: the best snapshot's loss at the last validation horizon
  /// it was scored on.
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<CurriculumTraceRow> trace;
  CurriculumExit exit = CurriculumExit::Stopped;
  /// Stage during which `best` was snapshotted (-1: never improved).
  int best_stage = -1;
  int total_epochs = 0;
  std::vector<int> stage_epochs;

  /// Optimizee steps spent in training up to and including best_stage.
  [[nodiscard]] long long iterations_to_best(const CurriculumConfig& cc) const {
    long long n = 0;
    for (int s = 0; s <= best_stage && s < static_cast<int>(stage_epochs.size()); ++s) {
      n += static_cast<long long>(stage_epochs[static_cast<std::size_t>(s)]) * cc.ladder[static_cast<std::size_t>(s)];
    }
    return n;
  }
};

struct EpochContext {
  int stage = 0;
  int n_train = 0;
  int epoch = 0;  // global epoch index across stages
};

template <typename Model>
struct CurriculumHooks {
  std::function<void(Model&, const EpochContext&)> train_epoch;
  std::function<double(const Model&, int n_valid)> validate;
  /// Called when a stage restarts from the best snapshot (optional).
  std::function<void(int stage)> on_stage_enter;
  /// Called after each trace row is produced (optional).
  std::function<void(const CurriculumTraceRow&)> on_trace;
};

template <typename Model>
CurriculumResult<Model> curriculum_train(Model phi0, const CurriculumConfig& cc,
                                         const CurriculumHooks<Model>& hooks) {
  cc.validate();
  if (!hooks.train_epoch || !hooks.validate) {
    throw std::invalid_argument("curriculum_train: train_epoch and validate hooks are required");
  }
  CurriculumResult<Model> out;
  out.best = phi0;
  Model current = std::move(phi0);
  double l_min = std::numeric_limits<double>::infinity();
  int epoch = 0;
  std::size_t stage = 0;

  auto emit = [&](const CurriculumTraceRow& row) {
    out.trace.push_back(row);
    if (hooks.on_trace) hooks.on_trace(row);
  };

  while (true) {
    if (stage >= cc.ladder.size()) {
      out.exit = CurriculumExit::LadderExhausted;
      break;
    }
    const int n_train = cc.ladder[stage];
    const int n_valid = n_valid_for(cc, stage);
    out.stage_epochs.push_back(0);
    int n = 1;
    bool stop = true;
    bool last_improved = false;
    while (n <= cc.n_period || last_improved) {
      if (cc.max_periods != 0 && n > cc.max_periods) break;
      ++n;
      for (int t = 0; t < cc.t_period; ++t) {
        hooks.train_epoch(current, EpochContext{static_cast<int>(stage), n_train, epoch});
        ++epoch;
        ++out.stage_epochs.back();
      }
      const double l_val = hooks.validate(current, n_valid);
      last_improved = l_val < l_min;
      if (last_improved) {
        l_min = l_val;
        out.best = current;
        out.best_loss = l_val;
        out.best_stage = static_cast<int>(stage);
        stop = false;
      }
      emit({static_cast<int>(stage), n - 1, epoch, n_train, n_valid, l_val, l_min, last_improved});
    }
    if (stop) {
      out.exit = CurriculumExit::Stopped;
      break;
    }
    ++stage;
    current = out.best;
    if (stage < cc.ladder.size()) {
      if (hooks.on_stage_enter) hooks.on_stage_enter(static_cast<int>(stage));
      const int next_valid = n_valid_for(cc, stage);
      l_min = hooks.validate(out.best, next_valid);
      out.best_loss = l_min;
      emit({static_cast<int>(stage), 0, epoch, cc.ladder[stage], next_valid, l_min, l_min, false});
    }
  }
  out.total_epochs = epoch;
  return out;
}

}  // namespace l2o
