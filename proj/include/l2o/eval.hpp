#pragma once

// Long-horizon evaluation of learned and analytical optimizers over many
// seeds, with per-step aggregates and comparison tables.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "l2o/meta_trainer.hpp"
#include "l2o/model.hpp"
#include "l2o/optimizee.hpp"
#include "l2o/teachers.hpp"

namespace l2o {

struct EvalConfig {
  std::string name = "l2o";
  /// Exactly one of phi / teacher must be set.
  std::optional<L2OParams> phi;
  std::optional<TeacherKind> teacher;
  OptimizeeSpec optimizee;
  int horizon = 1000;
  std::vector<std::uint64_t> seeds;
  int log_every = 10;
  double divergence_factor = 1e4;
  /// Overrides sample_instance for fixtures; receives the seed.
  std::function<OptimizeeInstance(std::uint64_t)> instance_factory;

  void validate() const;
};

struct SeedCurve {
  std::uint64_t seed = 0;
  std::vector<int> steps;
  std::vector<double> losses;
  std::optional<int> diverged_at;
};

struct EvalReport {
  std::string optimizer;
  OptimizeeSpec optimizee;
  int horizon = 0;
  int log_every = 1;
  std::vector<SeedCurve> curves;
  /// Logged steps and the aggregates over seeds alive at each of them.
  std::vector<int> steps;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<int> alive;
  /// Summary over seeds that reached the horizon; +inf when none did.
  double median_final = 0.0;
  double mean_final = 0.0;
  double std_final = 0.0;
  double divergence_rate = 0.0;
  /// Trapezoid area under log10 of the mean curve over logged steps.
  double log_auc = 0.0;
};

/// Per-seed loss is the full-data training loss of the optimizee at each
/// logged step; the optimizer itself sees mini-batch gradients.
EvalReport run_eval(const EvalConfig& cfg);

/// Recomputes the per-step aggregates and final-loss summary from the
/// curves already stored in `report`.
void aggregate(EvalReport& report);

struct ComparisonRow {
  std::string optimizer;
  double median_final = 0.0;
  double divergence_rate = 0.0;
  double log_auc = 0.0;
  bool best_median = false;
  bool best_divergence = false;
  bool best_auc = false;
};

/// Ties share the win. Throws std::invalid_argument when reports disagree on
/// optimizee spec or horizon.
std::vector<ComparisonRow> compare(const std::vector<EvalReport>& reports);

void write_curves_csv(const std::string& path, const EvalReport& report);
void write_summary_csv(const std::string& path, const std::vector<EvalReport>& reports);
void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace l2o
