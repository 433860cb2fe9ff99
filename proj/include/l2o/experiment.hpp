#pragma once

// Binds a RunConfig to the training, evaluation and comparison pipelines and
// writes the run directory.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "l2o/config.hpp"
#include "l2o/curriculum.hpp"
#include "l2o/eval.hpp"
#include "l2o/imitation.hpp"
#include "l2o/meta_trainer.hpp"
#include "l2o/model.hpp"

namespace l2o {

struct TrainOutcome {
  /// Best validated snapshot (the initial phi if nothing ever improved).
  L2OParams phi;
  std::vector<CurriculumTraceRow> trace;
  std::vector<EpisodeLog> episodes;
  int total_epochs = 0;
  /// Optimizee steps spent in meta-training over the whole run, and up to
  /// the point the returned snapshot was taken (for the curriculum: through
  /// the end of its best stage).
  long long iterations = 0;
  long long iterations_to_best = 0;
  int best_stage = -1;
  double best_loss = 0.0;
};

TrainConfig train_config(const RunConfig& cfg);

/// Runs the configured mode. Deterministic in cfg.
TrainOutcome train_model(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Evaluation of `phi` (or of cfg.eval_optimizer when it names a teacher) on
/// cfg.eval_seeds fresh instances for the effective eval horizon.
EvalReport evaluate(const RunConfig& cfg, const std::optional<L2OParams>& phi);

/// Seeds used by evaluate; paired across runs with the same master seed.
std::vector<std::uint64_t> eval_seed_list(const RunConfig& cfg);

void write_trace_csv(const std::string& path, const std::vector<CurriculumTraceRow>& trace);
void write_episodes_csv(const std::string& path, const std::vector<EpisodeLog>& episodes);

/// `manifest` lists the config hash, seed and every artifact with its hash.
void write_manifest(const std::string& dir, const RunConfig& cfg, const std::vector<std::string>& artifacts);

/// Runs cfg.command, writing artifacts under cfg.out. Returns the process
/// exit status; errors are reported on `err`.
int dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace l2o
