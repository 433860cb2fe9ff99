#pragma once

// Run configuration: a flat `key = value` file, overridden by command-line
// flags. A profile (desk or paper) and the training mode pick the defaults;
// file values and then flags are applied on top.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "l2o/curriculum.hpp"
#include "l2o/optimizee.hpp"
#include "l2o/teachers.hpp"

namespace l2o {

enum class Command { Train, Eval, Compare, Gradcheck };
enum class Mode { Vanilla, Aug, Cl, Il, ClIl, SelfImproving };
enum class Profile { Desk, Paper };

std::string to_string(Command c);
std::string to_string(Mode m);
std::string to_string(Profile p);
Command command_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);
Profile profile_from_string(const std::string& s);

/// Parse or validation failure. `line` is 0 when the value came from a flag
/// or from defaults.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& message);
  [[nodiscard]] const std::string& key() const { return key_; }
  [[nodiscard]] int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

struct RunConfig {
  Command command = Command::Train;
  Mode mode = Mode::Vanilla;
  Profile profile = Profile::Desk;
  std::uint64_t seed = 0;
  std::string out = "run";

  OptimizeeSpec optimizee;
  std::string mnist_dir;

  int hidden = 20;
  double preprocess_p = 10.0;
  double output_scale = 0.01;

  double meta_lr = 1e-3;
  int unroll = 20;
  int train_instances = 8;
  int valid_instances = 5;
  double valid_penalty = 1e6;
  double divergence_factor = 1e4;

  /// Fixed-horizon modes (vanilla, aug, il, self-improving).
  int epochs = 300;
  int n_train = 20;
  /// Fixed-horizon modes validate every valid_every epochs at n_valid
  /// (0 means n_train) and keep the best snapshot.
  int valid_every = 25;
  int n_valid = 0;

  CurriculumConfig curriculum;

  double il_r = 0.3;
  std::vector<std::string> teachers{"adam", "sgd", "adagrad"};
  double teacher_lr = 0.01;
  /// Negative selects 1/(k+1).
  double si_start_prob = -1.0;
  int si_anneal = 100;

  std::string checkpoint;
  /// "l2o" evaluates the checkpoint; a teacher name evaluates that optimizer.
  std::string eval_optimizer = "l2o";
  /// 0 picks ten times the largest training horizon of the mode.
  int eval_horizon = 0;
  int eval_seeds = 10;
  int log_every = 10;

  std::vector<std::string> reports;

  bool operator==(const RunConfig&) const = default;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  [[nodiscard]] std::vector<TeacherKind> teacher_kinds() const;
  /// Optimizee spec with the MNIST paths resolved from mnist_dir or the
  /// L2O_DATA_ROOT environment variable.
  [[nodiscard]] OptimizeeSpec resolved_optimizee() const;
  [[nodiscard]] int largest_training_horizon() const;
  [[nodiscard]] int effective_eval_horizon() const;
  [[nodiscard]] int effective_n_valid() const { return n_valid > 0 ? n_valid : n_train; }
};

/// Defaults for a (profile, mode) pair before any file or flag is applied.
RunConfig default_config(Profile profile, Mode mode);

/// Every key accepted in files and as --key flags, in serialization order.
const std::vector<std::string>& config_keys();

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses `text` (the contents of a config file, possibly empty) and applies
/// `flags` on top. `source` names the file in error messages.
RunConfig parse_config(const std::string& text, const Overrides& flags = {},
                       const std::string& source = "<config>");
RunConfig load_config(const std::string& path, const Overrides& flags = {});

/// `key = value` lines that parse_config turns back into an equal config.
std::string serialize_config(const RunConfig& cfg);

}  // namespace l2o
