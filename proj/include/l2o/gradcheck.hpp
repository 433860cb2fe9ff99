#pragma once

// Finite-difference suites behind the `gradcheck` command.

#include <cstdint>
#include <string>
#include <vector>

namespace l2o {

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;

  [[nodiscard]] bool ok() const { return max_rel_error < tolerance; }
};

/// Tape primitives through grad_check, the five-step meta-loss against the
/// frozen-input oracle, the one-step meta-loss against plain differences of
/// the rollout, and the imitation loss. Central differences with step eps.
std::vector<GradcheckResult> run_gradchecks(std::uint64_t seed, double eps = 1e-5);

}  // namespace l2o
