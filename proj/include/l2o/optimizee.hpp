#pragma once

// Problem families the learned optimizer is trained and evaluated on.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "l2o/seeds.hpp"
#include "l2o/types.hpp"

namespace l2o {

enum class Family { Quadratic, LogisticBlobs, TinyMLP, MnistMLP };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct OptimizeeSpec {
  Family family = Family::Quadratic;
  // Quadratic: f(theta) = |W theta - y|^2 / rows, W is rows x dim.
  int quad_dim = 10;
  int quad_rows = 10;
  // Blob datasets (LogisticBlobs, TinyMLP).
  int blob_points = 512;
  int blob_dim = 2;
  double blob_separation = 1.5;
  // Hidden width for the MLP families.
  int mlp_hidden = 8;
  int batch_size = 128;
  double init_std = 0.01;
  // IDX files for MnistMLP.
  std::string mnist_images;
  std::string mnist_labels;

  void validate() const;
  bool operator==(const OptimizeeSpec&) const = default;
};

/// Row subset of a dataset. Full-batch families always hand out `full`.
struct Batch {
  std::vector<Eigen::Index> rows;
  bool full = false;
};

/// Labelled design matrix, one example per row.
struct Dataset {
  MatrixXd features;
  std::vector<int> labels;
  int classes = 2;

  [[nodiscard]] Eigen::Index size() const { return features.rows(); }
};

struct QuadraticProblem {
  MatrixXd w;
  VectorXd y;
};

struct LogisticProblem {
  std::shared_ptr<const Dataset> data;
};

/// One sigmoid hidden layer, softmax cross-entropy output.
/// theta layout: W1 (in x hidden, column-major), b1, W2 (hidden x classes,
/// column-major), b2.
struct MlpProblem {
  std::shared_ptr<const Dataset> data;
  int hidden = 8;
};

struct LossGrad {
  double loss = 0.0;
  VectorXd grad;
};

class OptimizeeInstance {
 public:
  using Problem = std::variant<QuadraticProblem, LogisticProblem, MlpProblem>;

  OptimizeeInstance(OptimizeeSpec spec, Problem problem, std::uint64_t batch_seed);

  /// Fixture constructors; dimension fields of the spec are overwritten to
  /// agree with the supplied data.
  static OptimizeeInstance quadratic(MatrixXd w, VectorXd y);
  static OptimizeeInstance logistic(Dataset data, int batch_size, std::uint64_t batch_seed = 0);
  static OptimizeeInstance mlp(Dataset data, int hidden, int batch_size,
                               std::uint64_t batch_seed = 0);

  [[nodiscard]] const OptimizeeSpec& spec() const { return spec_; }
  [[nodiscard]] const Problem& problem() const { return problem_; }
  [[nodiscard]] Eigen::Index dimension() const;
  [[nodiscard]] bool full_batch() const;
  [[nodiscard]] Eigen::Index data_size() const;

  /// Loss and gradient on a batch. Pure: never touches the batch stream. A
  /// non-finite loss is returned as-is for the caller to flag divergence.
  [[nodiscard]] LossGrad loss_and_grad(const VectorXd& theta, const Batch& batch) const;
  [[nodiscard]] double loss(const VectorXd& theta, const Batch& batch) const;
  [[nodiscard]] Batch full_batch_rows() const;

  /// Advances the batch stream. Each epoch over the data uses a fresh
  /// shuffle; consecutive slices of batch_size rows partition it, the last
  /// one possibly shorter. Full-batch families return the whole problem.
  Batch next_batch();

  /// Restarts the batch stream from a new seed.
  void reseed_batches(std::uint64_t seed);

 private:
  void reshuffle();

  OptimizeeSpec spec_;
  Problem problem_;
  Rng batch_rng_;
  std::vector<Eigen::Index> order_;
  std::size_t cursor_ = 0;
};

/// Deterministic in (spec, seed).
OptimizeeInstance sample_instance(const OptimizeeSpec& spec, std::uint64_t seed);

/// theta ~ N(0, init_std^2) i.i.d., deterministic in seed.
VectorXd init_params(const OptimizeeInstance& inst, std::uint64_t seed);

/// Two Gaussian blobs with unit variance centred at +/- separation/2 along a
/// random unit direction; labels alternate so classes are balanced.
Dataset make_blobs(int points, int dim, double separation, Rng& rng);

/// Largest eigenvalue of the quadratic's Hessian 2 W^T W / rows.
double quadratic_lipschitz(const QuadraticProblem& q);

}  // namespace l2o
