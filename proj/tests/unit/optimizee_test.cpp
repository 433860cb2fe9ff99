#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "l2o/autodiff.hpp"
#include "l2o/idx.hpp"
#include "l2o/optimizee.hpp"

namespace {

using namespace l2o;

OptimizeeSpec spec_for(Family f) {
  OptimizeeSpec s;
  s.family = f;
  return s;
}

TEST(Optimizee, SameSeedSameInstance) {
  const auto spec = spec_for(Family::Quadratic);
  const auto a = sample_instance(spec, 17);
  const auto b = sample_instance(spec, 17);
  const auto& qa = std::get<QuadraticProblem>(a.problem());
  const auto& qb = std::get<QuadraticProblem>(b.problem());
  EXPECT_EQ(qa.w, qb.w);
  EXPECT_EQ(qa.y, qb.y);
}

TEST(Optimizee, DifferentSeedsDiffer) {
  const auto spec = spec_for(Family::Quadratic);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = sample_instance(spec, s);
    const auto b = sample_instance(spec, s + 100);
    const auto& qa = std::get<QuadraticProblem>(a.problem());
    const auto& qb = std::get<QuadraticProblem>(b.problem());
    EXPECT_NE(qa.w, qb.w);
  }
}

TEST(Optimizee, QuadraticEntriesLookStandardNormal) {
  OptimizeeSpec spec = spec_for(Family::Quadratic);
  spec.quad_dim = 100;
  spec.quad_rows = 100;
  const auto inst = sample_instance(spec, 3);
  const auto& q = std::get<QuadraticProblem>(inst.problem());
  const double mean = q.w.mean();
  const double var = (q.w.array() - mean).square().mean();
  EXPECT_LT(std::abs(mean), 0.03);  // 3 sigma for 1e4 draws
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Optimizee, OneDimensionalQuadraticMinimizer) {
  auto inst = OptimizeeInstance::quadratic(MatrixXd::Constant(1, 1, 2.0), VectorXd::Constant(1, 4.0));
  const VectorXd star = VectorXd::Constant(1, 2.0);
  const auto lg = inst.loss_and_grad(star, inst.next_batch());
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.grad[0], 0.0);
  // Elsewhere the gradient points away from the minimizer.
  EXPECT_GT(inst.loss_and_grad(VectorXd::Constant(1, 3.0), inst.full_batch_rows()).grad[0], 0.0);
}

TEST(Optimizee, QuadraticHandValues) {
  auto inst = OptimizeeInstance::quadratic(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
  const auto lg = inst.loss_and_grad(VectorXd::Ones(2), inst.full_batch_rows());
  // |theta|^2 / 2 = 1, gradient 2 theta / 2 = theta.
  EXPECT_DOUBLE_EQ(lg.loss, 1.0);
  EXPECT_DOUBLE_EQ(lg.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(lg.grad[1], 1.0);
}

TEST(Optimizee, DimensionMismatchThrows) {
  auto inst = OptimizeeInstance::quadratic(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
  EXPECT_THROW((void)inst.loss_and_grad(VectorXd::Ones(3), inst.full_batch_rows()), std::invalid_argument);
}

TEST(Optimizee, InitParamsMoments) {
  OptimizeeSpec spec = spec_for(Family::Quadratic);
  spec.quad_dim = 100000;
  spec.quad_rows = 1;
  const auto inst = sample_instance(spec, 1);
  const VectorXd theta = init_params(inst, 99);
  ASSERT_EQ(theta.size(), 100000);
  const double mean = theta.mean();
  const double sd = std::sqrt((theta.array() - mean).square().sum() / static_cast<double>(theta.size() - 1));
  EXPECT_GT(mean, -0.001);
  EXPECT_LT(mean, 0.001);
  EXPECT_GT(sd, 0.0097);
  EXPECT_LT(sd, 0.0103);
  EXPECT_EQ(theta, init_params(inst, 99));
  EXPECT_NE(theta, init_params(inst, 100));
}

TEST(Optimizee, SpecValidation) {
  OptimizeeSpec s;
  s.batch_size = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = OptimizeeSpec{};
  s.init_std = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(family_from_string("resnet"), std::invalid_argument);
  for (auto f : {Family::Quadratic, Family::LogisticBlobs, Family::TinyMLP, Family::MnistMLP}) {
    EXPECT_EQ(family_from_string(to_string(f)), f);
  }
}

TEST(Optimizee, MnistWithoutPathIsAnError) {
  EXPECT_THROW((void)sample_instance(spec_for(Family::MnistMLP), 0), std::runtime_error);
}

Dataset separated_fixture() {
  Dataset d;
  d.features.resize(4, 2);
  d.features << 3, 3, 4, 4, -3, -3, -4, -4;
  d.labels = {1, 1, 0, 0};
  return d;
}

TEST(Optimizee, LogisticAtZeroIsLn2) {
  auto inst = OptimizeeInstance::logistic(separated_fixture(), 2);
  const auto lg = inst.loss_and_grad(VectorXd::Zero(inst.dimension()), inst.full_batch_rows());
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-15);
}

TEST(Optimizee, MlpAtZeroIsLnClasses) {
  auto inst = OptimizeeInstance::mlp(separated_fixture(), 3, 2);
  const auto lg = inst.loss_and_grad(VectorXd::Zero(inst.dimension()), inst.full_batch_rows());
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-15);
  EXPECT_EQ(inst.dimension(), 2 * 3 + 3 + 3 * 2 + 2);
}

TEST(Optimizee, LogisticIsStableAtLargeMargins) {
  auto inst = OptimizeeInstance::logistic(separated_fixture(), 4);
  VectorXd theta(3);
  theta << 1e4, 1e4, 0.0;
  const auto right = inst.loss_and_grad(theta, inst.full_batch_rows());
  EXPECT_TRUE(std::isfinite(right.loss));
  EXPECT_LT(right.loss, 1e-300 + 1e-12);
  const auto wrong = inst.loss_and_grad(-theta, inst.full_batch_rows());
  EXPECT_TRUE(std::isfinite(wrong.loss));
  EXPECT_GT(wrong.loss, 1e4);
}

class GradientOracle : public ::testing::TestWithParam<Family> {};

TEST_P(GradientOracle, MatchesCentralDifferences) {
  OptimizeeSpec spec = spec_for(GetParam());
  spec.blob_points = 64;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = sample_instance(spec, seed);
    Rng rng(seed + 1000);
    std::normal_distribution<double> n(0.0, 0.5);
    VectorXd theta(inst.dimension());
    for (auto& v : theta) v = n(rng);
    const Batch full = inst.full_batch_rows();
    const auto lg = inst.loss_and_grad(theta, full);
    const double err =
        ad::grad_check([&](const VectorXd& t) { return inst.loss(t, full); }, lg.grad, theta, 1e-6);
    EXPECT_LT(err, 1e-6) << to_string(GetParam()) << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Families, GradientOracle,
                         ::testing::Values(Family::Quadratic, Family::LogisticBlobs, Family::TinyMLP),
                         [](const auto& info) { return to_string(info.param); });

TEST(Optimizee, MiniBatchGradientMatchesFiniteDifferences) {
  auto inst = sample_instance(spec_for(Family::TinyMLP), 4);
  const Batch b = inst.next_batch();
  const VectorXd theta = init_params(inst, 1) * 50.0;
  const auto lg = inst.loss_and_grad(theta, b);
  EXPECT_LT(ad::grad_check([&](const VectorXd& t) { return inst.loss(t, b); }, lg.grad, theta, 1e-6), 1e-6);
}

TEST(Optimizee, LossAndGradIsPure) {
  auto a = sample_instance(spec_for(Family::TinyMLP), 8);
  auto b = sample_instance(spec_for(Family::TinyMLP), 8);
  const VectorXd theta = init_params(a, 2);
  const Batch first = a.next_batch();
  for (int i = 0; i < 5; ++i) (void)a.loss_and_grad(theta, first);
  (void)b.next_batch();
  // Interleaved evaluations leave the batch stream where it was.
  EXPECT_EQ(a.next_batch().rows, b.next_batch().rows);
}

TEST(Optimizee, BatchesPartitionEachCycle) {
  OptimizeeSpec spec = spec_for(Family::LogisticBlobs);
  spec.blob_points = 512;
  spec.batch_size = 128;
  auto inst = sample_instance(spec, 5);
  for (int cycle = 0; cycle < 3; ++cycle) {
    std::set<Eigen::Index> seen;
    std::vector<std::vector<Eigen::Index>> batches;
    for (int i = 0; i < 4; ++i) {
      const Batch b = inst.next_batch();
      EXPECT_FALSE(b.full);
      EXPECT_EQ(b.rows.size(), 128u);
      seen.insert(b.rows.begin(), b.rows.end());
      batches.push_back(b.rows);
    }
    EXPECT_EQ(seen.size(), 512u);
    EXPECT_EQ(*seen.begin(), 0);
    EXPECT_EQ(*seen.rbegin(), 511);
    for (std::size_t i = 0; i < batches.size(); ++i) {
      for (std::size_t j = i + 1; j < batches.size(); ++j) EXPECT_NE(batches[i], batches[j]);
    }
  }
}

TEST(Optimizee, ShortLastBatch) {
  OptimizeeSpec spec = spec_for(Family::LogisticBlobs);
  spec.blob_points = 10;
  spec.batch_size = 4;
  auto inst = sample_instance(spec, 1);
  EXPECT_EQ(inst.next_batch().rows.size(), 4u);
  EXPECT_EQ(inst.next_batch().rows.size(), 4u);
  EXPECT_EQ(inst.next_batch().rows.size(), 2u);
  EXPECT_EQ(inst.next_batch().rows.size(), 4u);
}

TEST(Optimizee, SameSeedSameBatchSequence) {
  auto a = sample_instance(spec_for(Family::TinyMLP), 9);
  auto b = sample_instance(spec_for(Family::TinyMLP), 9);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(a.next_batch().rows, b.next_batch().rows);
  a.reseed_batches(4);
  b.reseed_batches(4);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(a.next_batch().rows, b.next_batch().rows);
}

TEST(Optimizee, QuadraticBatchIsWholeProblem) {
  auto inst = sample_instance(spec_for(Family::Quadratic), 2);
  EXPECT_TRUE(inst.full_batch());
  EXPECT_TRUE(inst.next_batch().full);
}

TEST(OptimizeeProperty, GradientDescentAtInverseLipschitzIsMonotone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = sample_instance(spec_for(Family::Quadratic), seed);
    const double L = quadratic_lipschitz(std::get<QuadraticProblem>(inst.problem()));
    // Oracle for L: power iteration on the Hessian.
    const auto& q = std::get<QuadraticProblem>(inst.problem());
    const MatrixXd h = 2.0 * q.w.transpose() * q.w / static_cast<double>(q.w.rows());
    VectorXd v = VectorXd::Ones(h.rows());
    for (int i = 0; i < 2000; ++i) v = (h * v).normalized();
    EXPECT_NEAR(L, v.dot(h * v), 1e-6 * L);

    VectorXd theta = init_params(inst, seed) * 100.0;
    double prev = inst.loss(theta, inst.full_batch_rows());
    for (int t = 0; t < 100; ++t) {
      theta -= inst.loss_and_grad(theta, inst.full_batch_rows()).grad / L;
      const double cur = inst.loss(theta, inst.full_batch_rows());
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(Optimizee, BlobsAreBalancedAndCentred) {
  Rng rng(1);
  const Dataset d = make_blobs(1000, 2, 4.0, rng);
  EXPECT_EQ(d.size(), 1000);
  EXPECT_EQ(std::accumulate(d.labels.begin(), d.labels.end(), 0), 500);
  Eigen::RowVector2d m0 = Eigen::RowVector2d::Zero(), m1 = Eigen::RowVector2d::Zero();
  for (Eigen::Index i = 0; i < d.size(); ++i) (d.labels[i] ? m1 : m0) += d.features.row(i);
  m0 /= 500.0;
  m1 /= 500.0;
  EXPECT_NEAR((m1 - m0).norm(), 4.0, 0.3);
  EXPECT_NEAR((m1 + m0).norm(), 0.0, 0.3);
}

TEST(Idx, RoundTripAndScaling) {
  const auto dir = std::filesystem::temp_directory_path() / "l2o_idx_test";
  std::filesystem::create_directories(dir);
  idx::Images im;
  im.count = 3;
  im.rows = 2;
  im.cols = 2;
  im.pixels = {0, 255, 51, 102, 1, 2, 3, 4, 9, 8, 7, 6};
  idx::write_images((dir / "img").string(), im);
  idx::write_labels((dir / "lab").string(), {0, 3, 1});
  const auto back = idx::read_images((dir / "img").string());
  EXPECT_EQ(back.pixels, im.pixels);
  EXPECT_EQ(back.rows, 2u);
  const Dataset d = idx::load_dataset((dir / "img").string(), (dir / "lab").string());
  EXPECT_EQ(d.size(), 3);
  EXPECT_EQ(d.features.cols(), 4);
  EXPECT_DOUBLE_EQ(d.features(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d.features(0, 2), 0.2);
  EXPECT_EQ(d.labels[1], 3);
  EXPECT_EQ(d.classes, 10);
  // Images file read as labels: wrong magic.
  EXPECT_THROW(idx::read_labels((dir / "img").string()), std::runtime_error);
  EXPECT_THROW(idx::read_images((dir / "missing").string()), std::runtime_error);

  OptimizeeSpec spec = spec_for(Family::MnistMLP);
  spec.mnist_images = (dir / "img").string();
  spec.mnist_labels = (dir / "lab").string();
  spec.mlp_hidden = 20;
  spec.batch_size = 2;
  auto inst = sample_instance(spec, 0);
  EXPECT_EQ(inst.dimension(), 4 * 20 + 20 + 20 * 10 + 10);
  const VectorXd theta = init_params(inst, 0) * 10.0;
  const auto lg = inst.loss_and_grad(theta, inst.full_batch_rows());
  EXPECT_LT(ad::grad_check([&](const VectorXd& t) { return inst.loss(t, inst.full_batch_rows()); }, lg.grad,
                           theta, 1e-6),
            1e-6);
  std::filesystem::remove_all(dir);
}

}  // namespace
