#include "l2o/optimizee.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <utility>

#include "l2o/idx.hpp"

namespace l2o {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

MatrixXd gather_rows(const MatrixXd& m, const Batch& batch) {
  if (batch.full) {
    return m;
  }
  MatrixXd out(static_cast<Eigen::Index>(batch.rows.size()), m.cols());
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(batch.rows[i]);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const Batch& batch) {
  if (batch.full) {
    return labels;
  }
  std::vector<int> out;
  out.reserve(batch.rows.size());
  for (auto r : batch.rows) {
    out.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

LossGrad quadratic_loss(const QuadraticProblem& q, const VectorXd& theta) {
  const auto n = static_cast<double>(q.w.rows());
  const VectorXd r = q.w * theta - q.y;
  return {r.squaredNorm() / n, (2.0 / n) * (q.w.transpose() * r)};
}

LossGrad logistic_loss(const Dataset& data, const VectorXd& theta, const Batch& batch) {
  const Eigen::Index in = data.features.cols();
  const MatrixXd x = gather_rows(data.features, batch);
  const std::vector<int> y = gather_labels(data.labels, batch);
  const auto w = theta.head(in);
  const double b = theta[in];
  const VectorXd z = (x * w).array() + b;
  const auto m = static_cast<double>(x.rows());
  double loss = 0.0;
  VectorXd residual(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double zi = z[i];
    const bool positive = y[static_cast<std::size_t>(i)] == 1;
    loss += positive ? softplus(-zi) : softplus(zi);
    const double p = 1.0 / (1.0 + std::exp(-zi));
    residual[i] = p - (positive ? 1.0 : 0.0);
  }
  LossGrad out;
  out.loss = loss / m;
  out.grad.resize(in + 1);
  out.grad.head(in) = x.transpose() * residual / m;
  out.grad[in] = residual.sum() / m;
  return out;
}

LossGrad mlp_loss(const MlpProblem& p, const VectorXd& theta, const Batch& batch) {
  const Dataset& data = *p.data;
  const Eigen::Index in = data.features.cols();
  const Eigen::Index h = p.hidden;
  const Eigen::Index c = data.classes;
  Eigen::Index off = 0;
  const Eigen::Map<const MatrixXd> w1(theta.data() + off, in, h);
  off += in * h;
  const Eigen::Map<const RowVectorXd> b1(theta.data() + off, h);
  off += h;
  const Eigen::Map<const MatrixXd> w2(theta.data() + off, h, c);
  off += h * c;
  const Eigen::Map<const RowVectorXd> b2(theta.data() + off, c);

  const MatrixXd x = gather_rows(data.features, batch);
  const std::vector<int> y = gather_labels(data.labels, batch);
  const auto m = static_cast<double>(x.rows());

  MatrixXd pre = x * w1;
  pre.rowwise() += b1;
  const MatrixXd hidden = pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  MatrixXd logits = hidden * w2;
  logits.rowwise() += b2;

  // Row-wise log-sum-exp; dlogits = softmax - onehot.
  double loss = 0.0;
  MatrixXd dlogits(logits.rows(), c);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const RowVectorXd e = (logits.row(i).array() - top).exp().matrix();
    const double s = e.sum();
    const int label = y[static_cast<std::size_t>(i)];
    loss += top + std::log(s) - logits(i, label);
    dlogits.row(i) = e / s;
    dlogits(i, label) -= 1.0;
  }
  dlogits /= m;

  LossGrad out;
  out.loss = loss / m;
  out.grad.resize(theta.size());
  const MatrixXd dhidden = dlogits * w2.transpose();
  const MatrixXd dpre = dhidden.cwiseProduct(hidden.cwiseProduct((1.0 - hidden.array()).matrix()));
  off = 0;
  Eigen::Map<MatrixXd>(out.grad.data() + off, in, h) = x.transpose() * dpre;
  off += in * h;
  Eigen::Map<RowVectorXd>(out.grad.data() + off, h) = dpre.colwise().sum();
  off += h;
  Eigen::Map<MatrixXd>(out.grad.data() + off, h, c) = hidden.transpose() * dlogits;
  off += h * c;
  Eigen::Map<RowVectorXd>(out.grad.data() + off, c) = dlogits.colwise().sum();
  return out;
}

std::shared_ptr<const Dataset> cached_mnist(const std::string& images, const std::string& labels) {
  static std::mutex mu;
  static std::map<std::pair<std::string, std::string>, std::shared_ptr<const Dataset>> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(images, labels);
  auto it = cache.find(key);
  if (it != cache.end()) {
    return it->second;
  }
  auto data = std::make_shared<const Dataset>(idx::load_dataset(images, labels));
  cache.emplace(key, data);
  return data;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Quadratic:
      return "quadratic";
    case Family::LogisticBlobs:
      return "logistic";
    case Family::TinyMLP:
      return "tinymlp";
    case Family::MnistMLP:
      return "mnist";
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  if (s == "quadratic") return Family::Quadratic;
  if (s == "logistic") return Family::LogisticBlobs;
  if (s == "tinymlp") return Family::TinyMLP;
  if (s == "mnist") return Family::MnistMLP;
  throw std::invalid_argument("unknown optimizee family '" + s + "'");
}

void OptimizeeSpec::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be > 0");
  if (quad_dim < 1 || quad_rows < 1) throw std::invalid_argument("quadratic sizes must be >= 1");
  if (blob_points < 2 || blob_dim < 1) throw std::invalid_argument("blob sizes out of range");
  if (mlp_hidden < 1) throw std::invalid_argument("mlp_hidden must be >= 1");
}

OptimizeeInstance::OptimizeeInstance(OptimizeeSpec spec, Problem problem, std::uint64_t batch_seed)
    : spec_(std::move(spec)), problem_(std::move(problem)), batch_rng_(batch_seed) {
  spec_.validate();
}

OptimizeeInstance OptimizeeInstance::quadratic(MatrixXd w, VectorXd y) {
  if (w.rows() != y.size()) {
    throw std::invalid_argument("quadratic fixture: W rows must match y");
  }
  OptimizeeSpec spec;
  spec.family = Family::Quadratic;
  spec.quad_dim = static_cast<int>(w.cols());
  spec.quad_rows = static_cast<int>(w.rows());
  return {spec, QuadraticProblem{std::move(w), std::move(y)}, 0};
}

OptimizeeInstance OptimizeeInstance::logistic(Dataset data, int batch_size, std::uint64_t batch_seed) {
  OptimizeeSpec spec;
  spec.family = Family::LogisticBlobs;
  spec.blob_points = static_cast<int>(data.size());
  spec.blob_dim = static_cast<int>(data.features.cols());
  spec.batch_size = batch_size;
  return {spec, LogisticProblem{std::make_shared<const Dataset>(std::move(data))}, batch_seed};
}

OptimizeeInstance OptimizeeInstance::mlp(Dataset data, int hidden, int batch_size,
                                         std::uint64_t batch_seed) {
  OptimizeeSpec spec;
  spec.family = Family::TinyMLP;
  spec.blob_points = static_cast<int>(data.size());
  spec.blob_dim = static_cast<int>(data.features.cols());
  spec.mlp_hidden = hidden;
  spec.batch_size = batch_size;
  return {spec, MlpProblem{std::make_shared<const Dataset>(std::move(data)), hidden}, batch_seed};
}

Eigen::Index OptimizeeInstance::dimension() const {
  return std::visit(Overloaded{
                        [](const QuadraticProblem& q) { return q.w.cols(); },
                        [](const LogisticProblem& l) { return l.data->features.cols() + 1; },
                        [](const MlpProblem& m) {
                          const Eigen::Index in = m.data->features.cols();
                          const Eigen::Index c = m.data->classes;
                          return in * m.hidden + m.hidden + m.hidden * c + c;
                        },
                    },
                    problem_);
}

bool OptimizeeInstance::full_batch() const {
  return std::holds_alternative<QuadraticProblem>(problem_);
}

Eigen::Index OptimizeeInstance::data_size() const {
  return std::visit(Overloaded{
                        [](const QuadraticProblem& q) { return q.w.rows(); },
                        [](const LogisticProblem& l) { return l.data->size(); },
                        [](const MlpProblem& m) { return m.data->size(); },
                    },
                    problem_);
}

LossGrad OptimizeeInstance::loss_and_grad(const VectorXd& theta, const Batch& batch) const {
  if (theta.size() != dimension()) {
    throw std::invalid_argument("loss_and_grad: theta has dimension " + std::to_string(theta.size()) +
                                ", expected " + std::to_string(dimension()));
  }
  if (!batch.full && batch.rows.empty()) {
    throw std::invalid_argument("loss_and_grad: empty batch");
  }
  return std::visit(Overloaded{
                        [&](const QuadraticProblem& q) { return quadratic_loss(q, theta); },
                        [&](const LogisticProblem& l) { return logistic_loss(*l.data, theta, batch); },
                        [&](const MlpProblem& m) { return mlp_loss(m, theta, batch); },
                    },
                    problem_);
}

double OptimizeeInstance::loss(const VectorXd& theta, const Batch& batch) const {
  return loss_and_grad(theta, batch).loss;
}

Batch OptimizeeInstance::full_batch_rows() const { return Batch{{}, true}; }

void OptimizeeInstance::reshuffle() {
  order_.resize(static_cast<std::size_t>(data_size()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  // Fisher-Yates on our own draws so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(batch_rng_() % i);
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

Batch OptimizeeInstance::next_batch() {
  if (full_batch()) {
    return full_batch_rows();
  }
  if (order_.empty() || cursor_ >= order_.size()) {
    reshuffle();
  }
  const std::size_t take = std::min(order_.size() - cursor_, static_cast<std::size_t>(spec_.batch_size));
  Batch b;
  b.rows.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  return b;
}

void OptimizeeInstance::reseed_batches(std::uint64_t seed) {
  batch_rng_.seed(seed);
  order_.clear();
  cursor_ = 0;
}

Dataset make_blobs(int points, int dim, double separation, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd direction(dim);
  for (int k = 0; k < dim; ++k) direction[k] = normal(rng);
  direction.normalize();
  Dataset d;
  d.classes = 2;
  d.features.resize(points, dim);
  d.labels.resize(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const int label = i % 2;
    const double sign = label == 1 ? 0.5 : -0.5;
    for (int k = 0; k < dim; ++k) {
      d.features(i, k) = sign * separation * direction[k] + normal(rng);
    }
    d.labels[static_cast<std::size_t>(i)] = label;
  }
  return d;
}

OptimizeeInstance sample_instance(const OptimizeeSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, "instance-data");
  const std::uint64_t batch_seed = derive_seed(seed, "instance-batches");
  switch (spec.family) {
    case Family::Quadratic: {
      std::normal_distribution<double> normal(0.0, 1.0);
      MatrixXd w(spec.quad_rows, spec.quad_dim);
      VectorXd y(spec.quad_rows);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
      for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = normal(rng);
      return {spec, QuadraticProblem{std::move(w), std::move(y)}, batch_seed};
    }
    case Family::LogisticBlobs: {
      auto data = std::make_shared<const Dataset>(
          make_blobs(spec.blob_points, spec.blob_dim, spec.blob_separation, rng));
      return {spec, LogisticProblem{data}, batch_seed};
    }
    case Family::TinyMLP: {
      auto data = std::make_shared<const Dataset>(
          make_blobs(spec.blob_points, spec.blob_dim, spec.blob_separation, rng));
      return {spec, MlpProblem{data, spec.mlp_hidden}, batch_seed};
    }
    case Family::MnistMLP: {
      if (spec.mnist_images.empty() || spec.mnist_labels.empty()) {
        throw std::runtime_error("mnist family requires a dataset path (mnist_dir or L2O_DATA_ROOT)");
      }
      return {spec, MlpProblem{cached_mnist(spec.mnist_images, spec.mnist_labels), spec.mlp_hidden},
              batch_seed};
    }
  }
  throw std::invalid_argument("sample_instance: unsupported family");
}

VectorXd init_params(const OptimizeeInstance& inst, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "theta0"));
  std::normal_distribution<double> normal(0.0, inst.spec().init_std);
  VectorXd theta(inst.dimension());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = normal(rng);
  return theta;
}

double quadratic_lipschitz(const QuadraticProblem& q) {
  const MatrixXd h = (2.0 / static_cast<double>(q.w.rows())) * (q.w.transpose() * q.w);
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

}  // namespace l2o
