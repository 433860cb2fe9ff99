#include "l2o/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "l2o/io.hpp"
#include "l2o/seeds.hpp"

namespace l2o {

namespace {

using json = nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();

double median_of(std::vector<double> v) {
  if (v.empty()) return kInf;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {kInf, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

bool logged(int step, int horizon, int every) { return step % every == 0 || step == horizon; }

SeedCurve eval_seed(const EvalConfig& cfg, std::uint64_t seed) {
  OptimizeeInstance inst = cfg.instance_factory ? cfg.instance_factory(seed)
                                                : sample_instance(cfg.optimizee, derive_seed(seed, "eval-instance"));
  inst.reseed_batches(derive_seed(seed, "eval-batches"));
  const VectorXd theta0 = init_params(inst, derive_seed(seed, "eval-theta0"));
  const DivergenceRule rule{cfg.divergence_factor};
  const Batch all = inst.full_batch_rows();

  SeedCurve curve;
  curve.seed = seed;
  VectorXd theta = theta0;
  L2OState l2o_state;
  TeacherState<double> teacher_state;
  if (cfg.phi) {
    l2o_state = L2OState::zeros(theta.size(), cfg.phi->hidden);
  } else {
    teacher_state = TeacherState<double>::zeros(theta.size());
  }

  const double initial = inst.loss(theta, all);
  if (rule.diverged(initial, initial)) {
    curve.diverged_at = 0;
    return curve;
  }
  curve.steps.push_back(0);
  curve.losses.push_back(initial);

  LossGrad cur = inst.loss_and_grad(theta, inst.next_batch());
  for (int t = 1; t <= cfg.horizon; ++t) {
    const VectorXd update = cfg.phi ? l2o_step(*cfg.phi, l2o_state, cur.grad)
                                    : teacher_step(*cfg.teacher, teacher_state, cur.grad);
    theta += update;
    if (!theta.allFinite()) {
      curve.diverged_at = t;
      break;
    }
    cur = inst.loss_and_grad(theta, inst.next_batch());
    if (rule.diverged(cur.loss, initial) || !cur.grad.allFinite()) {
      curve.diverged_at = t;
      break;
    }
    if (logged(t, cfg.horizon, cfg.log_every)) {
      const double full = inst.full_batch() ? cur.loss : inst.loss(theta, all);
      if (rule.diverged(full, initial)) {
        curve.diverged_at = t;
        break;
      }
      curve.steps.push_back(t);
      curve.losses.push_back(full);
    }
  }
  return curve;
}

}  // namespace

void EvalConfig::validate() const {
  if (phi.has_value() == teacher.has_value()) {
    throw std::invalid_argument("eval: exactly one of checkpoint or teacher must be given");
  }
  if (teacher) teacher->validate();
  if (horizon < 1) throw std::invalid_argument("eval: horizon must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("eval: seed list is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("eval: seeds must be distinct");
  }
  if (log_every < 1) throw std::invalid_argument("eval: log_every must be >= 1");
}

void aggregate(EvalReport& r) {
  r.steps.clear();
  for (int s = 0; s <= r.horizon; ++s) {
    if (logged(s, r.horizon, r.log_every)) r.steps.push_back(s);
  }
  r.mean.assign(r.steps.size(), kInf);
  r.stddev.assign(r.steps.size(), 0.0);
  r.alive.assign(r.steps.size(), 0);
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    std::vector<double> values;
    for (const auto& c : r.curves) {
      // Curves are logged on the same grid, so position k is step k if present.
      if (k < c.steps.size()) values.push_back(c.losses[k]);
    }
    r.alive[k] = static_cast<int>(values.size());
    const auto [m, s] = mean_std(values);
    r.mean[k] = m;
    r.stddev[k] = s;
  }

  std::vector<double> finals;
  int diverged = 0;
  for (const auto& c : r.curves) {
    if (c.diverged_at) {
      ++diverged;
    } else if (!c.losses.empty()) {
      finals.push_back(c.losses.back());
    }
  }
  r.divergence_rate = r.curves.empty() ? 0.0 : static_cast<double>(diverged) / static_cast<double>(r.curves.size());
  r.median_final = median_of(finals);
  const auto [m, s] = mean_std(finals);
  r.mean_final = m;
  r.std_final = s;

  double auc = 0.0;
  bool any = false;
  for (std::size_t k = 0; k + 1 < r.steps.size(); ++k) {
    if (r.alive[k] == 0 || r.alive[k + 1] == 0) {
      auc = kInf;
      break;
    }
    const double a = std::log10(std::max(r.mean[k], 1e-300));
    const double b = std::log10(std::max(r.mean[k + 1], 1e-300));
    auc += 0.5 * (a + b) * static_cast<double>(r.steps[k + 1] - r.steps[k]);
    any = true;
  }
  r.log_auc = (any || r.steps.size() <= 1) ? auc : kInf;
}

EvalReport run_eval(const EvalConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.optimizer = cfg.name;
  report.optimizee = cfg.instance_factory ? cfg.instance_factory(cfg.seeds.front()).spec() : cfg.optimizee;
  report.horizon = cfg.horizon;
  report.log_every = cfg.log_every;
  for (std::uint64_t seed : cfg.seeds) report.curves.push_back(eval_seed(cfg, seed));
  aggregate(report);
  return report;
}

std::vector<ComparisonRow> compare(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare: no reports");
  for (const auto& r : reports) {
    if (!(r.optimizee == reports.front().optimizee) || r.horizon != reports.front().horizon) {
      throw std::invalid_argument("compare: reports use different optimizee specs or horizons");
    }
  }
  std::vector<ComparisonRow> rows;
  double best_median = kInf, best_div = kInf, best_auc = kInf;
  for (const auto& r : reports) {
    rows.push_back({r.optimizer, r.median_final, r.divergence_rate, r.log_auc});
    best_median = std::min(best_median, r.median_final);
    best_div = std::min(best_div, r.divergence_rate);
    best_auc = std::min(best_auc, r.log_auc);
  }
  for (auto& row : rows) {
    row.best_median = row.median_final == best_median;
    row.best_divergence = row.divergence_rate == best_div;
    row.best_auc = row.log_auc == best_auc;
  }
  return rows;
}

void write_curves_csv(const std::string& path, const EvalReport& report) {
  auto out = io::open_out(path);
  out << "step,seed,loss\n";
  for (const auto& c : report.curves) {
    for (std::size_t k = 0; k < c.steps.size(); ++k) {
      out << c.steps[k] << ',' << c.seed << ',' << io::real(c.losses[k]) << '\n';
    }
  }
}

void write_summary_csv(const std::string& path, const std::vector<EvalReport>& reports) {
  auto out = io::open_out(path);
  out << "optimizer,median_final,mean_final,std_final,divergence_rate,log_auc\n";
  for (const auto& r : reports) {
    out << r.optimizer << ',' << io::real(r.median_final) << ',' << io::real(r.mean_final) << ','
        << io::real(r.std_final) << ',' << io::real(r.divergence_rate) << ',' << io::real(r.log_auc) << '\n';
  }
}

void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows) {
  auto out = io::open_out(path);
  out << "optimizer,median_final,divergence_rate,log_auc,best_median,best_divergence,best_auc\n";
  for (const auto& r : rows) {
    out << r.optimizer << ',' << io::real(r.median_final) << ',' << io::real(r.divergence_rate) << ','
        << io::real(r.log_auc) << ',' << (r.best_median ? 1 : 0) << ',' << (r.best_divergence ? 1 : 0) << ','
        << (r.best_auc ? 1 : 0) << '\n';
  }
}

namespace {

// JSON has no infinity; non-finite reals are stored as strings.
json real_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double real_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::numeric_limits<double>::quiet_NaN();
}

json spec_json(const OptimizeeSpec& s) {
  return {{"family", to_string(s.family)}, {"quad_dim", s.quad_dim},       {"quad_rows", s.quad_rows},
          {"blob_points", s.blob_points},  {"blob_dim", s.blob_dim},       {"blob_separation", s.blob_separation},
          {"mlp_hidden", s.mlp_hidden},    {"batch_size", s.batch_size},   {"init_std", s.init_std},
          {"mnist_images", s.mnist_images}, {"mnist_labels", s.mnist_labels}};
}

OptimizeeSpec spec_from(const json& j) {
  OptimizeeSpec s;
  s.family = family_from_string(j.at("family").get<std::string>());
  s.quad_dim = j.at("quad_dim").get<int>();
  s.quad_rows = j.at("quad_rows").get<int>();
  s.blob_points = j.at("blob_points").get<int>();
  s.blob_dim = j.at("blob_dim").get<int>();
  s.blob_separation = j.at("blob_separation").get<double>();
  s.mlp_hidden = j.at("mlp_hidden").get<int>();
  s.batch_size = j.at("batch_size").get<int>();
  s.init_std = j.at("init_std").get<double>();
  s.mnist_images = j.at("mnist_images").get<std::string>();
  s.mnist_labels = j.at("mnist_labels").get<std::string>();
  return s;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json curves = json::array();
  for (const auto& c : r.curves) {
    json losses = json::array();
    for (double v : c.losses) losses.push_back(real_json(v));
    curves.push_back({{"seed", c.seed},
                      {"steps", c.steps},
                      {"losses", losses},
                      {"diverged_at", c.diverged_at ? json(*c.diverged_at) : json(nullptr)}});
  }
  json j = {{"optimizer", r.optimizer},
            {"optimizee", spec_json(r.optimizee)},
            {"horizon", r.horizon},
            {"log_every", r.log_every},
            {"curves", curves},
            {"median_final", real_json(r.median_final)},
            {"mean_final", real_json(r.mean_final)},
            {"std_final", real_json(r.std_final)},
            {"divergence_rate", real_json(r.divergence_rate)},
            {"log_auc", real_json(r.log_auc)}};
  return j.dump(1);
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.optimizer = j.at("optimizer").get<std::string>();
  r.optimizee = spec_from(j.at("optimizee"));
  r.horizon = j.at("horizon").get<int>();
  r.log_every = j.at("log_every").get<int>();
  for (const auto& c : j.at("curves")) {
    SeedCurve sc;
    sc.seed = c.at("seed").get<std::uint64_t>();
    sc.steps = c.at("steps").get<std::vector<int>>();
    for (const auto& v : c.at("losses")) sc.losses.push_back(real_from(v));
    if (!c.at("diverged_at").is_null()) sc.diverged_at = c.at("diverged_at").get<int>();
    r.curves.push_back(std::move(sc));
  }
  aggregate(r);
  return r;
}

}  // namespace l2o
