#include "l2o/experiment.hpp"

#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>

#include "l2o/checkpoint.hpp"
#include "l2o/gradcheck.hpp"
#include "l2o/io.hpp"
#include "l2o/seeds.hpp"

namespace l2o {

namespace fs = std::filesystem;

namespace {

using EpisodeBody = std::function<EpisodeLog(L2OParams&, int epoch, int n_train)>;

EpisodeBody episode_body(const RunConfig& cfg, MetaTrainer& trainer) {
  switch (cfg.mode) {
    case Mode::Vanilla:
    case Mode::Aug:
    case Mode::Cl:
      return [&trainer](L2OParams& phi, int epoch, int n_train) {
        const EpochResult r = trainer.train_epoch(phi, epoch, n_train);
        return EpisodeLog{epoch, "Lf", r.loss, n_train};
      };
    case Mode::Il:
    case Mode::ClIl: {
      ImitationConfig ic;
      ic.r = cfg.il_r;
      ic.teachers = cfg.teacher_kinds();
      ic.validate();
      return [&trainer, ic](L2OParams& phi, int epoch, int n_train) {
        return il_episode(phi, trainer, ic, epoch, n_train);
      };
    }
    case Mode::SelfImproving: {
      SelfImprovingSchedule sis;
      sis.teachers = cfg.teacher_kinds();
      sis.initial_teacher_prob = cfg.si_start_prob;
      sis.anneal_epochs = cfg.si_anneal;
      sis.validate();
      return [&trainer, sis](L2OParams& phi, int epoch, int n_train) {
        return self_improving_epoch(phi, trainer, sis, epoch, n_train);
      };
    }
  }
  throw std::logic_error("unhandled mode");
}

bool curriculum_mode(Mode m) { return m == Mode::Cl || m == Mode::ClIl; }

void report_row(std::ostream* progress, const CurriculumTraceRow& t) {
  if (!progress) return;
  *progress << "stage " << t.stage << " period " << t.period << " epoch " << t.epoch << " n_train " << t.n_train
            << " n_valid " << t.n_valid << " val " << io::real(t.l_val) << (t.improved ? " *" : "") << "\n";
}

TrainOutcome train_fixed(const RunConfig& cfg, MetaTrainer& trainer, std::ostream* progress) {
  const EpisodeBody body = episode_body(cfg, trainer);
  TrainOutcome out;
  L2OParams phi = init_l2o(cfg.seed, cfg.hidden, cfg.preprocess_p, cfg.output_scale);
  out.phi = phi;
  double l_min = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int period = 0;
  const int n_valid = cfg.effective_n_valid();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    out.episodes.push_back(body(phi, epoch, cfg.n_train));
    const int done = epoch + 1;
    if (done % cfg.valid_every != 0 && done != cfg.epochs) continue;
    const double l_val = trainer.validate(phi, n_valid);
    const bool improved = l_val < l_min;
    if (improved) {
      l_min = l_val;
      out.phi = phi;
      best_epoch = done;
      out.best_stage = 0;
    }
    out.trace.push_back({0, ++period, done, cfg.n_train, n_valid, l_val, l_min, improved});
    report_row(progress, out.trace.back());
  }
  out.total_epochs = cfg.epochs;
  out.iterations = static_cast<long long>(cfg.epochs) * cfg.n_train;
  out.iterations_to_best = static_cast<long long>(best_epoch) * cfg.n_train;
  out.best_loss = l_min;
  return out;
}

TrainOutcome train_curriculum(const RunConfig& cfg, MetaTrainer& trainer, std::ostream* progress) {
  const EpisodeBody body = episode_body(cfg, trainer);
  TrainOutcome out;
  CurriculumHooks<L2OParams> hooks;
  hooks.train_epoch = [&](L2OParams& phi, const EpochContext& ctx) {
    out.episodes.push_back(body(phi, ctx.epoch, ctx.n_train));
  };
  hooks.validate = [&](const L2OParams& phi, int n_valid) { return trainer.validate(phi, n_valid); };
  // A stage restarts from an earlier snapshot, so the Adam moments from the
  // abandoned tail are dropped with it.
  hooks.on_stage_enter = [&](int) { trainer.meta_optimizer().reset(); };
  hooks.on_trace = [&](const CurriculumTraceRow& t) { report_row(progress, t); };
  auto r = curriculum_train(init_l2o(cfg.seed, cfg.hidden, cfg.preprocess_p, cfg.output_scale), cfg.curriculum,
                            hooks);
  out.phi = std::move(r.best);
  out.trace = std::move(r.trace);
  out.total_epochs = r.total_epochs;
  for (std::size_t s = 0; s < r.stage_epochs.size(); ++s) {
    out.iterations += static_cast<long long>(r.stage_epochs[s]) * cfg.curriculum.ladder[s];
  }
  out.iterations_to_best = r.iterations_to_best(cfg.curriculum);
  out.best_stage = r.best_stage;
  out.best_loss = r.best_loss;
  return out;
}

std::string eval_name(const RunConfig& cfg) {
  return cfg.eval_optimizer == "l2o" ? "l2o-" + to_string(cfg.mode) : cfg.eval_optimizer;
}

std::string config_hash(const RunConfig& cfg) { return io::hex64(fnv1a(serialize_config(cfg))); }

int run_train(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  const TrainOutcome r = train_model(cfg, &out);
  save_checkpoint((dir / "checkpoint.l2o").string(), r.phi);
  write_trace_csv((dir / "trace.csv").string(), r.trace);
  write_episodes_csv((dir / "episodes.csv").string(), r.episodes);
  io::open_out((dir / "config.txt").string()) << serialize_config(cfg);
  write_manifest(cfg.out, cfg, {"checkpoint.l2o", "trace.csv", "episodes.csv", "config.txt"});
  out << "trained " << to_string(cfg.mode) << ": " << r.total_epochs << " epochs, " << r.iterations
      << " optimizee steps, " << r.iterations_to_best << " to best snapshot (validation " << io::real(r.best_loss)
      << ")\n";
  return 0;
}

int run_eval_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::optional<L2OParams> phi;
  if (cfg.eval_optimizer == "l2o") {
    if (cfg.checkpoint.empty()) {
      err << "checkpoint required: eval of mode " << to_string(cfg.mode)
          << " needs checkpoint = <path> (or eval_optimizer = <teacher>)\n";
      return 2;
    }
    phi = load_checkpoint(cfg.checkpoint);
  }
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  const EvalReport report = evaluate(cfg, phi);
  write_curves_csv((dir / "curves.csv").string(), report);
  write_summary_csv((dir / "summary.csv").string(), {report});
  io::open_out((dir / "report.json").string()) << report_to_json(report);
  io::open_out((dir / "config.txt").string()) << serialize_config(cfg);
  write_manifest(cfg.out, cfg, {"curves.csv", "summary.csv", "report.json", "config.txt"});
  out << report.optimizer << ": median final " << io::real(report.median_final) << ", divergence rate "
      << report.divergence_rate << ", log AUC " << io::real(report.log_auc) << "\n";
  return 0;
}

int run_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.reports.size() < 2) {
    err << "compare needs reports = <a.json>,<b.json>[,...]\n";
    return 2;
  }
  std::vector<EvalReport> reports;
  for (const auto& path : cfg.reports) reports.push_back(report_from_json(io::read_file(path)));
  const auto rows = compare(reports);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_comparison_csv((dir / "comparison.csv").string(), rows);
  write_summary_csv((dir / "summary.csv").string(), reports);
  io::open_out((dir / "config.txt").string()) << serialize_config(cfg);
  write_manifest(cfg.out, cfg, {"comparison.csv", "summary.csv", "config.txt"});
  for (const auto& row : rows) {
    out << std::left << std::setw(24) << row.optimizer << " median " << io::real(row.median_final)
        << (row.best_median ? " *" : "") << "  divergence " << row.divergence_rate << (row.best_divergence ? " *" : "")
        << "  log AUC " << io::real(row.log_auc) << (row.best_auc ? " *" : "") << "\n";
  }
  return 0;
}

int run_gradcheck(const RunConfig& cfg, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_gradchecks(cfg.seed)) {
    out << std::left << std::setw(24) << r.name << " max relative error " << std::scientific << std::setprecision(3)
        << r.max_rel_error << std::defaultfloat << (r.ok() ? "  ok" : "  FAIL") << "\n";
    ok = ok && r.ok();
  }
  return ok ? 0 : 1;
}

}  // namespace

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.optimizee = cfg.resolved_optimizee();
  tc.meta_lr = cfg.meta_lr;
  tc.epochs = cfg.epochs;
  tc.n_train = cfg.n_train;
  tc.unroll = cfg.unroll;
  tc.seed = cfg.seed;
  tc.train_instances = cfg.train_instances;
  tc.valid_instances = cfg.valid_instances;
  tc.valid_penalty = cfg.valid_penalty;
  tc.divergence_factor = cfg.divergence_factor;
  return tc;
}

TrainOutcome train_model(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  MetaTrainer trainer(train_config(cfg));
  return curriculum_mode(cfg.mode) ? train_curriculum(cfg, trainer, progress) : train_fixed(cfg, trainer, progress);
}

std::vector<std::uint64_t> eval_seed_list(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < cfg.eval_seeds; ++k) seeds.push_back(derive_seed(cfg.seed, "eval-seed", static_cast<std::uint64_t>(k)));
  return seeds;
}

EvalReport evaluate(const RunConfig& cfg, const std::optional<L2OParams>& phi) {
  EvalConfig ec;
  ec.name = eval_name(cfg);
  if (cfg.eval_optimizer == "l2o") {
    if (!phi) throw std::invalid_argument("checkpoint required");
    ec.phi = phi;
  } else {
    ec.teacher = teacher_from_string(cfg.eval_optimizer, cfg.teacher_lr);
  }
  ec.optimizee = cfg.resolved_optimizee();
  ec.horizon = cfg.effective_eval_horizon();
  ec.seeds = eval_seed_list(cfg);
  ec.log_every = cfg.log_every;
  ec.divergence_factor = cfg.divergence_factor;
  return run_eval(ec);
}

void write_trace_csv(const std::string& path, const std::vector<CurriculumTraceRow>& trace) {
  auto f = io::open_out(path);
  f << "stage,period,epoch,n_train,n_valid,l_val,l_min,improved\n";
  for (const auto& t : trace) {
    f << t.stage << ',' << t.period << ',' << t.epoch << ',' << t.n_train << ',' << t.n_valid << ','
      << io::real(t.l_val) << ',' << io::real(t.l_min) << ',' << (t.improved ? 1 : 0) << '\n';
  }
}

void write_episodes_csv(const std::string& path, const std::vector<EpisodeLog>& episodes) {
  auto f = io::open_out(path);
  f << "epoch,kind,loss,horizon\n";
  for (const auto& e : episodes) f << e.epoch << ',' << e.kind << ',' << io::real(e.loss) << ',' << e.horizon << '\n';
}

void write_manifest(const std::string& dir, const RunConfig& cfg, const std::vector<std::string>& artifacts) {
  auto f = io::open_out((fs::path(dir) / "manifest").string());
  f << "command = " << to_string(cfg.command) << "\n";
  f << "mode = " << to_string(cfg.mode) << "\n";
  f << "profile = " << to_string(cfg.profile) << "\n";
  f << "seed = " << cfg.seed << "\n";
  f << "config_hash = " << config_hash(cfg) << "\n";
  for (const auto& a : artifacts) f << "artifact = " << a << " " << io::file_hash((fs::path(dir) / a).string()) << "\n";
}

int dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    switch (cfg.command) {
      case Command::Train:
        return run_train(cfg, out);
      case Command::Eval:
        return run_eval_command(cfg, out, err);
      case Command::Compare:
        return run_compare(cfg, out, err);
      case Command::Gradcheck:
        return run_gradcheck(cfg, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace l2o
