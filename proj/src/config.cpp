#include "l2o/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include "l2o/io.hpp"

namespace l2o {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(int line) { return line > 0 ? " (line " + std::to_string(line) + ")" : ""; }

[[noreturn]] void type_error(const std::string& key, int line, const std::string& want, const std::string& got) {
  throw ConfigError(key, line, "key '" + key + "'" + where(line) + ": expected " + want + ", got '" + got + "'");
}

long long parse_integer(const std::string& key, int line, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) type_error(key, line, "an integer", v);
  return out;
}

int parse_int(const std::string& key, int line, const std::string& v) {
  const long long x = parse_integer(key, line, v);
  if (x < -2147483647LL || x > 2147483647LL) type_error(key, line, "a 32-bit integer", v);
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, int line, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) type_error(key, line, "an unsigned integer", v);
  return out;
}

double parse_double(const std::string& key, int line, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  // std::from_chars for double is not available everywhere; strtod with a
  // full-consumption check is equivalent here.
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) type_error(key, line, "a number", v);
  return x;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ",";
    out += fmt(xs[k]);
  }
  return out;
}

struct KeyDef {
  std::string name;
  std::function<void(RunConfig&, const std::string&, int)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Parse>
auto enum_setter(const std::string& key, Parse parse) {
  return [key, parse](const std::string& v, int line) {
    try {
      return parse(v);
    } catch (const std::invalid_argument&) {
      throw ConfigError(key, line, "key '" + key + "'" + where(line) + ": unknown value '" + v + "'");
    }
  };
}

#define L2O_INT(key, field)                                                                \
  KeyDef{key, [](RunConfig& c, const std::string& v, int l) { c.field = parse_int(key, l, v); }, \
         [](const RunConfig& c) { return std::to_string(c.field); }}
#define L2O_REAL(key, field)                                                                  \
  KeyDef{key, [](RunConfig& c, const std::string& v, int l) { c.field = parse_double(key, l, v); }, \
         [](const RunConfig& c) { return io::real(c.field); }}
#define L2O_STR(key, field)                                                         \
  KeyDef{key, [](RunConfig& c, const std::string& v, int) { c.field = v; }, \
         [](const RunConfig& c) { return c.field; }}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      KeyDef{"command",
             [](RunConfig& c, const std::string& v, int l) {
               c.command = enum_setter("command", command_from_string)(v, l);
             },
             [](const RunConfig& c) { return to_string(c.command); }},
      KeyDef{"mode",
             [](RunConfig& c, const std::string& v, int l) { c.mode = enum_setter("mode", mode_from_string)(v, l); },
             [](const RunConfig& c) { return to_string(c.mode); }},
      KeyDef{"profile",
             [](RunConfig& c, const std::string& v, int l) {
               c.profile = enum_setter("profile", profile_from_string)(v, l);
             },
             [](const RunConfig& c) { return to_string(c.profile); }},
      KeyDef{"seed", [](RunConfig& c, const std::string& v, int l) { c.seed = parse_u64("seed", l, v); },
             [](const RunConfig& c) { return std::to_string(c.seed); }},
      L2O_STR("out", out),
      KeyDef{"family",
             [](RunConfig& c, const std::string& v, int l) {
               c.optimizee.family = enum_setter("family", family_from_string)(v, l);
             },
             [](const RunConfig& c) { return to_string(c.optimizee.family); }},
      L2O_INT("quad_dim", optimizee.quad_dim),
      L2O_INT("quad_rows", optimizee.quad_rows),
      L2O_INT("blob_points", optimizee.blob_points),
      L2O_INT("blob_dim", optimizee.blob_dim),
      L2O_REAL("blob_separation", optimizee.blob_separation),
      L2O_INT("mlp_hidden", optimizee.mlp_hidden),
      L2O_INT("batch_size", optimizee.batch_size),
      L2O_REAL("init_std", optimizee.init_std),
      L2O_STR("mnist_dir", mnist_dir),
      L2O_INT("hidden", hidden),
      L2O_REAL("preprocess_p", preprocess_p),
      L2O_REAL("output_scale", output_scale),
      L2O_REAL("meta_lr", meta_lr),
      L2O_INT("unroll", unroll),
      L2O_INT("train_instances", train_instances),
      L2O_INT("valid_instances", valid_instances),
      L2O_REAL("valid_penalty", valid_penalty),
      L2O_REAL("divergence_factor", divergence_factor),
      L2O_INT("epochs", epochs),
      L2O_INT("n_train", n_train),
      L2O_INT("valid_every", valid_every),
      L2O_INT("n_valid", n_valid),
      KeyDef{"ladder",
             [](RunConfig& c, const std::string& v, int l) {
               c.curriculum.ladder.clear();
               for (const auto& item : split_list(v)) c.curriculum.ladder.push_back(parse_int("ladder", l, item));
             },
             [](const RunConfig& c) {
               return join<int>(c.curriculum.ladder, [](const int& x) { return std::to_string(x); });
             }},
      L2O_INT("n_period", curriculum.n_period),
      L2O_INT("t_period", curriculum.t_period),
      L2O_INT("max_periods", curriculum.max_periods),
      L2O_REAL("il_r", il_r),
      KeyDef{"teachers", [](RunConfig& c, const std::string& v, int) { c.teachers = split_list(v); },
             [](const RunConfig& c) {
               return join<std::string>(c.teachers, [](const std::string& x) { return x; });
             }},
      L2O_REAL("teacher_lr", teacher_lr),
      L2O_REAL("si_start_prob", si_start_prob),
      L2O_INT("si_anneal", si_anneal),
      L2O_STR("checkpoint", checkpoint),
      L2O_STR("eval_optimizer", eval_optimizer),
      L2O_INT("eval_horizon", eval_horizon),
      L2O_INT("eval_seeds", eval_seeds),
      L2O_INT("log_every", log_every),
      KeyDef{"reports", [](RunConfig& c, const std::string& v, int) { c.reports = split_list(v); },
             [](const RunConfig& c) {
               return join<std::string>(c.reports, [](const std::string& x) { return x; });
             }},
  };
  return table;
}

#undef L2O_INT
#undef L2O_REAL
#undef L2O_STR

const KeyDef* find_key(const std::string& name) {
  for (const auto& k : key_table()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<Entry> read_entries(const std::string& text, const std::string& source) {
  std::vector<Entry> out;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(body, line, source + ":" + std::to_string(line) + ": expected 'key = value', got '" + body + "'");
    }
    Entry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (!find_key(e.key)) {
      throw ConfigError(e.key, line, source + ":" + std::to_string(line) + ": unknown key '" + e.key + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

[[noreturn]] void invalid(const std::string& key, const std::string& message) { throw ConfigError(key, 0, message); }

}  // namespace

ConfigError::ConfigError(const std::string& key, int line, const std::string& message)
    : std::runtime_error(message), key_(key), line_(line) {}

std::string to_string(Command c) {
  switch (c) {
    case Command::Train:
      return "train";
    case Command::Eval:
      return "eval";
    case Command::Compare:
      return "compare";
    case Command::Gradcheck:
      return "gradcheck";
  }
  return "unknown";
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Vanilla:
      return "vanilla";
    case Mode::Aug:
      return "aug";
    case Mode::Cl:
      return "cl";
    case Mode::Il:
      return "il";
    case Mode::ClIl:
      return "cl-il";
    case Mode::SelfImproving:
      return "self-improving";
  }
  return "unknown";
}

std::string to_string(Profile p) { return p == Profile::Desk ? "desk" : "paper"; }

Command command_from_string(const std::string& s) {
  for (Command c : {Command::Train, Command::Eval, Command::Compare, Command::Gradcheck}) {
    if (to_string(c) == s) return c;
  }
  throw std::invalid_argument("unknown command '" + s + "'");
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::Vanilla, Mode::Aug, Mode::Cl, Mode::Il, Mode::ClIl, Mode::SelfImproving}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown mode '" + s + "'");
}

Profile profile_from_string(const std::string& s) {
  if (s == "desk") return Profile::Desk;
  if (s == "paper") return Profile::Paper;
  throw std::invalid_argument("unknown profile '" + s + "'");
}

RunConfig default_config(Profile profile, Mode mode) {
  RunConfig c;
  c.profile = profile;
  c.mode = mode;
  if (profile == Profile::Desk) {
    c.optimizee.family = Family::TinyMLP;
    c.optimizee.blob_points = 512;
    c.optimizee.batch_size = 128;
    c.curriculum.ladder = {20, 40, 100, 200};
    c.curriculum.n_period = 3;
    c.curriculum.t_period = 25;
    c.epochs = 300;
    c.n_train = 20;
    c.valid_every = 25;
    if (mode == Mode::Aug) {
      c.epochs = 500;
      c.n_train = 100;
    }
  } else {
    c.optimizee.family = Family::MnistMLP;
    c.optimizee.mlp_hidden = 20;
    c.optimizee.batch_size = 128;
    c.curriculum.ladder = {100, 200, 500, 1000, 1500, 2000, 2500, 3000};
    c.curriculum.n_period = 3;
    c.curriculum.t_period = 100;
    c.curriculum.max_periods = 0;
    c.epochs = 5000;
    c.n_train = 100;
    c.valid_every = 100;
    c.eval_horizon = 10000;
    if (mode == Mode::Aug) c.n_train = 1000;
  }
  c.il_r = 0.3;
  c.teacher_lr = 0.01;
  return c;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& d : key_table()) k.push_back(d.name);
    return k;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text, const Overrides& flags, const std::string& source) {
  std::vector<Entry> entries = read_entries(text, source);
  for (const auto& [key, value] : flags) {
    if (!find_key(key)) throw ConfigError(key, 0, "unknown flag '--" + key + "'");
    entries.push_back({key, value, 0});
  }
  for (const auto& e : entries) {
    if (e.value.empty()) {
      throw ConfigError(e.key, e.line, "key '" + e.key + "'" + where(e.line) + ": missing value");
    }
  }

  // Profile and mode pick the defaults, so they are resolved first; the last
  // occurrence wins, which lets flags override the file.
  Profile profile = Profile::Desk;
  Mode mode = Mode::Vanilla;
  for (const auto& e : entries) {
    if (e.key == "profile") profile = enum_setter("profile", profile_from_string)(e.value, e.line);
    if (e.key == "mode") mode = enum_setter("mode", mode_from_string)(e.value, e.line);
  }
  RunConfig cfg = default_config(profile, mode);
  for (const auto& e : entries) find_key(e.key)->set(cfg, e.value, e.line);

  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    // Attach the line of the offending key when it came from the file.
    int line = 0;
    for (const auto& e : entries) {
      if (e.key == err.key()) line = e.line;
    }
    if (line > 0) throw ConfigError(err.key(), line, std::string(err.what()) + where(line));
    throw;
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const Overrides& flags) {
  if (path.empty()) return parse_config("", flags, "<flags>");
  if (!std::filesystem::exists(path)) throw ConfigError("config", 0, "config file not found: " + path);
  return parse_config(io::read_file(path), flags, path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) {
    const std::string v = k.get(cfg);
    if (v.empty()) continue;  // empty strings and lists are the defaults
    out += k.name + " = " + v + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  const auto positive = [](const std::string& key, double v) {
    if (!(v > 0)) invalid(key, key + " must be > 0");
  };
  if (curriculum.n_period < 1) invalid("n_period", "n_period must be ≥ 1");
  if (curriculum.t_period < 1) invalid("t_period", "t_period must be ≥ 1");
  try {
    curriculum.validate();
  } catch (const std::invalid_argument& e) {
    invalid(std::string(e.what()).find("max_periods") != std::string::npos ? "max_periods" : "ladder", e.what());
  }
  try {
    optimizee.validate();
  } catch (const std::invalid_argument& e) {
    invalid("family", e.what());
  }
  positive("hidden", hidden);
  positive("preprocess_p", preprocess_p);
  positive("output_scale", output_scale);
  positive("meta_lr", meta_lr);
  positive("unroll", unroll);
  positive("train_instances", train_instances);
  positive("valid_instances", valid_instances);
  positive("valid_penalty", valid_penalty);
  positive("divergence_factor", divergence_factor);
  positive("epochs", epochs);
  positive("n_train", n_train);
  positive("valid_every", valid_every);
  if (n_valid < 0) invalid("n_valid", "n_valid must be >= 0");
  if (!(il_r >= 0.0 && il_r <= 1.0)) invalid("il_r", "il_r must lie in [0, 1]");
  positive("teacher_lr", teacher_lr);
  if (si_start_prob >= 0.0 && si_start_prob * static_cast<double>(teachers.size()) > 1.0) {
    invalid("si_start_prob", "si_start_prob times the number of teachers must not exceed 1");
  }
  if (si_anneal < 1) invalid("si_anneal", "si_anneal must be >= 1");
  if (teachers.empty()) invalid("teachers", "teachers must name at least one optimizer");
  for (const auto& t : teachers) {
    try {
      (void)teacher_from_string(t);
    } catch (const std::invalid_argument& e) {
      invalid("teachers", e.what());
    }
  }
  if (eval_optimizer != "l2o") {
    try {
      (void)teacher_from_string(eval_optimizer);
    } catch (const std::invalid_argument&) {
      invalid("eval_optimizer", "eval_optimizer must be 'l2o' or a teacher name, got '" + eval_optimizer + "'");
    }
  }
  if (eval_horizon < 0) invalid("eval_horizon", "eval_horizon must be >= 0");
  positive("eval_seeds", eval_seeds);
  positive("log_every", log_every);
  if (out.empty()) invalid("out", "out must name a directory");
}

std::vector<TeacherKind> RunConfig::teacher_kinds() const {
  std::vector<TeacherKind> out;
  for (const auto& t : teachers) out.push_back(teacher_from_string(t, teacher_lr));
  return out;
}

OptimizeeSpec RunConfig::resolved_optimizee() const {
  OptimizeeSpec spec = optimizee;
  if (spec.family == Family::MnistMLP) {
    std::string dir = mnist_dir;
    if (dir.empty()) {
      if (const char* env = std::getenv("L2O_DATA_ROOT")) dir = env;
    }
    if (dir.empty()) {
      throw ConfigError("mnist_dir", 0, "MNIST needs mnist_dir or the L2O_DATA_ROOT environment variable");
    }
    const std::filesystem::path root(dir);
    if (spec.mnist_images.empty()) spec.mnist_images = (root / "train-images-idx3-ubyte").string();
    if (spec.mnist_labels.empty()) spec.mnist_labels = (root / "train-labels-idx1-ubyte").string();
  }
  return spec;
}

int RunConfig::largest_training_horizon() const {
  if (mode == Mode::Cl || mode == Mode::ClIl) return curriculum.ladder.back();
  return n_train;
}

int RunConfig::effective_eval_horizon() const {
  return eval_horizon > 0 ? eval_horizon : 10 * largest_training_horizon();
}

}  // namespace l2o
