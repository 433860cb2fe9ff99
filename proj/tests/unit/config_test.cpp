#include <gtest/gtest.h>

#include <cstdlib>

#include "l2o/config.hpp"

namespace {

using namespace l2o;

ConfigError parse_error(const std::string& text, const Overrides& flags = {}) {
  try {
    (void)parse_config(text, flags);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "expected a ConfigError for:\n" << text;
  return ConfigError("", 0, "");
}

TEST(ParseConfig, ModeValue) {
  EXPECT_EQ(parse_config("mode = cl-il\n").mode, Mode::ClIl);
  EXPECT_EQ(parse_config("mode=self-improving").mode, Mode::SelfImproving);
}

TEST(ParseConfig, NPeriodZeroIsRejectedWithItsLine) {
  const ConfigError e = parse_error("# header\nmode = cl\nn_period = 0\n");
  EXPECT_NE(std::string(e.what()).find("n_period must be ≥ 1"), std::string::npos) << e.what();
  EXPECT_EQ(e.key(), "n_period");
  EXPECT_EQ(e.line(), 3);
}

TEST(ParseConfig, PaperProfileLoadsPublishedConstants) {
  const RunConfig c = parse_config("profile = paper\nmode = cl-il\n");
  EXPECT_EQ(c.curriculum.ladder, (std::vector<int>{100, 200, 500, 1000, 1500, 2000, 2500, 3000}));
  EXPECT_EQ(c.curriculum.n_period, 3);
  EXPECT_EQ(c.curriculum.t_period, 100);
  EXPECT_EQ(c.il_r, 0.3);
  EXPECT_EQ(c.teacher_lr, 0.01);
  for (const auto& k : c.teacher_kinds()) EXPECT_EQ(k.lr, 0.01);
  EXPECT_EQ(c.optimizee.family, Family::MnistMLP);
  EXPECT_EQ(c.optimizee.mlp_hidden, 20);
  EXPECT_EQ(c.eval_horizon, 10000);
}

TEST(ParseConfig, DeskDefaultsFollowTheMode) {
  const RunConfig v = parse_config("");
  EXPECT_EQ(v.n_train, 20);
  EXPECT_EQ(v.epochs, 300);
  EXPECT_EQ(v.effective_eval_horizon(), 200);
  const RunConfig a = parse_config("mode = aug");
  EXPECT_EQ(a.n_train, 100);
  EXPECT_EQ(a.epochs, 500);
  const RunConfig c = parse_config("mode = cl");
  EXPECT_EQ(c.curriculum.ladder, (std::vector<int>{20, 40, 100, 200}));
  EXPECT_EQ(c.effective_eval_horizon(), 2000);
  // Mode defaults apply even when mode comes after other keys.
  EXPECT_EQ(parse_config("seed = 3\nmode = aug\n").n_train, 100);
}

TEST(ParseConfig, UnknownKeyNamesKeyAndLine) {
  const ConfigError e = parse_error("seed = 1\n\nlearning_rate = 3\n");
  EXPECT_EQ(e.key(), "learning_rate");
  EXPECT_EQ(e.line(), 3);
  EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  EXPECT_EQ(parse_error("", {{"nope", "1"}}).key(), "nope");
}

TEST(ParseConfig, TypeMismatchNamesKeyAndLine) {
  for (const auto& [text, key, line] : std::vector<std::tuple<std::string, std::string, int>>{
           {"seed = x1", "seed", 1},
           {"\nepochs = 2.5", "epochs", 2},
           {"\n\nmeta_lr = fast", "meta_lr", 3},
           {"ladder = 20,forty", "ladder", 1},
           {"mode = turbo", "mode", 1},
           {"family = cifar", "family", 1},
       }) {
    const ConfigError e = parse_error(text);
    EXPECT_EQ(e.key(), key) << text;
    EXPECT_EQ(e.line(), line) << text;
  }
}

TEST(ParseConfig, MissingValueAndMalformedLines) {
  const ConfigError e = parse_error("seed = 1\nout =\n");
  EXPECT_EQ(e.key(), "out");
  EXPECT_EQ(e.line(), 2);
  EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  EXPECT_EQ(parse_error("seed 1\n").line(), 1);
}

TEST(ParseConfig, CommentsAndWhitespace) {
  const RunConfig c = parse_config("  # comment\nseed = 42   # trailing\n\n\tout = runs/a \n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.out, "runs/a");
}

TEST(ParseConfig, FlagsOverrideFile) {
  const RunConfig c = parse_config("seed = 1\nmode = vanilla\nn_train = 30\n",
                                   {{"seed", "9"}, {"mode", "aug"}, {"profile", "desk"}});
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.mode, Mode::Aug);
  EXPECT_EQ(c.n_train, 30);  // explicit file value beats the aug default
}

TEST(ParseConfig, RoundTrip) {
  std::vector<RunConfig> configs;
  configs.push_back(parse_config(""));
  configs.push_back(parse_config("profile = paper\nmode = cl-il\nmnist_dir = /data/mnist\n"));
  configs.push_back(parse_config(
      "command = compare\nreports = a.json, b.json\nmeta_lr = 0.00123456789\nteachers = rmsprop,sgd\n"
      "ladder = 5,7,9\nseed = 18446744073709551615\nsi_start_prob = 0.2\nvalid_penalty = 1e300\n"));
  configs.push_back(parse_config("command = eval\neval_optimizer = adam\nfamily = quadratic\nquad_dim = 7\n"));
  for (const auto& c : configs) {
    const std::string text = serialize_config(c);
    EXPECT_EQ(parse_config(text), c) << text;
    EXPECT_EQ(serialize_config(parse_config(text)), text);
  }
}

TEST(ParseConfig, ValidationErrors) {
  EXPECT_EQ(parse_error("ladder = 40,20").key(), "ladder");
  EXPECT_EQ(parse_error("il_r = 1.5").key(), "il_r");
  EXPECT_EQ(parse_error("teachers = adam,lion").key(), "teachers");
  EXPECT_EQ(parse_error("eval_optimizer = lion").key(), "eval_optimizer");
  EXPECT_EQ(parse_error("t_period = 0").key(), "t_period");
  EXPECT_EQ(parse_error("si_start_prob = 0.5").key(), "si_start_prob");
}

TEST(RunConfigTest, MnistPathsComeFromTheEnvironment) {
  RunConfig c = parse_config("family = mnist");
  ::unsetenv("L2O_DATA_ROOT");
  EXPECT_THROW((void)c.resolved_optimizee(), ConfigError);
  ::setenv("L2O_DATA_ROOT", "/tmp/mnist", 1);
  EXPECT_EQ(c.resolved_optimizee().mnist_images, "/tmp/mnist/train-images-idx3-ubyte");
  c.mnist_dir = "/elsewhere";
  EXPECT_EQ(c.resolved_optimizee().mnist_labels, "/elsewhere/train-labels-idx1-ubyte");
  ::unsetenv("L2O_DATA_ROOT");
}

TEST(RunConfigTest, EnumNamesRoundTrip) {
  for (Mode m : {Mode::Vanilla, Mode::Aug, Mode::Cl, Mode::Il, Mode::ClIl, Mode::SelfImproving}) {
    EXPECT_EQ(mode_from_string(to_string(m)), m);
  }
  for (Command c : {Command::Train, Command::Eval, Command::Compare, Command::Gradcheck}) {
    EXPECT_EQ(command_from_string(to_string(c)), c);
  }
  EXPECT_THROW(profile_from_string("laptop"), std::invalid_argument);
}

}  // namespace
