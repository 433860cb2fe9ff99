#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <limits>
#include <random>

#include "l2o/curriculum.hpp"

namespace {

using namespace l2o;

// Stand-in model: remembers how many epochs it has been trained for and at
// which horizons, so snapshots are identifiable.
struct Counter {
  int epochs = 0;
  std::vector<int> horizons;
  int stamp = 0;  // global epoch count after the latest training epoch
  bool operator==(const Counter&) const = default;
};

struct Script {
  std::deque<double> values;
  std::vector<int> asked_horizons;
  double next(int n_valid) {
    asked_horizons.push_back(n_valid);
    if (values.empty()) throw std::logic_error("script exhausted");
    const double v = values.front();
    values.pop_front();
    return v;
  }
};

CurriculumHooks<Counter> hooks_for(Script& script, std::vector<EpochContext>* contexts = nullptr) {
  CurriculumHooks<Counter> h;
  h.train_epoch = [contexts](Counter& m, const EpochContext& ctx) {
    ++m.epochs;
    m.horizons.push_back(ctx.n_train);
    if (contexts) contexts->push_back(ctx);
  };
  h.validate = [&script](const Counter&, int n_valid) { return script.next(n_valid); };
  return h;
}

CurriculumTraceRow row(int stage, int period, int epoch, int n_train, int n_valid, double l_val, double l_min,
                       bool improved) {
  return {stage, period, epoch, n_train, n_valid, l_val, l_min, improved};
}

TEST(NValid, NextHorizonAndGeometricContinuation) {
  CurriculumConfig cc;
  cc.ladder = {100, 200, 500};
  EXPECT_EQ(n_valid_for(cc, 0), 200);
  EXPECT_EQ(n_valid_for(cc, 1), 500);
  EXPECT_EQ(n_valid_for(cc, 2), 1250);
  EXPECT_THROW(n_valid_for(cc, 3), std::out_of_range);
  cc.ladder = {100};
  EXPECT_THROW(n_valid_for(cc, 0), std::invalid_argument);
  cc.ladder = {100, 200, 500, 1000, 1500, 2000, 2500, 3000};
  EXPECT_EQ(n_valid_for(cc, 7), 3600);
}

TEST(CurriculumConfigTest, Validation) {
  CurriculumConfig cc;
  EXPECT_NO_THROW(cc.validate());
  cc.ladder = {20, 20};
  EXPECT_THROW(cc.validate(), std::invalid_argument);
  cc = CurriculumConfig{};
  cc.ladder = {40};
  EXPECT_THROW(cc.validate(), std::invalid_argument);
  cc = CurriculumConfig{};
  cc.n_period = 0;
  try {
    cc.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("n_period must be >= 1"), std::string::npos);
  }
  cc = CurriculumConfig{};
  cc.t_period = 0;
  EXPECT_THROW(cc.validate(), std::invalid_argument);
}

// Stage 0 improves three times; the fourth period ties, which ends the stage.
// Stage 1 never beats its re-baseline, so training stops there.
TEST(Curriculum, StopsWhenAStageNeverImproves) {
  CurriculumConfig cc;
  cc.ladder = {20, 40, 100};
  cc.n_period = 3;
  cc.t_period = 2;
  Script script{{5, 4, 3, 3, /*re-baseline*/ 9, 10, 10, 10}};
  std::vector<int> entered;
  auto hooks = hooks_for(script);
  hooks.on_stage_enter = [&](int s) { entered.push_back(s); };
  const auto r = curriculum_train(Counter{}, cc, hooks);

  const std::vector<CurriculumTraceRow> expected = {
      row(0, 1, 2, 20, 40, 5, 5, true),    row(0, 2, 4, 20, 40, 4, 4, true),
      row(0, 3, 6, 20, 40, 3, 3, true),    row(0, 4, 8, 20, 40, 3, 3, false),
      row(1, 0, 8, 40, 100, 9, 9, false),  row(1, 1, 10, 40, 100, 10, 9, false),
      row(1, 2, 12, 40, 100, 10, 9, false), row(1, 3, 14, 40, 100, 10, 9, false),
  };
  EXPECT_EQ(r.trace, expected);
  EXPECT_EQ(r.exit, CurriculumExit::Stopped);
  EXPECT_EQ(r.best_stage, 0);
  EXPECT_EQ(r.best.epochs, 6);  // snapshot after stage 0, period 3
  EXPECT_EQ(r.total_epochs, 14);
  EXPECT_EQ(r.stage_epochs, (std::vector<int>{8, 6}));
  EXPECT_EQ(r.iterations_to_best(cc), 8 * 20);
  EXPECT_EQ(entered, std::vector<int>{1});
  EXPECT_TRUE(script.values.empty());
  EXPECT_EQ(script.asked_horizons, (std::vector<int>{40, 40, 40, 40, 100, 100, 100, 100}));
}

TEST(Curriculum, StrictlyDecreasingOracleExhaustsTheLadder) {
  CurriculumConfig cc;
  cc.ladder = {10, 30};
  cc.n_period = 3;
  cc.t_period = 1;
  cc.max_periods = 5;
  Script script;
  for (int k = 0; k < 100; ++k) script.values.push_back(100.0 - k);
  const auto r = curriculum_train(Counter{}, cc, hooks_for(script));
  EXPECT_EQ(r.exit, CurriculumExit::LadderExhausted);
  // Five periods, one re-baseline, five periods.
  ASSERT_EQ(r.trace.size(), 11u);
  EXPECT_EQ(r.best_stage, 1);
  EXPECT_EQ(r.best.epochs, 10);
  EXPECT_EQ(r.best_loss, 90.0);
  EXPECT_EQ(r.trace.back().l_val, 90.0);
  EXPECT_EQ(r.trace[5].period, 0);
  EXPECT_EQ(r.trace[5].n_valid, 90);  // round(30 * 30 / 10)
  for (const auto& t : r.trace) {
    if (t.period > 0) {
      EXPECT_TRUE(t.improved);
    }
  }
}

// N_period = 1: the single improving period forces one more, which ties.
// The next stage's re-baseline is 2 and its only period scores 5.
TEST(Curriculum, SinglePeriodStageStopsOnFirstNonImprovingStage) {
  CurriculumConfig cc;
  cc.ladder = {5, 10, 20};
  cc.n_period = 1;
  cc.t_period = 3;
  Script script{{3, 3, 2, 5}};
  const auto r = curriculum_train(Counter{}, cc, hooks_for(script));
  const std::vector<CurriculumTraceRow> expected = {
      row(0, 1, 3, 5, 10, 3, 3, true),
      row(0, 2, 6, 5, 10, 3, 3, false),
      row(1, 0, 6, 10, 20, 2, 2, false),
      row(1, 1, 9, 10, 20, 5, 2, false),
  };
  EXPECT_EQ(r.trace, expected);
  EXPECT_EQ(r.exit, CurriculumExit::Stopped);
  EXPECT_EQ(r.best_stage, 0);
  EXPECT_EQ(r.best.epochs, 3);
  EXPECT_EQ(r.best_loss, 2.0);
}

TEST(Curriculum, FirstStageWithoutImprovementReturnsInitialModel) {
  CurriculumConfig cc;
  cc.ladder = {5, 10};
  cc.n_period = 2;
  cc.t_period = 1;
  Script script{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}};
  const Counter start{0, {}};
  const auto r = curriculum_train(start, cc, hooks_for(script));
  EXPECT_EQ(r.best, start);
  EXPECT_EQ(r.best_stage, -1);
  EXPECT_EQ(r.iterations_to_best(cc), 0);
}

TEST(Curriculum, StageRestartsFromBestSnapshot) {
  CurriculumConfig cc;
  cc.ladder = {5, 10, 20};
  cc.n_period = 2;
  cc.t_period = 1;
  // Stage 0 improves once and then worsens; stage 1 resumes from the
  // period-1 model rather than the period-2 one.
  Script script{{4, 6, /*re-baseline*/ 7, 8, 9}};
  std::vector<int> epochs_seen;
  auto hooks = hooks_for(script);
  hooks.train_epoch = [&](Counter& m, const EpochContext& ctx) {
    epochs_seen.push_back(m.epochs);
    ++m.epochs;
    m.horizons.push_back(ctx.n_train);
  };
  const auto r = curriculum_train(Counter{}, cc, hooks);
  EXPECT_EQ(epochs_seen, (std::vector<int>{0, 1, 1, 2}));
  EXPECT_EQ(r.best.epochs, 1);
  EXPECT_EQ(r.trace.size(), 5u);
}

TEST(Curriculum, MissingHooksAreRejected) {
  EXPECT_THROW(curriculum_train(Counter{}, CurriculumConfig{}, CurriculumHooks<Counter>{}), std::invalid_argument);
}

struct RandomOutcome {
  CurriculumResult<Counter> result;
  std::vector<EpochContext> contexts;
};

RandomOutcome random_run(std::uint64_t seed, const CurriculumConfig& cc) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  RandomOutcome out;
  CurriculumHooks<Counter> h;
  h.train_epoch = [&](Counter& m, const EpochContext& ctx) {
    ++m.epochs;
    m.stamp = ctx.epoch + 1;
    out.contexts.push_back(ctx);
  };
  // Coarse values so ties actually happen.
  h.validate = [&](const Counter&, int) { return std::floor(u(rng)); };
  out.result = curriculum_train(Counter{}, cc, h);
  return out;
}

TEST(CurriculumProperty, SchedulerInvariantsOnRandomOracles) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    CurriculumConfig cc;
    cc.ladder = {2, 4, 8, 16, 32};
    cc.n_period = 1 + static_cast<int>(seed % 3);
    cc.t_period = 1 + static_cast<int>(seed % 4);
    cc.max_periods = 8;
    const auto a = random_run(seed, cc);
    const auto b = random_run(seed, cc);
    const auto& r = a.result;

    // Deterministic in (config, scripts).
    EXPECT_EQ(r.trace, b.result.trace);
    EXPECT_EQ(r.best, b.result.best);

    // Horizon never decreases.
    for (std::size_t k = 1; k < a.contexts.size(); ++k) {
      EXPECT_GE(a.contexts[k].n_train, a.contexts[k - 1].n_train);
      EXPECT_EQ(a.contexts[k].epoch, a.contexts[k - 1].epoch + 1);
    }

    // Every entered stage runs at least n_period periods.
    std::vector<int> periods(cc.ladder.size(), 0);
    for (const auto& t : r.trace) {
      if (t.period > 0) ++periods[static_cast<std::size_t>(t.stage)];
    }
    const int last_stage = r.trace.back().stage;
    for (int s = 0; s <= last_stage; ++s) EXPECT_GE(periods[static_cast<std::size_t>(s)], cc.n_period);

    // L_min never increases within a stage and the best snapshot scored it.
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
      if (r.trace[k].stage == r.trace[k - 1].stage) EXPECT_LE(r.trace[k].l_min, r.trace[k - 1].l_min);
    }
    if (r.best_stage >= 0) {
      double lowest = std::numeric_limits<double>::infinity();
      int best_epoch = -1;
      for (const auto& t : r.trace) {
        if (t.stage == r.best_stage && t.period > 0 && t.l_val < lowest && t.improved) {
          lowest = t.l_val;
          best_epoch = t.epoch;
        }
        if (t.stage == r.best_stage) EXPECT_GE(t.l_val, t.l_min);
      }
      EXPECT_EQ(r.best.stamp, best_epoch);
    }
  }
}

}  // namespace
