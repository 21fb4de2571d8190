#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "reachlab/config.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/harness.hpp"
#include "reachlab/plotdata.hpp"
#include "reachlab/trainer.hpp"

namespace reachlab {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.training.epochs = 2;
  cfg.training.updates_per_epoch = 5;
  cfg.training.eval_episodes = 2;
  cfg.training.probe_states = 16;
  cfg.training.variance_map_h = 2.0;
  cfg.rollouts.per_epoch = 40;
  cfg.agent.hidden = {16, 16};
  cfg.agent.batch_size = 32;
  cfg.oracle.h = 0.5;
  cfg.oracle.tol = 1e-4;
  cfg.output_dir = dir.string();
  return cfg;
}

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("reachlab_harness_" +
             std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(HarnessTest, RunWritesArtifacts) {
  const RunResult r = run(tiny(root_ / "a"));
  ASSERT_TRUE(r.ok()) << r.error_message;
  EXPECT_EQ(r.epochs_completed, 2);
  for (const char* f : {"config.json", "metrics.csv", "timing.csv", "summary.json",
                        "checkpoint.json", "checkpoint.bin", "rollouts.csv",
                        "variance_map.csv", "oracle_values.csv"}) {
    EXPECT_TRUE(fs::exists(root_ / "a" / f)) << f;
  }
  const auto metrics = read_metrics_csv(root_ / "a" / "metrics.csv");
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_EQ(metrics[1].epoch, 2);
  EXPECT_EQ(metrics[1].updates, 5);
  const auto summary = nlohmann::json::parse(slurp(root_ / "a" / "summary.json"));
  EXPECT_EQ(summary["status"], "ok");
  EXPECT_EQ(summary["epochs_completed"], 2);
  EXPECT_NEAR(summary["oracle"]["max_value"].get<double>(), 100.0, 1.0);
  EXPECT_EQ(load_config(root_ / "a" / "config.json"), tiny(root_ / "a"));
}

TEST_F(HarnessTest, SameSeedGivesIdenticalMetrics) {
  ASSERT_TRUE(run(tiny(root_ / "a")).ok());
  ASSERT_TRUE(run(tiny(root_ / "b")).ok());
  EXPECT_EQ(slurp(root_ / "a" / "metrics.csv"), slurp(root_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(root_ / "a" / "checkpoint.bin"), slurp(root_ / "b" / "checkpoint.bin"));
  ExperimentConfig other = tiny(root_ / "c");
  other.seed = 1;
  ASSERT_TRUE(run(other).ok());
  EXPECT_NE(slurp(root_ / "a" / "metrics.csv"), slurp(root_ / "c" / "metrics.csv"));
}

TEST_F(HarnessTest, ZeroUpdatesLeaveParametersUnchanged) {
  ExperimentConfig cfg = tiny(root_ / "a");
  cfg.training.updates_per_epoch = 0;
  Experiment exp(cfg);
  const Vec<float> policy = exp.agent().policy().net().params();
  const Mat<float> critics = exp.agent().q().live().params();
  const MetricsRecord m = exp.train_epoch(1);
  EXPECT_EQ(m.updates, 0);
  EXPECT_EQ(m.epoch, 1);
  EXPECT_TRUE(std::isfinite(m.eval_return));
  EXPECT_EQ(exp.agent().policy().net().params(), policy);
  EXPECT_EQ(exp.agent().q().live().params(), critics);
}

TEST_F(HarnessTest, OraclePatchRunsRecordPatchedFraction) {
  ExperimentConfig cfg = tiny(root_ / "p");
  cfg.agent.mode = TargetModeTag::kOraclePatch;
  const RunResult r = run(cfg);
  ASSERT_TRUE(r.ok()) << r.error_message;
  for (const MetricsRecord& m : r.metrics) {
    EXPECT_GE(m.patched_fraction, 0.0);
    EXPECT_LE(m.patched_fraction, 1.0);
  }
}

TEST_F(HarnessTest, ConfigErrorsPropagate) {
  ExperimentConfig cfg = tiny(root_ / "a");
  cfg.agent.critics = 1;
  EXPECT_THROW(run(cfg), ConfigError);
}

TEST_F(HarnessTest, SweepLaysOutOneDirectoryPerPoint) {
  ExperimentConfig cfg = tiny(root_ / "s");
  cfg.training.epochs = 1;
  const auto points = sweep(cfg, "agent.tau", {"0.005", "0.01"}, {0, 1}, 2);
  ASSERT_EQ(points.size(), 4u);
  for (const SweepPoint& p : points) {
    EXPECT_TRUE(p.result.ok());
    EXPECT_TRUE(fs::exists(root_ / "s" / ("agent.tau=" + p.value) /
                           ("seed=" + std::to_string(p.seed)) / "summary.json"));
  }
  const std::string csv = slurp(root_ / "s" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(HarnessTest, SweepRejectsBadAxes) {
  const ExperimentConfig cfg = tiny(root_ / "s");
  EXPECT_THROW(sweep(cfg, "seed", {"1"}, {0}), ConfigError);
  EXPECT_THROW(sweep(cfg, "agent.nope", {"1"}, {0}), ConfigError);
  EXPECT_THROW(sweep(cfg, "agent", {"1"}, {0}), ConfigError);
}

TEST_F(HarnessTest, PlotDataForEveryFigure) {
  ASSERT_TRUE(run(tiny(root_ / "a")).ok());
  for (const std::string& id : plot_ids()) {
    const fs::path p = emit_plotdata(root_ / "a", id, root_ / "plots");
    ASSERT_TRUE(fs::exists(p)) << id;
    const std::string text = slurp(p);
    EXPECT_GE(std::count(text.begin(), text.end(), '\n'), 2) << id;
  }
  const std::string q_growth = slurp(root_ / "plots" / "q_growth.csv");
  EXPECT_EQ(q_growth.substr(0, q_growth.find('\n')), "epoch,mean_q,max_q,oracle_max_value");
  EXPECT_THROW(emit_plotdata(root_ / "a", "no_such_plot", root_ / "plots"), ConfigError);
}

TEST_F(HarnessTest, TimingBenchReportsRatios) {
  ExperimentConfig cfg = tiny(root_ / "t");
  const auto rows = timing_bench(cfg, {4}, 2, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].critics, 2);
  EXPECT_DOUBLE_EQ(rows[0].ratio, 1.0);
  EXPECT_EQ(rows[1].critics, 4);
  EXPECT_GT(rows[1].median_seconds, 0.0);
  EXPECT_EQ(rows[1].samples.size(), 2u);
}

TEST(EvaluatePolicy, HorizonStepsSummed) {
  EnvSpec env;
  env.horizon = 3;
  const std::vector<State2> starts{{5, 5}};
  const EvalResult r = evaluate_policy(env, starts, [](State2) { return Action2{0, 0}; });
  EXPECT_NEAR(r.mean_return, 3 * env.reward({5, 5}), 1e-12);
}

TEST(UniformDataset, InsideBoxWithTrueSuccessors) {
  EnvSpec env;
  Rng rng(1);
  const Box2 box = reach_boxes(env).at(env.rollout_length);
  for (const Transition& t : uniform_dataset(env, box, 500, rng)) {
    EXPECT_TRUE(box.contains(t.s));
    EXPECT_EQ(t.s_next.x, t.s.x + t.a.dx);
    EXPECT_EQ(t.r, env.reward(t.s_next));
  }
}

}  // namespace
}  // namespace reachlab
