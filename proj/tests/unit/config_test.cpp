#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "reachlab/config.hpp"
#include "reachlab/errors.hpp"

namespace reachlab {
namespace {

namespace fs = std::filesystem;

TEST(ExperimentConfig, DefaultsValidate) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.env.rollout_length, 10);
  EXPECT_EQ(cfg.env.horizon, 30);
  EXPECT_DOUBLE_EQ(cfg.env.gamma, 0.99);
  EXPECT_EQ(cfg.agent.batch_size, 256);
  EXPECT_DOUBLE_EQ(cfg.agent.tau, 0.005);
  EXPECT_EQ(cfg.rollouts.retain_epochs, 5);
  EXPECT_EQ(cfg.training.updates_per_epoch, 250);
}

TEST(ExperimentConfig, JsonRoundTripIsIdentity) {
  ExperimentConfig cfg;
  cfg.seed = 77;
  cfg.agent.mode = TargetModeTag::kRavl;
  cfg.agent.critics = 10;
  cfg.agent.eta = 10.0;
  cfg.model.variant = "interpolated";
  cfg.model.base = "learned";
  cfg.model.target = "random";
  cfg.model.alpha = 0.25;
  cfg.penalty = {PenaltyTag::kMobile, 1.5};
  cfg.env.reward = RewardField({Bump{{1, 2}, 0.5, 2.0}, Bump{{-3, 0}, -1.0, 1.0}});
  cfg.output_dir = "runs/x";
  const nlohmann::json j = to_json(cfg);
  EXPECT_EQ(config_from_json(j), cfg);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(ExperimentConfig, FileRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "reachlab_config_test";
  fs::create_directories(dir);
  ExperimentConfig cfg;
  cfg.training.epochs = 3;
  save_config(dir / "c.json", cfg);
  EXPECT_EQ(load_config(dir / "c.json"), cfg);
  fs::remove_all(dir);
}

TEST(ExperimentConfig, MissingKeysKeepDefaults) {
  const ExperimentConfig cfg = config_from_json(nlohmann::json::parse(R"({"seed": 5})"));
  ExperimentConfig expected;
  expected.seed = 5;
  EXPECT_EQ(cfg, expected);
}

TEST(ExperimentConfig, UnknownAndMistypedKeysReportedTogether) {
  const auto j = nlohmann::json::parse(
      R"({"sed": 1, "agent": {"critics": "ten", "etaa": 1}, "training": {"epochs": -1}})");
  try {
    config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.fields().size(), 3u);
  }
}

TEST(ExperimentConfig, ValidationCatchesCrossFieldErrors) {
  ExperimentConfig cfg;
  cfg.agent.mode = TargetModeTag::kBase;
  cfg.agent.eta = 5.0;
  cfg.model.variant = "interpolated";
  cfg.model.base = "true";
  cfg.model.target = "true";
  cfg.rollouts.real_ratio = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ExperimentConfig, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Overrides, DottedPathsAndJsonValues) {
  nlohmann::json doc = to_json(ExperimentConfig{});
  apply_override(doc, "agent.eta", "10");
  apply_override(doc, "agent.mode", "ravl");
  apply_override(doc, "agent.hidden", "[32, 32]");
  EXPECT_EQ(doc["agent"]["eta"], 10);
  EXPECT_EQ(doc["agent"]["mode"], "ravl");
  EXPECT_EQ(doc["agent"]["hidden"].size(), 2u);
  const ExperimentConfig cfg =
      with_overrides(ExperimentConfig{}, {{"agent.mode", "ravl"}, {"agent.critics", "10"},
                                          {"agent.eta", "1"}, {"seed", "4"}});
  EXPECT_EQ(cfg.agent.mode, TargetModeTag::kRavl);
  EXPECT_EQ(cfg.agent.critics, 10);
  EXPECT_EQ(cfg.seed, 4u);
}

TEST(Overrides, UnknownPathRejected) {
  EXPECT_THROW(with_overrides(ExperimentConfig{}, {{"agent.etaa", "1"}}), ConfigError);
  EXPECT_THROW(with_overrides(ExperimentConfig{}, {{"agent.critics", "1"}}), ConfigError);
}

}  // namespace
}  // namespace reachlab
