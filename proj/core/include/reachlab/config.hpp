#ifndef REACHLAB_CONFIG_HPP_
#define REACHLAB_CONFIG_HPP_

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reachlab/agent.hpp"
#include "reachlab/dynamics.hpp"
#include "reachlab/env2d.hpp"

namespace reachlab {

struct ModelConfig {
  // true | learned | random | interpolated
  std::string variant = "true";
  // Endpoints of an interpolated model (true | learned | random).
  std::string base = "learned";
  std::string target = "true";
  double alpha = 0.0;
  bool sample_noise = false;
  // Size of the uniformly drawn true-dynamics dataset the ensemble is fitted on.
  int dataset_size = 20000;
  EnsembleTrainConfig ensemble;
  std::vector<int> random_hidden{64, 64};

  // Whether `kind` is the variant or one of the interpolation endpoints.
  bool uses(const std::string& kind) const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct RolloutConfig {
  int per_epoch = 2000;
  int retain_epochs = 5;
  double real_ratio = 0.0;
  int threads = 1;
  // Trajectories per epoch kept for the rollout trace plot data.
  int trace_trajectories = 8;
  friend bool operator==(const RolloutConfig&, const RolloutConfig&) = default;
};

struct TrainingConfig {
  int epochs = 400;
  int updates_per_epoch = 250;
  int eval_episodes = 10;
  int probe_states = 256;
  // 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  // Resolution of the end-of-run critic-disagreement map.
  double variance_map_h = 0.5;
  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct OracleConfig {
  double h = 0.25;
  double tol = 1e-6;
  double pad = 1.0;
  int lookahead_actions = 21;
  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

struct ExperimentConfig {
  EnvSpec env;
  ModelConfig model;
  PenaltyKind penalty;
  AgentConfig agent;
  RolloutConfig rollouts;
  TrainingConfig training;
  OracleConfig oracle;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";

  // Throws ConfigError listing every offending field.
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys, wrong types and invalid values are all reported
// together in one ConfigError. Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Sets the field at a dotted path (e.g. "agent.eta") in a config document.
// The value text is read as JSON when it parses, otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& dotted_path,
                    const std::string& value_text);
ExperimentConfig with_overrides(const ExperimentConfig& cfg,
                                const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace reachlab

#endif  // REACHLAB_CONFIG_HPP_
