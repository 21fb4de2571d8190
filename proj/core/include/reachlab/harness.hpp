#ifndef REACHLAB_HARNESS_HPP_
#define REACHLAB_HARNESS_HPP_

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "reachlab/config.hpp"
#include "reachlab/metrics.hpp"

namespace reachlab {

struct RunOptions {
  bool write_artifacts = true;
  // Called after every epoch, e.g. for progress output.
  std::function<void(const MetricsRecord&)> on_epoch;
};

struct RunResult {
  // "ok", "diverged" (training hit a non-finite value) or "failed".
  std::string status = "ok";
  std::string error_kind;
  std::string error_message;
  int epochs_completed = 0;
  std::vector<MetricsRecord> metrics;
  nlohmann::json summary;
  std::filesystem::path dir;

  bool ok() const { return status == "ok"; }
};

// Runs the full training loop and writes into cfg.output_dir:
//   config.json, metrics.csv, timing.csv, summary.json, checkpoint.{json,bin},
//   rollouts.csv (traced trajectories), variance_map.csv, oracle_values.csv.
// Configuration errors propagate as ConfigError; failures during training are
// reported through the result and summary.json.
RunResult run(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct SweepPoint {
  std::string value;
  std::uint64_t seed = 0;
  RunResult result;
};

// One run per (value, seed), each in <output_dir>/<axis>=<value>/seed=<seed>,
// executed on up to `threads` workers. Writes <output_dir>/sweep.csv.
std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& axis,
                              const std::vector<std::string>& values,
                              const std::vector<std::uint64_t>& seeds, int threads = 1,
                              const RunOptions& opts = {});

struct TimingRow {
  int critics = 0;
  double median_seconds = 0.0;
  double ratio = 0.0;  // relative to N = 2
  std::vector<double> samples;
};

// Median wall-clock of one agent update for each critic count, measured over
// `repeats` blocks of `updates` updates on a fixed synthetic buffer.
std::vector<TimingRow> timing_bench(const ExperimentConfig& base, std::vector<int> critics,
                                    int updates = 20, int repeats = 5);

}  // namespace reachlab

#endif  // REACHLAB_HARNESS_HPP_
