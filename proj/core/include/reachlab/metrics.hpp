#ifndef REACHLAB_METRICS_HPP_
#define REACHLAB_METRICS_HPP_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace reachlab {

// One row per epoch. Every field except `seconds_per_update` is a pure
// function of config and seed and goes to metrics.csv; wall-clock goes to a
// separate timing.csv so metrics files stay byte-comparable across runs.
struct MetricsRecord {
  int epoch = 0;
  double eval_return = 0.0;
  double eval_fraction = 0.0;  // eval_return / oracle return
  double mean_q = 0.0;
  double max_q = 0.0;
  double critic_loss = 0.0;
  double critic_mse = 0.0;
  double diversity = 0.0;
  double actor_loss = 0.0;
  double log_prob = 0.0;
  double temperature = 0.0;
  double model_reward = 0.0;  // mean per-step model reward of this epoch's rollouts
  double true_reward = 0.0;   // true reward at the same (s, a)
  double penalty = 0.0;
  double patched_fraction = 0.0;
  double buffer_size = 0.0;
  int aborted = 0;
  int updates = 0;

  double seconds_per_update = 0.0;
  double epoch_seconds = 0.0;
};

const std::vector<std::string>& metrics_columns();
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRecord& r);
void write_timing_header(std::ostream& os);
void write_timing_row(std::ostream& os, const MetricsRecord& r);

// Parses a metrics.csv written by write_metrics_row (columns matched by name).
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace reachlab

#endif  // REACHLAB_METRICS_HPP_
