#include "reachlab/metrics.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "reachlab/csv.hpp"
#include "reachlab/errors.hpp"

namespace reachlab {

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "epoch",       "eval_return", "eval_fraction", "mean_q",      "max_q",
      "critic_loss", "critic_mse",  "diversity",     "actor_loss",  "log_prob",
      "temperature", "model_reward", "true_reward",  "penalty",     "patched_fraction",
      "buffer_size", "aborted",     "updates"};
  return cols;
}

void write_metrics_header(std::ostream& os) {
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
}

void write_metrics_row(std::ostream& os, const MetricsRecord& r) {
  os << r.epoch << "," << fmt(r.eval_return) << "," << fmt(r.eval_fraction) << ","
     << fmt(r.mean_q) << "," << fmt(r.max_q) << "," << fmt(r.critic_loss) << ","
     << fmt(r.critic_mse) << "," << fmt(r.diversity) << "," << fmt(r.actor_loss) << ","
     << fmt(r.log_prob) << "," << fmt(r.temperature) << "," << fmt(r.model_reward) << ","
     << fmt(r.true_reward) << "," << fmt(r.penalty) << "," << fmt(r.patched_fraction) << ","
     << fmt(r.buffer_size) << "," << r.aborted << "," << r.updates << "\n";
}

void write_timing_header(std::ostream& os) {
  os << "epoch,updates,seconds_per_update,epoch_seconds\n";
}

void write_timing_row(std::ostream& os, const MetricsRecord& r) {
  os << r.epoch << "," << r.updates << "," << fmt(r.seconds_per_update) << ","
     << fmt(r.epoch_seconds) << "\n";
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<MetricsRecord> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::map<std::string, double> v;
    std::stringstream ss(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, ',')) {
      if (i >= header.size()) throw Error(path.string() + ": too many cells on row " + std::to_string(row));
      v[header[i++]] = std::stod(cell);
    }
    auto get = [&](const char* k) {
      auto it = v.find(k);
      return it == v.end() ? 0.0 : it->second;
    };
    MetricsRecord r;
    r.epoch = static_cast<int>(get("epoch"));
    r.eval_return = get("eval_return");
    r.eval_fraction = get("eval_fraction");
    r.mean_q = get("mean_q");
    r.max_q = get("max_q");
    r.critic_loss = get("critic_loss");
    r.critic_mse = get("critic_mse");
    r.diversity = get("diversity");
    r.actor_loss = get("actor_loss");
    r.log_prob = get("log_prob");
    r.temperature = get("temperature");
    r.model_reward = get("model_reward");
    r.true_reward = get("true_reward");
    r.penalty = get("penalty");
    r.patched_fraction = get("patched_fraction");
    r.buffer_size = get("buffer_size");
    r.aborted = static_cast<int>(get("aborted"));
    r.updates = static_cast<int>(get("updates"));
    out.push_back(r);
  }
  return out;
}

}  // namespace reachlab
