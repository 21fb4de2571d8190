#include "reachlab/plotdata.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "reachlab/agent.hpp"
#include "reachlab/checkpoint.hpp"
#include "reachlab/config.hpp"
#include "reachlab/csv.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/metrics.hpp"
#include "reachlab/value_grid.hpp"

namespace reachlab {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("missing run artifact " + p.string());
  return in;
}

double oracle_max(const fs::path& run_dir) {
  std::ifstream in(run_dir / "summary.json");
  if (!in) return std::nan("");
  const nlohmann::json s = nlohmann::json::parse(in);
  if (!s.contains("oracle")) return std::nan("");
  return s["oracle"].value("max_value", std::nan(""));
}

// Copies the body of a CSV under a new header, keeping selected columns.
void copy_columns(std::istream& in, std::ostream& out, const std::vector<std::string>& from,
                  const std::string& header) {
  out << header << "\n";
  std::string line;
  if (!std::getline(in, line)) return;
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::vector<std::size_t> idx;
  for (const auto& f : from) {
    auto it = std::find(cols.begin(), cols.end(), f);
    if (it == cols.end()) throw Error("column '" + f + "' missing from run artifact");
    idx.push_back(static_cast<std::size_t>(it - cols.begin()));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out << (i ? "," : "") << (idx[i] < cells.size() ? cells[idx[i]] : "");
    }
    out << "\n";
  }
}

}  // namespace

const std::vector<std::string>& plot_ids() {
  static const std::vector<std::string> ids = {"q_growth", "reward_field", "eval_curve", "q_curve",
                                               "critic_spread", "rollout_traces",  "policy"};
  return ids;
}

fs::path emit_plotdata(const fs::path& run_dir, const std::string& id, const fs::path& out_dir) {
  const auto& ids = plot_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
    std::string known;
    for (const auto& k : ids) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError({"figure: unknown id '" + id + "' (known: " + known + ")"});
  }
  const ExperimentConfig cfg = load_config(run_dir / "config.json");
  const std::string mode = target_mode_name(cfg.agent.mode);
  fs::create_directories(out_dir);
  const fs::path path = out_dir / (id + ".csv");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());

  if (id == "q_growth" || id == "eval_curve" || id == "q_curve") {
    const auto metrics = read_metrics_csv(run_dir / "metrics.csv");
    if (id == "q_growth") {
      const double vmax = oracle_max(run_dir);
      out << "epoch,mean_q,max_q,oracle_max_value\n";
      for (const auto& m : metrics) {
        out << m.epoch << "," << fmt(m.mean_q) << "," << fmt(m.max_q) << "," << fmt(vmax)
            << "\n";
      }
    } else if (id == "eval_curve") {
      out << "epoch,eval_return,eval_fraction,mode\n";
      for (const auto& m : metrics) {
        out << m.epoch << "," << fmt(m.eval_return) << "," << fmt(m.eval_fraction) << ","
            << mode << "\n";
      }
    } else {
      out << "epoch,mean_q,mode\n";
      for (const auto& m : metrics) out << m.epoch << "," << fmt(m.mean_q) << "," << mode << "\n";
    }
  } else if (id == "reward_field") {
    const Box2 box = default_oracle_box(cfg.env, cfg.oracle.pad);
    const double h = cfg.oracle.h;
    out << "x,y,reward\n";
    const int nx = static_cast<int>(std::floor((box.x_hi - box.x_lo) / h + 1e-9)) + 1;
    const int ny = static_cast<int>(std::floor((box.y_hi - box.y_lo) / h + 1e-9)) + 1;
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const State2 s{box.x_lo + i * h, box.y_lo + j * h};
        out << fmt(s.x) << "," << fmt(s.y) << "," << fmt(cfg.env.reward(s)) << "\n";
      }
    }
  } else if (id == "critic_spread") {
    auto in = open_in(run_dir / "variance_map.csv");
    copy_columns(in, out, {"x", "y", "ensemble_std", "reach_label"},
                 "x,y,ensemble_std,reach_label");
  } else if (id == "rollout_traces") {
    auto in = open_in(run_dir / "rollouts.csv");
    copy_columns(in, out, {"epoch", "trajectory", "t", "x", "y"}, "epoch,traj,t,x,y");
  } else {
    out << "x,y,a_x,a_y,reach_label\n";
    const Checkpoint ck = read_checkpoint(run_dir / "checkpoint");
    if (ck.attributes.value("epochs_completed", 0) > 0) {
      ExperimentConfig c = cfg;
      c.agent.gamma = c.env.gamma;
      Rng rng = make_stream(c.seed, "agent");
      SacAgent agent(c.agent, c.env, rng);
      agent.load(ck);
      const ReachSpec reach = reach_boxes(c.env);
      const Box2 box = default_oracle_box(c.env, c.oracle.pad);
      const double h = c.training.variance_map_h;
      const int nx = static_cast<int>(std::floor((box.x_hi - box.x_lo) / h + 1e-9)) + 1;
      const int ny = static_cast<int>(std::floor((box.y_hi - box.y_lo) / h + 1e-9)) + 1;
      for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
          const State2 s{box.x_lo + i * h, box.y_lo + j * h};
          const Action2 a = agent.policy().act_deterministic(s);
          out << fmt(s.x) << "," << fmt(s.y) << "," << fmt(a.dx) << "," << fmt(a.dy) << ","
              << reach.label(s) << "\n";
        }
      }
    }
  }
  return path;
}

}  // namespace reachlab
