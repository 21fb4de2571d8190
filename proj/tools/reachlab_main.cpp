// reachlab: command-line front end for training runs, sweeps, timing and audits.
//
//   reachlab run    [--config FILE] [--agent.eta=10 ...]
//   reachlab sweep  --axis agent.eta --values 1,10,100 --seeds 0,1,2,3 [--threads 4]
//   reachlab bench  --critics 2,10,100
//   reachlab emit-plotdata --run DIR --figure q_curve [--out DIR]
//   reachlab audit  --run DIR
//
// Any config field can be overridden by its dotted path. Failures print one
// JSON object on stderr and exit nonzero.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "reachlab/analysis.hpp"
#include "reachlab/checkpoint.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/harness.hpp"
#include "reachlab/plotdata.hpp"
#include "reachlab/trainer.hpp"

namespace {

using nlohmann::json;
using namespace reachlab;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

// "--a.b=v" and "--a.b v" pairs left over after CLI11 parsing.
std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) {
      bad.push_back("unexpected argument '" + arg + "'");
      continue;
    }
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      bad.push_back(body + ": missing value");
    }
  }
  if (!bad.empty()) throw ConfigError(bad);
  return out;
}

template <typename T>
std::vector<T> split_list(const std::string& text) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    if (!item.empty()) {
      if constexpr (std::is_same_v<T, std::string>) {
        out.push_back(item);
      } else {
        out.push_back(static_cast<T>(std::stoll(item)));
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int report_error(const std::exception& e) {
  json j;
  int code = kExitFailure;
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
    j["error"] = ce->kind();
    j["fields"] = ce->fields();
    code = kExitConfig;
  } else if (const auto* re = dynamic_cast<const Error*>(&e)) {
    j["error"] = re->kind();
  } else {
    j["error"] = "internal";
  }
  j["message"] = e.what();
  std::cerr << j.dump() << "\n";
  return code;
}

int run_status_code(const RunResult& r) {
  if (r.status == "ok") return 0;
  json j{{"error", r.error_kind}, {"status", r.status}, {"message", r.error_message},
         {"epochs_completed", r.epochs_completed}};
  std::cerr << j.dump() << "\n";
  return r.status == "diverged" ? kExitDiverged : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reachlab: edge-of-reach experiments on a 2D point environment"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config (JSON)");
    sub->add_flag("-q,--quiet", quiet, "no per-epoch progress");
    sub->allow_extras();
  };

  CLI::App* run_cmd = app.add_subcommand("run", "train one configuration");
  add_common(run_cmd);

  std::string axis;
  std::string values;
  std::string seeds = "0";
  int threads = 1;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "runs over values of one config field");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--axis", axis, "dotted config field")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seeds");
  sweep_cmd->add_option("--threads", threads, "concurrent runs")->check(CLI::PositiveNumber);

  std::string critics = "2,10,100";
  int updates = 20;
  int repeats = 5;
  CLI::App* bench_cmd = app.add_subcommand("bench", "per-update time against critic count");
  add_common(bench_cmd);
  bench_cmd->add_option("--critics", critics, "comma-separated critic counts");
  bench_cmd->add_option("--updates", updates, "updates per timed block");
  bench_cmd->add_option("--repeats", repeats, "timed blocks per count");

  std::string run_dir;
  std::string figure;
  std::string out_dir;
  CLI::App* plot_cmd = app.add_subcommand("emit-plotdata", "figure CSVs from a finished run");
  plot_cmd->add_option("--run", run_dir, "run directory")->required();
  plot_cmd->add_option("--figure", figure, "figure id, or 'all'")->required();
  plot_cmd->add_option("--out", out_dir, "output directory (default <run>/plotdata)");

  double eps_d = 0.05;
  double quantile = 0.05;
  int audit_rollouts = 200;
  int tabular_instances = 1000;
  CLI::App* audit_cmd = app.add_subcommand("audit", "condition and error-propagation audits");
  audit_cmd->add_option("--run", run_dir, "run directory")->required();
  audit_cmd->add_option("--eps-d", eps_d, "state-condition distance");
  audit_cmd->add_option("--quantile", quantile, "action-condition quantile");
  audit_cmd->add_option("--rollouts", audit_rollouts, "fresh rollouts to audit");
  audit_cmd->add_option("--tabular", tabular_instances, "random tabular instances");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load_base = [&](CLI::App* sub) {
      ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
      return with_overrides(cfg, parse_overrides(sub->remaining()));
    };
    RunOptions opts;
    if (!quiet) {
      opts.on_epoch = [](const MetricsRecord& m) {
        std::fprintf(stderr, "epoch %4d  return %8.3f  frac %6.3f  mean_q %10.3f\n", m.epoch,
                     m.eval_return, m.eval_fraction, m.mean_q);
      };
    }

    if (*run_cmd) {
      const ExperimentConfig cfg = load_base(run_cmd);
      const RunResult r = run(cfg, opts);
      std::cout << r.summary.dump(2) << "\n";
      return run_status_code(r);
    }
    if (*sweep_cmd) {
      const ExperimentConfig cfg = load_base(sweep_cmd);
      if (threads > 1) opts.on_epoch = nullptr;
      const auto points = sweep(cfg, axis, split_list<std::string>(values),
                                split_list<std::uint64_t>(seeds), threads, opts);
      json out = json::array();
      for (const auto& p : points) {
        out.push_back({{"value", p.value}, {"seed", p.seed}, {"summary", p.result.summary}});
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*bench_cmd) {
      const ExperimentConfig cfg = load_base(bench_cmd);
      const auto rows = timing_bench(cfg, split_list<int>(critics), updates, repeats);
      std::cout << "critics,median_seconds,ratio\n";
      for (const auto& r : rows) {
        std::cout << r.critics << "," << r.median_seconds << "," << r.ratio << "\n";
      }
      return 0;
    }
    if (*plot_cmd) {
      const std::string out = out_dir.empty() ? run_dir + "/plotdata" : out_dir;
      const std::vector<std::string> ids =
          figure == "all" ? plot_ids() : std::vector<std::string>{figure};
      for (const auto& id : ids) std::cout << emit_plotdata(run_dir, id, out).string() << "\n";
      return 0;
    }
    if (*audit_cmd) {
      ExperimentConfig cfg = load_config(std::filesystem::path(run_dir) / "config.json");
      cfg.training.epochs = 0;
      Experiment exp(cfg);
      exp.agent().load(read_checkpoint(std::filesystem::path(run_dir) / "checkpoint"));
      Rng rng = make_stream(cfg.seed, "audit");
      std::vector<State2> pool;
      for (int i = 0; i < audit_rollouts; ++i) pool.push_back(sample_initial(rng, cfg.env));
      const TanhGaussianPolicy& pi = exp.agent().policy();
      const RolloutResult ro = collect_rollouts(
          exp.model(), cfg.penalty, [&pi](State2 s, Rng& r) { return pi.act(s, r); }, pool,
          cfg.env.rollout_length, audit_rollouts, rng);
      const ConditionReport cond =
          condition_audit(ro.transitions, eps_d, ActionAudit{&pi, quantile, &rng});
      std::size_t final_step = 0;
      for (const auto& t : ro.transitions) {
        final_step += t.step_index == cfg.env.rollout_length - 1;
      }

      int violated = 0;
      double worst_gap = 0.0;
      for (int i = 0; i < tabular_instances; ++i) {
        const ErrorInstance inst = random_error_instance(6, 3, 4, cfg.env.gamma, rng);
        const ErrorReport rep = propagate_error_check(inst.mdp, inst.policy, inst.rollout,
                                                      uniform(rng, -2.0, 2.0),
                                                      uniform(rng, 0.0, 0.5), &rng);
        violated += !rep.bound_holds;
        worst_gap = std::max(worst_gap, rep.max_exact_gap);
      }
      const json out{
          {"conditions",
           {{"transitions", cond.transitions},
            {"state_violations", cond.state_violations},
            {"state_violation_fraction", cond.state_violation_fraction},
            {"final_step_transitions", final_step},
            {"action_violations", cond.action_violations},
            {"action_violation_fraction", cond.action_violation_fraction},
            {"action_threshold", cond.action_threshold},
            {"eps_d", eps_d},
            {"quantile", quantile}}},
          {"error_propagation",
           {{"instances", tabular_instances}, {"bound_violations", violated},
            {"max_exact_gap", worst_gap}}},
          {"oracle_residual", bellman_residual(cfg.env, exp.oracle(), 9)}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return 0;
}
