#include "reachlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "reachlab/analysis.hpp"
#include "reachlab/checkpoint.hpp"
#include "reachlab/csv.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/trainer.hpp"

namespace reachlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_trace_header(std::ostream& os) { os << "epoch,trajectory,t,x,y\n"; }

// Each traced trajectory as its k + 1 visited states.
void write_trace(std::ostream& os, const std::vector<Transition>& trace) {
  for (const Transition& t : trace) {
    os << t.epoch << "," << t.trajectory << "," << t.step_index << "," << fmt(t.s.x) << ","
       << fmt(t.s.y) << "\n";
    const bool last = &t == &trace.back() || (&t + 1)->trajectory != t.trajectory;
    if (last) {
      os << t.epoch << "," << t.trajectory << "," << t.step_index + 1 << ","
         << fmt(t.s_next.x) << "," << fmt(t.s_next.y) << "\n";
    }
  }
}

json summarize(const ExperimentConfig& cfg, const RunResult& r, const Experiment* exp,
               const VarianceSummary* var) {
  json s;
  s["status"] = r.status;
  if (!r.error_message.empty()) {
    s["error"] = {{"kind", r.error_kind}, {"message", r.error_message}};
  }
  s["seed"] = cfg.seed;
  s["mode"] = target_mode_name(cfg.agent.mode);
  s["critics"] = cfg.agent.critics;
  s["eta"] = cfg.agent.eta;
  s["model"] = cfg.model.variant;
  s["epochs_requested"] = cfg.training.epochs;
  s["epochs_completed"] = r.epochs_completed;
  if (!exp) return s;

  const double max_v = exp->max_value();
  s["oracle"] = {{"max_value", max_v}, {"return", exp->oracle_return()}};
  const EvalResult ev = exp->evaluate();
  const ProbeStats ps = probe_q(exp->agent(), exp->probes());
  s["final"] = {{"eval_return", ev.mean_return},
                {"eval_fraction",
                 exp->oracle_return() != 0.0 ? ev.mean_return / exp->oracle_return() : 0.0},
                {"mean_q", finite_or_null(ps.mean_q)},
                {"max_q", finite_or_null(ps.max_q)}};
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> mean_q;
  double model_r = 0.0;
  double true_r = 0.0;
  double patched = 0.0;
  for (const MetricsRecord& m : r.metrics) {
    mean_q.push_back(m.mean_q);
    if (!(m.mean_q <= peak)) peak = m.mean_q;
    model_r += m.model_reward;
    true_r += m.true_reward;
    patched += m.patched_fraction;
  }
  const int crossing = first_crossing(mean_q, 10.0, max_v);
  s["peak_mean_q"] = r.metrics.empty() ? json(nullptr) : finite_or_null(peak);
  s["divergence_epoch"] = crossing < 0 ? json(nullptr) : json(r.metrics[crossing].epoch);
  if (!r.metrics.empty()) {
    const double n = static_cast<double>(r.metrics.size());
    s["rollout_reward"] = {{"model_mean", model_r / n},
                           {"true_mean", true_r / n},
                           {"ratio", true_r != 0.0 ? model_r / true_r : 0.0}};
    s["patched_fraction_mean"] = patched / n;
  }
  if (var) {
    s["critic_spread"] = {{"within_mean", var->within_mean},
                          {"edge_mean", var->edge_mean},
                          {"beyond_mean", var->beyond_mean},
                          {"edge_to_within", finite_or_null(var->ratio)}};
  }
  return s;
}

}  // namespace

RunResult run(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  ExperimentConfig cfg = cfg_in;
  cfg.agent.gamma = cfg.env.gamma;
  cfg.validate();
  RunResult r;
  r.dir = cfg.output_dir;

  std::ofstream metrics_out;
  std::ofstream timing_out;
  std::ofstream trace_out;
  if (opts.write_artifacts) {
    fs::create_directories(r.dir);
    save_config(r.dir / "config.json", cfg);
    metrics_out = open_out(r.dir / "metrics.csv");
    timing_out = open_out(r.dir / "timing.csv");
    trace_out = open_out(r.dir / "rollouts.csv");
    write_metrics_header(metrics_out);
    write_timing_header(timing_out);
    write_trace_header(trace_out);
  }

  std::unique_ptr<Experiment> exp;
  try {
    exp = std::make_unique<Experiment>(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    r.status = "failed";
    r.error_kind = dynamic_cast<const Error*>(&e) ? dynamic_cast<const Error&>(e).kind() : "error";
    r.error_message = e.what();
  }

  if (exp) {
    for (int epoch = 1; epoch <= cfg.training.epochs; ++epoch) {
      MetricsRecord rec;
      try {
        rec = exp->train_epoch(epoch);
      } catch (const Error& e) {
        const bool numeric = dynamic_cast<const NonFiniteError*>(&e) ||
                             dynamic_cast<const BoundViolation*>(&e);
        r.status = numeric ? "diverged" : "failed";
        r.error_kind = e.kind();
        r.error_message = e.what();
        break;
      }
      r.metrics.push_back(rec);
      r.epochs_completed = epoch;
      if (opts.write_artifacts) {
        write_metrics_row(metrics_out, rec);
        write_timing_row(timing_out, rec);
        write_trace(trace_out, exp->trace());
        metrics_out.flush();
        if (cfg.training.checkpoint_every > 0 && epoch % cfg.training.checkpoint_every == 0) {
          Checkpoint ck;
          exp->agent().save(ck);
          write_checkpoint(r.dir / "checkpoints" / ("epoch" + std::to_string(epoch)), ck);
        }
      }
      if (opts.on_epoch) opts.on_epoch(rec);
    }
  }

  VarianceSummary var;
  bool have_var = false;
  if (exp) {
    try {
      const auto cells = ensemble_variance_map(
          exp->agent().q(), exp->agent().policy(),
          default_oracle_box(cfg.env, cfg.oracle.pad), cfg.training.variance_map_h,
          exp->reach());
      var = summarize_variance(cells);
      have_var = true;
      if (opts.write_artifacts) {
        auto out = open_out(r.dir / "variance_map.csv");
        write_variance_csv(out, cells);
      }
    } catch (const Error&) {
    }
    if (opts.write_artifacts) {
      Checkpoint ck;
      exp->agent().save(ck);
      ck.attributes["epochs_completed"] = r.epochs_completed;
      write_checkpoint(r.dir / "checkpoint", ck);
      auto out = open_out(r.dir / "oracle_values.csv");
      exp->oracle().write_csv(out);
    }
  }
  try {
    r.summary = summarize(cfg, r, exp.get(), have_var ? &var : nullptr);
  } catch (const Error& e) {
    r.summary = summarize(cfg, r, nullptr, nullptr);
    r.summary["summary_error"] = e.what();
  }
  if (opts.write_artifacts) {
    auto out = open_out(r.dir / "summary.json");
    out << r.summary.dump(2) << "\n";
  }
  return r;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& axis,
                              const std::vector<std::string>& values,
                              const std::vector<std::uint64_t>& seeds, int threads,
                              const RunOptions& opts) {
  if (values.empty()) throw ConfigError({"sweep.values: need at least one value"});
  if (seeds.empty()) throw ConfigError({"sweep.seeds: need at least one seed"});
  if (axis == "seed" || axis == "output_dir") {
    throw ConfigError({"sweep.axis: '" + axis + "' cannot be swept"});
  }
  // Reject axes that are not config fields before launching anything.
  {
    json doc = to_json(base);
    const json* node = &doc;
    std::size_t start = 0;
    bool found = true;
    while (found) {
      const std::size_t dot = axis.find('.', start);
      const std::string key = axis.substr(start, dot - start);
      if (!node->is_object() || !node->contains(key)) {
        found = false;
        break;
      }
      node = &(*node)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (!found || node->is_object()) {
      throw ConfigError({"sweep.axis: '" + axis + "' is not a config field"});
    }
  }

  std::vector<SweepPoint> points;
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = with_overrides(base, {{axis, v}});
      c.seed = seed;
      c.output_dir = (fs::path(base.output_dir) / (axis + "=" + v) /
                      ("seed=" + std::to_string(seed)))
                         .string();
      configs.push_back(c);
      points.push_back({v, seed, {}});
    }
  }

  std::mutex mu;
  std::size_t next = 0;
  std::vector<std::exception_ptr> errors(points.size());
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= points.size()) return;
        i = next++;
      }
      try {
        points[i].result = run(configs[i], opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(points.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  if (opts.write_artifacts) {
    fs::create_directories(base.output_dir);
    auto out = open_out(fs::path(base.output_dir) / "sweep.csv");
    out << "axis,value,seed,status,epochs_completed,final_eval_return,final_eval_fraction,"
           "final_mean_q,peak_mean_q,divergence_epoch,max_value,oracle_return\n";
    for (const SweepPoint& p : points) {
      const json& s = p.result.summary;
      auto num = [&](const json& j) {
        return j.is_number() ? fmt(j.get<double>()) : std::string();
      };
      const json fin = s.value("final", json::object());
      const json orc = s.value("oracle", json::object());
      out << axis << "," << p.value << "," << p.seed << "," << p.result.status << ","
          << p.result.epochs_completed << "," << num(fin.value("eval_return", json()))
          << "," << num(fin.value("eval_fraction", json())) << ","
          << num(fin.value("mean_q", json())) << "," << num(s.value("peak_mean_q", json()))
          << "," << num(s.value("divergence_epoch", json())) << ","
          << num(orc.value("max_value", json())) << "," << num(orc.value("return", json()))
          << "\n";
    }
  }
  return points;
}

std::vector<TimingRow> timing_bench(const ExperimentConfig& base, std::vector<int> critics,
                                    int updates, int repeats) {
  if (updates < 1 || repeats < 1) {
    throw ConfigError({"bench: updates and repeats must be >= 1"});
  }
  if (std::find(critics.begin(), critics.end(), 2) == critics.end()) {
    critics.insert(critics.begin(), 2);
  }
  const EnvSpec& env = base.env;
  Rng data_rng = make_stream(base.seed, "bench-data");
  const ReachSpec reach = reach_boxes(env);
  const std::vector<Transition> data =
      uniform_dataset(env, reach.at(env.rollout_length), 20000, data_rng);
  ReplayBuffer buffer(data.size(), 1);
  buffer.add(0, data);
  ReplayBuffer empty_real;

  std::vector<TimingRow> rows;
  for (int n : critics) {
    AgentConfig ac = base.agent;
    ac.critics = n;
    ac.gamma = env.gamma;
    Rng rng = make_stream(base.seed, "bench-agent", static_cast<std::uint64_t>(n));
    SacAgent agent(ac, env, rng);
    std::vector<Batch> batches;
    for (int u = 0; u < updates; ++u) {
      batches.push_back(make_batch(mixed_batch(empty_real, buffer, 0.0, ac.batch_size, rng)));
    }
    agent.update(batches[0], rng);  // warm-up
    TimingRow row;
    row.critics = n;
    for (int rep = 0; rep < repeats; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (const Batch& b : batches) agent.update(b, rng);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.samples.push_back(secs / updates);
    }
    std::vector<double> sorted = row.samples;
    std::sort(sorted.begin(), sorted.end());
    row.median_seconds = sorted[sorted.size() / 2];
    rows.push_back(row);
  }
  double ref = 0.0;
  for (const TimingRow& r : rows) {
    if (r.critics == 2) ref = r.median_seconds;
  }
  for (TimingRow& r : rows) r.ratio = ref > 0.0 ? r.median_seconds / ref : 0.0;
  return rows;
}

}  // namespace reachlab
