#include "reachlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "reachlab/errors.hpp"

namespace reachlab {

using nlohmann::json;

namespace {

// Walks one JSON object, recording type errors and unknown keys by dotted path.
class Reader {
 public:
  Reader(const json* node, std::string path, std::vector<std::string>* errors)
      : node_(node), path_(std::move(path)), errors_(errors) {
    if (node_ && !node_->is_object()) {
      errors_->push_back(where() + ": expected an object");
      node_ = nullptr;
    }
  }

  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        bad(key, "expected a number");
      }
    }
  }
  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (v->is_number_integer() && v->get<long long>() >= INT32_MIN &&
          v->get<long long>() <= INT32_MAX) {
        out = v->get<int>();
      } else {
        bad(key, "expected an integer");
      }
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else {
        bad(key, "expected a non-negative integer");
      }
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        bad(key, "expected true or false");
      }
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        bad(key, "expected a string");
      }
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      bool ok = v->is_array();
      if (ok) {
        for (const auto& e : *v) ok = ok && e.is_number_integer();
      }
      if (ok) {
        out = v->get<std::vector<int>>();
      } else {
        bad(key, "expected an array of integers");
      }
    }
  }

  Reader child(const char* key) { return Reader(find(key), join(key), errors_); }
  const json* raw(const char* key) { return find(key); }
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Reports every key that was never looked up.
  void finish() {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!seen_.count(it.key())) errors_->push_back(join(it.key()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json* find(const char* key) {
    seen_.insert(key);
    if (!node_) return nullptr;
    auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }
  void bad(const char* key, const char* what) {
    errors_->push_back(join(key) + ": " + what);
  }

  const json* node_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> seen_;
};

json box_json(const Box2& b) {
  return {{"x_lo", b.x_lo}, {"x_hi", b.x_hi}, {"y_lo", b.y_lo}, {"y_hi", b.y_hi}};
}

void read_box(Reader r, Box2& b) {
  r.get("x_lo", b.x_lo);
  r.get("x_hi", b.x_hi);
  r.get("y_lo", b.y_lo);
  r.get("y_hi", b.y_hi);
  r.finish();
}

void read_bumps(const json* node, const std::string& path, std::vector<Bump>& out,
                std::vector<std::string>* errors) {
  if (!node) return;
  if (!node->is_array()) {
    errors->push_back(path + ": expected an array of bumps");
    return;
  }
  out.clear();
  for (std::size_t i = 0; i < node->size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    Reader r(&(*node)[i], p, errors);
    Bump b;
    if (const json* c = r.raw("center")) {
      if (c->is_array() && c->size() == 2 && (*c)[0].is_number() && (*c)[1].is_number()) {
        b.center = {(*c)[0].get<double>(), (*c)[1].get<double>()};
      } else {
        errors->push_back(p + ".center: expected [x, y]");
      }
    }
    r.get("amplitude", b.amplitude);
    r.get("width", b.width);
    r.finish();
    out.push_back(b);
  }
}

template <typename F>
void collect(std::vector<std::string>& bad, F&& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
}

bool known_model(const std::string& v) {
  return v == "true" || v == "learned" || v == "random";
}

}  // namespace

bool ModelConfig::uses(const std::string& kind) const {
  if (variant == kind) return true;
  return variant == "interpolated" && (base == kind || target == kind);
}

void ExperimentConfig::validate() const {
  std::vector<std::string> bad;
  collect(bad, [&] { env.validate(); });
  collect(bad, [&] {
    // Reward widths are checked when the field is built; rebuild to surface them.
    RewardField check(env.reward.bumps());
  });

  if (!known_model(model.variant) && model.variant != "interpolated") {
    bad.push_back("model.variant: expected true, learned, random or interpolated");
  }
  if (model.variant == "interpolated") {
    if (!known_model(model.base)) bad.push_back("model.base: expected true, learned or random");
    if (!known_model(model.target)) {
      bad.push_back("model.target: expected true, learned or random");
    }
    if (model.base == model.target) {
      bad.push_back("model.target: interpolation endpoints must be distinct variants");
    }
  }
  if (!(model.alpha >= 0.0 && model.alpha <= 1.0)) {
    bad.push_back("model.alpha: must lie in [0, 1]");
  }
  if (model.dataset_size < 1) bad.push_back("model.dataset_size: must be >= 1");
  if (model.uses("learned")) collect(bad, [&] { model.ensemble.validate(); });
  for (int w : model.random_hidden) {
    if (w < 1) {
      bad.push_back("model.random_hidden: widths must be positive");
      break;
    }
  }

  collect(bad, [&] { penalty.validate(); });
  if (penalty.tag != PenaltyTag::kNone && model.variant == "random") {
    bad.push_back("penalty.kind: a random model has no uncertainty estimate");
  }

  collect(bad, [&] { agent.validate(); });

  if (rollouts.per_epoch < 0) bad.push_back("rollouts.per_epoch: must be >= 0");
  if (rollouts.retain_epochs < 1) bad.push_back("rollouts.retain_epochs: must be >= 1");
  if (!(rollouts.real_ratio >= 0.0 && rollouts.real_ratio <= 1.0)) {
    bad.push_back("rollouts.real_ratio: must lie in [0, 1]");
  }
  if (rollouts.real_ratio < 1.0 && rollouts.per_epoch == 0 && training.updates_per_epoch > 0) {
    bad.push_back("rollouts.per_epoch: synthetic share of batches needs rollouts");
  }
  if (rollouts.threads < 1) bad.push_back("rollouts.threads: must be >= 1");
  if (rollouts.trace_trajectories < 0) {
    bad.push_back("rollouts.trace_trajectories: must be >= 0");
  }

  if (training.epochs < 0) bad.push_back("training.epochs: must be >= 0");
  if (training.updates_per_epoch < 0) bad.push_back("training.updates_per_epoch: must be >= 0");
  if (training.eval_episodes < 1) bad.push_back("training.eval_episodes: must be >= 1");
  if (training.probe_states < 1) bad.push_back("training.probe_states: must be >= 1");
  if (training.checkpoint_every < 0) bad.push_back("training.checkpoint_every: must be >= 0");
  if (!(training.variance_map_h > 0.0)) bad.push_back("training.variance_map_h: must be > 0");

  if (!(oracle.h > 0.0)) bad.push_back("oracle.h: must be > 0");
  if (!(oracle.tol > 0.0)) bad.push_back("oracle.tol: must be > 0");
  if (!(oracle.pad >= 0.0)) bad.push_back("oracle.pad: must be >= 0");
  if (oracle.lookahead_actions < 2) bad.push_back("oracle.lookahead_actions: must be >= 2");

  if (output_dir.empty()) bad.push_back("output_dir: must be nonempty");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

json to_json(const ExperimentConfig& c) {
  json bumps = json::array();
  for (const Bump& b : c.env.reward.bumps()) {
    bumps.push_back({{"center", {b.center.x, b.center.y}},
                     {"amplitude", b.amplitude},
                     {"width", b.width}});
  }
  const EnsembleTrainConfig& e = c.model.ensemble;
  return {
      {"env",
       {{"reward", {{"bumps", bumps}}},
        {"a_max", c.env.a_max},
        {"horizon", c.env.horizon},
        {"rollout_length", c.env.rollout_length},
        {"init_box", box_json(c.env.init_box)},
        {"gamma", c.env.gamma}}},
      {"model",
       {{"variant", c.model.variant},
        {"base", c.model.base},
        {"target", c.model.target},
        {"alpha", c.model.alpha},
        {"sample_noise", c.model.sample_noise},
        {"dataset_size", c.model.dataset_size},
        {"random_hidden", c.model.random_hidden},
        {"ensemble",
         {{"members", e.members},
          {"elites", e.elites},
          {"hidden", e.hidden},
          {"steps", e.steps},
          {"mean_warmup_steps", e.mean_warmup_steps},
          {"batch_size", e.batch_size},
          {"lr", e.lr},
          {"holdout_fraction", e.holdout_fraction},
          {"bootstrap", e.bootstrap},
          {"threads", e.threads}}}}},
      {"penalty", {{"kind", penalty_name(c.penalty.tag)}, {"weight", c.penalty.weight}}},
      {"agent",
       {{"mode", target_mode_name(c.agent.mode)},
        {"critics", c.agent.critics},
        {"eta", c.agent.eta},
        {"hidden", c.agent.hidden},
        {"actor_lr", c.agent.actor_lr},
        {"critic_lr", c.agent.critic_lr},
        {"temperature_lr", c.agent.temperature_lr},
        {"tau", c.agent.tau},
        {"auto_temperature", c.agent.auto_temperature},
        {"init_temperature", c.agent.init_temperature},
        {"target_entropy", c.agent.target_entropy},
        {"batch_size", c.agent.batch_size},
        {"state_scale", c.agent.state_scale}}},
      {"rollouts",
       {{"per_epoch", c.rollouts.per_epoch},
        {"retain_epochs", c.rollouts.retain_epochs},
        {"real_ratio", c.rollouts.real_ratio},
        {"threads", c.rollouts.threads},
        {"trace_trajectories", c.rollouts.trace_trajectories}}},
      {"training",
       {{"epochs", c.training.epochs},
        {"updates_per_epoch", c.training.updates_per_epoch},
        {"eval_episodes", c.training.eval_episodes},
        {"probe_states", c.training.probe_states},
        {"checkpoint_every", c.training.checkpoint_every},
        {"variance_map_h", c.training.variance_map_h}}},
      {"oracle",
       {{"h", c.oracle.h},
        {"tol", c.oracle.tol},
        {"pad", c.oracle.pad},
        {"lookahead_actions", c.oracle.lookahead_actions}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

ExperimentConfig config_from_json(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  Reader root(&j, "", &errors);

  {
    Reader env = root.child("env");
    if (const json* reward = env.raw("reward")) {
      Reader r(reward, "env.reward", &errors);
      std::vector<Bump> bumps = c.env.reward.bumps();
      read_bumps(r.raw("bumps"), "env.reward.bumps", bumps, &errors);
      r.finish();
      try {
        c.env.reward = RewardField(bumps);
      } catch (const ConfigError& e) {
        for (const auto& f : e.fields()) errors.push_back("env." + f);
      }
    }
    env.get("a_max", c.env.a_max);
    env.get("horizon", c.env.horizon);
    env.get("rollout_length", c.env.rollout_length);
    if (env.raw("init_box")) read_box(env.child("init_box"), c.env.init_box);
    env.get("gamma", c.env.gamma);
    env.finish();
  }
  {
    Reader m = root.child("model");
    m.get("variant", c.model.variant);
    m.get("base", c.model.base);
    m.get("target", c.model.target);
    m.get("alpha", c.model.alpha);
    m.get("sample_noise", c.model.sample_noise);
    m.get("dataset_size", c.model.dataset_size);
    m.get("random_hidden", c.model.random_hidden);
    Reader e = m.child("ensemble");
    EnsembleTrainConfig& ec = c.model.ensemble;
    e.get("members", ec.members);
    e.get("elites", ec.elites);
    e.get("hidden", ec.hidden);
    e.get("steps", ec.steps);
    e.get("mean_warmup_steps", ec.mean_warmup_steps);
    e.get("batch_size", ec.batch_size);
    e.get("lr", ec.lr);
    e.get("holdout_fraction", ec.holdout_fraction);
    e.get("bootstrap", ec.bootstrap);
    e.get("threads", ec.threads);
    e.finish();
    m.finish();
  }
  {
    Reader p = root.child("penalty");
    std::string kind = penalty_name(c.penalty.tag);
    p.get("kind", kind);
    try {
      c.penalty.tag = penalty_from_name(kind);
    } catch (const ConfigError& e) {
      errors.insert(errors.end(), e.fields().begin(), e.fields().end());
    }
    p.get("weight", c.penalty.weight);
    p.finish();
  }
  {
    Reader a = root.child("agent");
    std::string mode = target_mode_name(c.agent.mode);
    a.get("mode", mode);
    try {
      c.agent.mode = target_mode_from_name(mode);
    } catch (const ConfigError& e) {
      errors.insert(errors.end(), e.fields().begin(), e.fields().end());
    }
    a.get("critics", c.agent.critics);
    a.get("eta", c.agent.eta);
    a.get("hidden", c.agent.hidden);
    a.get("actor_lr", c.agent.actor_lr);
    a.get("critic_lr", c.agent.critic_lr);
    a.get("temperature_lr", c.agent.temperature_lr);
    a.get("tau", c.agent.tau);
    a.get("auto_temperature", c.agent.auto_temperature);
    a.get("init_temperature", c.agent.init_temperature);
    a.get("target_entropy", c.agent.target_entropy);
    a.get("batch_size", c.agent.batch_size);
    a.get("state_scale", c.agent.state_scale);
    a.finish();
  }
  {
    Reader r = root.child("rollouts");
    r.get("per_epoch", c.rollouts.per_epoch);
    r.get("retain_epochs", c.rollouts.retain_epochs);
    r.get("real_ratio", c.rollouts.real_ratio);
    r.get("threads", c.rollouts.threads);
    r.get("trace_trajectories", c.rollouts.trace_trajectories);
    r.finish();
  }
  {
    Reader t = root.child("training");
    t.get("epochs", c.training.epochs);
    t.get("updates_per_epoch", c.training.updates_per_epoch);
    t.get("eval_episodes", c.training.eval_episodes);
    t.get("probe_states", c.training.probe_states);
    t.get("checkpoint_every", c.training.checkpoint_every);
    t.get("variance_map_h", c.training.variance_map_h);
    t.finish();
  }
  {
    Reader o = root.child("oracle");
    o.get("h", c.oracle.h);
    o.get("tol", c.oracle.tol);
    o.get("pad", c.oracle.pad);
    o.get("lookahead_actions", c.oracle.lookahead_actions);
    o.finish();
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.finish();

  // The discount lives in env; the agent always uses the same one.
  c.agent.gamma = c.env.gamma;

  if (errors.empty()) {
    collect(errors, [&] { c.validate(); });
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({"config: " + path.string() + " is not valid JSON (" + e.what() + ")"});
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

void apply_override(json& doc, const std::string& dotted_path, const std::string& value_text) {
  if (dotted_path.empty()) throw ConfigError({"override: empty field path"});
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot - start);
    if (key.empty()) throw ConfigError({dotted_path + ": malformed field path"});
    if (!node->is_object()) {
      throw ConfigError({dotted_path + ": '" + key + "' is not inside a section"});
    }
    if (dot == std::string::npos) {
      json& slot = (*node)[key];
      if (slot.is_string()) {
        slot = value_text;
      } else {
        try {
          slot = json::parse(value_text);
        } catch (const json::parse_error&) {
          slot = value_text;
        }
      }
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

ExperimentConfig with_overrides(const ExperimentConfig& cfg,
                                const std::vector<std::pair<std::string, std::string>>& kv) {
  json doc = to_json(cfg);
  for (const auto& [k, v] : kv) apply_override(doc, k, v);
  return config_from_json(doc);
}

}  // namespace reachlab
