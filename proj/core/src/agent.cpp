#include "reachlab/agent.hpp"

#include <cmath>
#include <sstream>

#include "reachlab/errors.hpp"
#include "reachlab/losses.hpp"

namespace reachlab {

const char* target_mode_name(TargetModeTag tag) {
  switch (tag) {
    case TargetModeTag::kBase:
      return "base";
    case TargetModeTag::kRavl:
      return "ravl";
    case TargetModeTag::kOraclePatch:
      return "oracle_patch";
  }
  return "?";
}

TargetModeTag target_mode_from_name(const std::string& name) {
  if (name == "base") return TargetModeTag::kBase;
  if (name == "ravl") return TargetModeTag::kRavl;
  if (name == "oracle_patch") return TargetModeTag::kOraclePatch;
  throw ConfigError({"agent.mode: unknown target mode '" + name +
                     "' (expected base, ravl, oracle_patch)"});
}

void AgentConfig::validate() const {
  std::vector<std::string> bad;
  if (critics < 2) bad.push_back("agent.critics: must be >= 2");
  if (!(eta >= 0.0) || !std::isfinite(eta)) bad.push_back("agent.eta: must be finite and >= 0");
  if (mode != TargetModeTag::kRavl && eta != 0.0) {
    bad.push_back("agent.eta: the diversity term applies only in ravl mode");
  }
  if (hidden.empty()) bad.push_back("agent.hidden: needs at least one layer");
  for (int w : hidden) {
    if (w < 1) {
      bad.push_back("agent.hidden: widths must be positive");
      break;
    }
  }
  if (!(actor_lr >= 0.0)) bad.push_back("agent.actor_lr: must be >= 0");
  if (!(critic_lr >= 0.0)) bad.push_back("agent.critic_lr: must be >= 0");
  if (!(temperature_lr >= 0.0)) bad.push_back("agent.temperature_lr: must be >= 0");
  if (!(tau >= 0.0 && tau <= 1.0)) bad.push_back("agent.tau: must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) bad.push_back("agent.gamma: must lie in (0, 1)");
  if (!(init_temperature >= 0.0) || !std::isfinite(init_temperature)) {
    bad.push_back("agent.init_temperature: must be finite and >= 0");
  }
  if (auto_temperature && !(init_temperature > 0.0)) {
    bad.push_back("agent.init_temperature: must be > 0 when auto-tuned");
  }
  if (!std::isfinite(target_entropy)) bad.push_back("agent.target_entropy: must be finite");
  if (batch_size < 1) bad.push_back("agent.batch_size: must be >= 1");
  if (!(state_scale > 0.0)) bad.push_back("agent.state_scale: must be > 0");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

Batch make_batch(std::span<const Transition> transitions) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  Batch b;
  b.s.resize(2, n);
  b.a.resize(2, n);
  b.r.resize(1, n);
  b.s_next.resize(2, n);
  b.done.resize(1, n);
  b.next_exact.resize(transitions.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = transitions[static_cast<std::size_t>(i)];
    b.s.col(i) << static_cast<float>(t.s.x), static_cast<float>(t.s.y);
    b.a.col(i) << static_cast<float>(t.a.dx), static_cast<float>(t.a.dy);
    b.r(0, i) = static_cast<float>(t.r);
    b.s_next.col(i) << static_cast<float>(t.s_next.x), static_cast<float>(t.s_next.y);
    b.done(0, i) = t.done ? 1.0f : 0.0f;
    b.next_exact[static_cast<std::size_t>(i)] = t.s_next;
  }
  return b;
}

// ---------------------------------------------------------------------------

QEnsemble::QEnsemble(MlpShape shape, int n, Rng& rng)
    : live_(MlpEnsemble<float>::random(std::move(shape), n, rng)), target_(live_) {}

namespace {

Mat<float> evaluate_all(const MlpEnsemble<float>& e, const Mat<float>& sa) {
  Mat<float> out(e.size(), sa.cols());
  for (int i = 0; i < e.size(); ++i) out.row(i) = e.member(i).forward(sa);
  return out;
}

}  // namespace

Mat<float> QEnsemble::evaluate(const Mat<float>& sa) const { return evaluate_all(live_, sa); }

Mat<float> QEnsemble::evaluate_target(const Mat<float>& sa) const {
  return evaluate_all(target_, sa);
}

void QEnsemble::polyak(double tau) {
  const float t = static_cast<float>(tau);
  target_.params() = (1.0f - t) * target_.params() + t * live_.params();
}

float min_over(const Mat<float>& values, Eigen::Index col, int count) {
  float m = values(0, col);
  for (int i = 1; i < count; ++i) {
    if (values(i, col) < m) m = values(i, col);
  }
  return m;
}

// ---------------------------------------------------------------------------

SacAgent::SacAgent(const AgentConfig& cfg, const EnvSpec& env, Rng& rng)
    : cfg_(cfg), env_(env) {
  cfg_.validate();
  env_.validate();
  policy_ = TanhGaussianPolicy::random(cfg_.hidden, env_.a_max, cfg_.state_scale, rng);
  q_ = QEnsemble(MlpShape::make(4, cfg_.hidden, 1), cfg_.critics, rng);
  policy_opt_ = Adam<float>(policy_.net().params().size(), AdamConfig{cfg_.actor_lr});
  critic_opt_ = Adam<float>(q_.live().params().size(), AdamConfig{cfg_.critic_lr});
  temperature_opt_ = Adam<double>(1, AdamConfig{cfg_.temperature_lr});
  log_temperature_ = Vec<double>::Constant(1, std::log(cfg_.init_temperature));
}

int SacAgent::min_set() const {
  return cfg_.mode == TargetModeTag::kRavl ? q_.size() : std::min(2, q_.size());
}

void SacAgent::set_oracle(std::shared_ptr<const ValueGrid> grid, ReachSpec reach) {
  if (!grid) throw Error("set_oracle: null value grid");
  if (reach.boxes.empty()) throw Error("set_oracle: empty reach description");
  oracle_ = std::move(grid);
  reach_ = std::move(reach);
}

Mat<float> SacAgent::critic_inputs(const Mat<float>& states, const Mat<float>& actions) const {
  Mat<float> sa(4, states.cols());
  sa.topRows(2) = policy_.encode(states);
  sa.bottomRows(2) = actions;
  return sa;
}

double SacAgent::temperature() const {
  return cfg_.auto_temperature ? std::exp(log_temperature_(0)) : cfg_.init_temperature;
}

void SacAgent::set_temperature(double t) {
  cfg_.init_temperature = t;
  if (t > 0.0) log_temperature_(0) = std::log(t);
}

Mat<float> SacAgent::bellman_targets(const Batch& batch, Rng& rng,
                                     TargetStats* stats) const {
  if (batch.size() == 0) throw Error("bellman_targets: empty batch");
  const bool patch = cfg_.mode == TargetModeTag::kOraclePatch;
  if (patch && !oracle_) throw Error("oracle_patch mode requires an oracle value table");
  const PolicySample<float> next = policy_.sample(batch.s_next, rng);
  const Mat<float> tq = q_.evaluate_target(critic_inputs(batch.s_next, next.action));
  const int m = min_set();
  const auto gamma = static_cast<float>(cfg_.gamma);
  const auto temp = static_cast<float>(temperature());
  Mat<float> y(1, batch.size());
  int patched = 0;
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    if (patch && reach_.is_edge_of_reach(batch.next_exact[static_cast<std::size_t>(b)])) {
      const double v = oracle_->value(batch.next_exact[static_cast<std::size_t>(b)]);
      y(0, b) = static_cast<float>(batch.r(0, b) +
                                   cfg_.gamma * (1.0 - batch.done(0, b)) * v);
      ++patched;
      continue;
    }
    y(0, b) = soft_bellman_target<float>(batch.r(0, b), batch.done(0, b), gamma,
                                         min_over(tq, b, m), temp, next.log_prob(0, b));
  }
  if (stats) {
    stats->patched = patched;
    stats->mean_target = y.cast<double>().mean();
  }
  return y;
}

CriticStats SacAgent::critic_update(const Batch& batch, const Mat<float>& targets) {
  const Mat<float> sa = critic_inputs(batch.s, batch.a);
  Mat<float> grad;
  const float eta = cfg_.mode == TargetModeTag::kRavl ? static_cast<float>(cfg_.eta) : 0.0f;
  const CriticLoss<float> loss = critic_loss<float>(q_.live(), sa, targets, eta, 2, &grad);
  if (!std::isfinite(loss.total)) {
    std::ostringstream os;
    os << "critic loss is non-finite (mse " << loss.mse << ", diversity " << loss.diversity
       << ")";
    throw NonFiniteError(os.str());
  }
  critic_opt_.step(q_.live().params(), grad, "critics");
  return {loss.total, loss.mse, loss.diversity};
}

ActorStats SacAgent::actor_update(const Batch& batch, Rng& rng) {
  const Mat<float> noise = TanhGaussianPolicy::draw_noise(batch.size(), rng);
  Vec<float> grad = Vec<float>::Zero(policy_.net().params().size());
  const auto temp = static_cast<float>(temperature());
  const ActorLoss<float> loss =
      actor_loss<float>(policy_.net().view(), q_.live(), min_set(),
                        policy_.encode(batch.s), noise, temp,
                        static_cast<float>(env_.a_max), grad.data());
  if (!std::isfinite(loss.loss)) {
    std::ostringstream os;
    os << "actor loss is non-finite (log-prob " << loss.mean_log_prob << ", min Q "
       << loss.mean_min_q << ")";
    throw NonFiniteError(os.str());
  }
  policy_opt_.step(policy_.net().params(), grad, "policy");
  if (cfg_.auto_temperature) {
    Vec<double> g(1);
    g(0) = -(static_cast<double>(loss.mean_log_prob) + cfg_.target_entropy);
    temperature_opt_.step(log_temperature_, g, "temperature");
  }
  return {loss.loss, loss.mean_log_prob, loss.mean_min_q, temperature()};
}

UpdateStats SacAgent::update(const Batch& batch, Rng& rng) {
  UpdateStats s;
  const Mat<float> y = bellman_targets(batch, rng, &s.targets);
  s.critic = critic_update(batch, y);
  s.actor = actor_update(batch, rng);
  polyak_update();
  return s;
}

Mat<float> SacAgent::q_values(const Mat<float>& states, const Mat<float>& actions) const {
  return q_.evaluate(critic_inputs(states, actions));
}

void SacAgent::save(Checkpoint& ckpt) const {
  append_network(ckpt, "policy", policy_.net());
  append_ensemble(ckpt, "critics", q_.live());
  append_ensemble(ckpt, "critics_target", q_.target());
  ckpt.blocks.push_back(
      {"log_temperature", {1}, {static_cast<float>(log_temperature_(0))}});
  ckpt.attributes["agent"] = {{"mode", target_mode_name(cfg_.mode)},
                              {"critics", cfg_.critics},
                              {"a_max", env_.a_max},
                              {"state_scale", cfg_.state_scale},
                              {"log_temperature", log_temperature_(0)}};
}

void SacAgent::load(const Checkpoint& ckpt) {
  Mlp<float> net = load_network<float>(ckpt, "policy");
  if (!(net.shape() == policy_.net().shape())) {
    throw ShapeError("checkpoint policy architecture differs from the agent's");
  }
  MlpEnsemble<float> live = load_ensemble<float>(ckpt, "critics");
  MlpEnsemble<float> target = load_ensemble<float>(ckpt, "critics_target");
  if (!(live.shape() == q_.live().shape()) || live.size() != q_.size() ||
      target.size() != q_.size()) {
    throw ShapeError("checkpoint critic ensemble differs from the agent's");
  }
  policy_.net() = std::move(net);
  q_.live() = std::move(live);
  q_.target() = std::move(target);
  log_temperature_(0) = ckpt.attributes.at("agent").at("log_temperature").get<double>();
}

}  // namespace reachlab
