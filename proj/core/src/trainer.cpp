#include "reachlab/trainer.hpp"

#include <chrono>
#include <climits>
#include <cmath>

#include "reachlab/analysis.hpp"
#include "reachlab/errors.hpp"

namespace reachlab {

EvalResult evaluate_policy(const EnvSpec& env, std::span<const State2> starts,
                           const std::function<Action2(State2)>& act) {
  EvalResult out;
  for (State2 s : starts) {
    double total = 0.0;
    for (int t = 0; t < env.horizon; ++t) {
      const StepResult r = step(env, s, act(s));
      total += r.reward;
      s = r.next;
    }
    out.returns.push_back(total);
  }
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean_return = out.returns.empty() ? 0.0 : sum / static_cast<double>(out.returns.size());
  return out;
}

std::vector<Transition> uniform_dataset(const EnvSpec& env, const Box2& box, int n, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    const State2 s{uniform(rng, box.x_lo, box.x_hi), uniform(rng, box.y_lo, box.y_hi)};
    const Action2 a{uniform(rng, -env.a_max, env.a_max), uniform(rng, -env.a_max, env.a_max)};
    const StepResult r = step(env, s, a);
    out.push_back(Transition{s, a, r.reward, r.next, false, 0, static_cast<std::uint64_t>(i), 0});
  }
  return out;
}

Experiment::Experiment(const ExperimentConfig& cfg)
    : cfg_(cfg),
      model_rng_(make_stream(cfg.seed, "model")),
      agent_rng_(make_stream(cfg.seed, "agent")),
      rollout_rng_(make_stream(cfg.seed, "rollouts")) {
  cfg_.agent.gamma = cfg_.env.gamma;
  cfg_.validate();
  const EnvSpec& env = cfg_.env;
  reach_ = reach_boxes(env);

  Rng env_rng = make_stream(cfg_.seed, "env");
  for (int i = 0; i < cfg_.training.eval_episodes; ++i) {
    eval_starts_.push_back(sample_initial(env_rng, env));
  }
  for (int i = 0; i < cfg_.training.probe_states; ++i) {
    probes_.push_back(sample_initial(env_rng, env));
  }

  oracle_ = cached_value_iteration(env, default_oracle_box(env, cfg_.oracle.pad),
                                   ValueIterationConfig{cfg_.oracle.h, cfg_.oracle.tol});
  const int lookahead = cfg_.oracle.lookahead_actions;
  oracle_return_ = evaluate_policy(env, eval_starts_, [&](State2 s) {
                     return lookahead_action(env, *oracle_, s, lookahead);
                   }).mean_return;

  std::vector<Transition> dataset;
  if (cfg_.model.uses("learned") || cfg_.rollouts.real_ratio > 0.0) {
    Rng data_rng = make_stream(cfg_.seed, "dataset");
    dataset = uniform_dataset(env, reach_.at(env.rollout_length).expanded(env.a_max),
                              cfg_.model.dataset_size, data_rng);
  }
  std::shared_ptr<const GaussianEnsemble> ensemble;
  auto build = [&](const std::string& kind) {
    if (kind == "true") return DynamicsModel::true_model(env);
    if (kind == "random") return DynamicsModel::random(env, cfg_.model.random_hidden, model_rng_);
    if (!ensemble) {
      ensemble = std::make_shared<const GaussianEnsemble>(
          train_ensemble(dataset, cfg_.model.ensemble, model_rng_));
    }
    return DynamicsModel::learned(env, ensemble, cfg_.model.sample_noise);
  };
  if (cfg_.model.variant == "interpolated") {
    DynamicsModel base = build(cfg_.model.base);
    DynamicsModel target = build(cfg_.model.target);
    model_ = std::make_unique<DynamicsModel>(
        DynamicsModel::interpolated(std::move(base), std::move(target), cfg_.model.alpha));
  } else {
    model_ = std::make_unique<DynamicsModel>(build(cfg_.model.variant));
  }

  agent_ = SacAgent(cfg_.agent, env, agent_rng_);
  if (cfg_.agent.mode == TargetModeTag::kOraclePatch) agent_.set_oracle(oracle_, reach_);

  if (cfg_.rollouts.real_ratio > 0.0) {
    real_ = ReplayBuffer(dataset.size(), INT_MAX);
    real_.add(0, dataset);
  }
  const std::size_t capacity = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg_.rollouts.per_epoch) * env.rollout_length *
             cfg_.rollouts.retain_epochs);
  synthetic_ = ReplayBuffer(capacity, cfg_.rollouts.retain_epochs);
}

EvalResult Experiment::evaluate() const {
  return evaluate_policy(cfg_.env, eval_starts_,
                         [&](State2 s) { return agent_.policy().act_deterministic(s); });
}

MetricsRecord Experiment::train_epoch(int epoch) {
  using Clock = std::chrono::steady_clock;
  const auto epoch_start = Clock::now();
  const EnvSpec& env = cfg_.env;
  MetricsRecord rec;
  rec.epoch = epoch;

  // Start states are redrawn from the initial distribution every epoch.
  std::vector<State2> starts;
  starts.reserve(static_cast<std::size_t>(cfg_.rollouts.per_epoch));
  for (int i = 0; i < cfg_.rollouts.per_epoch; ++i) {
    starts.push_back(sample_initial(rollout_rng_, env));
  }
  const TanhGaussianPolicy& pi = agent_.policy();
  const ActionFn act = [&pi](State2 s, Rng& rng) { return pi.act(s, rng); };
  RolloutResult ro = collect_rollouts(*model_, cfg_.penalty, act, starts,
                                      env.rollout_length, cfg_.rollouts.per_epoch,
                                      rollout_rng_, epoch, next_trajectory_,
                                      cfg_.rollouts.threads);
  next_trajectory_ += static_cast<std::uint64_t>(cfg_.rollouts.per_epoch);
  synthetic_.add(epoch, ro.transitions);
  trace_.clear();
  const std::size_t keep = static_cast<std::size_t>(cfg_.rollouts.trace_trajectories) *
                           static_cast<std::size_t>(env.rollout_length);
  trace_.assign(ro.transitions.begin(),
                ro.transitions.begin() + std::min(keep, ro.transitions.size()));
  if (ro.steps > 0) {
    rec.model_reward = ro.model_reward_sum / static_cast<double>(ro.steps);
    rec.true_reward = ro.true_reward_sum / static_cast<double>(ro.steps);
    rec.penalty = ro.penalty_sum / static_cast<double>(ro.steps);
  }
  rec.aborted = static_cast<int>(ro.aborted.size());

  double update_seconds = 0.0;
  long long patched = 0;
  const int updates = cfg_.training.updates_per_epoch;
  for (int u = 0; u < updates; ++u) {
    const std::vector<Transition> mixed = mixed_batch(
        real_, synthetic_, cfg_.rollouts.real_ratio, cfg_.agent.batch_size, agent_rng_);
    const Batch batch = make_batch(mixed);
    const auto t0 = Clock::now();
    const UpdateStats st = agent_.update(batch, agent_rng_);
    update_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    rec.critic_loss += st.critic.loss;
    rec.critic_mse += st.critic.mse;
    rec.diversity += st.critic.diversity;
    rec.actor_loss += st.actor.loss;
    rec.log_prob += st.actor.log_prob;
    patched += st.targets.patched;
  }
  rec.updates = updates;
  if (updates > 0) {
    const double n = updates;
    rec.critic_loss /= n;
    rec.critic_mse /= n;
    rec.diversity /= n;
    rec.actor_loss /= n;
    rec.log_prob /= n;
    rec.patched_fraction =
        static_cast<double>(patched) / (n * static_cast<double>(cfg_.agent.batch_size));
    rec.seconds_per_update = update_seconds / n;
  }
  rec.temperature = agent_.temperature();
  rec.buffer_size = static_cast<double>(synthetic_.size());

  const EvalResult ev = evaluate();
  rec.eval_return = ev.mean_return;
  rec.eval_fraction = oracle_return_ != 0.0 ? ev.mean_return / oracle_return_ : 0.0;
  const ProbeStats ps = probe_q(agent_, probes_);
  rec.mean_q = ps.mean_q;
  rec.max_q = ps.max_q;
  rec.epoch_seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
  return rec;
}

}  // namespace reachlab
