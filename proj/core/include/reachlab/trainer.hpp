#ifndef REACHLAB_TRAINER_HPP_
#define REACHLAB_TRAINER_HPP_

#include <memory>
#include <string>
#include <vector>

#include "reachlab/agent.hpp"
#include "reachlab/config.hpp"
#include "reachlab/dynamics.hpp"
#include "reachlab/metrics.hpp"
#include "reachlab/rollouts.hpp"
#include "reachlab/value_grid.hpp"

namespace reachlab {

struct EvalResult {
  double mean_return = 0.0;
  std::vector<double> returns;
};

// H-step episodes in the true environment from each start, summing rewards.
EvalResult evaluate_policy(const EnvSpec& env, std::span<const State2> starts,
                           const std::function<Action2(State2)>& act);

// Transitions with states uniform over `box`, actions uniform over the bound
// and true successors.
std::vector<Transition> uniform_dataset(const EnvSpec& env, const Box2& box, int n, Rng& rng);

// Everything one training run owns. Construction fits the dynamics model (if
// any), solves the value oracle and initializes the agent; train_epoch then
// performs one outer iteration: collect rollouts, then updates_per_epoch
// gradient updates on mixed batches, then evaluation.
class Experiment {
 public:
  explicit Experiment(const ExperimentConfig& cfg);

  const ExperimentConfig& config() const { return cfg_; }
  MetricsRecord train_epoch(int epoch);
  EvalResult evaluate() const;

  double oracle_return() const { return oracle_return_; }
  double max_value() const { return oracle_->max_value(); }
  const ValueGrid& oracle() const { return *oracle_; }
  const ReachSpec& reach() const { return reach_; }
  const DynamicsModel& model() const { return *model_; }
  SacAgent& agent() { return agent_; }
  const SacAgent& agent() const { return agent_; }
  const ReplayBuffer& synthetic() const { return synthetic_; }
  const ReplayBuffer& real() const { return real_; }
  const std::vector<State2>& probes() const { return probes_; }
  const std::vector<State2>& eval_starts() const { return eval_starts_; }
  // Transitions of the first few trajectories of the latest epoch.
  const std::vector<Transition>& trace() const { return trace_; }

 private:
  ExperimentConfig cfg_;
  Rng model_rng_;
  Rng agent_rng_;
  Rng rollout_rng_;
  ReachSpec reach_;
  std::shared_ptr<const ValueGrid> oracle_;
  std::unique_ptr<DynamicsModel> model_;
  SacAgent agent_;
  ReplayBuffer real_;
  ReplayBuffer synthetic_;
  std::vector<State2> probes_;
  std::vector<State2> eval_starts_;
  double oracle_return_ = 0.0;
  std::uint64_t next_trajectory_ = 0;
  std::vector<Transition> trace_;
};

}  // namespace reachlab

#endif  // REACHLAB_TRAINER_HPP_
