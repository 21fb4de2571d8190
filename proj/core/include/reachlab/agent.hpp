#ifndef REACHLAB_AGENT_HPP_
#define REACHLAB_AGENT_HPP_

#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "reachlab/adam.hpp"
#include "reachlab/checkpoint.hpp"
#include "reachlab/env2d.hpp"
#include "reachlab/policy.hpp"
#include "reachlab/transition.hpp"
#include "reachlab/value_grid.hpp"

namespace reachlab {

enum class TargetModeTag { kBase, kRavl, kOraclePatch };

const char* target_mode_name(TargetModeTag tag);
TargetModeTag target_mode_from_name(const std::string& name);

struct AgentConfig {
  TargetModeTag mode = TargetModeTag::kBase;
  int critics = 2;
  double eta = 0.0;
  std::vector<int> hidden{64, 64};
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double temperature_lr = 3e-4;
  double tau = 0.005;
  double gamma = 0.99;
  bool auto_temperature = true;
  double init_temperature = 1.0;
  // -dim(A).
  double target_entropy = -2.0;
  int batch_size = 256;
  double state_scale = 10.0;

  void validate() const;
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

// A training minibatch; one sample per column. `next_exact` keeps the
// double-precision successor states for reach classification.
struct Batch {
  Mat<float> s;
  Mat<float> a;
  Mat<float> r;
  Mat<float> s_next;
  Mat<float> done;
  std::vector<State2> next_exact;

  Eigen::Index size() const { return s.cols(); }
};

Batch make_batch(std::span<const Transition> transitions);

// N critics plus Polyak-averaged target copies, stacked for batched updates.
class QEnsemble {
 public:
  QEnsemble() = default;
  QEnsemble(MlpShape shape, int n, Rng& rng);

  int size() const { return live_.size(); }
  MlpEnsemble<float>& live() { return live_; }
  const MlpEnsemble<float>& live() const { return live_; }
  MlpEnsemble<float>& target() { return target_; }
  const MlpEnsemble<float>& target() const { return target_; }

  // N x batch matrices of critic values.
  Mat<float> evaluate(const Mat<float>& sa) const;
  Mat<float> evaluate_target(const Mat<float>& sa) const;

  // target <- (1 - tau) * target + tau * live.
  void polyak(double tau);

 private:
  MlpEnsemble<float> live_;
  MlpEnsemble<float> target_;
};

// First minimum among the first `count` entries of column `col`.
float min_over(const Mat<float>& values, Eigen::Index col, int count);

struct TargetStats {
  int patched = 0;
  double mean_target = 0.0;
};

struct CriticStats {
  double loss = 0.0;
  double mse = 0.0;
  double diversity = 0.0;
};

struct ActorStats {
  double loss = 0.0;
  double log_prob = 0.0;
  double min_q = 0.0;
  double temperature = 0.0;
};

struct UpdateStats {
  CriticStats critic;
  ActorStats actor;
  TargetStats targets;
};

class SacAgent {
 public:
  SacAgent() = default;
  SacAgent(const AgentConfig& cfg, const EnvSpec& env, Rng& rng);

  const AgentConfig& config() const { return cfg_; }
  // Number of critics the min in targets and in the actor objective covers.
  int min_set() const;

  void set_oracle(std::shared_ptr<const ValueGrid> grid, ReachSpec reach);
  bool has_oracle() const { return oracle_ != nullptr; }

  Mat<float> critic_inputs(const Mat<float>& states, const Mat<float>& actions) const;

  // Soft targets from the target critics with a' drawn fresh from the policy.
  Mat<float> bellman_targets(const Batch& batch, Rng& rng,
                             TargetStats* stats = nullptr) const;
  CriticStats critic_update(const Batch& batch, const Mat<float>& targets);
  ActorStats actor_update(const Batch& batch, Rng& rng);
  void polyak_update() { q_.polyak(cfg_.tau); }
  // targets, critic step, actor and temperature step, Polyak step.
  UpdateStats update(const Batch& batch, Rng& rng);

  double temperature() const;
  void set_temperature(double t);
  const TanhGaussianPolicy& policy() const { return policy_; }
  TanhGaussianPolicy& policy() { return policy_; }
  const QEnsemble& q() const { return q_; }
  QEnsemble& q() { return q_; }

  // N x batch live critic values at the given raw states and actions.
  Mat<float> q_values(const Mat<float>& states, const Mat<float>& actions) const;

  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  AgentConfig cfg_;
  EnvSpec env_;
  TanhGaussianPolicy policy_;
  QEnsemble q_;
  Adam<float> policy_opt_;
  Adam<float> critic_opt_;
  Adam<double> temperature_opt_;
  Vec<double> log_temperature_;
  std::shared_ptr<const ValueGrid> oracle_;
  ReachSpec reach_;
};

}  // namespace reachlab

#endif  // REACHLAB_AGENT_HPP_
