#ifndef REACHLAB_ANALYSIS_HPP_
#define REACHLAB_ANALYSIS_HPP_

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "reachlab/agent.hpp"
#include "reachlab/env2d.hpp"
#include "reachlab/policy.hpp"
#include "reachlab/transition.hpp"
#include "reachlab/value_grid.hpp"

namespace reachlab {

// ---------------------------------------------------------------------------
// Critic disagreement over a state grid.

struct VarianceCell {
  State2 s;
  double std = 0.0;  // population std over critics of Q_i(s, mean action)
  int label = 0;     // ReachSpec::label: 0 within, 1 edge, 2 beyond
};

std::vector<VarianceCell> ensemble_variance_map(const QEnsemble& q,
                                                const TanhGaussianPolicy& policy,
                                                const Box2& box, double h,
                                                const ReachSpec& reach);

struct VarianceSummary {
  double within_mean = 0.0;
  double edge_mean = 0.0;
  double beyond_mean = 0.0;
  int within_cells = 0;
  int edge_cells = 0;
  int beyond_cells = 0;
  // edge_mean / within_mean (infinite when within_mean is 0 and edge_mean > 0).
  double ratio = 0.0;
};

VarianceSummary summarize_variance(std::span<const VarianceCell> cells);
void write_variance_csv(std::ostream& os, std::span<const VarianceCell> cells);

// ---------------------------------------------------------------------------
// Tabular error propagation along a truncated rollout.

struct TabularMdp {
  int n = 0;
  int m = 0;
  std::vector<int> next;       // n * m, index s * m + a
  std::vector<double> reward;  // n * m
  double gamma = 0.99;

  int next_state(int s, int a) const { return next[static_cast<std::size_t>(s) * m + a]; }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * m + a]; }
  void validate() const;
};

// Exact Q^pi of a deterministic policy via a dense linear solve.
std::vector<double> policy_q(const TabularMdp& mdp, std::span<const int> policy);

// The same one-step backup the agent applies, with zero temperature and done=0.
double tabular_backup(const TabularMdp& mdp, int s, int a, double next_value);

struct TabularRollout {
  std::vector<int> states;   // s_0 .. s_k
  std::vector<int> actions;  // a_0 .. a_{k-1}
};

struct ErrorStep {
  int t = 0;
  double measured = 0.0;   // Q^k(s_t, a_t) - Q^pi(s_t, a_t)
  double predicted = 0.0;  // gamma^(k - t) * eps
  double bound = 0.0;      // predicted + delta * sum_{i < k - t} gamma^i
  bool within_bound = true;
};

struct ErrorReport {
  int k = 0;
  double eps = 0.0;
  double delta = 0.0;
  std::vector<ErrorStep> steps;  // t = 0 .. k-1
  double max_exact_gap = 0.0;    // max |measured - predicted| (meaningful when delta = 0)
  bool bound_holds = true;
};

// Starts from Q^pi, corrupts Q(s_k, pi(s_k)) by eps and applies k synchronous
// backups to the rollout pairs, each perturbed by a uniform draw in
// [-delta, delta] when delta > 0. The rollout must follow the policy and the
// MDP, visit distinct states, and so never update its final pair.
ErrorReport propagate_error_check(const TabularMdp& mdp, std::span<const int> policy,
                                  const TabularRollout& rollout, double eps, double delta,
                                  Rng* rng = nullptr);

struct ErrorInstance {
  TabularMdp mdp;
  std::vector<int> policy;
  TabularRollout rollout;
};

// Random MDP with a random deterministic policy and a k-step rollout over
// distinct states (transitions along it are rewired to follow it). Requires
// n_states >= k + 1.
ErrorInstance random_error_instance(int n_states, int n_actions, int k, double gamma,
                                    Rng& rng);

// ---------------------------------------------------------------------------
// Dataset arrangement audit.

struct ConditionReport {
  std::size_t transitions = 0;
  std::size_t state_violations = 0;
  double state_violation_fraction = 0.0;
  std::vector<bool> state_flags;  // per transition
  std::size_t action_violations = 0;
  double action_violation_fraction = 0.0;
  double action_threshold = 0.0;  // log-prob cutoff used for the action proxy
};

struct ActionAudit {
  const TanhGaussianPolicy* policy = nullptr;
  double quantile = 0.05;
  Rng* rng = nullptr;
};

// State condition: a transition violates it when its s' is not within eps_d of
// any buffer state s and done is 0. Action proxy (when `action` is given):
// stored actions whose log-probability under the snapshot policy falls below
// the `quantile` level of fresh policy samples at the same states.
ConditionReport condition_audit(std::span<const Transition> buffer, double eps_d,
                                const std::optional<ActionAudit>& action = std::nullopt);

// ---------------------------------------------------------------------------
// Probe-set value statistics.

struct ProbeStats {
  double mean_q = 0.0;  // mean over critics and probe states
  double max_q = 0.0;
};

ProbeStats probe_q(const SacAgent& agent, std::span<const State2> probes);

// First index whose value exceeds factor * scale, or -1.
int first_crossing(std::span<const double> series, double factor, double scale);

}  // namespace reachlab

#endif  // REACHLAB_ANALYSIS_HPP_
