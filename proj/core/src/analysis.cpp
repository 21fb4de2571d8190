#include "reachlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "reachlab/csv.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/losses.hpp"

namespace reachlab {

std::vector<VarianceCell> ensemble_variance_map(const QEnsemble& q,
                                                const TanhGaussianPolicy& policy,
                                                const Box2& box, double h,
                                                const ReachSpec& reach) {
  if (q.size() < 2) throw ShapeError("critic spread needs at least two critics");
  if (!(h > 0.0)) throw ConfigError({"variance_map_h: must be > 0"});
  const int nx = static_cast<int>(std::floor((box.x_hi - box.x_lo) / h + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor((box.y_hi - box.y_lo) / h + 1e-9)) + 1;
  std::vector<State2> states;
  states.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) states.push_back({box.x_lo + i * h, box.y_lo + j * h});
  }
  const Mat<float> s = states_matrix(states);
  Mat<float> sa(4, s.cols());
  sa.topRows(2) = policy.encode(s);
  sa.bottomRows(2) = policy.mean_action(s);
  const Mat<float> values = q.evaluate(sa);
  const double n = static_cast<double>(q.size());

  std::vector<VarianceCell> cells(states.size());
  for (std::size_t c = 0; c < states.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    // Pairwise form: exactly zero for identical critics.
    double sq = 0.0;
    for (int i = 0; i < q.size(); ++i) {
      for (int j = i + 1; j < q.size(); ++j) {
        const double d = static_cast<double>(values(i, col)) - values(j, col);
        sq += d * d;
      }
    }
    cells[c] = {states[c], std::sqrt(sq / (n * n)), reach.label(states[c])};
  }
  return cells;
}

VarianceSummary summarize_variance(std::span<const VarianceCell> cells) {
  VarianceSummary s;
  double sums[3] = {0.0, 0.0, 0.0};
  int counts[3] = {0, 0, 0};
  for (const VarianceCell& c : cells) {
    sums[c.label] += c.std;
    ++counts[c.label];
  }
  s.within_cells = counts[0];
  s.edge_cells = counts[1];
  s.beyond_cells = counts[2];
  s.within_mean = counts[0] ? sums[0] / counts[0] : 0.0;
  s.edge_mean = counts[1] ? sums[1] / counts[1] : 0.0;
  s.beyond_mean = counts[2] ? sums[2] / counts[2] : 0.0;
  if (s.within_mean > 0.0) {
    s.ratio = s.edge_mean / s.within_mean;
  } else {
    s.ratio = s.edge_mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return s;
}

void write_variance_csv(std::ostream& os, std::span<const VarianceCell> cells) {
  os << "x,y,ensemble_std,reach_label\n";
  for (const VarianceCell& c : cells) {
    os << fmt(c.s.x) << "," << fmt(c.s.y) << "," << fmt(c.std) << "," << c.label << "\n";
  }
}

// ---------------------------------------------------------------------------

void TabularMdp::validate() const {
  std::vector<std::string> bad;
  if (n < 1) bad.push_back("mdp.n: must be >= 1");
  if (m < 1) bad.push_back("mdp.m: must be >= 1");
  const std::size_t cells = static_cast<std::size_t>(std::max(n, 0)) * std::max(m, 0);
  if (next.size() != cells) bad.push_back("mdp.next: must have n * m entries");
  if (reward.size() != cells) bad.push_back("mdp.reward: must have n * m entries");
  for (int v : next) {
    if (v < 0 || v >= n) {
      bad.push_back("mdp.next: transitions must map into [0, n)");
      break;
    }
  }
  if (!(gamma > 0.0 && gamma < 1.0)) bad.push_back("mdp.gamma: must lie in (0, 1)");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

double tabular_backup(const TabularMdp& mdp, int s, int a, double next_value) {
  return soft_bellman_target<double>(mdp.r(s, a), 0.0, mdp.gamma, next_value, 0.0, 0.0);
}

std::vector<double> policy_q(const TabularMdp& mdp, std::span<const int> policy) {
  mdp.validate();
  if (static_cast<int>(policy.size()) != mdp.n) throw ShapeError("policy must cover every state");
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(mdp.n, mdp.n);
  Eigen::VectorXd b(mdp.n);
  for (int s = 0; s < mdp.n; ++s) {
    const int act = policy[s];
    if (act < 0 || act >= mdp.m) throw ShapeError("policy action out of range");
    a(s, mdp.next_state(s, act)) -= mdp.gamma;
    b(s) = mdp.r(s, act);
  }
  const Eigen::VectorXd v = a.partialPivLu().solve(b);
  std::vector<double> q(static_cast<std::size_t>(mdp.n) * mdp.m);
  for (int s = 0; s < mdp.n; ++s) {
    for (int act = 0; act < mdp.m; ++act) {
      q[static_cast<std::size_t>(s) * mdp.m + act] =
          tabular_backup(mdp, s, act, v(mdp.next_state(s, act)));
    }
  }
  return q;
}

ErrorReport propagate_error_check(const TabularMdp& mdp, std::span<const int> policy,
                                  const TabularRollout& rollout, double eps, double delta,
                                  Rng* rng) {
  mdp.validate();
  const int k = static_cast<int>(rollout.actions.size());
  std::vector<std::string> bad;
  if (k < 1) bad.push_back("rollout: needs at least one step");
  if (rollout.states.size() != rollout.actions.size() + 1) {
    bad.push_back("rollout: needs exactly one more state than actions");
  }
  if (!(delta >= 0.0)) bad.push_back("delta: must be >= 0");
  if (delta > 0.0 && !rng) bad.push_back("delta: a random stream is required when > 0");
  if (static_cast<int>(policy.size()) != mdp.n) bad.push_back("policy: must cover every state");
  if (bad.empty()) {
    std::vector<int> seen(rollout.states);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
      bad.push_back("rollout: states must be distinct");
    }
    for (int t = 0; t < k && bad.empty(); ++t) {
      const int s = rollout.states[t];
      const int a = rollout.actions[t];
      if (s < 0 || s >= mdp.n || a < 0 || a >= mdp.m) {
        bad.push_back("rollout: state or action out of range at t=" + std::to_string(t));
      } else if (policy[s] != a) {
        bad.push_back("rollout: action at t=" + std::to_string(t) + " is not the policy's");
      } else if (mdp.next_state(s, a) != rollout.states[t + 1]) {
        bad.push_back("rollout: transition at t=" + std::to_string(t) +
                      " disagrees with the MDP");
      }
    }
    const int last = rollout.states.back();
    if (last < 0 || last >= mdp.n) bad.push_back("rollout: final state out of range");
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));

  const std::vector<double> q_pi = policy_q(mdp, policy);
  auto idx = [&](int s, int a) { return static_cast<std::size_t>(s) * mdp.m + a; };
  std::vector<double> q = q_pi;
  const int s_k = rollout.states.back();
  q[idx(s_k, policy[s_k])] += eps;

  for (int sweep = 0; sweep < k; ++sweep) {
    std::vector<double> updated = q;
    for (int t = 0; t < k; ++t) {
      const int s = rollout.states[t];
      const int a = rollout.actions[t];
      const int s_next = rollout.states[t + 1];
      double y = tabular_backup(mdp, s, a, q[idx(s_next, policy[s_next])]);
      if (delta > 0.0) y += uniform(*rng, -delta, delta);
      updated[idx(s, a)] = y;
    }
    q.swap(updated);
  }

  ErrorReport rep;
  rep.k = k;
  rep.eps = eps;
  rep.delta = delta;
  for (int t = 0; t < k; ++t) {
    ErrorStep st;
    st.t = t;
    const std::size_t i = idx(rollout.states[t], rollout.actions[t]);
    st.measured = q[i] - q_pi[i];
    st.predicted = std::pow(mdp.gamma, k - t) * eps;
    double geo = 0.0;
    for (int j = 0; j < k - t; ++j) geo += std::pow(mdp.gamma, j);
    st.bound = std::abs(st.predicted) + delta * geo;
    st.within_bound = std::abs(st.measured) <= st.bound + 1e-9;
    rep.bound_holds = rep.bound_holds && st.within_bound;
    rep.max_exact_gap = std::max(rep.max_exact_gap, std::abs(st.measured - st.predicted));
    rep.steps.push_back(st);
  }
  return rep;
}

ErrorInstance random_error_instance(int n_states, int n_actions, int k, double gamma,
                                    Rng& rng) {
  if (k < 1 || n_states < k + 1 || n_actions < 1) {
    throw ConfigError({"random_error_instance: needs k >= 1, n_states >= k + 1, n_actions >= 1"});
  }
  ErrorInstance inst;
  TabularMdp& mdp = inst.mdp;
  mdp.n = n_states;
  mdp.m = n_actions;
  mdp.gamma = gamma;
  const std::size_t cells = static_cast<std::size_t>(n_states) * n_actions;
  mdp.next.resize(cells);
  mdp.reward.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    mdp.next[c] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_states)));
    mdp.reward[c] = uniform(rng, -1.0, 1.0);
  }
  inst.policy.resize(static_cast<std::size_t>(n_states));
  for (int& a : inst.policy) {
    a = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_actions)));
  }
  std::vector<int> order(static_cast<std::size_t>(n_states));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  inst.rollout.states.assign(order.begin(), order.begin() + k + 1);
  for (int t = 0; t < k; ++t) {
    const int s = inst.rollout.states[t];
    const int a = inst.policy[s];
    inst.rollout.actions.push_back(a);
    mdp.next[static_cast<std::size_t>(s) * n_actions + a] = inst.rollout.states[t + 1];
  }
  return inst;
}

// ---------------------------------------------------------------------------

namespace {

struct CellKey {
  std::int64_t i;
  std::int64_t j;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    return std::hash<std::int64_t>()(k.i * 73856093LL ^ k.j * 19349663LL);
  }
};

CellKey cell_of(State2 s, double size) {
  return {static_cast<std::int64_t>(std::floor(s.x / size)),
          static_cast<std::int64_t>(std::floor(s.y / size))};
}

}  // namespace

ConditionReport condition_audit(std::span<const Transition> buffer, double eps_d,
                                const std::optional<ActionAudit>& action) {
  if (buffer.empty()) throw Error("condition_audit: empty buffer");
  if (!(eps_d > 0.0) || !std::isfinite(eps_d)) {
    throw ConfigError({"audit.eps_d: must be finite and > 0"});
  }
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    grid[cell_of(buffer[i].s, eps_d)].push_back(i);
  }
  ConditionReport rep;
  rep.transitions = buffer.size();
  rep.state_flags.assign(buffer.size(), false);
  const double eps_sq = eps_d * eps_d;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Transition& t = buffer[i];
    if (t.done) continue;
    const CellKey c = cell_of(t.s_next, eps_d);
    bool found = false;
    for (std::int64_t di = -1; di <= 1 && !found; ++di) {
      for (std::int64_t dj = -1; dj <= 1 && !found; ++dj) {
        auto it = grid.find({c.i + di, c.j + dj});
        if (it == grid.end()) continue;
        for (std::size_t o : it->second) {
          const double dx = buffer[o].s.x - t.s_next.x;
          const double dy = buffer[o].s.y - t.s_next.y;
          if (dx * dx + dy * dy <= eps_sq) {
            found = true;
            break;
          }
        }
      }
    }
    if (!found) {
      rep.state_flags[i] = true;
      ++rep.state_violations;
    }
  }
  rep.state_violation_fraction =
      static_cast<double>(rep.state_violations) / static_cast<double>(buffer.size());

  if (action) {
    if (!action->policy || !action->rng) {
      throw Error("condition_audit: the action proxy needs a policy and a random stream");
    }
    if (!(action->quantile > 0.0 && action->quantile < 1.0)) {
      throw ConfigError({"audit.quantile: must lie in (0, 1)"});
    }
    const TanhGaussianPolicy& pi = *action->policy;
    std::vector<double> fresh(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      fresh[i] = pi.log_prob(buffer[i].s, pi.act(buffer[i].s, *action->rng));
    }
    std::sort(fresh.begin(), fresh.end());
    const auto q_index = static_cast<std::size_t>(
        std::floor(action->quantile * static_cast<double>(fresh.size())));
    rep.action_threshold = fresh[std::min(q_index, fresh.size() - 1)];
    for (const Transition& t : buffer) {
      if (pi.log_prob(t.s, t.a) < rep.action_threshold) ++rep.action_violations;
    }
    rep.action_violation_fraction =
        static_cast<double>(rep.action_violations) / static_cast<double>(buffer.size());
  }
  return rep;
}

// ---------------------------------------------------------------------------

ProbeStats probe_q(const SacAgent& agent, std::span<const State2> probes) {
  if (probes.empty()) throw Error("probe_q: empty probe set");
  const Mat<float> s = states_matrix(probes);
  const Mat<float> values = agent.q_values(s, agent.policy().mean_action(s));
  const Mat<double> v = values.cast<double>();
  return {v.mean(), v.maxCoeff()};
}

int first_crossing(std::span<const double> series, double factor, double scale) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] > factor * scale) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace reachlab
