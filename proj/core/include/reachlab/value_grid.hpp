#ifndef REACHLAB_VALUE_GRID_HPP_
#define REACHLAB_VALUE_GRID_HPP_

#include <memory>
#include <ostream>
#include <vector>

#include "reachlab/env2d.hpp"

namespace reachlab {

// Optimal values on the nodes lo + i * h of an axis-aligned box. Off-node
// lookups interpolate bilinearly; queries outside the box clamp to it.
struct ValueGrid {
  Box2 box;
  double h = 0.0;
  int nx = 0;
  int ny = 0;
  std::vector<double> values;        // row-major: index = j * nx + i
  std::vector<Action2> greedy;       // maximizing action per node
  double residual = 0.0;             // sup-norm of the last backup change
  int iterations = 0;
  double gamma = 0.0;

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
           static_cast<std::size_t>(i);
  }
  State2 node(int i, int j) const { return {box.x_lo + i * h, box.y_lo + j * h}; }
  double at(int i, int j) const { return values[index(i, j)]; }
  double value(State2 s) const;
  double max_value() const;

  // Dense CSV: two header rows (box and resolution), then one row per j.
  void write_csv(std::ostream& os) const;
};

struct ValueIterationConfig {
  double h = 0.25;
  double tol = 1e-6;
  int max_iterations = 200000;
  // Per-axis action count used when a_max is not a multiple of h.
  int fallback_actions = 9;
};

// Infinite-horizon discounted V* of the true dynamics with the action set
// discretized per axis. When a_max is a multiple of h the actions are the
// multiples of h in [-a_max, a_max] and every successor lands on a node.
// Throws ConvergenceError if the residual is not below tol in time.
ValueGrid value_iteration(const EnvSpec& spec, const Box2& box,
                          const ValueIterationConfig& cfg = {});

// boxes[k] padded by `pad` on every side.
Box2 default_oracle_box(const EnvSpec& spec, double pad = 1.0);

// Memoized value_iteration keyed by every input; safe to call concurrently.
std::shared_ptr<const ValueGrid> cached_value_iteration(
    const EnvSpec& spec, const Box2& box, const ValueIterationConfig& cfg = {});

// One Bellman backup of the grid, returning the largest change. Used to check
// the fixed point independently of the solver's stopping rule.
double bellman_residual(const EnvSpec& spec, const ValueGrid& grid,
                        int actions_per_axis);

// Greedy one-step lookahead on the grid's values over a per-axis action grid.
Action2 lookahead_action(const EnvSpec& spec, const ValueGrid& grid, State2 s,
                         int actions_per_axis = 21);

}  // namespace reachlab

#endif  // REACHLAB_VALUE_GRID_HPP_
