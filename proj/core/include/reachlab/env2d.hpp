#ifndef REACHLAB_ENV2D_HPP_
#define REACHLAB_ENV2D_HPP_

#include <vector>

#include "reachlab/rng.hpp"

namespace reachlab {

struct State2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const State2&, const State2&) = default;
};

struct Action2 {
  double dx = 0.0;
  double dy = 0.0;
  friend bool operator==(const Action2&, const Action2&) = default;
};

// Closed axis-aligned box [x_lo, x_hi] x [y_lo, y_hi].
struct Box2 {
  double x_lo = 0.0;
  double x_hi = 0.0;
  double y_lo = 0.0;
  double y_hi = 0.0;

  bool empty() const { return x_lo > x_hi || y_lo > y_hi; }
  bool contains(State2 s) const {
    return s.x >= x_lo && s.x <= x_hi && s.y >= y_lo && s.y <= y_hi;
  }
  // Minkowski sum with the square [-r, r]^2.
  Box2 expanded(double r) const {
    return {x_lo - r, x_hi + r, y_lo - r, y_hi + r};
  }
  friend bool operator==(const Box2&, const Box2&) = default;
};

struct Bump {
  State2 center;
  double amplitude = 1.0;
  double width = 1.0;
  friend bool operator==(const Bump&, const Bump&) = default;
};

// Sum of isotropic Gaussian bumps amplitude * exp(-|s - c|^2 / (2 width^2)).
class RewardField {
 public:
  RewardField() = default;
  explicit RewardField(std::vector<Bump> bumps);

  // One positive bump at (6, 6), strictly inside the k-1 reach box of the
  // default environment.
  static RewardField standard();

  double operator()(State2 s) const;
  // Sum of |amplitude|; no state can exceed it in magnitude.
  double bound() const;
  const std::vector<Bump>& bumps() const { return bumps_; }

  friend bool operator==(const RewardField&, const RewardField&) = default;

 private:
  std::vector<Bump> bumps_;
};

struct EnvSpec {
  RewardField reward = RewardField::standard();
  double a_max = 1.0;
  int horizon = 30;
  int rollout_length = 10;
  Box2 init_box{-2.0, 2.0, -2.0, 2.0};
  double gamma = 0.99;

  // Throws ConfigError listing every violated constraint.
  void validate() const;
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

struct StepResult {
  State2 next;
  double reward = 0.0;
};

// Rejects actions with any component outside [-a_max, a_max].
void check_action(Action2 a, double a_max);

// s' = s + a; the reward is the field evaluated at the arrived state.
StepResult step(State2 s, Action2 a, const RewardField& field, double a_max);
inline StepResult step(const EnvSpec& spec, State2 s, Action2 a) {
  return step(s, a, spec.reward, spec.a_max);
}

State2 sample_initial(Rng& rng, const EnvSpec& spec);

// boxes[t] holds every state reachable in exactly t steps from init_box
// (equivalently in at most t steps, since zero actions are allowed).
struct ReachSpec {
  std::vector<Box2> boxes;
  int rollout_length = 0;

  const Box2& at(int t) const { return boxes.at(static_cast<std::size_t>(t)); }
  // Reachable at step k but at no earlier step.
  bool is_edge_of_reach(State2 s) const;
  // 0: within boxes[k-1], 1: edge-of-reach, 2: beyond boxes[k].
  int label(State2 s) const;
};

ReachSpec reach_boxes(const EnvSpec& spec);
bool is_edge_of_reach(State2 s, const EnvSpec& spec);

}  // namespace reachlab

#endif  // REACHLAB_ENV2D_HPP_
