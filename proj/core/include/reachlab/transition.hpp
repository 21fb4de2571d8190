#ifndef REACHLAB_TRANSITION_HPP_
#define REACHLAB_TRANSITION_HPP_

#include <cstdint>

#include "reachlab/env2d.hpp"

namespace reachlab {

// One (s, a, r, s', done) tuple. Rollout transitions carry their position in
// the k-step trajectory and the trajectory id so buffer audits can recover
// the trajectory structure.
struct Transition {
  State2 s;
  Action2 a;
  double r = 0.0;
  State2 s_next;
  bool done = false;
  int step_index = 0;
  std::uint64_t trajectory = 0;
  int epoch = 0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

}  // namespace reachlab

#endif  // REACHLAB_TRANSITION_HPP_
