#include "reachlab/env2d.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "reachlab/errors.hpp"

namespace reachlab {

RewardField::RewardField(std::vector<Bump> bumps) : bumps_(std::move(bumps)) {
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < bumps_.size(); ++i) {
    const Bump& b = bumps_[i];
    if (!(b.width > 0.0) || !std::isfinite(b.width)) {
      bad.push_back("reward.bumps[" + std::to_string(i) +
                    "].width: must be finite and > 0");
    }
    if (!std::isfinite(b.amplitude)) {
      bad.push_back("reward.bumps[" + std::to_string(i) +
                    "].amplitude: must be finite");
    }
    if (!std::isfinite(b.center.x) || !std::isfinite(b.center.y)) {
      bad.push_back("reward.bumps[" + std::to_string(i) +
                    "].center: must be finite");
    }
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

RewardField RewardField::standard() {
  return RewardField({Bump{{6.0, 6.0}, 1.0, 1.5}});
}

double RewardField::operator()(State2 s) const {
  double total = 0.0;
  for (const Bump& b : bumps_) {
    const double dx = s.x - b.center.x;
    const double dy = s.y - b.center.y;
    total += b.amplitude *
             std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
  }
  return total;
}

double RewardField::bound() const {
  double total = 0.0;
  for (const Bump& b : bumps_) total += std::abs(b.amplitude);
  return total;
}

void EnvSpec::validate() const {
  std::vector<std::string> bad;
  if (!(a_max >= 0.0) || !std::isfinite(a_max)) {
    bad.push_back("env.a_max: must be finite and >= 0");
  }
  if (horizon < 1) bad.push_back("env.horizon: must be >= 1");
  if (rollout_length < 1) bad.push_back("env.rollout_length: must be >= 1");
  if (rollout_length > horizon) {
    bad.push_back("env.rollout_length: must not exceed env.horizon");
  }
  if (init_box.empty()) bad.push_back("env.init_box: must be nonempty");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    bad.push_back("env.gamma: must lie in (0, 1)");
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

void check_action(Action2 a, double a_max) {
  if (!(std::abs(a.dx) <= a_max) || !(std::abs(a.dy) <= a_max)) {
    std::ostringstream os;
    os << "action (" << a.dx << ", " << a.dy << ") exceeds bound " << a_max;
    throw BoundViolation(os.str());
  }
}

StepResult step(State2 s, Action2 a, const RewardField& field, double a_max) {
  check_action(a, a_max);
  const State2 next{s.x + a.dx, s.y + a.dy};
  return {next, field(next)};
}

State2 sample_initial(Rng& rng, const EnvSpec& spec) {
  const Box2& b = spec.init_box;
  // uniform_real_distribution requires lo < hi; a degenerate side is a point.
  const double x = b.x_lo < b.x_hi ? uniform(rng, b.x_lo, b.x_hi) : b.x_lo;
  const double y = b.y_lo < b.y_hi ? uniform(rng, b.y_lo, b.y_hi) : b.y_lo;
  return {x, y};
}

ReachSpec reach_boxes(const EnvSpec& spec) {
  ReachSpec out;
  out.rollout_length = spec.rollout_length;
  out.boxes.reserve(static_cast<std::size_t>(spec.horizon) + 1);
  for (int t = 0; t <= spec.horizon; ++t) {
    out.boxes.push_back(spec.init_box.expanded(t * spec.a_max));
  }
  return out;
}

bool ReachSpec::is_edge_of_reach(State2 s) const {
  const int k = rollout_length;
  return at(k).contains(s) && !at(k - 1).contains(s);
}

int ReachSpec::label(State2 s) const {
  const int k = rollout_length;
  if (at(k - 1).contains(s)) return 0;
  if (at(k).contains(s)) return 1;
  return 2;
}

bool is_edge_of_reach(State2 s, const EnvSpec& spec) {
  const Box2 inner = spec.init_box.expanded((spec.rollout_length - 1) * spec.a_max);
  const Box2 outer = spec.init_box.expanded(spec.rollout_length * spec.a_max);
  return outer.contains(s) && !inner.contains(s);
}

}  // namespace reachlab
