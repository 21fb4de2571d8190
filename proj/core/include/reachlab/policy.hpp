#ifndef REACHLAB_POLICY_HPP_
#define REACHLAB_POLICY_HPP_

#include <span>
#include <vector>

#include "reachlab/env2d.hpp"
#include "reachlab/losses.hpp"
#include "reachlab/mlp.hpp"

namespace reachlab {

// Tanh-squashed Gaussian policy over 2-d actions scaled by a_max. The network
// sees states divided by `state_scale`.
class TanhGaussianPolicy {
 public:
  TanhGaussianPolicy() = default;
  TanhGaussianPolicy(Mlp<float> net, double a_max, double state_scale);

  static TanhGaussianPolicy random(std::span<const int> hidden, double a_max,
                                   double state_scale, Rng& rng);

  const Mlp<float>& net() const { return net_; }
  Mlp<float>& net() { return net_; }
  double a_max() const { return a_max_; }
  double state_scale() const { return state_scale_; }

  // Raw states (2 x batch, env units) to network inputs.
  Mat<float> encode(const Mat<float>& states) const;

  // Standard-normal noise, 2 x batch, filled column by column.
  static Mat<float> draw_noise(Eigen::Index batch, Rng& rng);

  PolicySample<float> sample(const Mat<float>& states, Rng& rng) const;
  // a_max * tanh(mean).
  Mat<float> mean_action(const Mat<float>& states) const;

  Action2 act(State2 s, Rng& rng) const;
  Action2 act_deterministic(State2 s) const;
  // Log-density of a given in-bound action; the squash is inverted with the
  // pre-image clipped just inside the bound.
  double log_prob(State2 s, Action2 a) const;

 private:
  Mlp<float> net_;
  double a_max_ = 1.0;
  double state_scale_ = 1.0;
};

Mat<float> states_matrix(std::span<const State2> states);

}  // namespace reachlab

#endif  // REACHLAB_POLICY_HPP_
