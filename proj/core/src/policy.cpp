#include "reachlab/policy.hpp"

#include <algorithm>
#include <cmath>

#include "reachlab/errors.hpp"

namespace reachlab {

TanhGaussianPolicy::TanhGaussianPolicy(Mlp<float> net, double a_max, double state_scale)
    : net_(std::move(net)), a_max_(a_max), state_scale_(state_scale) {
  if (net_.shape().head != Head::kGaussian || net_.shape().input_dim() != 2 ||
      net_.shape().output_dim() != 4) {
    throw ShapeError("policy network must map 2 inputs to a 2-d Gaussian");
  }
  if (!(a_max_ > 0.0)) throw ConfigError({"env.a_max: policy requires a_max > 0"});
  if (!(state_scale_ > 0.0)) throw ConfigError({"agent.state_scale: must be > 0"});
}

TanhGaussianPolicy TanhGaussianPolicy::random(std::span<const int> hidden, double a_max,
                                              double state_scale, Rng& rng) {
  return TanhGaussianPolicy(
      Mlp<float>::random(MlpShape::make(2, hidden, 2, Head::kGaussian), rng), a_max,
      state_scale);
}

Mat<float> TanhGaussianPolicy::encode(const Mat<float>& states) const {
  return states / static_cast<float>(state_scale_);
}

Mat<float> TanhGaussianPolicy::draw_noise(Eigen::Index batch, Rng& rng) {
  Mat<float> noise(2, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    noise(0, b) = static_cast<float>(standard_normal(rng));
    noise(1, b) = static_cast<float>(standard_normal(rng));
  }
  return noise;
}

PolicySample<float> TanhGaussianPolicy::sample(const Mat<float>& states, Rng& rng) const {
  const Mat<float> noise = draw_noise(states.cols(), rng);
  return sample_policy<float>(net_.view(), encode(states), noise,
                              static_cast<float>(a_max_));
}

Mat<float> TanhGaussianPolicy::mean_action(const Mat<float>& states) const {
  const Mat<float> out = net_.forward(encode(states));
  return static_cast<float>(a_max_) * out.topRows(2).array().tanh().matrix();
}

namespace {

Action2 clip_action(float x, float y, double a_max) {
  // float tanh can round to exactly +-1; keep the double action in bounds.
  return {std::clamp(static_cast<double>(x), -a_max, a_max),
          std::clamp(static_cast<double>(y), -a_max, a_max)};
}

}  // namespace

Action2 TanhGaussianPolicy::act(State2 s, Rng& rng) const {
  Mat<float> st(2, 1);
  st << static_cast<float>(s.x), static_cast<float>(s.y);
  const PolicySample<float> ps = sample(st, rng);
  return clip_action(ps.action(0, 0), ps.action(1, 0), a_max_);
}

Action2 TanhGaussianPolicy::act_deterministic(State2 s) const {
  Mat<float> st(2, 1);
  st << static_cast<float>(s.x), static_cast<float>(s.y);
  const Mat<float> a = mean_action(st);
  return clip_action(a(0, 0), a(1, 0), a_max_);
}

double TanhGaussianPolicy::log_prob(State2 s, Action2 a) const {
  Mat<float> st(2, 1);
  st << static_cast<float>(s.x), static_cast<float>(s.y);
  const Mat<float> out = net_.forward(encode(st));
  const double limit = 1.0 - 1e-6;
  const double act[2] = {a.dx, a.dy};
  double lp = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double ratio = std::clamp(act[d] / a_max_, -limit, limit);
    const double u = std::atanh(ratio);
    const double mean = out(d, 0);
    const double log_std = out(2 + d, 0);
    const double noise = (u - mean) / std::exp(log_std);
    lp += squashed_log_prob(noise, log_std, u, a_max_);
  }
  return lp;
}

Mat<float> states_matrix(std::span<const State2> states) {
  Mat<float> m(2, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    m(0, static_cast<Eigen::Index>(i)) = static_cast<float>(states[i].x);
    m(1, static_cast<Eigen::Index>(i)) = static_cast<float>(states[i].y);
  }
  return m;
}

}  // namespace reachlab
