#ifndef REACHLAB_ADAM_HPP_
#define REACHLAB_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "reachlab/errors.hpp"
#include "reachlab/mlp.hpp"

namespace reachlab {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over one flat parameter block.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, AdamConfig config)
      : config_(config), m_(Vec<T>::Zero(size)), v_(Vec<T>::Zero(size)) {}

  // `block` names the parameters in the error raised for non-finite gradients.
  template <typename P, typename G>
  void step(Eigen::DenseBase<P>& params, const Eigen::DenseBase<G>& grad,
            std::string_view block) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw ShapeError("adam: parameter block '" + std::string(block) +
                       "' does not match optimizer state");
    }
    auto g = grad.derived().reshaped();
    if (!g.allFinite()) {
      throw NonFiniteError("non-finite gradient in parameter block '" +
                           std::string(block) + "'");
    }
    ++t_;
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    m_ = b1 * m_ + (T(1) - b1) * g;
    v_ = b2 * v_ + (T(1) - b2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const T step_size = static_cast<T>(config_.lr / c1);
    const T c2_sqrt = static_cast<T>(std::sqrt(c2));
    const T eps = static_cast<T>(config_.eps);
    auto p = params.derived().reshaped();
    p.array() -= step_size * m_.array() / (v_.array().sqrt() / c2_sqrt + eps);
  }

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const Vec<T>& first_moment() const { return m_; }
  const Vec<T>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  Vec<T> m_;
  Vec<T> v_;
  std::int64_t t_ = 0;
};

}  // namespace reachlab

#endif  // REACHLAB_ADAM_HPP_
