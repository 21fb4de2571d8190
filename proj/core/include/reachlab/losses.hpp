#ifndef REACHLAB_LOSSES_HPP_
#define REACHLAB_LOSSES_HPP_

// Loss functions with hand-derived parameter gradients. They are templated on
// the scalar type: training runs in float, gradient checks run the identical
// code in double against central finite differences.

#include <cmath>
#include <numbers>
#include <vector>

#include "reachlab/errors.hpp"
#include "reachlab/mlp.hpp"

namespace reachlab {

inline constexpr double kGradNormEps = 1e-10;

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2), stable for large |u|.
template <typename T>
T log_one_minus_tanh_sq(T u) {
  return T(2) * (T(std::numbers::ln2) - u - softplus(T(-2) * u));
}

// Log-density of a = a_max * tanh(u), u = mean + exp(log_std) * noise, for one
// action dimension: Gaussian log-density of u minus the log-Jacobian of the
// squash.
template <typename T>
T squashed_log_prob(T noise, T log_std, T pre_tanh, T a_max) {
  const T gaussian = T(-0.5) * noise * noise - log_std -
                     T(0.5) * T(std::log(2.0 * std::numbers::pi));
  return gaussian - std::log(a_max) - log_one_minus_tanh_sq(pre_tanh);
}

// y = r + gamma * (1 - done) * (next_q - temperature * next_log_prob).
template <typename T>
T soft_bellman_target(T r, T done, T gamma, T next_q, T temperature,
                      T next_log_prob) {
  return r + gamma * (T(1) - done) * (next_q - temperature * next_log_prob);
}

// ---------------------------------------------------------------------------
// Gaussian negative log-likelihood, averaged over the batch and summed over
// output dimensions (constant term included).

template <typename T>
T gaussian_nll(const MlpView<T>& net, const Mat<T>& x, const Mat<T>& y, T* grad) {
  if (net.shape().head != Head::kGaussian) {
    throw ShapeError("gaussian_nll requires a Gaussian-head network");
  }
  Tape<T> tape;
  const Mat<T> out = net.forward(x, tape);
  const Eigen::Index d = out.rows() / 2;
  if (y.rows() != d || y.cols() != x.cols()) {
    throw ShapeError("gaussian_nll target shape mismatch");
  }
  const T batch = static_cast<T>(x.cols());
  const auto mean = out.topRows(d).array();
  const auto log_std = out.bottomRows(d).array();
  const Mat<T> inv_var = (T(-2) * log_std).exp().matrix();
  const Mat<T> err = (mean - y.array()).matrix();
  const Mat<T> sq = err.array().square() * inv_var.array();
  const T half_log_2pi = T(0.5 * std::log(2.0 * std::numbers::pi));
  const T loss = (T(0.5) * sq.array() + log_std + half_log_2pi).sum() / batch;
  if (grad) {
    Mat<T> d_out(out.rows(), out.cols());
    d_out.topRows(d) = (err.array() * inv_var.array() / batch).matrix();
    d_out.bottomRows(d) = ((T(1) - sq.array()) / batch).matrix();
    net.backward(tape, d_out, grad);
  }
  return loss;
}

// Mean-only squared error for a Gaussian-head network: 0.5 * mean_b |mu - y|^2.
// The log-std outputs get zero gradient. Used to warm-start the means before
// likelihood training, which otherwise can settle on explaining a sharp
// feature as noise.
template <typename T>
T gaussian_mean_mse(const MlpView<T>& net, const Mat<T>& x, const Mat<T>& y, T* grad) {
  if (net.shape().head != Head::kGaussian) {
    throw ShapeError("gaussian_mean_mse requires a Gaussian-head network");
  }
  Tape<T> tape;
  const Mat<T> out = net.forward(x, tape);
  const Eigen::Index d = out.rows() / 2;
  if (y.rows() != d || y.cols() != x.cols()) {
    throw ShapeError("gaussian_mean_mse target shape mismatch");
  }
  const T batch = static_cast<T>(x.cols());
  const Mat<T> err = out.topRows(d) - y;
  const T loss = T(0.5) * err.squaredNorm() / batch;
  if (grad) {
    Mat<T> d_out = Mat<T>::Zero(out.rows(), out.cols());
    d_out.topRows(d) = err / batch;
    net.backward(tape, d_out, grad);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Critic regression with the ensemble-diversity regularizer.
//
// total = sum_n mean_b (Q_n(s_b, a_b) - y_b)^2 + eta * N * diversity, where
// diversity is the mean over samples and ordered critic pairs (i != j) of the
// cosine between grad_a Q_i and grad_a Q_j.

template <typename T>
struct CriticLoss {
  T mse = T(0);        // summed over critics
  T diversity = T(0);  // in [-1, 1]; 1 when all action-gradients align
  T total = T(0);
  std::vector<T> per_critic_mse;
};

template <typename T>
CriticLoss<T> critic_loss(const MlpEnsemble<T>& critics, const Mat<T>& sa,
                          const Mat<T>& targets, T eta, int action_offset,
                          Mat<T>* grad) {
  const int n = critics.size();
  const Eigen::Index batch = sa.cols();
  const Eigen::Index action_dim = sa.rows() - action_offset;
  if (targets.rows() != 1 || targets.cols() != batch) {
    throw ShapeError("critic targets must be 1 x batch");
  }
  if (grad) *grad = Mat<T>::Zero(critics.params().rows(), n);

  CriticLoss<T> out;
  const bool diverse = eta != T(0) && n >= 2;
  std::vector<Tape<T>> tapes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto net = critics.member(i);
    const Mat<T> q = net.forward(sa, tapes[i]);
    const Mat<T> err = q - targets;
    const T mse = err.squaredNorm() / static_cast<T>(batch);
    out.per_critic_mse.push_back(mse);
    out.mse += mse;
    if (grad) {
      const Mat<T> d_out = (T(2) / static_cast<T>(batch)) * err;
      net.backward(tapes[i], d_out, grad->col(i).data());
    }
  }
  if (diverse) {
    std::vector<std::vector<Mat<T>>> deltas(static_cast<std::size_t>(n));
    std::vector<Mat<T>> raw(static_cast<std::size_t>(n));
    std::vector<Mat<T>> unit(static_cast<std::size_t>(n));
    std::vector<Mat<T>> norms(static_cast<std::size_t>(n));
    Mat<T> sum = Mat<T>::Zero(action_dim, batch);
    T self = T(0);
    for (int i = 0; i < n; ++i) {
      const Mat<T> g = critics.member(i).input_gradient(tapes[i], deltas[i]);
      raw[i] = g.bottomRows(action_dim);
      norms[i] = raw[i].colwise().norm();
      unit[i] = raw[i].array().rowwise() /
                (norms[i].row(0).array() + T(kGradNormEps));
      sum += unit[i];
      self += unit[i].squaredNorm();
    }
    const T pair_sum = sum.squaredNorm() - self;
    out.diversity = pair_sum / static_cast<T>(batch * n * (n - 1));
    if (grad) {
      const T scale = T(2) * eta / static_cast<T>(batch * (n - 1));
      for (int i = 0; i < n; ++i) {
        const Mat<T> c_unit = scale * (sum - unit[i]);
        Mat<T> c_raw(action_dim, batch);
        for (Eigen::Index b = 0; b < batch; ++b) {
          const T nb = norms[i](0, b);
          const T denom = nb + T(kGradNormEps);
          c_raw.col(b) = c_unit.col(b) / denom;
          if (nb > T(0)) {
            const T proj = raw[i].col(b).dot(c_unit.col(b));
            c_raw.col(b) -= raw[i].col(b) * (proj / (nb * denom * denom));
          }
        }
        Mat<T> c_input = Mat<T>::Zero(sa.rows(), batch);
        c_input.bottomRows(action_dim) = c_raw;
        critics.member(i).input_gradient_vjp(tapes[i], deltas[i], c_input,
                                             grad->col(i).data());
      }
    }
  }
  out.total = out.mse + eta * static_cast<T>(n) * out.diversity;
  return out;
}

// ---------------------------------------------------------------------------
// Tanh-Gaussian policy sample with recorded tape (reparameterized).

template <typename T>
struct PolicySample {
  Mat<T> mean;
  Mat<T> log_std;
  Mat<T> noise;
  Mat<T> pre_tanh;
  Mat<T> action;
  Mat<T> log_prob;  // 1 x batch
  Tape<T> tape;
};

template <typename T>
PolicySample<T> sample_policy(const MlpView<T>& policy, const Mat<T>& states,
                              const Mat<T>& noise, T a_max) {
  PolicySample<T> s;
  const Mat<T> out = policy.forward(states, s.tape);
  const Eigen::Index d = out.rows() / 2;
  if (noise.rows() != d || noise.cols() != states.cols()) {
    throw ShapeError("policy noise shape mismatch");
  }
  s.mean = out.topRows(d);
  s.log_std = out.bottomRows(d);
  s.noise = noise;
  s.pre_tanh = s.mean + (s.log_std.array().exp() * noise.array()).matrix();
  s.action = a_max * s.pre_tanh.array().tanh().matrix();
  s.log_prob = Mat<T>::Zero(1, states.cols());
  for (Eigen::Index b = 0; b < states.cols(); ++b) {
    T lp = T(0);
    for (Eigen::Index j = 0; j < d; ++j) {
      lp += squashed_log_prob(noise(j, b), s.log_std(j, b), s.pre_tanh(j, b), a_max);
    }
    s.log_prob(0, b) = lp;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Actor objective: mean_b [temperature * log pi(a~|s) - min_{i<m} Q_i(s, a~)].
// Ties in the min go to the lowest critic index.

template <typename T>
struct ActorLoss {
  T loss = T(0);
  T mean_log_prob = T(0);
  T mean_min_q = T(0);
};

template <typename T>
ActorLoss<T> actor_loss(const MlpView<T>& policy, const MlpEnsemble<T>& critics,
                        int min_set, const Mat<T>& states, const Mat<T>& noise,
                        T temperature, T a_max, T* grad) {
  const Eigen::Index batch = states.cols();
  const PolicySample<T> ps = sample_policy(policy, states, noise, a_max);
  const Eigen::Index d = ps.action.rows();
  Mat<T> sa(states.rows() + d, batch);
  sa.topRows(states.rows()) = states;
  sa.bottomRows(d) = ps.action;

  std::vector<Tape<T>> tapes(static_cast<std::size_t>(min_set));
  Mat<T> min_q = Mat<T>::Constant(1, batch, std::numeric_limits<T>::infinity());
  std::vector<int> argmin(static_cast<std::size_t>(batch), 0);
  for (int i = 0; i < min_set; ++i) {
    const Mat<T> q = critics.member(i).forward(sa, tapes[i]);
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (q(0, b) < min_q(0, b)) {
        min_q(0, b) = q(0, b);
        argmin[b] = i;
      }
    }
  }

  ActorLoss<T> out;
  out.mean_log_prob = ps.log_prob.sum() / static_cast<T>(batch);
  out.mean_min_q = min_q.sum() / static_cast<T>(batch);
  out.loss = temperature * out.mean_log_prob - out.mean_min_q;
  if (!grad) return out;

  const T inv_b = T(1) / static_cast<T>(batch);
  Mat<T> d_action = Mat<T>::Zero(d, batch);
  for (int i = 0; i < min_set; ++i) {
    Mat<T> d_q = Mat<T>::Zero(1, batch);
    bool any = false;
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (argmin[b] == i) {
        d_q(0, b) = -inv_b;
        any = true;
      }
    }
    if (!any) continue;
    Mat<T> d_in;
    critics.member(i).backward(tapes[i], d_q, nullptr, &d_in);
    d_action += d_in.bottomRows(d);
  }
  const Mat<T> tanh_u = ps.pre_tanh.array().tanh().matrix();
  const Mat<T> d_pre =
      (d_action.array() * a_max * (T(1) - tanh_u.array().square()) +
       temperature * inv_b * T(2) * tanh_u.array())
          .matrix();
  Mat<T> d_out(2 * d, batch);
  d_out.topRows(d) = d_pre;
  d_out.bottomRows(d) =
      (d_pre.array() * ps.log_std.array().exp() * ps.noise.array() -
       temperature * inv_b)
          .matrix();
  policy.backward(ps.tape, d_out, grad);
  return out;
}

}  // namespace reachlab

#endif  // REACHLAB_LOSSES_HPP_
