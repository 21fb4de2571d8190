#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "reachlab/adam.hpp"
#include "reachlab/losses.hpp"
#include "test_util.hpp"

namespace reachlab {
namespace {

using testing::fd_close;
using testing::random_mat;

constexpr double kStep = 1e-5;

template <typename F>
double central_difference(Vec<double>& params, Eigen::Index i, F&& loss) {
  const double keep = params[i];
  params[i] = keep + kStep;
  const double up = loss();
  params[i] = keep - kStep;
  const double down = loss();
  params[i] = keep;
  return (up - down) / (2 * kStep);
}

TEST(LogOneMinusTanhSq, MatchesDirectFormulaAndStaysFinite) {
  for (double u = -8.0; u <= 8.0; u += 0.37) {
    const double direct = std::log(1.0 - std::tanh(u) * std::tanh(u));
    EXPECT_NEAR(log_one_minus_tanh_sq(u), direct, 1e-9 * std::max(1.0, std::abs(direct)));
  }
  EXPECT_TRUE(std::isfinite(log_one_minus_tanh_sq(60.0)));
  EXPECT_NEAR(log_one_minus_tanh_sq(60.0), 2 * std::numbers::ln2 - 120.0, 1e-9);
}

// The squashed density integrates to one over (-a_max, a_max).
TEST(SquashedLogProb, IntegratesToOne) {
  const double cases[][3] = {{0.0, 0.0, 1.0}, {0.3, -0.16, 1.0}, {-1.2, 0.4, 2.0},
                             {2.0, -1.0, 0.5}};
  for (const auto& c : cases) {
    const double mu = c[0];
    const double log_std = c[1];
    const double a_max = c[2];
    const double sigma = std::exp(log_std);
    // Integrate in a-space with the midpoint rule.
    const int n = 400000;
    const double da = 2 * a_max / n;
    double total = 0.0;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      const double a = -a_max + (i + 0.5) * da;
      const double u = std::atanh(a / a_max);
      const double eps = (u - mu) / sigma;
      const double p = std::exp(squashed_log_prob(eps, log_std, u, a_max));
      total += p * da;
      mean += a * p * da;
    }
    EXPECT_NEAR(total, 1.0, 1e-4) << mu << " " << log_std << " " << a_max;
    // Against a Monte Carlo mean of a_max * tanh(u).
    Rng rng(1);
    double mc = 0.0;
    const int draws = 200000;
    for (int i = 0; i < draws; ++i) mc += a_max * std::tanh(mu + sigma * standard_normal(rng));
    EXPECT_NEAR(mean, mc / draws, 0.01 * a_max);
  }
}

TEST(SoftBellmanTarget, Examples) {
  EXPECT_DOUBLE_EQ(soft_bellman_target(1.0, 0.0, 0.99, 8.0, 0.0, -3.0), 1.0 + 0.99 * 8.0);
  EXPECT_EQ(soft_bellman_target(0.5, 1.0, 0.99, 1e6, 0.2, -3.0), 0.5);
  EXPECT_DOUBLE_EQ(soft_bellman_target(0.0, 0.0, 0.5, 2.0, 0.1, -4.0), 0.5 * (2.0 + 0.4));
}

TEST(GaussianNll, MatchesClosedFormAndFiniteDifferences) {
  Rng rng(2);
  for (int probe = 0; probe < 100; ++probe) {
    const std::vector<int> hidden{6};
    Mlp<double> net = Mlp<double>::random(MlpShape::make(4, hidden, 3, Head::kGaussian), rng);
    const Mat<double> x = random_mat<double>(4, 5, rng);
    const Mat<double> y = random_mat<double>(3, 5, rng);
    Vec<double> grad = Vec<double>::Zero(net.params().size());
    const double loss = gaussian_nll(net.view(), x, y, grad.data());

    const Mat<double> out = net.forward(x);
    double expected = 0.0;
    for (Eigen::Index b = 0; b < 5; ++b) {
      for (int j = 0; j < 3; ++j) {
        const double ls = out(3 + j, b);
        const double z = (y(j, b) - out(j, b)) / std::exp(ls);
        expected += 0.5 * z * z + ls + 0.5 * std::log(2 * std::numbers::pi);
      }
    }
    EXPECT_NEAR(loss, expected / 5, 1e-12 * std::max(1.0, std::abs(expected)));
    for (Eigen::Index i = 0; i < net.params().size(); ++i) {
      const double fd = central_difference(net.params(), i, [&] {
        return gaussian_nll<double>(net.view(), x, y, nullptr);
      });
      ASSERT_TRUE(fd_close(grad[i], fd)) << "probe " << probe << " param " << i;
    }
  }
}

TEST(GaussianMeanMse, ClosedFormAndLogStdUntouched) {
  Rng rng(21);
  for (int probe = 0; probe < 50; ++probe) {
    const std::vector<int> hidden{6};
    Mlp<double> net = Mlp<double>::random(MlpShape::make(4, hidden, 3, Head::kGaussian), rng);
    const Mat<double> x = random_mat<double>(4, 5, rng);
    const Mat<double> y = random_mat<double>(3, 5, rng);
    Vec<double> grad = Vec<double>::Zero(net.params().size());
    const double loss = gaussian_mean_mse(net.view(), x, y, grad.data());
    const Mat<double> out = net.forward(x);
    EXPECT_NEAR(loss, 0.5 * (out.topRows(3) - y).squaredNorm() / 5, 1e-12);
    for (Eigen::Index i = 0; i < net.params().size(); ++i) {
      const double fd = central_difference(net.params(), i, [&] {
        return gaussian_mean_mse<double>(net.view(), x, y, nullptr);
      });
      ASSERT_TRUE(fd_close(grad[i], fd)) << "probe " << probe << " param " << i;
    }
  }
}

MlpEnsemble<double> random_critics(int n, Rng& rng) {
  const std::vector<int> hidden{6, 5};
  auto e = MlpEnsemble<double>::random(MlpShape::make(4, hidden, 1), n, rng);
  e.params() += 0.1 * random_mat<double>(e.params().rows(), n, rng);
  return e;
}

TEST(CriticLoss, FiniteDifferencesWithDiversity) {
  Rng rng(3);
  for (int probe = 0; probe < 100; ++probe) {
    const int n = 2 + probe % 3;
    const double eta = probe % 4 == 0 ? 0.0 : 0.7;
    MlpEnsemble<double> critics = random_critics(n, rng);
    const Mat<double> sa = random_mat<double>(4, 6, rng);
    const Mat<double> y = random_mat<double>(1, 6, rng);
    Mat<double> grad;
    critic_loss(critics, sa, y, eta, 2, &grad);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index i = 0; i < critics.params().rows(); ++i) {
        double& p = critics.params()(i, c);
        const double keep = p;
        p = keep + kStep;
        const double up = critic_loss<double>(critics, sa, y, eta, 2, nullptr).total;
        p = keep - kStep;
        const double down = critic_loss<double>(critics, sa, y, eta, 2, nullptr).total;
        p = keep;
        ASSERT_TRUE(fd_close(grad(i, c), (up - down) / (2 * kStep)))
            << "probe " << probe << " critic " << c << " param " << i;
      }
    }
  }
}

TEST(CriticLoss, NoDiversityReducesToSummedMse) {
  Rng rng(4);
  const MlpEnsemble<double> critics = random_critics(2, rng);
  const Mat<double> sa = random_mat<double>(4, 8, rng);
  const Mat<double> y = random_mat<double>(1, 8, rng);
  const CriticLoss<double> l = critic_loss<double>(critics, sa, y, 0.0, 2, nullptr);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    expected += (critics.member(i).forward(sa) - y).squaredNorm() / 8;
  }
  EXPECT_NEAR(l.total, expected, 1e-12);
  EXPECT_EQ(l.total, l.mse);
}

TEST(CriticLoss, IdenticalCriticsHaveMaximalAlignment) {
  Rng rng(5);
  const MlpEnsemble<double> one = random_critics(1, rng);
  Mlp<double> net(one.shape());
  net.params() = one.params().col(0);
  const auto critics = MlpEnsemble<double>::replicate(net, 4);
  const Mat<double> sa = random_mat<double>(4, 10, rng);
  // A sample whose action-gradient vanishes (all ReLUs on the path off) has
  // no direction and contributes 0; every other sample contributes 1.
  int aligned = 0;
  for (int b = 0; b < 10; ++b) {
    const Mat<double> one_sa = sa.col(b);
    const double d = critic_loss<double>(critics, one_sa, Mat<double>::Zero(1, 1), 1.0, 2,
                                         nullptr).diversity;
    EXPECT_TRUE(std::abs(d - 1.0) < 1e-6 || d == 0.0) << d;
    aligned += std::abs(d - 1.0) < 1e-6;
  }
  EXPECT_GE(aligned, 8);
  const CriticLoss<double> l =
      critic_loss<double>(critics, sa, Mat<double>::Zero(1, 10), 1.0, 2, nullptr);
  EXPECT_NEAR(l.diversity, aligned / 10.0, 1e-6);
  EXPECT_NEAR(l.total, l.mse + 4.0 * l.diversity, 1e-12);
}

TEST(CriticLoss, DescentStepMovesEveryCriticTowardTarget) {
  Rng rng(6);
  for (int probe = 0; probe < 20; ++probe) {
    MlpEnsemble<double> critics = random_critics(3, rng);
    const Mat<double> sa = random_mat<double>(4, 1, rng);
    const Mat<double> y = random_mat<double>(1, 1, rng) * 5.0;
    Mat<double> grad;
    critic_loss(critics, sa, y, 0.0, 2, &grad);
    Mat<double> q0(3, 1);
    for (int i = 0; i < 3; ++i) q0(i) = critics.member(i).forward(sa)(0, 0);
    critics.params() -= 1e-3 * grad;
    for (int i = 0; i < 3; ++i) {
      const double q1 = critics.member(i).forward(sa)(0, 0);
      EXPECT_LT(std::abs(q1 - y(0, 0)), std::abs(q0(i) - y(0, 0)));
    }
  }
}

TEST(ActorLoss, FiniteDifferences) {
  Rng rng(7);
  for (int probe = 0; probe < 100; ++probe) {
    const int n = 2 + probe % 4;
    const MlpEnsemble<double> critics = random_critics(n, rng);
    const std::vector<int> hidden{5};
    Mlp<double> policy = Mlp<double>::random(MlpShape::make(2, hidden, 2, Head::kGaussian), rng);
    policy.params() += 0.2 * random_mat<double>(policy.params().size(), 1, rng);
    const Mat<double> s = random_mat<double>(2, 5, rng);
    const Mat<double> noise = random_mat<double>(2, 5, rng);
    const double temperature = probe % 3 == 0 ? 0.0 : 0.3;
    const double a_max = probe % 2 ? 1.0 : 1.5;
    const int m = probe % 5 == 0 ? n : std::min(2, n);
    Vec<double> grad = Vec<double>::Zero(policy.params().size());
    actor_loss(policy.view(), critics, m, s, noise, temperature, a_max, grad.data());
    for (Eigen::Index i = 0; i < policy.params().size(); ++i) {
      const double fd = central_difference(policy.params(), i, [&] {
        return actor_loss<double>(policy.view(), critics, m, s, noise, temperature, a_max,
                                  nullptr)
            .loss;
      });
      ASSERT_TRUE(fd_close(grad[i], fd)) << "probe " << probe << " param " << i;
    }
  }
}

// Critic fitted to -|a - a*|^2; the actor mean should approach a*.
TEST(ActorLoss, PolicyMovesTowardQuadraticPeak) {
  Rng rng(8);
  const std::vector<int> hidden{32, 32};
  auto critics = MlpEnsemble<double>::random(MlpShape::make(4, hidden, 1), 2, rng);
  const double ax = 0.4;
  const double ay = -0.3;
  Adam<double> copt(critics.params().size(), AdamConfig{3e-3});
  for (int step = 0; step < 3000; ++step) {
    Mat<double> sa(4, 64);
    Mat<double> y(1, 64);
    for (int b = 0; b < 64; ++b) {
      sa(0, b) = 0.0;
      sa(1, b) = 0.0;
      sa(2, b) = uniform(rng, -1, 1);
      sa(3, b) = uniform(rng, -1, 1);
      y(0, b) = -(std::pow(sa(2, b) - ax, 2) + std::pow(sa(3, b) - ay, 2));
    }
    Mat<double> grad;
    critic_loss(critics, sa, y, 0.0, 2, &grad);
    copt.step(critics.params(), grad, "critics");
  }
  const std::vector<int> phidden{16};
  Mlp<double> policy = Mlp<double>::random(MlpShape::make(2, phidden, 2, Head::kGaussian), rng);
  Adam<double> popt(policy.params().size(), AdamConfig{3e-3});
  const Mat<double> s = Mat<double>::Zero(2, 64);
  for (int step = 0; step < 1500; ++step) {
    Vec<double> grad = Vec<double>::Zero(policy.params().size());
    actor_loss(policy.view(), critics, 2, s, random_mat<double>(2, 64, rng), 0.0, 1.0,
               grad.data());
    popt.step(policy.params(), grad, "policy");
  }
  const Mat<double> out = policy.forward(Mat<double>::Zero(2, 1));
  EXPECT_NEAR(std::tanh(out(0, 0)), ax, 0.1);
  EXPECT_NEAR(std::tanh(out(1, 0)), ay, 0.1);
}

// With a dominant temperature the objective is the entropy of the squashed
// action. For a_max = 1 its maximum over Gaussians sits at mean 0 and
// std ~0.85 (entropy ~0.683 nats per dimension); the log-std stays far
// from its upper clamp.
TEST(ActorLoss, DominantTemperatureMaximizesSquashedEntropy) {
  Rng rng(9);
  auto critics = random_critics(2, rng);
  const std::vector<int> hidden{8};
  Mlp<double> policy = Mlp<double>::random(MlpShape::make(2, hidden, 2, Head::kGaussian), rng);
  Adam<double> opt(policy.params().size(), AdamConfig{3e-3});
  const Mat<double> s = random_mat<double>(2, 32, rng) * 0.5;
  for (int step = 0; step < 4000; ++step) {
    Vec<double> grad = Vec<double>::Zero(policy.params().size());
    actor_loss(policy.view(), critics, 2, s, random_mat<double>(2, 32, rng),
               1e4, 1.0, grad.data());
    opt.step(policy.params(), grad, "policy");
  }
  const Mat<double> out = policy.forward(s);
  EXPECT_LT(out.topRows(2).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LT((out.bottomRows(2).array() - std::log(0.85)).abs().maxCoeff(), 0.15);
  EXPECT_LT(out.bottomRows(2).maxCoeff(), kLogStdMax - 1.0);
  // Entropy estimate from fresh samples.
  double neg_lp = 0.0;
  const int draws = 20000;
  const Mat<double> s0 = s.leftCols(1);
  for (int i = 0; i < draws; ++i) {
    const PolicySample<double> ps =
        sample_policy<double>(policy.view(), s0, random_mat<double>(2, 1, rng), 1.0);
    neg_lp -= ps.log_prob(0, 0);
  }
  EXPECT_GT(neg_lp / draws, 2 * 0.683 - 0.03);
}

}  // namespace
}  // namespace reachlab
