#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "reachlab/adam.hpp"
#include "reachlab/checkpoint.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/mlp.hpp"
#include "test_util.hpp"

namespace reachlab {
namespace {

using testing::fd_close;
using testing::random_mat;

TEST(MlpForward, ZeroWeightsGiveBias) {
  const std::vector<int> hidden{4};
  Mlp<double> net(MlpShape::make(3, hidden, 2));
  const MlpShape& s = net.shape();
  net.params()[static_cast<Eigen::Index>(s.bias_offset(1))] = 0.7;
  net.params()[static_cast<Eigen::Index>(s.bias_offset(1)) + 1] = -0.2;
  Rng rng(1);
  const Mat<double> out = net.forward(random_mat<double>(3, 5, rng));
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_EQ(out(0, j), 0.7);
    EXPECT_EQ(out(1, j), -0.2);
  }
}

TEST(MlpForward, IdentityLinearLayerEchoes) {
  Mlp<double> net(MlpShape::make(3, {}, 3));
  Eigen::Map<Mat<double>>(net.params().data(), 3, 3) = Mat<double>::Identity(3, 3);
  Rng rng(2);
  const Mat<double> x = random_mat<double>(3, 4, rng);
  EXPECT_EQ(net.forward(x), x);
}

TEST(MlpForward, BatchColumnsAreIndependent) {
  Rng rng(3);
  const std::vector<int> hidden{8, 8};
  const Mlp<float> net = Mlp<float>::random(MlpShape::make(3, hidden, 2), rng);
  Mat<float> x = random_mat<float>(3, 6, rng);
  x.col(4) = x.col(1);
  const Mat<float> out = net.forward(x);
  // Equal up to rounding: the matrix kernels may block columns differently.
  EXPECT_TRUE(out.col(4).isApprox(out.col(1), 1e-6f));
  const Mat<float> single = net.forward(x.col(2));
  EXPECT_TRUE(single.col(0).isApprox(out.col(2), 1e-6f));
}

TEST(MlpForward, ShapeMismatchThrows) {
  Rng rng(4);
  const std::vector<int> hidden{4};
  const Mlp<float> net = Mlp<float>::random(MlpShape::make(3, hidden, 1), rng);
  EXPECT_THROW(net.forward(Mat<float>::Zero(2, 5)), ShapeError);
}

TEST(MlpForward, GaussianHeadClampsLogStd) {
  Mlp<double> net(MlpShape::make(1, {}, 2, Head::kGaussian));
  const MlpShape& s = net.shape();
  auto b = static_cast<Eigen::Index>(s.bias_offset(0));
  net.params()[b + 2] = 50.0;
  net.params()[b + 3] = -50.0;
  const Mat<double> out = net.forward(Mat<double>::Zero(1, 1));
  EXPECT_EQ(out(2, 0), kLogStdMax);
  EXPECT_EQ(out(3, 0), kLogStdMin);
}

TEST(MlpForward, ParamCountMatchesArchitecture) {
  const std::vector<int> hidden{64, 64};
  const MlpShape s = MlpShape::make(4, hidden, 1);
  EXPECT_EQ(s.param_count(), static_cast<std::size_t>(4 * 64 + 64 + 64 * 64 + 64 + 64 + 1));
}

TEST(MlpBackward, LinearSquaredLossClosedForm) {
  Mlp<double> net(MlpShape::make(3, {}, 1));
  net.params() << 0.5, -1.0, 2.0, 0.25;
  Mat<double> x(3, 1);
  x << 1.0, 2.0, -0.5;
  const double y = 0.3;
  Tape<double> tape;
  const double pred = net.forward(x, tape)(0, 0);
  Mat<double> d_out(1, 1);
  d_out(0, 0) = 2.0 * (pred - y);
  Vec<double> grad;
  net.backward(tape, d_out, grad);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(grad[i], 2.0 * (pred - y) * x(i, 0));
  EXPECT_DOUBLE_EQ(grad[3], 2.0 * (pred - y));
}

TEST(MlpBackward, ZeroCotangentGivesZeroGradient) {
  Rng rng(5);
  const std::vector<int> hidden{6};
  const Mlp<double> net = Mlp<double>::random(MlpShape::make(2, hidden, 3), rng);
  Tape<double> tape;
  net.forward(random_mat<double>(2, 4, rng), tape);
  Vec<double> grad;
  net.backward(tape, Mat<double>::Zero(3, 4), grad);
  EXPECT_TRUE((grad.array() == 0.0).all());
}

TEST(MlpBackward, RequiresRecordedPass) {
  Rng rng(6);
  const std::vector<int> hidden{6};
  const Mlp<double> net = Mlp<double>::random(MlpShape::make(2, hidden, 1), rng);
  Tape<double> tape;
  Vec<double> grad;
  EXPECT_THROW(net.backward(tape, Mat<double>::Zero(1, 1), grad), Error);
}

// Loss = sum(C .* f(x)); parameters and inputs checked by central differences.
TEST(MlpBackward, FiniteDifferenceAllParameters) {
  Rng rng(7);
  for (int probe = 0; probe < 100; ++probe) {
    const std::vector<int> hidden{5, 4};
    const Head head = probe % 2 ? Head::kGaussian : Head::kIdentity;
    Mlp<double> net = Mlp<double>::random(MlpShape::make(3, hidden, 2, head), rng);
    net.params() += 0.1 * random_mat<double>(net.params().size(), 1, rng);
    const Mat<double> x = random_mat<double>(3, 4, rng);
    const int out_dim = net.shape().output_dim();
    const Mat<double> c = random_mat<double>(out_dim, 4, rng);
    auto loss = [&](const Mlp<double>& n, const Mat<double>& xi) {
      return (c.array() * n.forward(xi).array()).sum();
    };
    Tape<double> tape;
    net.forward(x, tape);
    Vec<double> grad;
    Mat<double> dx;
    net.backward(tape, c, grad, &dx);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < net.params().size(); ++i) {
      Mlp<double> plus = net;
      Mlp<double> minus = net;
      plus.params()[i] += h;
      minus.params()[i] -= h;
      const double fd = (loss(plus, x) - loss(minus, x)) / (2 * h);
      ASSERT_TRUE(fd_close(grad[i], fd)) << "probe " << probe << " param " << i;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Mat<double> xp = x;
      Mat<double> xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (loss(net, xp) - loss(net, xm)) / (2 * h);
      ASSERT_TRUE(fd_close(dx(i), fd)) << "probe " << probe << " input " << i;
    }
  }
}

TEST(MlpBackward, InputGradientAndItsVjp) {
  Rng rng(8);
  for (int probe = 0; probe < 100; ++probe) {
    const std::vector<int> hidden{6, 5};
    Mlp<double> net = Mlp<double>::random(MlpShape::make(3, hidden, 1), rng);
    net.params() += 0.1 * random_mat<double>(net.params().size(), 1, rng);
    const Mat<double> x = random_mat<double>(3, 3, rng);
    const Mat<double> c = random_mat<double>(3, 3, rng);
    auto grad_x = [&](const Mlp<double>& n) {
      Tape<double> t;
      n.forward(x, t);
      std::vector<Mat<double>> deltas;
      return n.view().input_gradient(t, deltas);
    };
    Tape<double> tape;
    net.forward(x, tape);
    std::vector<Mat<double>> deltas;
    const Mat<double> g = net.view().input_gradient(tape, deltas);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Mat<double> xp = x;
      Mat<double> xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (net.forward(xp).sum() - net.forward(xm).sum()) / (2 * h);
      ASSERT_TRUE(fd_close(g(i), fd));
    }
    // d/dtheta sum(C .* grad_x f)
    Vec<double> grad = Vec<double>::Zero(net.params().size());
    net.view().input_gradient_vjp(tape, deltas, c, grad.data());
    for (Eigen::Index i = 0; i < net.params().size(); ++i) {
      Mlp<double> plus = net;
      Mlp<double> minus = net;
      plus.params()[i] += h;
      minus.params()[i] -= h;
      const double fd =
          ((c.array() * grad_x(plus).array()).sum() - (c.array() * grad_x(minus).array()).sum()) /
          (2 * h);
      ASSERT_TRUE(fd_close(grad[i], fd)) << "probe " << probe << " param " << i;
    }
  }
}

TEST(MlpEnsemble, MatchesSequentialEvaluation) {
  Rng rng(9);
  const std::vector<int> hidden{16, 16};
  const auto ens = MlpEnsemble<float>::random(MlpShape::make(4, hidden, 1), 5, rng);
  const Mat<float> x = random_mat<float>(4, 32, rng);
  const auto all = ens.forward_all(x);
  ASSERT_EQ(all.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    Mlp<float> single(ens.shape());
    single.params() = ens.params().col(i);
    EXPECT_EQ(single.forward(x), all[static_cast<std::size_t>(i)]);
  }
}

TEST(MlpEnsemble, DeterministicInitialization) {
  Rng a(10);
  Rng b(10);
  const std::vector<int> hidden{8};
  const auto e1 = MlpEnsemble<float>::random(MlpShape::make(2, hidden, 1), 3, a);
  const auto e2 = MlpEnsemble<float>::random(MlpShape::make(2, hidden, 1), 3, b);
  EXPECT_EQ(e1.params(), e2.params());
}

TEST(AdamStep, ZeroGradientLeavesParams) {
  Vec<float> p = Vec<float>::LinSpaced(5, -1, 1);
  const Vec<float> before = p;
  Adam<float> opt(5, AdamConfig{});
  opt.step(p, Vec<float>::Zero(5), "p");
  EXPECT_EQ(p, before);
}

TEST(AdamStep, FirstStepMovesByLearningRate) {
  Vec<double> p = Vec<double>::Zero(4);
  Vec<double> g(4);
  g << 3.0, -0.01, 100.0, -7.0;
  Adam<double> opt(4, AdamConfig{1e-3});
  opt.step(p, g, "p");
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(p[i], -1e-3 * (g[i] > 0 ? 1 : -1), 1e-9);
  }
}

TEST(AdamStep, NonFiniteGradientNamesBlock) {
  Vec<float> p = Vec<float>::Zero(3);
  Vec<float> g = Vec<float>::Zero(3);
  g[1] = std::numeric_limits<float>::quiet_NaN();
  Adam<float> opt(3, AdamConfig{});
  try {
    opt.step(p, g, "critic/l0");
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("critic/l0"), std::string::npos);
  }
}

TEST(AdamStep, IdenticalRunsAreBitIdentical) {
  auto train = [] {
    Rng rng(11);
    const std::vector<int> hidden{8};
    Mlp<float> net = Mlp<float>::random(MlpShape::make(2, hidden, 1), rng);
    Adam<float> opt(net.params().size(), AdamConfig{1e-2});
    for (int step = 0; step < 50; ++step) {
      const Mat<float> x = random_mat<float>(2, 16, rng);
      Tape<float> tape;
      const Mat<float> y = net.forward(x, tape);
      Vec<float> grad;
      net.backward(tape, (2.0f * (y.array() - x.row(0).array())).matrix(), grad);
      opt.step(net.params(), grad, "net");
    }
    return net.params();
  };
  EXPECT_EQ(train(), train());
}

TEST(Checkpoint, RoundTripNetworkAndEnsemble) {
  Rng rng(12);
  const std::vector<int> hidden{7, 3};
  const Mlp<float> net = Mlp<float>::random(MlpShape::make(4, hidden, 2, Head::kGaussian), rng);
  const auto ens = MlpEnsemble<float>::random(MlpShape::make(4, hidden, 1), 4, rng);
  Checkpoint ck;
  append_network(ck, "policy", net);
  append_ensemble(ck, "critics", ens);
  ck.attributes["note"] = "x";
  const auto dir = std::filesystem::temp_directory_path() / "reachlab_ckpt_test";
  std::filesystem::remove_all(dir);
  write_checkpoint(dir / "model", ck);
  const Checkpoint back = read_checkpoint(dir / "model");
  EXPECT_EQ(back.attributes["note"], "x");
  const Mlp<float> net2 = load_network<float>(back, "policy");
  const auto ens2 = load_ensemble<float>(back, "critics");
  EXPECT_EQ(net2.shape(), net.shape());
  EXPECT_EQ(net2.params(), net.params());
  EXPECT_EQ(ens2.params(), ens.params());

  // Manifest offsets index a little-endian float32 payload.
  std::ifstream js(dir / "model.json");
  const auto manifest = nlohmann::json::parse(js);
  const auto& b0 = manifest["blocks"][0];
  EXPECT_EQ(b0["name"], "policy/l0/weight");
  EXPECT_EQ(b0["shape"], (std::vector<int>{7, 4}));
  std::ifstream bin(dir / "model.bin", std::ios::binary);
  unsigned char bytes[4];
  bin.read(reinterpret_cast<char*>(bytes), 4);
  const std::uint32_t u = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) |
                          (static_cast<std::uint32_t>(bytes[3]) << 24);
  EXPECT_EQ(std::bit_cast<float>(u), net.params()[0]);
  EXPECT_EQ(manifest["total_bytes"].get<std::size_t>(),
            4 * (net.params().size() + ens.params().size()));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace reachlab
