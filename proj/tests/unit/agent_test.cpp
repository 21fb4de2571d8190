#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "reachlab/agent.hpp"
#include "reachlab/errors.hpp"

namespace reachlab {
namespace {

// Makes critic `i` of `nets` output the constant `v` everywhere.
void set_constant(MlpEnsemble<float>& nets, int i, float v) {
  const MlpShape& shape = nets.shape();
  const int last = shape.layer_count() - 1;
  auto col = nets.params().col(i);
  const std::size_t w = shape.weight_offset(last);
  const std::size_t b = shape.bias_offset(last);
  for (std::size_t j = w; j < b; ++j) col(static_cast<Eigen::Index>(j)) = 0.0f;
  col(static_cast<Eigen::Index>(b)) = v;
}

AgentConfig config(TargetModeTag mode, int critics) {
  AgentConfig cfg;
  cfg.mode = mode;
  cfg.critics = critics;
  cfg.hidden = {16, 16};
  cfg.batch_size = 32;
  return cfg;
}

std::vector<Transition> random_transitions(int n, Rng& rng, double r = 0.0) {
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    const State2 s{uniform(rng, -5, 5), uniform(rng, -5, 5)};
    const Action2 a{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    out.push_back(Transition{s, a, r, {s.x + a.dx, s.y + a.dy}, false, 0, 0, 0});
  }
  return out;
}

TEST(BellmanTargets, RavlMinThenDiscount) {
  EnvSpec env;
  Rng rng(1);
  AgentConfig cfg = config(TargetModeTag::kRavl, 3);
  cfg.auto_temperature = false;
  cfg.init_temperature = 0.0;
  SacAgent agent(cfg, env, rng);
  const float values[] = {10, 8, 12};
  for (int i = 0; i < 3; ++i) set_constant(agent.q().target(), i, values[i]);
  std::vector<Transition> t = random_transitions(5, rng, 1.0);
  const Mat<float> y = agent.bellman_targets(make_batch(t), rng);
  for (Eigen::Index b = 0; b < y.cols(); ++b) EXPECT_NEAR(y(0, b), 8.92f, 1e-5);
}

TEST(BellmanTargets, BaseUsesFirstTwoCritics) {
  EnvSpec env;
  Rng rng(2);
  AgentConfig cfg = config(TargetModeTag::kBase, 3);
  cfg.auto_temperature = false;
  cfg.init_temperature = 0.0;
  SacAgent agent(cfg, env, rng);
  EXPECT_EQ(agent.min_set(), 2);
  const float values[] = {10, 12, 8};
  for (int i = 0; i < 3; ++i) set_constant(agent.q().target(), i, values[i]);
  std::vector<Transition> t = random_transitions(5, rng, 1.0);
  const Mat<float> y = agent.bellman_targets(make_batch(t), rng);
  for (Eigen::Index b = 0; b < y.cols(); ++b) EXPECT_NEAR(y(0, b), 10.9f, 1e-5);
}

TEST(BellmanTargets, DoneMasksBootstrap) {
  EnvSpec env;
  Rng rng(3);
  SacAgent agent(config(TargetModeTag::kRavl, 4), env, rng);
  std::vector<Transition> t = random_transitions(16, rng, 0.75);
  for (Transition& x : t) x.done = true;
  const Mat<float> y = agent.bellman_targets(make_batch(t), rng);
  for (Eigen::Index b = 0; b < y.cols(); ++b) EXPECT_EQ(y(0, b), 0.75f);
}

TEST(BellmanTargets, SoftTermUsesTemperature) {
  EnvSpec env;
  Rng rng(4);
  AgentConfig cfg = config(TargetModeTag::kBase, 2);
  cfg.auto_temperature = false;
  cfg.init_temperature = 0.5;
  SacAgent agent(cfg, env, rng);
  for (int i = 0; i < 2; ++i) set_constant(agent.q().target(), i, 3.0f);
  std::vector<Transition> t = random_transitions(8, rng, 0.0);
  const Batch batch = make_batch(t);
  Rng a(5);
  Rng b(5);
  const Mat<float> y = agent.bellman_targets(batch, a);
  const PolicySample<float> next = agent.policy().sample(batch.s_next, b);
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    EXPECT_NEAR(y(0, i), 0.99f * (3.0f - 0.5f * next.log_prob(0, i)), 1e-5);
  }
}

TEST(BellmanTargets, MinMonotoneInCriticCount) {
  Rng rng(6);
  Mat<float> values(6, 50);
  for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = static_cast<float>(standard_normal(rng));
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    for (int m = 1; m < 6; ++m) EXPECT_LE(min_over(values, c, m + 1), min_over(values, c, m));
  }
  // Whole-agent version: Ravl over 5 critics never exceeds Base over the first 2.
  EnvSpec env;
  Rng ra(7);
  Rng rb(7);
  AgentConfig ravl_cfg = config(TargetModeTag::kRavl, 5);
  AgentConfig base_cfg = config(TargetModeTag::kBase, 5);
  SacAgent ravl(ravl_cfg, env, ra);
  SacAgent base(base_cfg, env, rb);
  ASSERT_EQ(ravl.q().target().params(), base.q().target().params());
  std::vector<Transition> t = random_transitions(64, rng, 0.2);
  const Batch batch = make_batch(t);
  Rng r1(8);
  Rng r2(8);
  const Mat<float> y_ravl = ravl.bellman_targets(batch, r1);
  const Mat<float> y_base = base.bellman_targets(batch, r2);
  for (Eigen::Index b = 0; b < y_ravl.cols(); ++b) EXPECT_LE(y_ravl(0, b), y_base(0, b));
}

TEST(MinOver, FirstMinimumIndexOrdered) {
  Mat<float> v(3, 1);
  v << 2, 1, 1;
  EXPECT_EQ(min_over(v, 0, 3), 1.0f);
  EXPECT_EQ(min_over(v, 0, 1), 2.0f);
}

class OraclePatchTest : public ::testing::Test {
 protected:
  void SetUp() override {
    grid_ = std::make_shared<ValueGrid>();
    grid_->box = {-13, 13, -13, 13};
    grid_->h = 1;
    grid_->nx = 27;
    grid_->ny = 27;
    for (int j = 0; j < 27; ++j) {
      for (int i = 0; i < 27; ++i) grid_->values.push_back(100.0 + i + 0.5 * j);
    }
  }
  EnvSpec env_;
  std::shared_ptr<ValueGrid> grid_;
};

TEST_F(OraclePatchTest, EdgeSuccessorsUseOracleValue) {
  Rng rng(9);
  SacAgent agent(config(TargetModeTag::kOraclePatch, 2), env_, rng);
  agent.set_oracle(grid_, reach_boxes(env_));
  std::vector<Transition> t{
      Transition{{11, 0}, {0.5, 0}, 0.3, {11.5, 0}, false, 9, 0, 0},
      Transition{{-11, 11}, {-1, 0.5}, 0.0, {-12, 11.5}, false, 9, 0, 0},
      Transition{{0, 0}, {0.5, 0}, 0.3, {0.5, 0}, false, 0, 0, 0}};
  TargetStats stats;
  const Mat<float> y = agent.bellman_targets(make_batch(t), rng, &stats);
  EXPECT_EQ(stats.patched, 2);
  EXPECT_NEAR(y(0, 0), 0.3 + 0.99 * grid_->value({11.5, 0}), 1e-4);
  EXPECT_NEAR(y(0, 1), 0.99 * grid_->value({-12, 11.5}), 1e-4);
  // Independent of the critics.
  for (int i = 0; i < 2; ++i) set_constant(agent.q().target(), i, 1e6f);
  const Mat<float> y2 = agent.bellman_targets(make_batch(t), rng);
  EXPECT_EQ(y2(0, 0), y(0, 0));
  EXPECT_EQ(y2(0, 1), y(0, 1));
  EXPECT_GT(y2(0, 2), 1e5f);
}

TEST_F(OraclePatchTest, NonEdgeTargetsBitIdenticalToBase) {
  Rng ra(10);
  Rng rb(10);
  SacAgent base(config(TargetModeTag::kBase, 2), env_, ra);
  SacAgent patch(config(TargetModeTag::kOraclePatch, 2), env_, rb);
  patch.set_oracle(grid_, reach_boxes(env_));
  Rng data(11);
  std::vector<Transition> t;
  for (int i = 0; i < 400; ++i) {
    const State2 s{uniform(data, -12, 12), uniform(data, -12, 12)};
    const Action2 a{uniform(data, -1, 1), uniform(data, -1, 1)};
    t.push_back(Transition{s, a, 0.1, {s.x + a.dx, s.y + a.dy}, false, 0, 0, 0});
  }
  const Batch batch = make_batch(t);
  Rng r1(12);
  Rng r2(12);
  TargetStats stats;
  const Mat<float> yb = base.bellman_targets(batch, r1);
  const Mat<float> yp = patch.bellman_targets(batch, r2, &stats);
  const ReachSpec reach = reach_boxes(env_);
  int edge = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (reach.is_edge_of_reach(t[i].s_next)) {
      ++edge;
    } else {
      EXPECT_EQ(yb(0, static_cast<Eigen::Index>(i)), yp(0, static_cast<Eigen::Index>(i)));
    }
  }
  EXPECT_GT(edge, 0);
  EXPECT_EQ(stats.patched, edge);
}

TEST_F(OraclePatchTest, MissingOracleThrows) {
  Rng rng(13);
  SacAgent agent(config(TargetModeTag::kOraclePatch, 2), env_, rng);
  std::vector<Transition> t = random_transitions(4, rng);
  EXPECT_THROW(agent.bellman_targets(make_batch(t), rng), Error);
}

TEST(QEnsemble, PolyakIsExact) {
  Rng rng(14);
  const std::vector<int> hidden{8};
  QEnsemble q(MlpShape::make(4, hidden, 1), 3, rng);
  for (Eigen::Index i = 0; i < q.live().params().size(); ++i) {
    q.live().params()(i) += static_cast<float>(standard_normal(rng));
  }
  const Mat<float> old_target = q.target().params();
  const Mat<float> live = q.live().params();
  q.polyak(0.005);
  const Mat<float> expected = (1.0f - 0.005f) * old_target + 0.005f * live;
  EXPECT_EQ(q.target().params(), expected);
  EXPECT_EQ(q.live().params(), live);
}

TEST(QEnsemble, TargetStartsEqualToLive) {
  Rng rng(15);
  const std::vector<int> hidden{8};
  QEnsemble q(MlpShape::make(4, hidden, 1), 2, rng);
  EXPECT_EQ(q.target().params(), q.live().params());
  EXPECT_NE(q.live().params().col(0), q.live().params().col(1));
}

TEST(CriticUpdate, RegressesTowardTargets) {
  EnvSpec env;
  Rng rng(16);
  AgentConfig cfg = config(TargetModeTag::kRavl, 4);
  cfg.eta = 1.0;
  cfg.critic_lr = 1e-3;
  SacAgent agent(cfg, env, rng);
  std::vector<Transition> t = random_transitions(64, rng);
  const Batch batch = make_batch(t);
  Mat<float> y(1, batch.size());
  for (Eigen::Index i = 0; i < y.cols(); ++i) y(0, i) = static_cast<float>(uniform(rng, 0, 5));
  const double first = agent.critic_update(batch, y).mse;
  double last = first;
  for (int step = 0; step < 300; ++step) last = agent.critic_update(batch, y).mse;
  EXPECT_LT(last, 0.25 * first);
}

TEST(CriticUpdate, NonFiniteTargetsThrow) {
  EnvSpec env;
  Rng rng(17);
  SacAgent agent(config(TargetModeTag::kBase, 2), env, rng);
  std::vector<Transition> t = random_transitions(4, rng);
  Mat<float> y = Mat<float>::Zero(1, 4);
  y(0, 2) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(agent.critic_update(make_batch(t), y), NonFiniteError);
}

TEST(ActorUpdate, ZeroLearningRateLeavesPolicy) {
  EnvSpec env;
  Rng rng(18);
  AgentConfig cfg = config(TargetModeTag::kBase, 2);
  cfg.actor_lr = 0.0;
  SacAgent agent(cfg, env, rng);
  const Vec<float> before = agent.policy().net().params();
  const Mat<float> critics = agent.q().live().params();
  std::vector<Transition> t = random_transitions(32, rng);
  agent.actor_update(make_batch(t), rng);
  EXPECT_EQ(agent.policy().net().params(), before);
  EXPECT_EQ(agent.q().live().params(), critics);
}

TEST(ActorUpdate, TemperatureMovesTowardTargetEntropy) {
  EnvSpec env;
  Rng rng(19);
  AgentConfig cfg = config(TargetModeTag::kBase, 2);
  cfg.actor_lr = 0.0;
  cfg.temperature_lr = 1e-2;
  cfg.target_entropy = 50.0;  // unreachable, so the temperature must rise
  SacAgent agent(cfg, env, rng);
  const double t0 = agent.temperature();
  std::vector<Transition> t = random_transitions(32, rng);
  for (int i = 0; i < 20; ++i) agent.actor_update(make_batch(t), rng);
  EXPECT_GT(agent.temperature(), t0);
}

TEST(AgentUpdate, FullStepKeepsEverythingFinite) {
  EnvSpec env;
  Rng rng(20);
  AgentConfig cfg = config(TargetModeTag::kRavl, 5);
  cfg.eta = 10.0;
  SacAgent agent(cfg, env, rng);
  std::vector<Transition> t = random_transitions(256, rng, 0.1);
  for (int i = 0; i < 20; ++i) {
    const UpdateStats st = agent.update(make_batch(t), rng);
    EXPECT_TRUE(std::isfinite(st.critic.loss));
    EXPECT_TRUE(std::isfinite(st.actor.loss));
    EXPECT_GE(st.critic.diversity, -1.0 - 1e-6);
    EXPECT_LE(st.critic.diversity, 1.0 + 1e-6);
  }
  EXPECT_NE(agent.q().target().params(), agent.q().live().params());
}

TEST(AgentUpdate, DeterministicGivenSeed) {
  EnvSpec env;
  auto run = [&env]() {
    Rng rng(21);
    SacAgent agent(config(TargetModeTag::kBase, 2), env, rng);
    Rng data(22);
    std::vector<Transition> t = random_transitions(64, data, 0.1);
    for (int i = 0; i < 10; ++i) agent.update(make_batch(t), rng);
    return agent.policy().net().params();
  };
  EXPECT_EQ(run(), run());
}

TEST(AgentCheckpoint, RoundTrip) {
  EnvSpec env;
  Rng rng(23);
  AgentConfig cfg = config(TargetModeTag::kRavl, 3);
  cfg.eta = 1.0;
  SacAgent a(cfg, env, rng);
  std::vector<Transition> t = random_transitions(64, rng, 0.1);
  for (int i = 0; i < 5; ++i) a.update(make_batch(t), rng);
  Checkpoint ckpt;
  a.save(ckpt);
  Rng other(99);
  SacAgent b(cfg, env, other);
  b.load(ckpt);
  const Batch batch = make_batch(t);
  EXPECT_EQ(a.q_values(batch.s, batch.a), b.q_values(batch.s, batch.a));
  EXPECT_EQ(a.q().target().params(), b.q().target().params());
  EXPECT_EQ(a.policy().net().params(), b.policy().net().params());
  EXPECT_DOUBLE_EQ(a.temperature(), b.temperature());
}

TEST(AgentConfigTest, Validation) {
  AgentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.critics = 1;
  cfg.eta = 1.0;
  cfg.tau = 2.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.fields().size(), 3u);
  }
  EXPECT_EQ(target_mode_from_name(target_mode_name(TargetModeTag::kOraclePatch)),
            TargetModeTag::kOraclePatch);
  EXPECT_THROW(target_mode_from_name("sac"), ConfigError);
}

TEST(MakeBatch, ColumnsFollowTransitions) {
  std::vector<Transition> t{Transition{{1, 2}, {0.5, -0.5}, 3, {1.5, 1.5}, true, 0, 0, 0}};
  const Batch b = make_batch(t);
  EXPECT_EQ(b.size(), 1);
  EXPECT_EQ(b.s(0, 0), 1.0f);
  EXPECT_EQ(b.s(1, 0), 2.0f);
  EXPECT_EQ(b.a(1, 0), -0.5f);
  EXPECT_EQ(b.r(0, 0), 3.0f);
  EXPECT_EQ(b.s_next(0, 0), 1.5f);
  EXPECT_EQ(b.done(0, 0), 1.0f);
  EXPECT_EQ(b.next_exact[0].y, 1.5);
}

}  // namespace
}  // namespace reachlab
