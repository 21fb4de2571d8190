#include <benchmark/benchmark.h>

#include <vector>

#include "reachlab/agent.hpp"
#include "reachlab/dynamics.hpp"
#include "reachlab/trainer.hpp"

namespace reachlab {
namespace {

Batch sample_batch(const EnvSpec& env, int size, Rng& rng) {
  const Box2 box = reach_boxes(env).at(env.rollout_length);
  const std::vector<Transition> data = uniform_dataset(env, box, size, rng);
  return make_batch(data);
}

// One full agent update (critic, actor, temperature, Polyak) per iteration.
void BM_AgentUpdate(benchmark::State& state) {
  EnvSpec env;
  AgentConfig cfg;
  cfg.critics = static_cast<int>(state.range(0));
  cfg.mode = cfg.critics > 2 ? TargetModeTag::kRavl : TargetModeTag::kBase;
  cfg.eta = cfg.critics > 2 ? 1.0 : 0.0;
  Rng rng(1);
  SacAgent agent(cfg, env, rng);
  const Batch batch = sample_batch(env, cfg.batch_size, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(agent.update(batch, rng));
  }
  state.counters["critics"] = cfg.critics;
}
BENCHMARK(BM_AgentUpdate)->Arg(2)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_BellmanTargets(benchmark::State& state) {
  EnvSpec env;
  AgentConfig cfg;
  cfg.critics = static_cast<int>(state.range(0));
  Rng rng(2);
  SacAgent agent(cfg, env, rng);
  const Batch batch = sample_batch(env, cfg.batch_size, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(agent.bellman_targets(batch, rng));
  }
}
BENCHMARK(BM_BellmanTargets)->Arg(2)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_TrueModelStep(benchmark::State& state) {
  EnvSpec env;
  const DynamicsModel model = DynamicsModel::true_model(env);
  Rng rng(3);
  State2 s{0, 0};
  for (auto _ : state) {
    const ModelOutput out = model.predict(s, {0.1, -0.1}, rng);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_TrueModelStep);

}  // namespace
}  // namespace reachlab

BENCHMARK_MAIN();
