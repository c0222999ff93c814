// Microbenchmarks for the training hot paths.  Each fixture owns a small
// synthetic world; sizes are chosen so a full pass stays in cache and the
// numbers reflect per-operation cost rather than memory traffic.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "agentrank/collab.hpp"
#include "agentrank/corpus.hpp"
#include "agentrank/grpo.hpp"
#include "agentrank/policy.hpp"
#include "agentrank/rollout.hpp"

namespace {

using namespace agentrank;

/// Shared synthetic world: 100 items, 60 users, 12-candidate requests.
struct BenchWorld {
  BenchWorld()
      : data(generate_synthetic(
            [] {
              SyntheticConfig c;
              c.num_items = 100;
              c.num_users = 60;
              c.num_categories = 8;
              c.sessions_per_user = 3;
              return c;
            }(),
            Rng::derive(99, {seed_tag::kData}))),
        split(chronological_split(data.catalog, data.stream, SplitRatios{},
                                  RequestOptions{12, 8, 1},
                                  Rng::derive(99, {seed_tag::kSplit}))),
        visible(data.stream.truncated_before(split.train_visible_end)),
        collab(CollabModel::fit(data.catalog, visible, CollabConfig{16, 20, 1.0, 0.01},
                                Rng::derive(99, {seed_tag::kCollab}))),
        registry(RegistryOptions{true, {}}) {
    world.catalog = &data.catalog;
    world.full = &data.stream;
    world.visible = &visible;
    world.collab = &collab;
    world.registry = &registry;
    world.loop.k = 6;
    world.loop.t_max = 6;
    world.loop.max_steps = 14;
    envs = build_envs(split.train, world);

    Rng rng(1234);
    params = random_params(registry, 0.5, rng);
  }

  SyntheticData data;
  DatasetSplit split;
  InteractionStream visible;
  CollabModel collab;
  ToolRegistry registry;
  World world;
  std::vector<std::unique_ptr<RequestEnv>> envs;
  PolicyParams params;
};

BenchWorld& bench_world() {
  static BenchWorld world;
  return world;
}

void BM_SampledRollout(benchmark::State& state) {
  BenchWorld& w = bench_world();
  const RequestEnv& env = *w.envs.front();
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(Rng::derive(42, {i++}));
    benchmark::DoNotOptimize(rollout_sampled(w.params, env, rng));
  }
}
BENCHMARK(BM_SampledRollout);

void BM_GreedyRollout(benchmark::State& state) {
  BenchWorld& w = bench_world();
  const RequestEnv& env = *w.envs.front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(rollout_greedy(w.params, env));
  }
}
BENCHMARK(BM_GreedyRollout);

void BM_RankingSampleAndGrad(benchmark::State& state) {
  BenchWorld& w = bench_world();
  const PolicyContext& ctx = w.envs.front()->policy_ctx();
  const EvidenceState ev = full_evidence(ctx);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(Rng::derive(43, {i++}));
    const RankSample sample = sample_ranking(w.params, ctx, ev, rng);
    ParamVector grad = w.params.theta;
    grad.scale(0.0);
    benchmark::DoNotOptimize(
        ranking_logprob_grad(w.params, ctx, ev, sample.ranking, &grad));
  }
}
BENCHMARK(BM_RankingSampleAndGrad);

void BM_TrajectoryReplayGrad(benchmark::State& state) {
  BenchWorld& w = bench_world();
  const RequestEnv& env = *w.envs.front();
  Rng rng(7);
  const Trajectory trajectory = rollout_sampled(w.params, env, rng);
  for (auto _ : state) {
    ParamVector grad = w.params.theta;
    grad.scale(0.0);
    benchmark::DoNotOptimize(trajectory_logprob_and_grad(
        w.params, env.policy_ctx(), trajectory, &grad));
  }
}
BENCHMARK(BM_TrajectoryReplayGrad);

void BM_GroupRollout(benchmark::State& state) {
  BenchWorld& w = bench_world();
  const RequestEnv& env = *w.envs.front();
  int epoch = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rollout_group(w.params, env, 8, 77, epoch++, RewardConfig{}));
  }
}
BENCHMARK(BM_GroupRollout);

void BM_GrpoStep(benchmark::State& state) {
  BenchWorld& w = bench_world();
  std::vector<RequestEnv*> batch;
  for (std::size_t i = 0; i < w.envs.size() && i < 16; ++i) {
    batch.push_back(w.envs[i].get());
  }
  GrpoConfig cfg;
  cfg.batch_size = static_cast<int>(batch.size());
  int epoch = 0;
  for (auto _ : state) {
    PolicyParams params = w.params;
    benchmark::DoNotOptimize(
        grpo_step(params, batch, cfg, epoch++, 78));
  }
}
BENCHMARK(BM_GrpoStep);

void BM_ToolInvoke(benchmark::State& state) {
  BenchWorld& w = bench_world();
  const RequestEnv& env = *w.envs.front();
  ToolCall call;
  call.name = "get_user_profile";
  for (auto _ : state) {
    benchmark::DoNotOptimize(w.registry.invoke(call, env.tool_ctx()));
  }
}
BENCHMARK(BM_ToolInvoke);

void BM_CollabFit(benchmark::State& state) {
  BenchWorld& w = bench_world();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        CollabModel::fit(w.data.catalog, w.visible, CollabConfig{16, 20, 1.0, 0.01},
                         Rng::derive(99, {seed_tag::kCollab})));
  }
}
BENCHMARK(BM_CollabFit);

}  // namespace

BENCHMARK_MAIN();
