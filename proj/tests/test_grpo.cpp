#include <algorithm>
#include <cmath>
#include <vector>

#include "agentrank/grpo.hpp"
#include "agentrank/verify.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace agentrank;
using testsupport::SmallWorld;

TEST_CASE("advantages are reward minus the group mean, nothing else") {
  const std::vector<double> rewards{1.1, -1.0, -0.5, 0.5};
  const GroupAdvantages adv = group_advantages(rewards);

  CHECK(adv.mean_reward == doctest::Approx(0.025).epsilon(1e-12));
  REQUIRE(adv.advantages.size() == 4);
  CHECK(adv.advantages[0] == doctest::Approx(1.075).epsilon(1e-12));
  CHECK(adv.advantages[1] == doctest::Approx(-1.025).epsilon(1e-12));
  CHECK(adv.advantages[2] == doctest::Approx(-0.525).epsilon(1e-12));
  CHECK(adv.advantages[3] == doctest::Approx(0.475).epsilon(1e-12));
  CHECK(adv.kept);

  // Zero-sum within the group.
  double sum = 0.0;
  for (double a : adv.advantages) sum += a;
  CHECK(std::abs(sum) <= 1e-9);

  SUBCASE("identical rewards give identically zero advantages") {
    const GroupAdvantages flat = group_advantages(std::vector<double>{0.5, 0.5, 0.5});
    for (double a : flat.advantages) CHECK(a == doctest::Approx(0.0));
    CHECK(flat.kept);
  }
  SUBCASE("scaling rewards scales advantages linearly") {
    std::vector<double> doubled;
    for (double r : rewards) doubled.push_back(2.0 * r);
    const GroupAdvantages twice = group_advantages(doubled);
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      CHECK(twice.advantages[i] ==
            doctest::Approx(2.0 * adv.advantages[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("the drop rule keeps a group iff its best reward is non-negative") {
  CHECK_FALSE(group_advantages(std::vector<double>{-1.0, -1.0, -0.5, -0.5}).kept);
  CHECK(group_advantages(std::vector<double>{-1.0, 0.0}).kept);  // boundary
  CHECK(group_advantages(std::vector<double>{-1.0, -0.9, 1.0}).kept);
  CHECK_FALSE(group_advantages(std::vector<double>{-1e-12}).kept);
  CHECK_FALSE(group_advantages(std::vector<double>{}).kept);
}

TEST_CASE("a two-rollout group reduces to the textbook difference form") {
  TinyEnv tiny;
  Rng prng(17);
  const PolicyParams params = random_params(tiny.registry(), 0.5, prng);
  const RequestEnv& env = tiny.env();

  GroupRollout group = rollout_group(params, env, 2, /*run_seed=*/7,
                                     /*epoch=*/0, RewardConfig{});
  REQUIRE(group.rollouts.size() == 2);

  // Force a clean +-a advantage pattern.
  const double a = 0.6;
  group.adv.advantages = {a, -a};
  group.adv.kept = true;

  ParamVector g1 = params.theta, g2 = params.theta;
  g1.scale(0.0);
  g2.scale(0.0);
  trajectory_logprob_and_grad(params, env.policy_ctx(), group.rollouts[0], &g1);
  trajectory_logprob_and_grad(params, env.policy_ctx(), group.rollouts[1], &g2);

  const ParamVector update = group_gradient(params, env, group);
  const std::vector<double> flat = update.flatten();
  const std::vector<double> f1 = g1.flatten(), f2 = g2.flatten();
  for (std::size_t c = 0; c < flat.size(); ++c) {
    // (1/2)(a g1 - a g2) = a (g1 - g2) / 2
    CHECK(flat[c] ==
          doctest::Approx(a * (f1[c] - f2[c]) / 2.0).epsilon(1e-12));
  }

  SUBCASE("zero advantages produce a zero update") {
    group.adv.advantages = {0.0, 0.0};
    CHECK(group_gradient(params, env, group).norm() == 0.0);
  }
}

TEST_CASE("group gradients ignore rollout order bit-for-bit") {
  TinyEnv tiny;
  Rng prng(29);
  const PolicyParams params = random_params(tiny.registry(), 0.5, prng);
  const RequestEnv& env = tiny.env();

  GroupRollout group =
      rollout_group(params, env, 6, /*run_seed=*/21, /*epoch=*/1, RewardConfig{});
  const ParamVector forward = group_gradient(params, env, group);

  // Reverse every parallel array consistently.
  GroupRollout reversed;
  reversed.rollouts.assign(group.rollouts.rbegin(), group.rollouts.rend());
  reversed.rewards.assign(group.rewards.rbegin(), group.rewards.rend());
  reversed.adv = group.adv;
  std::reverse(reversed.adv.advantages.begin(), reversed.adv.advantages.end());

  const ParamVector backward = group_gradient(params, env, reversed);
  CHECK(forward.flatten() == backward.flatten());  // bitwise
}

TEST_CASE("rollout groups are seeded per request and rollout index") {
  TinyEnv tiny;
  const PolicyParams params = PolicyParams::zero(tiny.registry());
  const RequestEnv& env = tiny.env();

  const GroupRollout a =
      rollout_group(params, env, 4, 11, 0, RewardConfig{});
  const GroupRollout b =
      rollout_group(params, env, 4, 11, 0, RewardConfig{});
  REQUIRE(a.rollouts.size() == 4);
  for (std::size_t g = 0; g < 4; ++g) {
    CHECK(a.rollouts[g].to_json().dump() == b.rollouts[g].to_json().dump());
    CHECK(a.rewards[g].total == b.rewards[g].total);
  }

  // Different epochs draw different randomness.
  const GroupRollout c =
      rollout_group(params, env, 4, 11, 1, RewardConfig{});
  bool any_diff = false;
  for (std::size_t g = 0; g < 4; ++g) {
    if (a.rollouts[g].to_json() != c.rollouts[g].to_json()) any_diff = true;
  }
  CHECK(any_diff);

  // Seeds do not depend on batch position: rollout_seed is a pure function
  // of (run_seed, epoch, uid, g).
  CHECK(rollout_seed(11, 0, env.request().uid, 2) ==
        rollout_seed(11, 0, env.request().uid, 2));
  CHECK(rollout_seed(11, 0, env.request().uid, 2) !=
        rollout_seed(11, 0, env.request().uid, 3));
}

TEST_CASE("grpo_step is invariant to batch order and thread count") {
  SmallWorld sw;
  REQUIRE(sw.train().size() >= 8);
  std::vector<RequestEnv*> batch;
  for (std::size_t i = 0; i < 8; ++i) batch.push_back(sw.train()[i].get());

  GrpoConfig cfg;
  cfg.group_size = 4;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 8;
  cfg.threads = 1;

  Rng prng(43);
  const PolicyParams start = random_params(sw.registry(), 0.2, prng);

  PolicyParams p1 = start;
  const BatchStats s1 = grpo_step(p1, batch, cfg, 0, 99);

  std::vector<RequestEnv*> shuffled = batch;
  std::reverse(shuffled.begin(), shuffled.end());
  PolicyParams p2 = start;
  const BatchStats s2 = grpo_step(p2, shuffled, cfg, 0, 99);
  CHECK(p1.theta.flatten() == p2.theta.flatten());  // bitwise

  GrpoConfig threaded = cfg;
  threaded.threads = 3;
  PolicyParams p3 = start;
  const BatchStats s3 = grpo_step(p3, batch, threaded, 0, 99);
  CHECK(p1.theta.flatten() == p3.theta.flatten());

  // Counters agree too (order-free aggregation).
  CHECK(s1.n_rollouts == 8 * 4);
  CHECK(s1.n_rollouts == s2.n_rollouts);
  CHECK(s1.n_kept == s2.n_kept);
  CHECK(s1.n_kept == s3.n_kept);
  CHECK(s1.sum_reward == doctest::Approx(s2.sum_reward).epsilon(1e-12));

  // The step actually moved the parameters.
  CHECK(p1.theta.flatten() != start.theta.flatten());
}

TEST_CASE("training counters aggregate the documented ratios") {
  BatchStats stats;
  stats.n_requests = 10;
  stats.n_kept = 8;
  stats.n_rollouts = 40;
  stats.n_valid = 36;
  stats.n_hit1 = 9;
  stats.n_hit10 = 20;
  stats.n_pos_reward = 5;
  stats.n_pos_reward_tool = 4;
  stats.sum_reward = 10.0;
  stats.sum_n_tool = 55.0;

  CHECK(stats.mean_reward() == doctest::Approx(0.25));
  CHECK(stats.kept_fraction() == doctest::Approx(0.8));
  CHECK(stats.valid_fraction() == doctest::Approx(0.9));
  CHECK(stats.hit1_fraction() == doctest::Approx(0.225));
  CHECK(stats.mean_n_tool() == doctest::Approx(1.375));
  // 5 rollouts with positive reward, 4 of them used tools: rate 0.8.
  CHECK(stats.tool_rate_positive() == doctest::Approx(0.8));

  BatchStats other = stats;
  stats.merge(other);
  CHECK(stats.n_rollouts == 80);
  CHECK(stats.n_pos_reward == 10);
  CHECK(stats.tool_rate_positive() == doctest::Approx(0.8));

  SUBCASE("no positive rewards: the rate is undefined, reported as NaN-free zero") {
    BatchStats empty;
    CHECK(empty.tool_rate_positive() == 0.0);
    CHECK(std::isfinite(empty.mean_reward()));
  }
}

TEST_CASE("stage-1 training is deterministic and tracks per-epoch history") {
  SmallWorld sw;
  const std::size_t take = std::min<std::size_t>(sw.train().size(), 24);
  std::vector<std::unique_ptr<RequestEnv>> subset;
  for (std::size_t i = 0; i < take; ++i) {
    subset.push_back(std::make_unique<RequestEnv>(sw.train()[i]->request(),
                                                  sw.world()));
  }

  GrpoConfig cfg;
  cfg.group_size = 4;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.threads = 2;

  PolicyParams p1 = PolicyParams::zero(sw.registry());
  std::vector<int> epochs_seen;
  const TrainResult r1 = train_stage1(
      p1, subset, cfg, 2024, [&](const EpochStats& es) {
        epochs_seen.push_back(es.epoch);
      });

  REQUIRE(r1.history.size() == 2);
  CHECK(epochs_seen == std::vector<int>{0, 1});
  for (const EpochStats& es : r1.history) {
    CHECK(es.totals.n_requests == static_cast<int>(take));
    CHECK(es.totals.n_rollouts == static_cast<int>(take) * 4);
    CHECK(es.totals.n_updates >= 1);
  }

  PolicyParams p2 = PolicyParams::zero(sw.registry());
  const TrainResult r2 = train_stage1(p2, subset, cfg, 2024);
  CHECK(p1.theta.flatten() == p2.theta.flatten());  // bitwise reproducible

  PolicyParams p3 = PolicyParams::zero(sw.registry());
  train_stage1(p3, subset, cfg, 2025);
  CHECK(p1.theta.flatten() != p3.theta.flatten());  // the seed matters
}
