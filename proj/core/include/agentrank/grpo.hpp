#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "agentrank/reward.hpp"
#include "agentrank/rollout.hpp"

namespace agentrank {

struct GrpoConfig {
  int group_size = 8;          // rollouts per request
  double learning_rate = 0.05; // sized for the ~100-dim reference policy
  int batch_size = 64;         // requests per update
  int epochs = 3;
  int threads = 1;
  RewardConfig reward;
};

/// Per-group advantages: reward minus the group mean, nothing else (no
/// variance scaling, no clipping).  A group is kept only when its best
/// rollout reached a non-negative reward; all-negative groups are dropped
/// from the update entirely.
struct GroupAdvantages {
  std::vector<double> advantages;
  double mean_reward = 0.0;
  bool kept = false;
};

GroupAdvantages group_advantages(std::span<const double> rewards);

/// G sampled episodes for one request plus their rewards and advantages.
struct GroupRollout {
  std::vector<Trajectory> rollouts;
  std::vector<RewardBreakdown> rewards;
  GroupAdvantages adv;
};

GroupRollout rollout_group(const PolicyParams& params, const RequestEnv& env,
                           int group_size, std::uint64_t run_seed, int epoch,
                           const RewardConfig& reward_cfg);

/// (1/G) sum_g A_g * grad log pi(tau_g), reduced permutation-invariantly so
/// the result is bit-identical under any rollout ordering.
ParamVector group_gradient(const PolicyParams& params, const RequestEnv& env,
                           const GroupRollout& group);

/// Raw counters for one update (mergeable across batches/epochs).
struct BatchStats {
  int n_requests = 0;
  int n_kept = 0;
  int n_rollouts = 0;
  int n_valid = 0;
  int n_hit1 = 0;
  int n_hit10 = 0;
  int n_pos_reward = 0;       // rollouts with strictly positive reward
  int n_pos_reward_tool = 0;  // ... of those, how many used at least one tool
  double sum_reward = 0.0;
  double sum_n_tool = 0.0;
  double sum_update_norm = 0.0;  // norm of each applied (pre-lr) update
  int n_updates = 0;

  void merge(const BatchStats& other);

  double mean_reward() const;
  double kept_fraction() const;
  double valid_fraction() const;
  double hit1_fraction() const;
  double hit10_fraction() const;
  double mean_n_tool() const;
  /// Fraction of positively rewarded rollouts that invoked at least one
  /// tool; the tool-use dynamic tracked across training.
  double tool_rate_positive() const;

  json to_json() const;
};

/// One GRPO update over a batch of requests: sample groups, compute
/// advantages, average the kept groups' gradients, take an ascent step.
/// Bit-deterministic in (params, batch contents, epoch, run_seed) and
/// invariant to the order of requests inside the batch and to `threads`.
BatchStats grpo_step(PolicyParams& params,
                     std::span<RequestEnv* const> batch,
                     const GrpoConfig& cfg, int epoch, std::uint64_t run_seed);

struct EpochStats {
  int epoch = 0;
  BatchStats totals;
};

struct TrainResult {
  std::vector<EpochStats> history;
};

/// Stage-1 training: epochs over the train requests in a seeded shuffled
/// order, batched updates, per-epoch counters.  `on_epoch` (optional) runs
/// after each epoch, e.g. to evaluate or checkpoint.
TrainResult train_stage1(
    PolicyParams& params,
    std::span<const std::unique_ptr<RequestEnv>> train_envs,
    const GrpoConfig& cfg, std::uint64_t run_seed,
    const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace agentrank
