#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "agentrank/grpo.hpp"
#include "agentrank/rollout.hpp"

namespace agentrank {

struct PprConfig {
  int group_size = 8;          // sampled answers per direction task
  double learning_rate = 0.5;
  int batch_size = 32;         // direction tasks per update
  int epochs = 1;
  int threads = 1;
};

/// One mined (positive, hard negative) pair with its randomized A/B slot
/// assignment.  Both direction tasks for the pair share the assignment, so
/// a policy cannot score well by position alone.
struct MinedPair {
  const RequestEnv* env = nullptr;
  std::uint64_t request_uid = 0;
  int positive_index = 0;  // ground-truth candidate (1-based)
  int negative_index = 0;  // candidate ranked above it (or in its place)
  int item_a = 0;          // option A after the coin flip
  int item_b = 0;          // option B
  int h_size = 0;          // size of the hard-negative pool it was drawn from
  std::vector<int> source_ranking;  // the violating decoded list

  json to_json() const;
};

struct MiningResult {
  std::vector<MinedPair> pairs;
  int n_requests = 0;
  int n_violations = 0;  // positive not at rank 1 under the mining decode

  /// Fraction of requests whose full-evidence greedy ranking does not put
  /// the positive item first.
  double violation_rate() const {
    return n_requests > 0
               ? static_cast<double>(n_violations) / n_requests
               : 0.0;
  }
};

/**
 * Hard-negative pool for a decoded ranking: the candidates placed strictly
 * above the positive, or the entire emitted list when the positive is
 * missing.  Empty exactly when the positive is already at rank 1.
 */
std::vector<int> hard_negative_pool(const std::vector<int>& ranking,
                                    int positive_index);

/**
 * Mining pass: decode each request greedily with full tool evidence; when
 * the positive is not ranked first, pick one hard negative uniformly from
 * its hard-negative pool and flip a coin for the A/B slots.
 */
MiningResult mine_hard_pairs(const PolicyParams& params,
                             std::span<const std::unique_ptr<RequestEnv>> envs,
                             std::uint64_t run_seed, int epoch, int threads);

/// A pair probe in one direction, with the evidence snapshot it is asked
/// under (evidence is parameter-free, so mining-time snapshots stay valid).
struct DirectionTask {
  const RequestEnv* env = nullptr;
  EvidenceState evidence;
  PairTask task;
  std::uint64_t request_uid = 0;
  int direction_id = 0;  // 0 = More, 1 = Less
};

/// Two direction tasks per mined pair (More and Less), sharing the pair's
/// A/B assignment.
std::vector<DirectionTask> make_direction_tasks(const MiningResult& mining);

struct PprBatchStats {
  int n_tasks = 0;
  int n_choices = 0;
  int n_correct = 0;
  double sum_update_norm = 0.0;
  int n_updates = 0;

  void merge(const PprBatchStats& other);
  double accuracy() const {
    return n_choices > 0 ? static_cast<double>(n_correct) / n_choices : 0.0;
  }
  json to_json() const;
};

/// One group-relative update over a batch of direction tasks: sample
/// group_size answers per task with a binary correctness reward, subtract
/// the group mean, average the task gradients, step.
PprBatchStats ppr_step(PolicyParams& params,
                       std::span<const DirectionTask> batch,
                       const PprConfig& cfg, int epoch,
                       std::uint64_t run_seed);

struct Stage2EpochStats {
  int epoch = 0;
  int n_pairs = 0;
  double violation_rate_start = 0.0;  // measured by this epoch's mining pass
  MiningResult mining;                // the pairs this epoch trained on
  PprBatchStats totals;
};

struct Stage2Result {
  std::vector<Stage2EpochStats> history;
  double violation_rate_final = 0.0;  // fresh mining decode after training
};

/// Stage-2 refinement: per epoch, mine pairs from the current parameters,
/// train on the shuffled direction tasks, and finally re-measure the
/// violation rate with a fresh mining decode.
Stage2Result train_stage2(
    PolicyParams& params,
    std::span<const std::unique_ptr<RequestEnv>> train_envs,
    const PprConfig& cfg, std::uint64_t run_seed,
    const std::function<void(const Stage2EpochStats&)>& on_epoch = {});

}  // namespace agentrank
