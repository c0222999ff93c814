#pragma once

#include <optional>

#include "agentrank/json_io.hpp"
#include "agentrank/trajectory.hpp"

namespace agentrank {

struct RewardConfig {
  double miss_penalty = -0.5;    // valid answer, positive outside the list
  double invalid_penalty = -1.0; // malformed / over-budget episodes
  double tool_bonus = 0.1;       // top-rank hit after at least one tool call
};

/// Gain of the single relevant item at 1-based `rank` in a top-k list with
/// binary relevance: 1/log2(rank+1).  The ideal list scores exactly 1, so
/// this discount is already the normalized value.
double ndcg_single_relevant(int rank);

struct RewardBreakdown {
  double total = 0.0;
  bool valid = false;
  bool hit = false;                // positive item appears in the ranking
  std::optional<int> hit_rank;     // its 1-based rank when hit
  double rank_component = 0.0;     // NDCG, miss penalty, or invalid penalty
  double tool_bonus = 0.0;

  json to_json() const;
};

/**
 * Episode reward:
 *   invalid                       -> invalid_penalty
 *   valid, positive not in top-k  -> miss_penalty
 *   valid, positive at rank p     -> 1/log2(p+1), plus tool_bonus when the
 *                                    hit is at rank 1 and the agent called
 *                                    at least one tool.
 * `positive_index` is the 1-based candidate index of the ground-truth item.
 */
RewardBreakdown overall_reward(const Trajectory& t, int positive_index,
                               const RewardConfig& cfg = {});

}  // namespace agentrank
