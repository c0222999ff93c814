#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "agentrank/rollout.hpp"

namespace agentrank {

struct EvalOptions {
  std::vector<int> ks = {1, 5, 10};
  int threads = 1;
};

/// Greedy-decode quality over one request set.  An invalid episode counts
/// as a miss at every cutoff.
struct EvalReport {
  std::string split;
  int n_requests = 0;
  std::map<int, double> hit_at;
  std::map<int, double> ndcg_at;
  double invalid_rate = 0.0;
  double mean_n_tool = 0.0;
  double tool_rate = 0.0;  // fraction of episodes with at least one tool call

  json to_json() const;
};

/// Evaluate with deterministic greedy decoding.  When `out_trajectories`
/// is given, the decoded episodes are appended in request order.
EvalReport evaluate(const PolicyParams& params,
                    std::span<const std::unique_ptr<RequestEnv>> envs,
                    const std::string& split_name, const EvalOptions& options,
                    std::vector<Trajectory>* out_trajectories = nullptr);

/// Closed forms for a uniformly random ranker over n candidates: the
/// positive lands at each rank with probability 1/n.
double uniform_policy_hit_at_k(int n_candidates, int k);
double uniform_policy_ndcg_at_k(int n_candidates, int k);

/// Tool-usage counters over recorded episodes: per-tool call counts plus
/// overall episode statistics.  When `rewards` is given (one per episode),
/// also reports the tool-use rate among positively rewarded episodes —
/// null, not zero, when there are no positives.
json tool_usage_stats(std::span<const Trajectory> trajectories,
                      std::span<const double> rewards = {});

}  // namespace agentrank
