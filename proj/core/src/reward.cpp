#include "agentrank/reward.hpp"

#include <cmath>

#include "agentrank/errors.hpp"

namespace agentrank {

double ndcg_single_relevant(int rank) {
  if (rank < 1) throw ContractError("ndcg_single_relevant: rank must be >= 1");
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

json RewardBreakdown::to_json() const {
  json j{{"total", total},
         {"valid", valid},
         {"hit", hit},
         {"rank_component", rank_component},
         {"tool_bonus", tool_bonus}};
  j["hit_rank"] = hit_rank ? json(*hit_rank) : json(nullptr);
  return j;
}

RewardBreakdown overall_reward(const Trajectory& t, int positive_index,
                               const RewardConfig& cfg) {
  RewardBreakdown r;
  r.valid = t.valid.is_valid && t.ranking.has_value();
  if (!r.valid) {
    r.rank_component = cfg.invalid_penalty;
    r.total = r.rank_component;
    return r;
  }
  const std::vector<int>& ranking = *t.ranking;
  for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
    if (ranking[pos] == positive_index) {
      r.hit = true;
      r.hit_rank = static_cast<int>(pos) + 1;
      break;
    }
  }
  if (r.hit) {
    r.rank_component = ndcg_single_relevant(*r.hit_rank);
    if (*r.hit_rank == 1 && t.n_tool > 0) r.tool_bonus = cfg.tool_bonus;
  } else {
    r.rank_component = cfg.miss_penalty;
  }
  r.total = r.rank_component + r.tool_bonus;
  return r;
}

}  // namespace agentrank
