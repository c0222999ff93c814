#include "agentrank/metrics.hpp"

#include <algorithm>

#include "agentrank/errors.hpp"
#include "agentrank/numerics.hpp"
#include "agentrank/parallel.hpp"
#include "agentrank/reward.hpp"

namespace agentrank {

json EvalReport::to_json() const {
  json hits = json::object(), ndcgs = json::object();
  for (const auto& [k, v] : hit_at) hits["@" + std::to_string(k)] = v;
  for (const auto& [k, v] : ndcg_at) ndcgs["@" + std::to_string(k)] = v;
  return json{{"split", split},
              {"n_requests", n_requests},
              {"hit", hits},
              {"ndcg", ndcgs},
              {"invalid_rate", invalid_rate},
              {"mean_n_tool", mean_n_tool},
              {"tool_rate", tool_rate}};
}

EvalReport evaluate(const PolicyParams& params,
                    std::span<const std::unique_ptr<RequestEnv>> envs,
                    const std::string& split_name, const EvalOptions& options,
                    std::vector<Trajectory>* out_trajectories) {
  EvalReport report;
  report.split = split_name;
  report.n_requests = static_cast<int>(envs.size());

  std::vector<Trajectory> decoded(envs.size());
  parallel_for(envs.size(), options.threads, [&](std::size_t i) {
    decoded[i] = rollout_greedy(params, *envs[i]);
  });

  std::vector<double> invalid(envs.size()), n_tool(envs.size()),
      used_tool(envs.size());
  std::map<int, std::vector<double>> hit, gain;
  for (int k : options.ks) {
    hit[k].resize(envs.size());
    gain[k].resize(envs.size());
  }
  for (std::size_t i = 0; i < envs.size(); ++i) {
    const Trajectory& t = decoded[i];
    // hit_rank below never depends on the reward constants.
    const RewardBreakdown r =
        overall_reward(t, envs[i]->request().positive_index, RewardConfig{});
    invalid[i] = r.valid ? 0.0 : 1.0;
    n_tool[i] = t.n_tool;
    used_tool[i] = t.n_tool > 0 ? 1.0 : 0.0;
    for (int k : options.ks) {
      const bool in_k = r.hit_rank && *r.hit_rank <= k;
      hit[k][i] = in_k ? 1.0 : 0.0;
      gain[k][i] = in_k ? ndcg_single_relevant(*r.hit_rank) : 0.0;
    }
  }

  const double n = std::max<std::size_t>(1, envs.size());
  report.invalid_rate = stable_sum(invalid) / n;
  report.mean_n_tool = stable_sum(n_tool) / n;
  report.tool_rate = stable_sum(used_tool) / n;
  for (int k : options.ks) {
    report.hit_at[k] = stable_sum(hit[k]) / n;
    report.ndcg_at[k] = stable_sum(gain[k]) / n;
  }
  if (out_trajectories) {
    for (Trajectory& t : decoded) out_trajectories->push_back(std::move(t));
  }
  return report;
}

double uniform_policy_hit_at_k(int n_candidates, int k) {
  if (n_candidates < 1 || k < 0) {
    throw ContractError("uniform_policy_hit_at_k: bad arguments");
  }
  return static_cast<double>(std::min(k, n_candidates)) / n_candidates;
}

double uniform_policy_ndcg_at_k(int n_candidates, int k) {
  if (n_candidates < 1 || k < 0) {
    throw ContractError("uniform_policy_ndcg_at_k: bad arguments");
  }
  std::vector<double> terms;
  for (int r = 1; r <= std::min(k, n_candidates); ++r) {
    terms.push_back(ndcg_single_relevant(r));
  }
  return stable_sum(terms) / n_candidates;
}

json tool_usage_stats(std::span<const Trajectory> trajectories,
                      std::span<const double> rewards) {
  if (!rewards.empty() && rewards.size() != trajectories.size()) {
    throw ContractError(
        "tool_usage_stats: rewards must be empty or match the trajectories");
  }
  std::map<std::string, int> calls;
  int episodes_with_tool = 0, total_calls = 0, budget_exceeded = 0;
  int n_positive = 0, n_positive_tool = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& t = trajectories[i];
    if (t.n_tool > 0) ++episodes_with_tool;
    if (t.valid.reason == Verdict::kBudgetExceeded && !t.valid.is_valid) {
      ++budget_exceeded;
    }
    for (const Step& step : t.steps) {
      if (step.kind != Step::Kind::kAct) continue;
      calls[step.call.name] += 1;
      ++total_calls;
    }
    if (!rewards.empty() && rewards[i] > 0.0) {
      ++n_positive;
      n_positive_tool += t.n_tool > 0 ? 1 : 0;
    }
  }
  json per_tool = json::object();
  for (const auto& [name, count] : calls) per_tool[name] = count;
  const double n = std::max<std::size_t>(1, trajectories.size());
  json out{{"n_trajectories", trajectories.size()},
           {"total_tool_calls", total_calls},
           {"mean_tool_calls", total_calls / n},
           {"episodes_with_tool_rate", episodes_with_tool / n},
           {"budget_exceeded", budget_exceeded},
           {"calls_per_tool", per_tool}};
  if (!rewards.empty()) {
    // Undefined (null), not zero, when no trajectory earned a positive
    // reward — an empty denominator is not evidence of zero tool use.
    out["tool_rate_positive_reward"] =
        n_positive > 0 ? json(static_cast<double>(n_positive_tool) /
                              n_positive)
                       : json(nullptr);
    out["n_positive_reward"] = n_positive;
  }
  return out;
}

}  // namespace agentrank
