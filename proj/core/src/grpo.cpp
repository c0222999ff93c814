#include "agentrank/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "agentrank/errors.hpp"
#include "agentrank/numerics.hpp"
#include "agentrank/parallel.hpp"

namespace agentrank {

GroupAdvantages group_advantages(std::span<const double> rewards) {
  GroupAdvantages out;
  if (rewards.empty()) return out;
  out.mean_reward = stable_sum(rewards) / static_cast<double>(rewards.size());
  out.advantages.reserve(rewards.size());
  double best = rewards[0];
  for (double r : rewards) {
    out.advantages.push_back(r - out.mean_reward);
    best = std::max(best, r);
  }
  out.kept = best >= 0.0;
  return out;
}

GroupRollout rollout_group(const PolicyParams& params, const RequestEnv& env,
                           int group_size, std::uint64_t run_seed, int epoch,
                           const RewardConfig& reward_cfg) {
  if (group_size < 1) throw ContractError("rollout_group: group_size < 1");
  GroupRollout group;
  group.rollouts.reserve(group_size);
  group.rewards.reserve(group_size);
  std::vector<double> totals;
  totals.reserve(group_size);
  for (int g = 0; g < group_size; ++g) {
    Rng rng(rollout_seed(run_seed, epoch, env.request().uid, g));
    group.rollouts.push_back(rollout_sampled(params, env, rng));
    group.rewards.push_back(overall_reward(group.rollouts.back(),
                                           env.request().positive_index,
                                           reward_cfg));
    totals.push_back(group.rewards.back().total);
  }
  group.adv = group_advantages(totals);
  return group;
}

ParamVector group_gradient(const PolicyParams& params, const RequestEnv& env,
                           const GroupRollout& group) {
  const std::size_t g_count = group.rollouts.size();
  std::vector<std::vector<double>> flats;
  flats.reserve(g_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    ParamVector grad = params.theta;
    grad.scale(0.0);
    trajectory_logprob_and_grad(params, env.policy_ctx(), group.rollouts[g],
                                &grad);
    grad.scale(group.adv.advantages[g]);
    flats.push_back(grad.flatten());
  }
  return mean_param_vectors(params.theta, flats);
}

void BatchStats::merge(const BatchStats& other) {
  n_requests += other.n_requests;
  n_kept += other.n_kept;
  n_rollouts += other.n_rollouts;
  n_valid += other.n_valid;
  n_hit1 += other.n_hit1;
  n_hit10 += other.n_hit10;
  n_pos_reward += other.n_pos_reward;
  n_pos_reward_tool += other.n_pos_reward_tool;
  sum_reward += other.sum_reward;
  sum_n_tool += other.sum_n_tool;
  sum_update_norm += other.sum_update_norm;
  n_updates += other.n_updates;
}

namespace {
double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace

double BatchStats::mean_reward() const { return ratio(sum_reward, n_rollouts); }
double BatchStats::kept_fraction() const { return ratio(n_kept, n_requests); }
double BatchStats::valid_fraction() const { return ratio(n_valid, n_rollouts); }
double BatchStats::hit1_fraction() const { return ratio(n_hit1, n_rollouts); }
double BatchStats::hit10_fraction() const { return ratio(n_hit10, n_rollouts); }
double BatchStats::mean_n_tool() const { return ratio(sum_n_tool, n_rollouts); }
double BatchStats::tool_rate_positive() const {
  return ratio(n_pos_reward_tool, n_pos_reward);
}

json BatchStats::to_json() const {
  return json{{"n_requests", n_requests},
              {"n_kept", n_kept},
              {"n_rollouts", n_rollouts},
              {"mean_reward", mean_reward()},
              {"kept_fraction", kept_fraction()},
              {"valid_fraction", valid_fraction()},
              {"hit1_fraction", hit1_fraction()},
              {"hit10_fraction", hit10_fraction()},
              {"mean_n_tool", mean_n_tool()},
              {"tool_rate_positive", tool_rate_positive()},
              {"mean_update_norm", ratio(sum_update_norm, n_updates)}};
}

BatchStats grpo_step(PolicyParams& params,
                     std::span<RequestEnv* const> batch,
                     const GrpoConfig& cfg, int epoch,
                     std::uint64_t run_seed) {
  const std::size_t b = batch.size();
  std::vector<GroupRollout> groups(b);
  std::vector<ParamVector> grads(b);
  parallel_for(b, cfg.threads, [&](std::size_t i) {
    groups[i] = rollout_group(params, *batch[i], cfg.group_size, run_seed,
                              epoch, cfg.reward);
    if (groups[i].adv.kept) {
      grads[i] = group_gradient(params, *batch[i], groups[i]);
    }
  });

  BatchStats stats;
  std::vector<std::vector<double>> kept_flats;
  for (std::size_t i = 0; i < b; ++i) {
    const GroupRollout& group = groups[i];
    stats.n_requests += 1;
    if (group.adv.kept) {
      stats.n_kept += 1;
      kept_flats.push_back(grads[i].flatten());
    }
    for (std::size_t g = 0; g < group.rollouts.size(); ++g) {
      const Trajectory& t = group.rollouts[g];
      const RewardBreakdown& r = group.rewards[g];
      stats.n_rollouts += 1;
      stats.n_valid += r.valid ? 1 : 0;
      if (r.hit_rank) {
        stats.n_hit1 += *r.hit_rank == 1 ? 1 : 0;
        stats.n_hit10 += *r.hit_rank <= 10 ? 1 : 0;
      }
      stats.sum_reward += r.total;
      stats.sum_n_tool += t.n_tool;
      if (r.total > 0.0) {
        stats.n_pos_reward += 1;
        stats.n_pos_reward_tool += t.n_tool > 0 ? 1 : 0;
      }
    }
  }

  if (!kept_flats.empty()) {
    ParamVector update = mean_param_vectors(params.theta, kept_flats);
    stats.sum_update_norm = update.norm();
    stats.n_updates = 1;
    params.theta.add_scaled(update, cfg.learning_rate);
  } else {
    stats.n_updates = 1;  // a (zero) update still happened this batch
  }
  return stats;
}

TrainResult train_stage1(
    PolicyParams& params,
    std::span<const std::unique_ptr<RequestEnv>> train_envs,
    const GrpoConfig& cfg, std::uint64_t run_seed,
    const std::function<void(const EpochStats&)>& on_epoch) {
  if (cfg.batch_size < 1) throw ContractError("train_stage1: batch_size < 1");
  TrainResult result;
  std::vector<RequestEnv*> order;
  order.reserve(train_envs.size());
  for (const auto& env : train_envs) order.push_back(env.get());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(
        run_seed, {seed_tag::kShuffle, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    EpochStats es;
    es.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      es.totals.merge(grpo_step(
          params,
          std::span<RequestEnv* const>(order.data() + begin, end - begin),
          cfg, epoch, run_seed));
    }
    result.history.push_back(es);
    if (on_epoch) on_epoch(es);
  }
  return result;
}

}  // namespace agentrank
