#include "agentrank/ppr.hpp"

#include <algorithm>

#include "agentrank/errors.hpp"
#include "agentrank/numerics.hpp"
#include "agentrank/parallel.hpp"

namespace agentrank {

namespace {

constexpr std::uint64_t kPairShuffleTag = 9;

struct MiningSlot {
  bool violation = false;
  MinedPair pair;
  EvidenceState evidence;
};

}  // namespace

std::vector<int> hard_negative_pool(const std::vector<int>& ranking,
                                    int positive_index) {
  for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
    if (ranking[pos] == positive_index) {
      return std::vector<int>(ranking.begin(),
                              ranking.begin() + static_cast<long>(pos));
    }
  }
  return ranking;  // positive missing: the whole list beat it
}

MiningResult mine_hard_pairs(const PolicyParams& params,
                             std::span<const std::unique_ptr<RequestEnv>> envs,
                             std::uint64_t run_seed, int epoch, int threads) {
  std::vector<MiningSlot> slots(envs.size());
  parallel_for(envs.size(), threads, [&](std::size_t i) {
    const RequestEnv& env = *envs[i];
    MiningSlot& slot = slots[i];
    slot.evidence = full_evidence(env.policy_ctx());
    const RankSample decoded =
        greedy_ranking(params, env.policy_ctx(), slot.evidence);
    const int y = env.request().positive_index;
    const std::vector<int> hard = hard_negative_pool(decoded.ranking, y);
    if (hard.empty()) return;  // already on top; nothing to refine

    slot.violation = true;
    Rng rng(Rng::derive(run_seed, {seed_tag::kPairMine,
                                   static_cast<std::uint64_t>(epoch),
                                   env.request().uid}));
    const int neg = hard[rng.uniform_int(hard.size())];
    const bool flip = rng.uniform() < 0.5;
    slot.pair.env = &env;
    slot.pair.request_uid = env.request().uid;
    slot.pair.positive_index = y;
    slot.pair.negative_index = neg;
    slot.pair.item_a = flip ? neg : y;
    slot.pair.item_b = flip ? y : neg;
    slot.pair.h_size = static_cast<int>(hard.size());
    slot.pair.source_ranking = decoded.ranking;
  });

  MiningResult out;
  out.n_requests = static_cast<int>(envs.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].violation) continue;
    out.n_violations += 1;
    out.pairs.push_back(slots[i].pair);
  }
  return out;
}

json MinedPair::to_json() const {
  return json{{"request_uid", request_uid},
              {"c_plus", positive_index},
              {"c_minus", negative_index},
              {"item_a", item_a},
              {"item_b", item_b},
              {"h_size", h_size},
              {"source_ranking", source_ranking}};
}

std::vector<DirectionTask> make_direction_tasks(const MiningResult& mining) {
  std::vector<DirectionTask> tasks;
  tasks.reserve(mining.pairs.size() * 2);
  for (const MinedPair& pair : mining.pairs) {
    DirectionTask base;
    base.env = pair.env;
    base.evidence = full_evidence(pair.env->policy_ctx());
    base.request_uid = pair.env->request().uid;
    base.task.item_a = pair.item_a;
    base.task.item_b = pair.item_b;

    DirectionTask more = base;
    more.task.direction = PairDirection::kMore;
    more.task.target = pair.positive_index;
    more.direction_id = 0;
    tasks.push_back(std::move(more));

    DirectionTask less = std::move(base);
    less.task.direction = PairDirection::kLess;
    less.task.target = pair.negative_index;
    less.direction_id = 1;
    tasks.push_back(std::move(less));
  }
  return tasks;
}

void PprBatchStats::merge(const PprBatchStats& other) {
  n_tasks += other.n_tasks;
  n_choices += other.n_choices;
  n_correct += other.n_correct;
  sum_update_norm += other.sum_update_norm;
  n_updates += other.n_updates;
}

json PprBatchStats::to_json() const {
  return json{{"n_tasks", n_tasks},
              {"n_choices", n_choices},
              {"n_correct", n_correct},
              {"accuracy", accuracy()},
              {"mean_update_norm",
               n_updates > 0 ? sum_update_norm / n_updates : 0.0}};
}

PprBatchStats ppr_step(PolicyParams& params,
                       std::span<const DirectionTask> batch,
                       const PprConfig& cfg, int epoch,
                       std::uint64_t run_seed) {
  if (cfg.group_size < 1) throw ContractError("ppr_step: group_size < 1");
  const std::size_t b = batch.size();
  std::vector<ParamVector> grads(b);
  std::vector<int> correct(b, 0);
  parallel_for(b, cfg.threads, [&](std::size_t i) {
    const DirectionTask& dt = batch[i];
    const PolicyContext& ctx = dt.env->policy_ctx();
    std::vector<int> chosen(cfg.group_size);
    std::vector<double> rewards(cfg.group_size);
    for (int g = 0; g < cfg.group_size; ++g) {
      Rng rng(Rng::derive(run_seed,
                          {seed_tag::kPairSample,
                           static_cast<std::uint64_t>(epoch), dt.request_uid,
                           static_cast<std::uint64_t>(dt.direction_id),
                           static_cast<std::uint64_t>(g)}));
      const PairChoiceResult pick =
          pair_choice(params, ctx, dt.evidence, dt.task, rng);
      chosen[g] = pick.chosen;
      rewards[g] = pick.chosen == dt.task.target ? 1.0 : 0.0;
    }
    const GroupAdvantages adv = group_advantages(rewards);
    std::vector<std::vector<double>> flats;
    flats.reserve(cfg.group_size);
    for (int g = 0; g < cfg.group_size; ++g) {
      ParamVector grad = params.theta;
      grad.scale(0.0);
      pair_logprob_grad(params, ctx, dt.evidence, dt.task, chosen[g], &grad);
      grad.scale(adv.advantages[g]);
      flats.push_back(grad.flatten());
    }
    grads[i] = mean_param_vectors(params.theta, flats);
    for (int g = 0; g < cfg.group_size; ++g) {
      correct[i] += chosen[g] == dt.task.target ? 1 : 0;
    }
  });

  PprBatchStats stats;
  std::vector<std::vector<double>> flats;
  flats.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    stats.n_tasks += 1;
    stats.n_choices += cfg.group_size;
    stats.n_correct += correct[i];
    flats.push_back(grads[i].flatten());
  }
  if (!flats.empty()) {
    ParamVector update = mean_param_vectors(params.theta, flats);
    stats.sum_update_norm = update.norm();
    params.theta.add_scaled(update, cfg.learning_rate);
  }
  stats.n_updates = 1;
  return stats;
}

Stage2Result train_stage2(
    PolicyParams& params,
    std::span<const std::unique_ptr<RequestEnv>> train_envs,
    const PprConfig& cfg, std::uint64_t run_seed,
    const std::function<void(const Stage2EpochStats&)>& on_epoch) {
  if (cfg.batch_size < 1) throw ContractError("train_stage2: batch_size < 1");
  Stage2Result result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MiningResult mining =
        mine_hard_pairs(params, train_envs, run_seed, epoch, cfg.threads);
    std::vector<DirectionTask> tasks = make_direction_tasks(mining);
    Rng shuffle_rng(Rng::derive(
        run_seed, {kPairShuffleTag, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(tasks);

    Stage2EpochStats es;
    es.epoch = epoch;
    es.n_pairs = static_cast<int>(mining.pairs.size());
    es.violation_rate_start = mining.violation_rate();
    es.mining = mining;
    for (std::size_t begin = 0; begin < tasks.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          tasks.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      es.totals.merge(ppr_step(
          params, std::span<const DirectionTask>(tasks.data() + begin,
                                                 end - begin),
          cfg, epoch, run_seed));
    }
    result.history.push_back(es);
    if (on_epoch) on_epoch(es);
  }
  result.violation_rate_final =
      mine_hard_pairs(params, train_envs, run_seed, cfg.epochs, cfg.threads)
          .violation_rate();
  return result;
}

}  // namespace agentrank
