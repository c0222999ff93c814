#include "agentrank/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "agentrank/errors.hpp"
#include "agentrank/numerics.hpp"
#include "agentrank/reward.hpp"

namespace agentrank {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kZSentinel = 9e99;  // zero-SE coordinate that misses its target

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return std::string(buf);
}

double* param_coord(ParamVector& theta, std::size_t c) {
  if (c < theta.action.size()) return &theta.action[c];
  c -= theta.action.size();
  if (c < theta.score.size()) return &theta.score[c];
  c -= theta.score.size();
  return &theta.pair[c];
}

double l2_norm(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  return dot(a, b) / (na * nb);
}

/// Streaming per-coordinate mean/variance (Welford), fixed insertion order.
struct WelfordVec {
  std::size_t n = 0;
  std::vector<double> mean, m2;

  explicit WelfordVec(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}

  void add(std::span<const double> x) {
    ++n;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      const double d = x[c] - mean[c];
      mean[c] += d / static_cast<double>(n);
      m2[c] += d * (x[c] - mean[c]);
    }
  }

  double se(std::size_t c) const {
    if (n < 2) return 0.0;
    const double var = m2[c] / static_cast<double>(n - 1);
    return std::sqrt(var / static_cast<double>(n));
  }
};

/// All length-k ordered selections from {1..n}.
void enumerate_rankings(int n, int k, std::vector<int>& current,
                        std::vector<bool>& used,
                        std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == k) {
    out.push_back(current);
    return;
  }
  for (int i = 1; i <= n; ++i) {
    if (used[i]) continue;
    used[i] = true;
    current.push_back(i);
    enumerate_rankings(n, k, current, used, out);
    current.pop_back();
    used[i] = false;
  }
}

json think_note() {
  return json{{"plan", "gather evidence with tools, then rank the candidates"}};
}

}  // namespace

// ---- TinyEnv ----------------------------------------------------------------

TinyEnv::TinyEnv(TinyEnvOptions options) : options_(std::move(options)) {
  std::vector<Item> items(3);
  items[0] = {"TINY-A", "Alpha Widget", {"Gadgets"}, 10.0, 4.6, 150};
  items[1] = {"TINY-B", "Beta Widget", {"Gadgets"}, 12.5, 3.9, 80};
  items[2] = {"TINY-C", "Gamma Doodad", {"Trinkets"}, 24.0, 4.2, 12};
  catalog_ = Catalog(std::move(items));

  std::vector<Interaction> events{
      {"U1", "TINY-A", 100, 5.0},   {"U1", "TINY-B", 4000, 4.0},
      {"U1", "TINY-C", 90000, {}},  {"U2", "TINY-A", 150, 4.0},
      {"U2", "TINY-B", 4100, 5.0},  {"U2", "TINY-C", 90500, 3.0},
  };
  full_ = InteractionStream(std::move(events));
  visible_ = full_.truncated_before(90000);  // the third item stays cold

  CollabConfig collab_cfg;
  collab_cfg.dim = 2;
  collab_cfg.iterations = 25;
  collab_ = CollabModel::fit(catalog_, visible_, collab_cfg, 7);

  RegistryOptions reg_opts;
  reg_opts.collab_enabled = true;
  reg_opts.allowlist = options_.allowlist;
  registry_ = ToolRegistry(reg_opts);

  request_.user_id = "U1";
  request_.history = {"TINY-A", "TINY-B"};
  request_.candidates = {"TINY-B", "TINY-C", "TINY-A"};
  request_.positive_index = 2;  // TINY-C, the user's actual next item
  request_.split_tag = SplitTag::kTrain;
  request_.target_timestamp = 90000;
  request_.target_pos = 2;
  request_.uid = Rng::derive(Rng::hash_str("U1"), {2});

  world_.catalog = &catalog_;
  world_.full = &full_;
  world_.visible = &visible_;
  world_.collab = &collab_;
  world_.profiles = nullptr;
  world_.registry = &registry_;
  world_.loop.k = options_.k;
  world_.loop.t_max = options_.t_max;
  world_.loop.max_steps = 2 * options_.t_max + 2;
  env_ = std::make_unique<RequestEnv>(request_, world_);
}

// ---- enumeration -------------------------------------------------------------

std::vector<Trajectory> enumerate_trajectories(const PolicyParams& params,
                                               const RequestEnv& env) {
  const PolicyContext& ctx = env.policy_ctx();
  const int n = ctx.features.n;
  const int k = ctx.k;
  const int t_max = ctx.t_max;
  const int n_tools = static_cast<int>(ctx.registry->size());

  std::vector<std::vector<int>> rankings;
  {
    std::vector<int> current;
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    enumerate_rankings(n, k, current, used, rankings);
  }

  std::vector<Trajectory> out;
  Trajectory base;
  base.request_uid = env.request().uid;
  base.user_id = env.request().user_id;
  base.n_candidates = n;
  base.k = k;
  {
    Step think;
    think.kind = Step::Kind::kThink;
    think.think_note = think_note();
    think.logprob = 0.0;
    base.steps.push_back(std::move(think));
  }

  // Depth-first over ordered subsets of distinct tools; every prefix can
  // finish with any ranking, and past the budget every remaining tool choice
  // yields one recorded-but-cut episode.
  auto finish = [&](const Trajectory& prefix) {
    for (const std::vector<int>& ranking : rankings) {
      Trajectory t = prefix;
      Step rank;
      rank.kind = Step::Kind::kRank;
      rank.ranking = ranking;
      t.steps.push_back(std::move(rank));
      t.ranking = ranking;
      t.valid = validate(t, n, k, t_max);
      t.total_logprob =
          trajectory_logprob_and_grad(params, ctx, t, nullptr);
      out.push_back(std::move(t));
    }
  };

  std::function<void(Trajectory&, EvidenceState&)> recurse =
      [&](Trajectory& prefix, EvidenceState& ev) {
        finish(prefix);
        for (int tool = 0; tool < n_tools; ++tool) {
          if (ev.tool_invoked(tool)) continue;
          Trajectory t = prefix;
          Step act;
          act.kind = Step::Kind::kAct;
          act.call = default_tool_call(params, ctx, ev, tool);
          t.n_tool = prefix.n_tool + 1;
          if (prefix.n_tool == t_max) {
            // Budget-cut branch: the decision is recorded, nothing executes.
            t.steps.push_back(std::move(act));
            t.valid = validate(t, n, k, t_max);
            t.total_logprob =
                trajectory_logprob_and_grad(params, ctx, t, nullptr);
            out.push_back(std::move(t));
            continue;
          }
          const Observation obs =
              ctx.registry->invoke(act.call, *ctx.tool_ctx);
          Step obs_step;
          obs_step.kind = Step::Kind::kObs;
          obs_step.observation = obs;
          obs_step.masked = true;
          t.steps.push_back(act);
          t.steps.push_back(std::move(obs_step));
          EvidenceState next = ev;
          absorb_observation(next, ctx, act.call, obs);
          recurse(t, next);
        }
      };

  EvidenceState ev;
  recurse(base, ev);
  return out;
}

ExactGradient exact_policy_gradient(
    const PolicyParams& params, const RequestEnv& env,
    const std::function<double(const Trajectory&)>& reward) {
  ExactGradient out;
  out.grad = params.theta;
  out.grad.scale(0.0);
  const std::vector<Trajectory> trajectories =
      enumerate_trajectories(params, env);
  for (const Trajectory& t : trajectories) {
    ParamVector g = params.theta;
    g.scale(0.0);
    const double lp =
        trajectory_logprob_and_grad(params, env.policy_ctx(), t, &g);
    const double w = std::exp(lp);
    const double r = reward(t);
    out.total_probability += w;
    out.j += w * r;
    out.grad.add_scaled(g, w * r);
  }
  return out;
}

// ---- enumeration self-checks ---------------------------------------------------

json EnumerationReport::to_json() const {
  return json{{"param_draws", param_draws},
              {"n_trajectories", n_trajectories},
              {"max_probability_gap", max_probability_gap},
              {"j_fd_max_rel_err", j_fd_max_rel_err},
              {"pass", pass}};
}

EnumerationReport check_enumeration(int param_draws, std::uint64_t seed) {
  TinyEnv tiny;
  const RequestEnv& env = tiny.env();
  const int positive = env.request().positive_index;
  const auto reward = [positive](const Trajectory& t) {
    return overall_reward(t, positive).total;
  };

  EnumerationReport report;
  report.param_draws = param_draws;
  const double h = 1e-5;
  for (int d = 0; d < param_draws; ++d) {
    Rng rng(Rng::derive(seed, {static_cast<std::uint64_t>(d)}));
    PolicyParams params = random_params(tiny.registry(), 0.5, rng);
    const ExactGradient exact = exact_policy_gradient(params, env, reward);
    report.n_trajectories =
        static_cast<int>(enumerate_trajectories(params, env).size());
    report.max_probability_gap = std::max(
        report.max_probability_gap, std::fabs(1.0 - exact.total_probability));

    const std::vector<double> flat = exact.grad.flatten();
    for (std::size_t c = 0; c < flat.size(); ++c) {
      PolicyParams plus = params, minus = params;
      *param_coord(plus.theta, c) += h;
      *param_coord(minus.theta, c) -= h;
      const double fd = (exact_policy_gradient(plus, env, reward).j -
                         exact_policy_gradient(minus, env, reward).j) /
                        (2.0 * h);
      const double rel =
          std::fabs(fd - flat[c]) / std::max(1.0, std::fabs(flat[c]));
      report.j_fd_max_rel_err = std::max(report.j_fd_max_rel_err, rel);
    }
  }
  report.pass =
      report.max_probability_gap < 1e-10 && report.j_fd_max_rel_err < 1e-6;
  return report;
}

// ---- unbiasedness ---------------------------------------------------------------

json UnbiasednessReport::to_json() const {
  return json{{"seed", seed},
              {"group_size", group_size},
              {"groups", groups},
              {"expected_scale", expected_scale},
              {"exact_grad", exact_grad},
              {"estimate_mean", estimate_mean},
              {"estimate_se", estimate_se},
              {"z_scores", z_scores},
              {"cosine", cosine},
              {"max_abs_z", max_abs_z},
              {"baseline_norm", baseline_norm},
              {"baseline_se_norm", baseline_se_norm},
              {"baseline_max_abs_z", baseline_max_abs_z},
              {"j", j},
              {"total_probability", total_probability},
              {"pass_cosine", pass_cosine},
              {"pass_z", pass_z},
              {"pass_baseline", pass_baseline},
              {"pass", pass}};
}

UnbiasednessReport check_unbiasedness(const RequestEnv& env,
                                      const PolicyParams& params,
                                      int group_size, int groups,
                                      std::uint64_t seed, int threads) {
  if (group_size < 2) throw ContractError("check_unbiasedness: G must be >= 2");
  if (groups < 1000) throw ContractError("check_unbiasedness: M must be >= 1000");
  (void)threads;  // statistics are streamed in a fixed order

  const int positive = env.request().positive_index;
  const auto reward = [positive](const Trajectory& t) {
    return overall_reward(t, positive).total;
  };
  const ExactGradient exact = exact_policy_gradient(params, env, reward);
  const std::vector<double> exact_flat = exact.grad.flatten();
  const std::size_t dim = exact_flat.size();

  UnbiasednessReport report;
  report.seed = seed;
  report.group_size = group_size;
  report.groups = groups;
  report.expected_scale =
      static_cast<double>(group_size - 1) / static_cast<double>(group_size);
  report.exact_grad = exact_flat;
  report.j = exact.j;
  report.total_probability = exact.total_probability;

  WelfordVec est_stats(dim);
  WelfordVec base_stats(dim);
  std::vector<std::vector<double>> grads(group_size);
  std::vector<double> rewards(group_size);
  std::vector<double> estimate(dim);
  for (int m = 0; m < groups; ++m) {
    for (int g = 0; g < group_size; ++g) {
      Rng rng(Rng::derive(seed, {seed_tag::kVerify,
                                 static_cast<std::uint64_t>(m),
                                 static_cast<std::uint64_t>(g)}));
      const Trajectory t = rollout_sampled(params, env, rng);
      ParamVector grad = params.theta;
      grad.scale(0.0);
      trajectory_logprob_and_grad(params, env.policy_ctx(), t, &grad);
      grads[g] = grad.flatten();
      rewards[g] = reward(t);
      base_stats.add(grads[g]);
    }
    double mean_r = 0.0;
    for (double r : rewards) mean_r += r;
    mean_r /= group_size;
    std::fill(estimate.begin(), estimate.end(), 0.0);
    for (int g = 0; g < group_size; ++g) {
      const double a = (rewards[g] - mean_r) / group_size;
      for (std::size_t c = 0; c < dim; ++c) estimate[c] += a * grads[g][c];
    }
    est_stats.add(estimate);
  }

  report.estimate_mean = est_stats.mean;
  report.estimate_se.resize(dim);
  report.z_scores.resize(dim);
  double base_se_sq = 0.0;
  std::vector<double> base_z(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    report.estimate_se[c] = est_stats.se(c);
    const double diff =
        est_stats.mean[c] - report.expected_scale * exact_flat[c];
    report.z_scores[c] = report.estimate_se[c] > 0.0
                             ? diff / report.estimate_se[c]
                             : (diff == 0.0 ? 0.0 : kZSentinel);
    report.max_abs_z =
        std::max(report.max_abs_z, std::fabs(report.z_scores[c]));

    const double bse = base_stats.se(c);
    base_se_sq += bse * bse;
    base_z[c] = bse > 0.0 ? base_stats.mean[c] / bse
                          : (base_stats.mean[c] == 0.0 ? 0.0 : kZSentinel);
    report.baseline_max_abs_z =
        std::max(report.baseline_max_abs_z, std::fabs(base_z[c]));
  }
  report.cosine = cosine_similarity(report.estimate_mean, exact_flat);
  report.baseline_norm = l2_norm(base_stats.mean);
  report.baseline_se_norm = std::sqrt(base_se_sq);

  report.pass_cosine = report.cosine >= 0.99;
  report.pass_z = report.max_abs_z <= 4.0;
  report.pass_baseline = report.baseline_norm <= 4.0 * report.baseline_se_norm;
  report.pass = report.pass_cosine && report.pass_z && report.pass_baseline;
  return report;
}

// ---- logistic bound --------------------------------------------------------------

json LogisticBoundReport::to_json() const {
  return json{{"grid_points", grid_points},
              {"lo", lo},
              {"hi", hi},
              {"step", step},
              {"bound_violations", bound_violations},
              {"min_bound_margin", min_bound_margin},
              {"convexity_violations", convexity_violations},
              {"min_second_difference", min_second_difference},
              {"route_cases", route_cases},
              {"max_route_gap", max_route_gap},
              {"pass", pass}};
}

LogisticBoundReport check_logistic_bound(double lo, double hi, double step,
                                         int route_cases, std::uint64_t seed) {
  if (!(step > 0.0) || !(hi > lo)) {
    throw ContractError("check_logistic_bound: bad grid");
  }
  LogisticBoundReport report;
  report.lo = lo;
  report.hi = hi;
  report.step = step;
  report.grid_points = static_cast<int>(std::llround((hi - lo) / step)) + 1;

  std::vector<double> loss(report.grid_points);
  report.min_bound_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < report.grid_points; ++i) {
    const double ds = lo + i * step;
    loss[i] = 2.0 * softplus(-ds);
    // The bound: the loss dominates ln2 * 1[ds < 0] (a misordered pair).
    const double floor_value = ds < 0.0 ? kLn2 : 0.0;
    if (loss[i] < floor_value) report.bound_violations += 1;
    if (ds < 0.0) {
      report.min_bound_margin =
          std::min(report.min_bound_margin, loss[i] - kLn2);
    }
  }
  report.min_second_difference = std::numeric_limits<double>::infinity();
  for (int i = 1; i + 1 < report.grid_points; ++i) {
    const double d2 = loss[i - 1] - 2.0 * loss[i] + loss[i + 1];
    report.min_second_difference = std::min(report.min_second_difference, d2);
    if (d2 < -1e-12) report.convexity_violations += 1;
  }

  // Route equality on live pair-head scores: the bidirectional loss summed
  // from the two direction probes equals 2*softplus(-ds) for the head's own
  // score gap ds (the Less probe negates scores, so both probes are
  // sigmoid(ds) for the correct answers).
  TinyEnv tiny;
  const PolicyContext& ctx = tiny.env().policy_ctx();
  const EvidenceState ev = full_evidence(ctx);
  const int n = ctx.features.n;
  report.route_cases = route_cases;
  for (int c = 0; c < route_cases; ++c) {
    Rng rng(Rng::derive(seed, {0xB1, static_cast<std::uint64_t>(c)}));
    const PolicyParams params = random_params(tiny.registry(), 0.8, rng);
    const int a = 1 + static_cast<int>(rng.uniform_int(n));
    int b = 1 + static_cast<int>(rng.uniform_int(n - 1));
    if (b >= a) ++b;

    double psi_a[kScoreFeatureCount], psi_b[kScoreFeatureCount];
    candidate_features(ctx, ev, a - 1, psi_a);
    candidate_features(ctx, ev, b - 1, psi_b);
    double ds = 0.0;
    for (int f = 0; f < kScoreFeatureCount; ++f) {
      ds += (params.theta.score[f] + params.theta.pair[f]) *
            (psi_a[f] - psi_b[f]);
    }

    PairTask task;
    task.item_a = a;
    task.item_b = b;
    task.direction = PairDirection::kMore;
    task.target = a;
    const double lp_more =
        pair_logprob_grad(params, ctx, ev, task, a, nullptr);
    task.direction = PairDirection::kLess;
    task.target = b;
    const double lp_less =
        pair_logprob_grad(params, ctx, ev, task, b, nullptr);
    const double route_a = -lp_more - lp_less;
    const double route_b = 2.0 * softplus(-ds);
    report.max_route_gap =
        std::max(report.max_route_gap, std::fabs(route_a - route_b));
  }

  report.pass = report.bound_violations == 0 &&
                report.convexity_violations == 0 &&
                report.max_route_gap <= 1e-12;
  return report;
}

// ---- finite differences -------------------------------------------------------------

json FiniteDifferenceReport::to_json() const {
  return json{{"cases", cases},
              {"h", h},
              {"max_rel_err", max_rel_err},
              {"max_rel_err_action", max_rel_err_action},
              {"max_rel_err_ranking", max_rel_err_ranking},
              {"max_rel_err_pair", max_rel_err_pair},
              {"max_rel_err_trajectory", max_rel_err_trajectory},
              {"masking_invariant", masking_invariant},
              {"pass", pass}};
}

namespace {

/// Random already-invoked tool subset with its real observations absorbed.
EvidenceState random_evidence(const PolicyParams& params,
                              const PolicyContext& ctx, Rng& rng) {
  EvidenceState ev;
  for (int t = 0; t < static_cast<int>(ctx.registry->size()); ++t) {
    if (rng.uniform() < 0.5) continue;
    const ToolCall call = default_tool_call(params, ctx, ev, t);
    absorb_observation(ev, ctx, call,
                       ctx.registry->invoke(call, *ctx.tool_ctx));
  }
  return ev;
}

}  // namespace

FiniteDifferenceReport finite_difference_suite(int cases, double h,
                                               std::uint64_t seed) {
  TinyEnvOptions options;
  options.k = 2;
  options.t_max = 3;
  options.allowlist = {"get_user_profile", "get_rating_behavior",
                       "get_similar_items"};
  TinyEnv tiny(options);
  const RequestEnv& env = tiny.env();
  const PolicyContext& ctx = env.policy_ctx();

  FiniteDifferenceReport report;
  report.cases = cases;
  report.h = h;

  for (int i = 0; i < cases; ++i) {
    Rng rng(Rng::derive(seed, {0xFD, static_cast<std::uint64_t>(i)}));
    PolicyParams params = random_params(tiny.registry(), 0.7, rng);
    const int op = i % 4;

    // The differentiated function with everything but theta held fixed.
    std::function<double(const PolicyParams&, ParamVector*)> f;
    EvidenceState ev;
    std::vector<int> ranking;
    PairTask task;
    int chosen_action = 0, n_tool_prior = 0, pair_chosen = 0;
    Trajectory trajectory;
    double* op_slot = nullptr;
    if (op == 0) {
      ev = random_evidence(params, ctx, rng);
      n_tool_prior = ev.invoked_count();
      const std::vector<int> avail = available_actions(ctx, ev);
      chosen_action = avail[rng.uniform_int(avail.size())];
      f = [&](const PolicyParams& p, ParamVector* grad) {
        return action_logprob_grad(p, ctx, ev, n_tool_prior, chosen_action,
                                   grad);
      };
      op_slot = &report.max_rel_err_action;
    } else if (op == 1) {
      ev = random_evidence(params, ctx, rng);
      ranking = sample_ranking(params, ctx, ev, rng).ranking;
      f = [&](const PolicyParams& p, ParamVector* grad) {
        return ranking_logprob_grad(p, ctx, ev, ranking, grad);
      };
      op_slot = &report.max_rel_err_ranking;
    } else if (op == 2) {
      ev = full_evidence(ctx);
      const int n = ctx.features.n;
      task.item_a = 1 + static_cast<int>(rng.uniform_int(n));
      task.item_b = 1 + static_cast<int>(rng.uniform_int(n - 1));
      if (task.item_b >= task.item_a) ++task.item_b;
      task.direction =
          rng.uniform() < 0.5 ? PairDirection::kMore : PairDirection::kLess;
      task.target = task.item_a;
      pair_chosen = rng.uniform() < 0.5 ? task.item_a : task.item_b;
      f = [&](const PolicyParams& p, ParamVector* grad) {
        return pair_logprob_grad(p, ctx, ev, task, pair_chosen, grad);
      };
      op_slot = &report.max_rel_err_pair;
    } else {
      trajectory = rollout_sampled(params, env, rng);
      f = [&](const PolicyParams& p, ParamVector* grad) {
        return trajectory_logprob_and_grad(p, ctx, trajectory, grad);
      };
      op_slot = &report.max_rel_err_trajectory;
    }

    ParamVector analytic = params.theta;
    analytic.scale(0.0);
    f(params, &analytic);
    const std::vector<double> an = analytic.flatten();
    for (std::size_t c = 0; c < an.size(); ++c) {
      PolicyParams plus = params, minus = params;
      *param_coord(plus.theta, c) += h;
      *param_coord(minus.theta, c) -= h;
      const double fd = (f(plus, nullptr) - f(minus, nullptr)) / (2.0 * h);
      const double rel =
          std::fabs(fd - an[c]) / std::max(1.0, std::fabs(an[c]));
      *op_slot = std::max(*op_slot, rel);
      report.max_rel_err = std::max(report.max_rel_err, rel);
    }
  }

  // Masked-observation probe: corrupting stored Obs payloads (and injecting
  // bogus per-step log-probabilities on them) must not move the replayed
  // log-probability or its gradient by a single bit.
  {
    Rng rng(Rng::derive(seed, {0x0B5}));
    PolicyParams params = random_params(tiny.registry(), 0.7, rng);
    Trajectory t;
    t.request_uid = env.request().uid;
    t.user_id = env.request().user_id;
    t.n_candidates = ctx.features.n;
    t.k = ctx.k;
    Step think;
    think.kind = Step::Kind::kThink;
    think.think_note = think_note();
    think.logprob = 0.0;
    t.steps.push_back(std::move(think));
    EvidenceState ev;
    Step act;
    act.kind = Step::Kind::kAct;
    act.call = default_tool_call(params, ctx, ev, 0);
    act.logprob = 0.0;
    const Observation obs = ctx.registry->invoke(act.call, *ctx.tool_ctx);
    Step obs_step;
    obs_step.kind = Step::Kind::kObs;
    obs_step.observation = obs;
    obs_step.masked = true;
    t.steps.push_back(std::move(act));
    t.steps.push_back(std::move(obs_step));
    absorb_observation(ev, ctx, t.steps[1].call, obs);
    Step rank;
    rank.kind = Step::Kind::kRank;
    rank.ranking = greedy_ranking(params, ctx, ev).ranking;
    t.ranking = rank.ranking;
    t.steps.push_back(std::move(rank));
    t.n_tool = 1;
    t.valid = validate(t, t.n_candidates, t.k, ctx.t_max);

    ParamVector grad_clean = params.theta;
    grad_clean.scale(0.0);
    const double lp_clean =
        trajectory_logprob_and_grad(params, ctx, t, &grad_clean);

    Trajectory corrupted = t;
    for (Step& step : corrupted.steps) {
      if (step.kind != Step::Kind::kObs) continue;
      step.observation.structured = json{{"sentinel", "garbage"}};
      step.observation.text = "sentinel garbage";
      step.logprob = 999.0;  // must stay invisible to the likelihood
    }
    ParamVector grad_corrupt = params.theta;
    grad_corrupt.scale(0.0);
    const double lp_corrupt =
        trajectory_logprob_and_grad(params, ctx, corrupted, &grad_corrupt);
    report.masking_invariant =
        lp_clean == lp_corrupt &&
        grad_clean.flatten() == grad_corrupt.flatten();
  }

  report.pass = report.max_rel_err < 1e-5 && report.masking_invariant;
  return report;
}

// ---- bundle ----------------------------------------------------------------------

json VerificationSummary::to_json() const {
  json unb = json::array();
  for (const UnbiasednessReport& r : unbiasedness) unb.push_back(r.to_json());
  return json{{"enumeration", enumeration.to_json()},
              {"unbiasedness", unb},
              {"finite_difference", finite_difference.to_json()},
              {"logistic_bound", logistic_bound.to_json()},
              {"pass", pass}};
}

std::string VerificationSummary::pretty() const {
  std::ostringstream out;
  auto line = [&](bool ok, const std::string& text) {
    out << (ok ? "[PASS] " : "[FAIL] ") << text << "\n";
  };
  line(enumeration.pass,
       "enumeration: " + std::to_string(enumeration.n_trajectories) +
           " trajectories, max |1 - sum pi| = " +
           fmt("%.3e", enumeration.max_probability_gap) +
           ", J finite-diff rel err = " +
           fmt("%.3e", enumeration.j_fd_max_rel_err));
  for (std::size_t s = 0; s < unbiasedness.size(); ++s) {
    const UnbiasednessReport& r = unbiasedness[s];
    line(r.pass, "unbiasedness seed " + std::to_string(s) + ": cosine = " +
                     fmt("%.6f", r.cosine) + ", max |z| = " +
                     fmt("%.3f", r.max_abs_z) + ", baseline norm = " +
                     fmt("%.3e", r.baseline_norm) + " (4*SE = " +
                     fmt("%.3e", 4.0 * r.baseline_se_norm) + ")");
  }
  line(finite_difference.pass,
       "finite differences: max rel err = " +
           fmt("%.3e", finite_difference.max_rel_err) + ", masking " +
           (finite_difference.masking_invariant ? "invariant" : "VIOLATED"));
  line(logistic_bound.pass,
       "logistic bound: " + std::to_string(logistic_bound.bound_violations) +
           " bound violations, " +
           std::to_string(logistic_bound.convexity_violations) +
           " convexity violations, route gap = " +
           fmt("%.3e", logistic_bound.max_route_gap));
  line(pass, "verification overall");
  return out.str();
}

VerificationSummary run_verification(const VerificationOptions& options) {
  VerificationSummary summary;
  summary.enumeration = check_enumeration(
      options.enumeration_draws, Rng::derive(options.seed, {1}));

  TinyEnv tiny;
  for (int s = 0; s < options.unbiasedness_seeds; ++s) {
    Rng rng(Rng::derive(options.seed, {2, static_cast<std::uint64_t>(s)}));
    const PolicyParams params = random_params(tiny.registry(), 0.5, rng);
    summary.unbiasedness.push_back(check_unbiasedness(
        tiny.env(), params, options.group_size, options.unbiasedness_groups,
        Rng::derive(options.seed, {3, static_cast<std::uint64_t>(s)}),
        options.threads));
  }

  summary.finite_difference = finite_difference_suite(
      options.fd_cases, options.fd_h, Rng::derive(options.seed, {4}));
  summary.logistic_bound = check_logistic_bound(
      options.grid_lo, options.grid_hi, options.grid_step,
      options.route_cases, Rng::derive(options.seed, {5}));

  summary.pass = summary.enumeration.pass &&
                 summary.finite_difference.pass &&
                 summary.logistic_bound.pass;
  for (const UnbiasednessReport& r : summary.unbiasedness) {
    summary.pass = summary.pass && r.pass;
  }
  return summary;
}

}  // namespace agentrank
