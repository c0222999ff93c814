// Acceptance gate: one pass/fail line per criterion, exit 0 only when all
// nine hold.  Criteria 1-5 are exact/statistical properties of the reward,
// the group-relative estimator, the analytic gradients, the pairwise loss,
// and the hard-negative miner.  Criteria 6-8 are desk-scale learnability
// runs on the planted synthetic environment.  Criterion 9 spawns the real
// command-line binary and byte-compares a full rerun.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agentrank/grpo.hpp"
#include "agentrank/metrics.hpp"
#include "agentrank/policy.hpp"
#include "agentrank/ppr.hpp"
#include "agentrank/reward.hpp"
#include "agentrank/verify.hpp"
#include "test_support.hpp"

using namespace agentrank;
using testsupport::SmallWorld;
using testsupport::SmallWorldOptions;
using testsupport::TempDir;
using testsupport::slurp;
using testsupport::spit;

namespace {

std::string fmt(const char* f, ...) {
  char buffer[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buffer, sizeof(buffer), f, args);
  va_end(args);
  return buffer;
}

int g_failures = 0;

/// Run one criterion body, time it, and print exactly one line.  The body
/// fills `detail` and returns pass/fail; exceptions fail the criterion.
/// `budget_s <= 0` means the criterion has no pinned runtime budget.
template <typename Body>
void criterion(int id, const char* name, double budget_s, Body&& body) {
  std::string detail;
  bool pass = false;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::string clock = fmt("%.2fs", secs);
  if (budget_s > 0.0) {
    clock += fmt(" / budget %.0fs", budget_s);
    if (secs > budget_s) {
      pass = false;
      detail += " [over runtime budget]";
    }
  }
  if (!pass) ++g_failures;
  std::printf("[%s] criterion %d %s: %s (%s)\n", pass ? "PASS" : "FAIL", id,
              name, detail.c_str(), clock.c_str());
  std::fflush(stdout);
}

Trajectory make_traj(int n, int k, std::vector<int> ranking, int n_tool,
                     bool is_valid) {
  Trajectory t;
  t.n_candidates = n;
  t.k = k;
  t.n_tool = n_tool;
  if (!ranking.empty()) t.ranking = std::move(ranking);
  t.valid.is_valid = is_valid;
  t.valid.reason = is_valid ? Verdict::kOk : Verdict::kMalformedRanking;
  return t;
}

// ---- criterion 1: reward table -------------------------------------------------

bool reward_table(std::string& detail) {
  bool ok = true;
  // Top-rank hit after a tool call earns the bonus on top of the full gain.
  ok &= overall_reward(make_traj(5, 3, {2, 4, 5}, 1, true), 2).total == 1.1;
  // The same hit with no tool call earns exactly the gain.
  ok &= overall_reward(make_traj(5, 3, {2, 4, 5}, 0, true), 2).total == 1.0;
  // Last-slot hit in a K=3 list: discount 1/log2(4) = 0.5 exactly.
  ok &= overall_reward(make_traj(5, 3, {4, 5, 2}, 0, true), 2).total == 0.5;
  // Valid list that misses the positive.
  ok &= overall_reward(make_traj(5, 3, {4, 5, 3}, 0, true), 2).total == -0.5;
  // Invalid episodes are penalized regardless of tool use.
  ok &= overall_reward(make_traj(5, 3, {}, 2, false), 2).total == -1.0;
  if (!ok) {
    detail = "fixture rewards differ from {1.1, 1.0, 0.5, -0.5, -1}";
    return false;
  }

  // Exhaustive n=5, K=3 enumeration against a direct DCG/IDCG oracle (the
  // single positive makes IDCG exactly 1).
  const int positive = 2;
  int rankings = 0;
  double max_gap = 0.0;
  for (int a = 1; a <= 5; ++a) {
    for (int b = 1; b <= 5; ++b) {
      for (int c = 1; c <= 5; ++c) {
        if (a == b || a == c || b == c) continue;
        ++rankings;
        const std::vector<int> ranking{a, b, c};
        int rank = 0;
        for (int i = 0; i < 3; ++i) {
          if (ranking[i] == positive) rank = i + 1;
        }
        double dcg = 0.0;
        for (int i = 0; i < 3; ++i) {
          const double rel = ranking[i] == positive ? 1.0 : 0.0;
          dcg += rel / std::log2(i + 2.0);
        }
        const double idcg = 1.0;
        for (int n_tool : {0, 1}) {
          double expected = rank == 0 ? -0.5 : dcg / idcg;
          if (rank == 1 && n_tool > 0) expected += 0.1;
          const double got =
              overall_reward(make_traj(5, 3, ranking, n_tool, true), positive)
                  .total;
          max_gap = std::max(max_gap, std::fabs(got - expected));
        }
      }
    }
  }
  detail = fmt("5 fixtures exact; %d rankings x {0,1} tool calls, "
               "max oracle gap %.2e (tolerance 1e-12)",
               rankings, max_gap);
  return rankings == 60 && max_gap <= 1e-12;
}

// ---- criterion 2: estimator expectation ----------------------------------------

bool estimator_expectation(std::string& detail) {
  TinyEnv tiny;
  const int G = 8;
  const int M = 100000;
  double min_cos = 1.0, max_z = 0.0;
  bool all_pass = true;
  for (std::uint64_t s = 0; s < 3; ++s) {
    Rng rng(Rng::derive(9001, {s}));
    const PolicyParams params = random_params(tiny.registry(), 0.5, rng);
    const UnbiasednessReport rep = check_unbiasedness(
        tiny.env(), params, G, M, Rng::derive(9002, {s}), /*threads=*/1);
    all_pass = all_pass && rep.pass;
    min_cos = std::min(min_cos, rep.cosine);
    max_z = std::max(max_z, rep.max_abs_z);
    std::fprintf(stderr,
                 "  [criterion 2] seed %llu: cosine %.6f, max|z| %.2f, "
                 "baseline %.2e vs 4*SE %.2e\n",
                 static_cast<unsigned long long>(s), rep.cosine, rep.max_abs_z,
                 rep.baseline_norm, 4.0 * rep.baseline_se_norm);
  }
  detail = fmt("G=%d, M=%d, 3 seeds: min cosine %.4f (>= 0.99), max |z| %.2f "
               "(<= 4), baseline norm within 4 SEs",
               G, M, min_cos, max_z);
  return all_pass;
}

// ---- criterion 3: finite differences -------------------------------------------

bool gradient_fd(std::string& detail) {
  const FiniteDifferenceReport rep = finite_difference_suite(50, 1e-5, 777);
  detail = fmt("50 cases, h=1e-5: max rel err %.2e (< 1e-5) "
               "[action %.1e, ranking %.1e, pair %.1e, trajectory %.1e], "
               "observation masking invariant: %s",
               rep.max_rel_err, rep.max_rel_err_action, rep.max_rel_err_ranking,
               rep.max_rel_err_pair, rep.max_rel_err_trajectory,
               rep.masking_invariant ? "yes" : "NO");
  return rep.pass && rep.max_rel_err < 1e-5;
}

// ---- criterion 4: pairwise loss bound ------------------------------------------

bool pairwise_bound(std::string& detail) {
  const LogisticBoundReport rep = check_logistic_bound(-10.0, 10.0, 0.01,
                                                       /*route_cases=*/64, 888);
  detail = fmt("%d grid points: %d bound violations, %d convexity violations, "
               "min error-region margin %.3e, two-route gap %.2e (<= 1e-12)",
               rep.grid_points, rep.bound_violations, rep.convexity_violations,
               rep.min_bound_margin, rep.max_route_gap);
  return rep.pass && rep.grid_points == 2001 && rep.bound_violations == 0 &&
         rep.convexity_violations == 0 && rep.max_route_gap <= 1e-12;
}

// ---- criterion 5: hard-negative pool oracle ------------------------------------

bool hard_negative_oracle(std::string& detail) {
  int rankings = 0, absent_cases = 0, mismatches = 0;
  for (int a = 1; a <= 6; ++a) {
    for (int b = 1; b <= 6; ++b) {
      for (int c = 1; c <= 6; ++c) {
        for (int d = 1; d <= 6; ++d) {
          if (a == b || a == c || a == d || b == c || b == d || c == d) {
            continue;
          }
          ++rankings;
          const std::vector<int> ranking{a, b, c, d};
          for (int y = 1; y <= 6; ++y) {
            // Oracle: everything ranked above y; the whole emitted list
            // when y is absent; empty when y leads.
            std::vector<int> expected;
            auto it = std::find(ranking.begin(), ranking.end(), y);
            if (it == ranking.end()) {
              expected = ranking;
              ++absent_cases;
            } else {
              expected.assign(ranking.begin(), it);
            }
            if (hard_negative_pool(ranking, y) != expected) ++mismatches;
          }
        }
      }
    }
  }
  detail = fmt("%d rankings x 6 positives: %d mismatches, %d absent-positive "
               "cases exercised",
               rankings, mismatches, absent_cases);
  return rankings == 360 && mismatches == 0 && absent_cases == 720;
}

// ---- criteria 6-8: the planted desk-scale run ----------------------------------

constexpr std::uint64_t kPlantedSeed = 7;
constexpr std::uint64_t kStage1Seed = 1007;
constexpr std::uint64_t kStage2Seed = 2007;
constexpr std::uint64_t kToolRateSeed = 3007;
constexpr double kStage1LearningRate = 0.05;

struct PlantedRun {
  std::unique_ptr<SmallWorld> world;
  PolicyParams stage1;
  double hit1 = 0.0;
  double ndcg10 = 0.0;
  bool ready = false;
};

PlantedRun g_planted;

EvalReport eval_val(const PolicyParams& params) {
  EvalOptions options;
  options.ks = {1, 5, 10};
  options.threads = 1;
  return evaluate(params, g_planted.world->val(), "val", options);
}

bool stage1_learnability(std::string& detail) {
  SmallWorldOptions opt;
  opt.synthetic = SyntheticConfig{};     // 200 items, 500 users, planted
  opt.request = RequestOptions{20, 10, 1};
  opt.collab = CollabConfig{};
  opt.collab_enabled = true;
  opt.k = 10;
  opt.t_max = 10;
  opt.seed = kPlantedSeed;
  g_planted.world = std::make_unique<SmallWorld>(opt);
  std::fprintf(stderr, "  [criterion 6] planted world: %zu train / %zu val\n",
               g_planted.world->train().size(), g_planted.world->val().size());

  GrpoConfig cfg;  // G=8, batch 64, 3 epochs
  cfg.learning_rate = kStage1LearningRate;
  cfg.threads = 1;
  PolicyParams params = PolicyParams::zero(g_planted.world->registry());
  train_stage1(params, g_planted.world->train(), cfg, kStage1Seed,
               [](const EpochStats& e) {
                 std::fprintf(stderr,
                              "  [criterion 6] epoch %d: mean reward %.3f, "
                              "valid %.3f, kept %.3f, hit1 %.3f\n",
                              e.epoch, e.totals.mean_reward(),
                              e.totals.valid_fraction(),
                              e.totals.kept_fraction(),
                              e.totals.hit1_fraction());
               });

  const EvalReport rep = eval_val(params);
  g_planted.stage1 = params;
  g_planted.hit1 = rep.hit_at.at(1);
  g_planted.ndcg10 = rep.ndcg_at.at(10);
  g_planted.ready = true;

  const double uniform_h1 = uniform_policy_hit_at_k(20, 1);
  const double uniform_n10 = uniform_policy_ndcg_at_k(20, 10);
  detail = fmt("held-out H@1 %.4f (>= 0.15; uniform baseline %.2f), "
               "N@10 %.4f vs uniform %.4f (lift %.4f >= 0.10)",
               g_planted.hit1, uniform_h1, g_planted.ndcg10, uniform_n10,
               g_planted.ndcg10 - uniform_n10);
  return g_planted.hit1 >= 0.15 && g_planted.ndcg10 - uniform_n10 >= 0.10;
}

bool stage2_refinement(std::string& detail) {
  if (!g_planted.ready) {
    detail = "prerequisite stage-1 run unavailable";
    return false;
  }
  PolicyParams params = g_planted.stage1;
  PprConfig cfg;  // one epoch from the stage-1 parameters
  cfg.epochs = 1;
  cfg.threads = 1;
  const Stage2Result result =
      train_stage2(params, g_planted.world->train(), cfg, kStage2Seed);
  const double before = result.history.at(0).violation_rate_start;
  const double after = result.violation_rate_final;
  const double relative_drop = before > 0.0 ? 1.0 - after / before : 0.0;

  const EvalReport rep = eval_val(params);
  const double hit1_drop = g_planted.hit1 - rep.hit_at.at(1);

  detail = fmt("violation rate %.4f -> %.4f (relative drop %.1f%% >= 10%%) "
               "over %d mined pairs; held-out H@1 %.4f -> %.4f "
               "(drop %.4f <= 0.01)",
               before, after, 100.0 * relative_drop,
               result.history.at(0).n_pairs, g_planted.hit1, rep.hit_at.at(1),
               hit1_drop);
  return before > 0.0 && relative_drop >= 0.10 && hit1_drop <= 0.01 + 1e-12;
}

bool tool_use_dynamics(std::string& detail) {
  if (!g_planted.ready) {
    detail = "prerequisite stage-1 run unavailable";
    return false;
  }
  // Tool-use rate among positively rewarded rollouts, sampled under the
  // same seeds for both parameter sets.
  const auto positive_tool_rate = [&](const PolicyParams& params, int* n_pos) {
    const auto envs = g_planted.world->train();
    const std::size_t n = std::min<std::size_t>(envs.size(), 1000);
    int pos = 0, pos_tool = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const GroupRollout group = rollout_group(params, *envs[i], 8,
                                               kToolRateSeed, /*epoch=*/0,
                                               RewardConfig{});
      for (std::size_t g = 0; g < group.rollouts.size(); ++g) {
        if (group.rewards[g].total > 0.0) {
          ++pos;
          if (group.rollouts[g].n_tool > 0) ++pos_tool;
        }
      }
    }
    *n_pos = pos;
    return pos > 0 ? static_cast<double>(pos_tool) / pos : 0.0;
  };

  int n_pos_start = 0, n_pos_end = 0;
  const double rate_start =
      positive_tool_rate(PolicyParams::zero(g_planted.world->registry()),
                         &n_pos_start);
  const double rate_end = positive_tool_rate(g_planted.stage1, &n_pos_end);
  detail = fmt("tool-use rate among positive-reward rollouts: %.4f at step 0 "
               "(%d rollouts) -> %.4f after stage 1 (%d rollouts)",
               rate_start, n_pos_start, rate_end, n_pos_end);
  return n_pos_start > 0 && n_pos_end > 0 && rate_end > rate_start;
}

// ---- criterion 9: command-line determinism -------------------------------------

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files[std::filesystem::relative(entry.path(), dir).generic_string()] =
          slurp(entry.path());
    }
  }
  return files;
}

bool cli_determinism(std::string& detail) {
  TempDir scratch("acceptance_cli");
  const std::filesystem::path run_dir = scratch.path() / "run";
  const std::filesystem::path config_path = scratch.file("run.json");
  spit(config_path, json{{"seed", 505},
                         {"output_dir", run_dir.generic_string()},
                         {"synthetic_num_items", 36},
                         {"synthetic_num_users", 20},
                         {"synthetic_num_categories", 4},
                         {"synthetic_sessions_per_user", 3},
                         {"n_candidates", 6},
                         {"max_history", 5},
                         {"k", 3},
                         {"t_max", 3},
                         {"collab_dim", 6},
                         {"collab_iterations", 6},
                         {"stage1_group_size", 4},
                         {"stage1_batch_size", 8},
                         {"stage1_epochs", 1},
                         {"stage1_learning_rate", 0.1},
                         {"stage2_group_size", 4},
                         {"stage2_batch_size", 8},
                         {"stage2_epochs", 1},
                         {"eval_ks", json::array({1, 3})},
                         {"threads", 2},
                         {"verify_groups", 1200},
                         {"verify_seeds", 1},
                         {"verify_fd_cases", 3}}
                        .dump(2));

  const std::string null_io = " > /dev/null 2>&1";
  const std::vector<std::string> steps = {
      "gen-data --config " + config_path.string(),
      "fit-collab --config " + config_path.string(),
      "train --config " + config_path.string() + " --stage both",
      "eval --config " + config_path.string() + " --checkpoint " +
          (run_dir / "checkpoint_stage2.json").string() + " --split val",
      "verify --config " + config_path.string(),
  };
  for (const std::string& step : steps) {
    const int code =
        run_command(std::string(AGENTRANK_CLI_PATH) + " " + step + null_io);
    if (code != 0) {
      detail = "first run: `" + step + "` exited " + std::to_string(code);
      return false;
    }
  }
  const std::map<std::string, std::string> first = snapshot(run_dir);
  for (const std::string& step : steps) {
    const int code =
        run_command(std::string(AGENTRANK_CLI_PATH) + " " + step + null_io);
    if (code != 0) {
      detail = "second run: `" + step + "` exited " + std::to_string(code);
      return false;
    }
  }
  const std::map<std::string, std::string> second = snapshot(run_dir);

  if (first.empty() || first.size() != second.size()) {
    detail = fmt("artifact sets differ (%zu vs %zu files)", first.size(),
                 second.size());
    return false;
  }
  int differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != bytes) {
      ++differing;
      if (first_diff.empty()) first_diff = name;
    }
  }
  detail = fmt("all 5 subcommands rerun: %zu artifacts byte-compared, "
               "%d differ%s%s",
               first.size(), differing, differing > 0 ? ", first: " : "",
               first_diff.c_str());
  return differing == 0;
}

}  // namespace

int main() {
  std::printf("acceptance suite: deterministic training and verification "
              "harness\n");
  criterion(1, "reward-table", 1.0, reward_table);
  criterion(2, "estimator-expectation", 120.0, estimator_expectation);
  criterion(3, "gradient-finite-difference", 60.0, gradient_fd);
  criterion(4, "pairwise-loss-bound", 0.0, pairwise_bound);
  criterion(5, "hard-negative-oracle", 0.0, hard_negative_oracle);
  criterion(6, "stage1-learnability", 900.0, stage1_learnability);
  criterion(7, "stage2-refinement", 300.0, stage2_refinement);
  criterion(8, "tool-use-dynamics", 0.0, tool_use_dynamics);
  criterion(9, "cli-determinism", 0.0, cli_determinism);

  if (g_failures == 0) {
    std::printf("acceptance: all 9 criteria passed\n");
    return EXIT_SUCCESS;
  }
  std::printf("acceptance: %d of 9 criteria FAILED\n", g_failures);
  return EXIT_FAILURE;
}
