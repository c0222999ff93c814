#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "agentrank/reward.hpp"
#include "doctest.h"

using namespace agentrank;

namespace {

/// Minimal valid trajectory carrying a final ranking and a tool count.
Trajectory make_traj(std::vector<int> ranking, int n, int n_tool,
                     bool valid = true) {
  Trajectory t;
  t.n_candidates = n;
  t.k = static_cast<int>(ranking.size());
  t.n_tool = n_tool;
  if (valid) {
    t.ranking = ranking;
    t.valid.is_valid = true;
    t.valid.reason = Verdict::kOk;
  } else {
    t.valid.is_valid = false;
    t.valid.reason = Verdict::kBudgetExceeded;
  }
  Step s;
  s.kind = Step::Kind::kRank;
  s.ranking = std::move(ranking);
  s.logprob = -1.0;
  t.steps.push_back(std::move(s));
  return t;
}

}  // namespace

TEST_CASE("the discount table matches 1/log2(rank+1)") {
  CHECK(ndcg_single_relevant(1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ndcg_single_relevant(2) ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(ndcg_single_relevant(3) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ndcg_single_relevant(4) ==
        doctest::Approx(1.0 / std::log2(5.0)).epsilon(1e-15));
}

TEST_CASE("reward fixtures cover every branch") {
  SUBCASE("rank-1 hit with tools earns the bonus: 1.1") {
    const RewardBreakdown r = overall_reward(make_traj({4, 1, 2}, 5, 2), 4);
    CHECK(r.total == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(r.valid);
    CHECK(r.hit);
    CHECK(r.hit_rank == 1);
    CHECK(r.rank_component == doctest::Approx(1.0));
    CHECK(r.tool_bonus == doctest::Approx(0.1));
  }
  SUBCASE("rank-1 hit without tools: exactly 1.0") {
    const RewardBreakdown r = overall_reward(make_traj({4, 1, 2}, 5, 0), 4);
    CHECK(r.total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.tool_bonus == 0.0);
  }
  SUBCASE("rank-2 hit gets no bonus even with tools") {
    const RewardBreakdown r = overall_reward(make_traj({1, 4, 2}, 5, 3), 4);
    CHECK(r.total == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(r.tool_bonus == 0.0);
    CHECK(r.hit_rank == 2);
  }
  SUBCASE("rank-3 hit is worth 0.5") {
    const RewardBreakdown r = overall_reward(make_traj({1, 2, 4}, 5, 1), 4);
    CHECK(r.total == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("valid miss costs -0.5") {
    const RewardBreakdown r = overall_reward(make_traj({1, 2, 3}, 5, 2), 4);
    CHECK(r.total == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(r.valid);
    CHECK_FALSE(r.hit);
    CHECK_FALSE(r.hit_rank.has_value());
  }
  SUBCASE("invalid episodes cost -1 regardless of content") {
    const RewardBreakdown r =
        overall_reward(make_traj({4, 1, 2}, 5, 2, /*valid=*/false), 4);
    CHECK(r.total == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_FALSE(r.valid);
    CHECK_FALSE(r.hit);
  }
  SUBCASE("custom penalties flow through") {
    RewardConfig cfg;
    cfg.miss_penalty = -0.25;
    cfg.invalid_penalty = -2.0;
    cfg.tool_bonus = 0.5;
    CHECK(overall_reward(make_traj({1, 2, 3}, 5, 0), 4, cfg).total ==
          doctest::Approx(-0.25));
    CHECK(overall_reward(make_traj({1, 2, 3}, 5, 0, false), 4, cfg).total ==
          doctest::Approx(-2.0));
    CHECK(overall_reward(make_traj({4, 2, 3}, 5, 1), 4, cfg).total ==
          doctest::Approx(1.5));
  }
}

TEST_CASE("exhaustive oracle over every length-3 ranking of 5 candidates") {
  // All 60 ordered top-3 lists; for each, the reward must equal the directly
  // computed discounted gain (or the miss penalty), with and without tools.
  std::vector<int> base{1, 2, 3, 4, 5};
  std::vector<std::vector<int>> rankings;
  std::vector<int> perm = base;
  std::sort(perm.begin(), perm.end());
  do {
    rankings.emplace_back(perm.begin(), perm.begin() + 3);
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::sort(rankings.begin(), rankings.end());
  rankings.erase(std::unique(rankings.begin(), rankings.end()),
                 rankings.end());
  REQUIRE(rankings.size() == 60);

  const int positive = 2;
  int hits = 0;
  for (const auto& r : rankings) {
    for (int n_tool : {0, 1}) {
      const RewardBreakdown got = overall_reward(make_traj(r, 5, n_tool), positive);

      // Oracle: scan for the positive by hand.
      double expected = -0.5;
      auto it = std::find(r.begin(), r.end(), positive);
      if (it != r.end()) {
        const int rank = static_cast<int>(it - r.begin()) + 1;
        expected = 1.0 / std::log2(rank + 1.0);
        if (rank == 1 && n_tool > 0) expected += 0.1;
      }
      CHECK(got.total == doctest::Approx(expected).epsilon(1e-12));
    }
    if (std::find(r.begin(), r.end(), positive) != r.end()) ++hits;
  }
  // Sanity on the enumeration itself: the positive appears in 3/5 of lists.
  CHECK(hits == 36);
}

TEST_CASE("the attainable reward set is small and exact") {
  // With k=3, n=5: {1.1, 1.0, 1/log2(3), 0.5, -0.5, -1}.
  std::set<double> seen;
  const int positive = 1;
  std::vector<int> perm{1, 2, 3, 4, 5};
  do {
    for (int n_tool : {0, 2}) {
      seen.insert(
          overall_reward(make_traj({perm[0], perm[1], perm[2]}, 5, n_tool),
                         positive)
              .total);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  seen.insert(overall_reward(make_traj({1, 2, 3}, 5, 0, false), positive).total);

  const std::vector<double> expected{-1.0, -0.5, 0.5, 1.0 / std::log2(3.0),
                                     1.0, 1.1};
  REQUIRE(seen.size() == expected.size());
  std::size_t i = 0;
  for (double v : seen) {
    CHECK(v == doctest::Approx(expected[i]).epsilon(1e-12));
    ++i;
  }
}

TEST_CASE("reward breakdowns serialize for the logs") {
  const RewardBreakdown r = overall_reward(make_traj({4, 1, 2}, 5, 2), 4);
  const json j = r.to_json();
  CHECK(j.at("total").get<double>() == doctest::Approx(1.1));
  CHECK(j.at("valid").get<bool>());
  CHECK(j.at("hit").get<bool>());
  CHECK(j.at("hit_rank").get<int>() == 1);
}
