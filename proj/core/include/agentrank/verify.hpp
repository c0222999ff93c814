#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "agentrank/rollout.hpp"

namespace agentrank {

struct TinyEnvOptions {
  int k = 2;      // ranking length
  int t_max = 2;  // tool budget (never binding for the reference policy)
  std::vector<std::string> allowlist = {"get_similar_items"};
};

/**
 * A fully enumerable micro-instance: three items, two users, a restricted
 * tool registry, one fixed request.  Owns every piece of state a World
 * borrows, so it can be constructed standalone inside tests and the
 * verification suites.
 */
class TinyEnv {
 public:
  explicit TinyEnv(TinyEnvOptions options = {});
  TinyEnv(const TinyEnv&) = delete;
  TinyEnv& operator=(const TinyEnv&) = delete;

  const RequestEnv& env() const { return *env_; }
  const ToolRegistry& registry() const { return registry_; }
  const RecommendationRequest& request() const { return request_; }
  const World& world() const { return world_; }

 private:
  TinyEnvOptions options_;
  Catalog catalog_;
  InteractionStream full_;
  InteractionStream visible_;
  CollabModel collab_;
  ToolRegistry registry_;
  RecommendationRequest request_;
  World world_;
  std::unique_ptr<RequestEnv> env_;
};

/// Every trajectory the reference policy can emit in this environment:
/// each ordered subset of distinct tools followed by each length-k ranking.
/// Steps carry the same calls and observations the agent loop would record.
std::vector<Trajectory> enumerate_trajectories(const PolicyParams& params,
                                               const RequestEnv& env);

struct ExactGradient {
  double j = 0.0;                  // E[R] by enumeration
  double total_probability = 0.0;  // must be 1 up to rounding
  ParamVector grad;                // sum_tau pi(tau) R(tau) grad log pi(tau)
};

ExactGradient exact_policy_gradient(
    const PolicyParams& params, const RequestEnv& env,
    const std::function<double(const Trajectory&)>& reward);

/// Enumeration self-checks: probabilities sum to 1 across parameter draws,
/// and the enumerated exact gradient matches central finite differences of
/// the enumerated objective J itself.
struct EnumerationReport {
  int param_draws = 0;
  int n_trajectories = 0;
  double max_probability_gap = 0.0;  // max |1 - sum pi|
  double j_fd_max_rel_err = 0.0;
  bool pass = false;
  json to_json() const;
};

EnumerationReport check_enumeration(int param_draws, std::uint64_t seed);

/**
 * Monte-Carlo check of the group-relative estimator against the enumerated
 * gradient.  The per-group estimator (1/G) sum_g (R_g - mean R) grad log pi
 * with the group's own mean has exact expectation ((G-1)/G) * grad J: the
 * self term of the baseline removes one 1/G share, and the cross terms
 * vanish by the score-function identity.  Direction is compared against
 * grad J itself (cosine); coordinate z-scores are taken against the scaled
 * expectation, which is the statistically correct target for any M.  The
 * score-function identity E[grad log pi] = 0 is also tested directly.
 */
struct UnbiasednessReport {
  std::uint64_t seed = 0;
  int group_size = 0;
  int groups = 0;  // M
  double expected_scale = 0.0;  // (G-1)/G
  std::vector<double> exact_grad;
  std::vector<double> estimate_mean;
  std::vector<double> estimate_se;
  std::vector<double> z_scores;
  double cosine = 0.0;
  double max_abs_z = 0.0;
  double baseline_norm = 0.0;     // ||mean grad log pi|| over all M*G draws
  double baseline_se_norm = 0.0;  // sqrt(sum of per-coordinate SE^2)
  double baseline_max_abs_z = 0.0;
  double j = 0.0;
  double total_probability = 0.0;
  bool pass_cosine = false;
  bool pass_z = false;
  bool pass_baseline = false;
  bool pass = false;

  json to_json() const;
};

UnbiasednessReport check_unbiasedness(const RequestEnv& env,
                                      const PolicyParams& params, int group_size,
                                      int groups, std::uint64_t seed,
                                      int threads = 1);

/// Pointwise bound, convexity, and route-equality checks for the pairwise
/// loss L(ds) = 2*softplus(-ds): L >= ln2 whenever ds < 0 (a ranking error),
/// L is convex, and -log P(correct | More) - log P(correct | Less) computed
/// through the live pair head equals L(ds) for the head's own score gap.
struct LogisticBoundReport {
  int grid_points = 0;
  double lo = 0.0, hi = 0.0, step = 0.0;
  int bound_violations = 0;
  double min_bound_margin = 0.0;  // min over error region of L - ln2
  int convexity_violations = 0;
  double min_second_difference = 0.0;
  int route_cases = 0;
  double max_route_gap = 0.0;
  bool pass = false;

  json to_json() const;
};

LogisticBoundReport check_logistic_bound(double lo, double hi, double step,
                                         int route_cases, std::uint64_t seed);

/// Central finite differences against the analytic gradients of all four
/// differentiable operations, plus the masked-observation invariance probe.
struct FiniteDifferenceReport {
  int cases = 0;
  double h = 0.0;
  double max_rel_err = 0.0;
  double max_rel_err_action = 0.0;
  double max_rel_err_ranking = 0.0;
  double max_rel_err_pair = 0.0;
  double max_rel_err_trajectory = 0.0;
  bool masking_invariant = false;
  bool pass = false;

  json to_json() const;
};

FiniteDifferenceReport finite_difference_suite(int cases, double h,
                                               std::uint64_t seed);

/// Bundle of all proposition checks with spec-level defaults.
struct VerificationOptions {
  int unbiasedness_groups = 100000;  // M
  int group_size = 8;
  int unbiasedness_seeds = 3;
  int fd_cases = 50;
  double fd_h = 1e-5;
  double grid_lo = -10.0;
  double grid_hi = 10.0;
  double grid_step = 0.01;
  int route_cases = 64;
  int enumeration_draws = 8;
  std::uint64_t seed = 20240817;
  int threads = 1;
};

struct VerificationSummary {
  EnumerationReport enumeration;
  std::vector<UnbiasednessReport> unbiasedness;  // one per seed
  FiniteDifferenceReport finite_difference;
  LogisticBoundReport logistic_bound;
  bool pass = false;

  json to_json() const;
  /// Multi-line human-readable summary, one check per line.
  std::string pretty() const;
};

VerificationSummary run_verification(const VerificationOptions& options);

}  // namespace agentrank
