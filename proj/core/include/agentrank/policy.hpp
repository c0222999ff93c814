#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "agentrank/agent_loop.hpp"
#include "agentrank/corpus.hpp"
#include "agentrank/rng.hpp"
#include "agentrank/tools.hpp"
#include "agentrank/trajectory.hpp"

namespace agentrank {

/// Flat parameter/gradient container with one block per policy head.
struct ParamVector {
  std::vector<double> action;  // (num tools + 1) x kActionFeatureCount
  std::vector<double> score;   // kScoreFeatureCount
  std::vector<double> pair;    // kScoreFeatureCount (pair-head offset)

  void add_scaled(const ParamVector& other, double alpha);
  void scale(double alpha);
  double dot(const ParamVector& other) const;
  double norm() const;
  std::size_t size() const { return action.size() + score.size() + pair.size(); }

  /// Flattened copy (action | score | pair), for estimator statistics.
  std::vector<double> flatten() const;
};

/**
 * Reference policy parameters.
 *
 * theta_action scores the action choice (call a tool / rank now) from
 * block-structured state features; theta_score scores candidates for the
 * Plackett-Luce ranking head; theta_pair is an additive offset applied on
 * top of theta_score by the pair-comparison head, so preference training
 * moves the shared ranking scores while keeping a pair-specific degree of
 * freedom.  All-zero parameters give uniform behaviour everywhere.
 */
struct PolicyParams {
  ParamVector theta;
  std::vector<std::string> tool_names;  // action indexing, registry order

  static constexpr int kFeatureVersion = 1;
  static constexpr int kCheckpointVersion = 1;

  static PolicyParams zero(const ToolRegistry& registry);

  int num_tools() const { return static_cast<int>(tool_names.size()); }
  int num_actions() const { return num_tools() + 1; }  // + rank-now
};

/// Uniformly random parameters in [-scale, scale]; used by the numerical
/// verification suites.
PolicyParams random_params(const ToolRegistry& registry, double scale,
                           Rng& rng);

/// Coordinate-wise mean of flattened parameter-vector contributions, reduced
/// with a permutation-invariant sum: the result is bit-identical under any
/// reordering of `flats`.  `shape` supplies the block sizes.
ParamVector mean_param_vectors(const ParamVector& shape,
                               const std::vector<std::vector<double>>& flats);

void save_policy(const PolicyParams& params, const std::filesystem::path& path);
/// Raises FormatError on version or feature-extractor mismatches.
PolicyParams load_policy(const std::filesystem::path& path);

// ---- features ---------------------------------------------------------------

inline constexpr int kScoreFeatureCount = 9;
inline constexpr int kActionFeatureCount = 4;

/// Static per-request candidate features (pure function of request+catalog).
struct RequestFeatures {
  int n = 0;
  std::vector<double> cat_overlap;   // history-frequency of candidate's category
  std::vector<double> price_match;   // exp(-|log price ratio|) vs history median
  std::vector<double> rating_prior;  // (avg_rating - 3) / 2, clamped
  std::vector<double> popularity;    // log-scaled review count
  std::vector<std::string> primary_cat;
  std::set<std::string> history_primary_cats;
};

RequestFeatures analyze_request(const Catalog& catalog,
                                const RecommendationRequest& request);

/**
 * What the agent has learned from tool calls so far.  Candidate-level
 * feature channels stay at zero until the tool that reveals them has run,
 * which is what makes tool use causally useful to the ranking head.
 * Evidence only ever grows within an episode.
 */
struct EvidenceState {
  std::uint32_t invoked_mask = 0;  // bit per registry tool index (attempted)
  bool has_profile = false;
  bool has_item_info = false;
  bool has_analysis = false;
  bool has_session = false;
  bool has_rating = false;
  bool has_collab = false;
  std::vector<double> collab_scores;      // length n when has_collab
  std::vector<std::uint8_t> profile_match;
  std::vector<std::uint8_t> analyzed_match;
  std::vector<std::uint8_t> session_match;
  std::vector<std::int8_t> rating_match;  // -1 / 0 / +1

  int invoked_count() const;
  bool tool_invoked(int tool_index) const {
    return (invoked_mask >> tool_index) & 1u;
  }
};

/// Everything the policy heads need to evaluate one request.
struct PolicyContext {
  const RecommendationRequest* request = nullptr;
  const Catalog* catalog = nullptr;
  const ToolRegistry* registry = nullptr;
  const ToolContext* tool_ctx = nullptr;  // for re-running tools on replay
  RequestFeatures features;
  int k = 10;
  int t_max = 10;
};

PolicyContext make_policy_context(const RecommendationRequest& request,
                                  const Catalog& catalog,
                                  const ToolRegistry& registry,
                                  const ToolContext& tool_ctx, int k,
                                  int t_max);

/// Fill the kScoreFeatureCount-vector for candidate i (0-based).
void candidate_features(const PolicyContext& ctx, const EvidenceState& ev,
                        int i, double* out);

/// s_i = theta_score . psi_i for every candidate.
std::vector<double> candidate_scores(const PolicyParams& params,
                                     const PolicyContext& ctx,
                                     const EvidenceState& ev);

/// Update evidence from one observation.  The tool's registry slot is
/// marked attempted even on failure; payload-bearing channels only change
/// on success.  Unknown tool names are ignored (nothing to absorb).
void absorb_observation(EvidenceState& ev, const PolicyContext& ctx,
                        const ToolCall& call, const Observation& obs);

/// Evidence as if every registered tool had been invoked once; used by the
/// pair-comparison stage and its mining pass.
EvidenceState full_evidence(const PolicyContext& ctx);

/// The argument-filling rule shared by the reference agent and the
/// trajectory enumerator: item lookups target the currently best-scored
/// candidate, similarity lookups anchor on the most recent history item.
ToolCall default_tool_call(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int tool_index);

// ---- action head --------------------------------------------------------------

/// Action ids: 0 = rank-now, 1..T = tool (registry order).  A tool is only
/// available while its slot has not been attempted, so the action set
/// shrinks as the episode proceeds and always contains rank-now.
std::vector<int> available_actions(const PolicyContext& ctx,
                                   const EvidenceState& ev);

struct ActionChoice {
  int action = 0;
  double logprob = 0.0;
};

ActionChoice decide_action(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int n_tool_prior, Rng& rng);

/// Greedy variant: highest-scoring action, ties to the lowest id (rank-now
/// first).  The returned logprob is the softmax log-probability of that
/// action under the sampling policy.
ActionChoice greedy_action(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int n_tool_prior);

/// Log-probability of a fixed action; accumulates d/dtheta into grad when
/// given.  Raises ContractError if the action is not available.
double action_logprob_grad(const PolicyParams& params, const PolicyContext& ctx,
                           const EvidenceState& ev, int n_tool_prior,
                           int action, ParamVector* grad);

// ---- ranking head --------------------------------------------------------------

struct RankSample {
  std::vector<int> ranking;  // k distinct 1-based indices
  double logprob = 0.0;
};

/// Plackett-Luce sampling without replacement over candidate scores.
RankSample sample_ranking(const PolicyParams& params, const PolicyContext& ctx,
                          const EvidenceState& ev, Rng& rng);

/// Argmax-per-slot decode (equivalently: sort by score, ties by index).
RankSample greedy_ranking(const PolicyParams& params, const PolicyContext& ctx,
                          const EvidenceState& ev);

/// Log-probability of a fixed ranking under the PL head (+ gradient).
double ranking_logprob_grad(const PolicyParams& params,
                            const PolicyContext& ctx, const EvidenceState& ev,
                            const std::vector<int>& ranking,
                            ParamVector* grad);

// ---- pair head ------------------------------------------------------------------

enum class PairDirection { kMore, kLess };

/// One A/B preference probe: which of two candidates would the user engage
/// with (More) or avoid (Less)?
struct PairTask {
  int item_a = 0;  // 1-based candidate index shown as option A
  int item_b = 0;  // option B
  PairDirection direction = PairDirection::kMore;
  int target = 0;  // the correct option for this direction (a or b)
};

struct PairChoiceResult {
  int chosen = 0;  // candidate index picked (item_a or item_b)
  double logprob = 0.0;
};

/// Two-way softmax over the pair-head scores s(c) = (theta_score +
/// theta_pair) . psi(c); the Less direction negates the scores.
PairChoiceResult pair_choice(const PolicyParams& params,
                             const PolicyContext& ctx, const EvidenceState& ev,
                             const PairTask& task, Rng& rng);

double pair_logprob_grad(const PolicyParams& params, const PolicyContext& ctx,
                         const EvidenceState& ev, const PairTask& task,
                         int chosen, ParamVector* grad);

// ---- trajectory replay ------------------------------------------------------------

/**
 * Recompute the policy log-probability of a recorded trajectory, optionally
 * accumulating its exact gradient.  Observations are reconstructed by
 * re-invoking the recorded tool calls against the context, so stored Obs
 * payloads are ignored entirely: they are masked conditioning, not scored
 * output.  Raises ContractError when a step is not representable by this
 * policy family (unknown tool, ranking of the wrong shape).
 */
double trajectory_logprob_and_grad(const PolicyParams& params,
                                   const PolicyContext& ctx,
                                   const Trajectory& trajectory,
                                   ParamVector* grad);

// ---- reference agent ---------------------------------------------------------------

/// Drives the agent loop with the reference policy: one Think placeholder,
/// then tool calls with default arguments until it ranks.
class ReferenceAgent : public Agent {
 public:
  enum class Mode { kSample, kGreedy };

  ReferenceAgent(const PolicyParams& params, const PolicyContext& ctx,
                 Mode mode);

  AgentMove next_move(Rng& rng) override;
  void observe(const ToolCall& call, const Observation& obs) override;

  const EvidenceState& evidence() const { return evidence_; }

 private:
  const PolicyParams& params_;
  const PolicyContext& ctx_;
  Mode mode_;
  EvidenceState evidence_;
  bool think_emitted_ = false;
  int n_tool_ = 0;
};

}  // namespace agentrank
