#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agentrank/corpus.hpp"
#include "agentrank/tools.hpp"

namespace agentrank {

/// Why a trajectory's final answer is (in)valid.
enum class Verdict {
  kOk,
  kBudgetExceeded,
  kMalformedRanking,
  kWrongLength,
  kDuplicateIndex,
  kOutOfRange,
  kNoRanking,
};

const char* verdict_name(Verdict v);
Verdict verdict_from_name(const std::string& name);

struct ValidityVerdict {
  bool is_valid = false;
  Verdict reason = Verdict::kNoRanking;
};

/// One entry in a trajectory.  The log-probability is present on the steps
/// the policy is charged for (Think/Act/Rank); observations are masked and
/// never carry one.
struct Step {
  enum class Kind { kThink, kAct, kObs, kRank };

  Kind kind = Kind::kThink;
  json think_note;                    // Think
  ToolCall call;                      // Act
  Observation observation;            // Obs
  std::vector<int> ranking;           // Rank (1-based candidate indices)
  std::optional<double> logprob;      // set iff kind != kObs
  bool masked = false;                // true iff kind == kObs

  json to_json() const;
  static Step from_json(const json& j);
};

struct Trajectory {
  std::uint64_t request_uid = 0;
  std::string user_id;
  int n_candidates = 0;
  int k = 0;                          // ranking length the task asked for
  std::vector<Step> steps;
  std::optional<std::vector<int>> ranking;  // parsed final answer
  int n_tool = 0;                     // Act steps, including a budget-cut one
  double total_logprob = 0.0;         // sum over unmasked step logprobs
  ValidityVerdict valid;

  json to_json() const;
  static Trajectory from_json(const json& j);
};

struct ParsedRanking {
  Verdict verdict = Verdict::kNoRanking;
  std::vector<int> ranking;  // populated iff verdict == kOk
};

/**
 * Extract a ranking from free text: the LAST occurrence of a boxed list
 * `\boxed{[i1, i2, ...]}` is parsed and checked for exactly `k` distinct
 * 1-based indices within [1, n].  Violations map to the matching verdict
 * (no_ranking, malformed_ranking, wrong_length, duplicate_index,
 * out_of_range) instead of raising.
 */
ParsedRanking parse_boxed_ranking(const std::string& text, int n, int k);

/// Validity checks over a finished trajectory, in order: tool budget,
/// ranking presence, length, uniqueness, index range.  Idempotent and free
/// of side effects.
ValidityVerdict validate(const Trajectory& t, int n, int k, int t_max);

}  // namespace agentrank
