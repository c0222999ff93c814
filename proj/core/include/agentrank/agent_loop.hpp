#pragma once

#include <optional>
#include <string>

#include "agentrank/rng.hpp"
#include "agentrank/tools.hpp"
#include "agentrank/trajectory.hpp"

namespace agentrank {

/// What an agent wants to do next.
struct AgentMove {
  enum class Kind { kThink, kTool, kRank, kRawText };

  Kind kind = Kind::kThink;
  json think_note;
  ToolCall call;                  // kTool
  std::vector<int> ranking;       // kRank (1-based indices)
  std::string raw_text;           // kRawText: parsed by the loop
  double logprob = 0.0;           // policy log-probability of this move
};

/**
 * A trajectory generator with per-step log-probabilities.  The loop feeds
 * each tool observation back through observe() before asking for the next
 * move, mirroring how an LLM would see tool output in its context.  Raw-text
 * finishes (kRawText) admit external text-producing adapters whose final
 * message is parsed for a boxed ranking.
 */
class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentMove next_move(Rng& rng) = 0;
  virtual void observe(const ToolCall& call, const Observation& obs) = 0;
};

struct LoopConfig {
  int t_max = 10;      // tool budget
  int max_steps = 22;  // hard cap on recorded steps
  int k = 10;          // ranking length requested
};

/**
 * Run one episode: Think/Act/Obs steps accumulate until the agent ranks,
 * exceeds the tool budget, or hits the step cap.
 *
 * Budget rule: attempting tool call t_max+1 records the Act step (so the
 * policy is charged for the decision) but does not execute it; the
 * trajectory ends with verdict budget_exceeded and n_tool = t_max + 1.
 * Every executed Act is immediately followed by exactly one Obs.
 * Observations are masked and never carry a log-probability.
 */
Trajectory run_trajectory(Agent& agent, const RecommendationRequest& request,
                          const ToolRegistry& registry, const ToolContext& ctx,
                          const LoopConfig& config, Rng& rng);

}  // namespace agentrank
