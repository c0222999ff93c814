#include "agentrank/agent_loop.hpp"

#include "agentrank/errors.hpp"

namespace agentrank {

Trajectory run_trajectory(Agent& agent, const RecommendationRequest& request,
                          const ToolRegistry& registry, const ToolContext& ctx,
                          const LoopConfig& config, Rng& rng) {
  if (config.t_max < 0 || config.max_steps < 1 || config.k < 1) {
    throw ContractError("run_trajectory: invalid loop config");
  }

  Trajectory t;
  t.request_uid = request.uid;
  t.user_id = request.user_id;
  t.n_candidates = static_cast<int>(request.candidates.size());
  t.k = config.k;

  auto charge = [&t](const Step& step) {
    t.steps.push_back(step);
    if (step.logprob) t.total_logprob += *step.logprob;
  };

  std::optional<Verdict> parse_failure;
  bool done = false;
  while (!done) {
    if (static_cast<int>(t.steps.size()) >= config.max_steps) {
      // Ran out of room without an answer.
      break;
    }
    AgentMove move = agent.next_move(rng);
    switch (move.kind) {
      case AgentMove::Kind::kThink: {
        Step s;
        s.kind = Step::Kind::kThink;
        s.think_note = std::move(move.think_note);
        s.logprob = move.logprob;
        charge(s);
        break;
      }
      case AgentMove::Kind::kTool: {
        ++t.n_tool;
        Step act;
        act.kind = Step::Kind::kAct;
        act.call = move.call;
        act.logprob = move.logprob;
        charge(act);
        if (t.n_tool > config.t_max) {
          // Over budget: the decision is recorded and charged, the call is
          // not executed, and the episode ends invalid.
          done = true;
          break;
        }
        Observation obs = registry.invoke(move.call, ctx);
        Step os;
        os.kind = Step::Kind::kObs;
        os.observation = obs;
        os.masked = true;
        t.steps.push_back(std::move(os));
        agent.observe(move.call, obs);
        break;
      }
      case AgentMove::Kind::kRank:
      case AgentMove::Kind::kRawText: {
        Step s;
        s.kind = Step::Kind::kRank;
        s.logprob = move.logprob;
        if (move.kind == AgentMove::Kind::kRank) {
          s.ranking = move.ranking;
          t.ranking = move.ranking;
        } else {
          ParsedRanking parsed =
              parse_boxed_ranking(move.raw_text, t.n_candidates, config.k);
          if (parsed.verdict == Verdict::kOk) {
            s.ranking = parsed.ranking;
            t.ranking = parsed.ranking;
          } else {
            // Remember why parsing failed; unless the budget check overrides
            // it below, this becomes the verdict instead of bare no_ranking.
            parse_failure = parsed.verdict;
          }
        }
        charge(s);
        done = true;
        break;
      }
    }
  }

  t.valid = validate(t, t.n_candidates, config.k, config.t_max);
  if (!t.valid.is_valid && t.valid.reason == Verdict::kNoRanking &&
      parse_failure) {
    t.valid.reason = *parse_failure;
  }
  return t;
}

}  // namespace agentrank
