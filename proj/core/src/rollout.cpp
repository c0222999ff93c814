#include "agentrank/rollout.hpp"

#include "agentrank/errors.hpp"

namespace agentrank {

RequestEnv::RequestEnv(const RecommendationRequest& request, const World& world)
    : request_(&request), world_(&world) {
  if (!world.catalog || !world.full || !world.visible || !world.registry) {
    throw ContractError("RequestEnv: incomplete world");
  }
  tool_ctx_ = make_tool_context(request, *world.catalog, *world.full,
                                *world.visible, world.collab, world.profiles,
                                world.tool_options);
  policy_ctx_ = make_policy_context(request, *world.catalog, *world.registry,
                                    tool_ctx_, world.loop.k, world.loop.t_max);
}

std::vector<std::unique_ptr<RequestEnv>> build_envs(
    std::span<const RecommendationRequest> requests, const World& world) {
  std::vector<std::unique_ptr<RequestEnv>> envs;
  envs.reserve(requests.size());
  for (const RecommendationRequest& r : requests) {
    envs.push_back(std::make_unique<RequestEnv>(r, world));
  }
  return envs;
}

Trajectory rollout_sampled(const PolicyParams& params, const RequestEnv& env,
                           Rng& rng) {
  ReferenceAgent agent(params, env.policy_ctx(), ReferenceAgent::Mode::kSample);
  return run_trajectory(agent, env.request(), *env.world().registry,
                        env.tool_ctx(), env.world().loop, rng);
}

Trajectory rollout_greedy(const PolicyParams& params, const RequestEnv& env) {
  ReferenceAgent agent(params, env.policy_ctx(), ReferenceAgent::Mode::kGreedy);
  Rng rng(0);  // greedy decoding draws nothing from it
  return run_trajectory(agent, env.request(), *env.world().registry,
                        env.tool_ctx(), env.world().loop, rng);
}

std::uint64_t rollout_seed(std::uint64_t run_seed, int epoch,
                           std::uint64_t request_uid, int g) {
  return Rng::derive(run_seed, {seed_tag::kRollout,
                                static_cast<std::uint64_t>(epoch), request_uid,
                                static_cast<std::uint64_t>(g)});
}

}  // namespace agentrank
