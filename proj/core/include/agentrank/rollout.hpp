#pragma once

#include <memory>
#include <vector>

#include "agentrank/agent_loop.hpp"
#include "agentrank/collab.hpp"
#include "agentrank/corpus.hpp"
#include "agentrank/policy.hpp"
#include "agentrank/tools.hpp"

namespace agentrank {

/// Immutable shared state for one experiment: data, collaborative model,
/// tool registry and episode limits.  Everything is borrowed; the caller
/// keeps the referents alive.
struct World {
  const Catalog* catalog = nullptr;
  const InteractionStream* full = nullptr;     // complete event streams
  const InteractionStream* visible = nullptr;  // train-visible truncation
  const CollabModel* collab = nullptr;         // null when collab disabled
  const ProfileStore* profiles = nullptr;      // optional cache
  const ToolRegistry* registry = nullptr;
  ToolOptions tool_options;
  LoopConfig loop;
};

/**
 * Per-request bundle of tool context and policy context.  The policy
 * context points at the tool context, so instances are pinned in place
 * (heap-allocated, no copy/move).
 */
class RequestEnv {
 public:
  RequestEnv(const RecommendationRequest& request, const World& world);
  RequestEnv(const RequestEnv&) = delete;
  RequestEnv& operator=(const RequestEnv&) = delete;

  const RecommendationRequest& request() const { return *request_; }
  const World& world() const { return *world_; }
  const ToolContext& tool_ctx() const { return tool_ctx_; }
  const PolicyContext& policy_ctx() const { return policy_ctx_; }

 private:
  const RecommendationRequest* request_;
  const World* world_;
  ToolContext tool_ctx_;
  PolicyContext policy_ctx_;
};

/// One env per request, in request order.
std::vector<std::unique_ptr<RequestEnv>> build_envs(
    std::span<const RecommendationRequest> requests, const World& world);

/// Sampled episode under the reference policy.
Trajectory rollout_sampled(const PolicyParams& params, const RequestEnv& env,
                           Rng& rng);

/// Greedy episode (argmax actions and ranking); consumes no randomness.
Trajectory rollout_greedy(const PolicyParams& params, const RequestEnv& env);

/// Seed stream tags, one per distinct consumer of randomness, so that the
/// same master seed never feeds two sites the same stream.
namespace seed_tag {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kCollab = 2;
inline constexpr std::uint64_t kRollout = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kPairMine = 5;
inline constexpr std::uint64_t kPairSample = 6;
inline constexpr std::uint64_t kVerify = 7;
inline constexpr std::uint64_t kData = 8;
}  // namespace seed_tag

/// Seed for rollout g of a request in a given epoch.  Deliberately
/// independent of batch membership and of position within the batch.
std::uint64_t rollout_seed(std::uint64_t run_seed, int epoch,
                           std::uint64_t request_uid, int g);

}  // namespace agentrank
