#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentrank/collab.hpp"
#include "agentrank/corpus.hpp"
#include "agentrank/json_io.hpp"

namespace agentrank {

/// JSON-schema-like description of one callable tool.
struct ToolSchema {
  std::string name;
  std::string description;
  json parameters;  // {"type":"object","properties":{...},"required":[...]}

  json to_json() const;
  static ToolSchema from_json(const json& j);
};

struct ToolCall {
  std::string name;
  json arguments = json::object();

  json to_json() const;
  static ToolCall from_json(const json& j);
};

/**
 * Result of one tool invocation.  Failures (unknown item, missing argument,
 * unavailable model) are soft: ok=false with an explanatory note, never an
 * exception, so an agent can observe the failure and continue.
 */
struct Observation {
  bool ok = true;
  std::string text;           // rendered deterministically from `structured`
  json structured = json::object();
  std::string error_note;     // nonempty iff !ok

  json to_json() const;
  static Observation from_json(const json& j);
};

/// Cached per-user profile snapshots.  Optional: when absent (or when a user
/// has no entry) the profile tool recomputes its template on the fly.  The
/// update hook is single-writer by contract and is only ever applied between
/// training batches.
class ProfileStore {
 public:
  const json* get(const std::string& user_id) const;
  void update(const std::string& user_id, json profile);
  std::size_t size() const { return profiles_.size(); }

 private:
  std::map<std::string, json> profiles_;
};

struct ToolOptions {
  std::int64_t session_gap = 14400;  // clock units separating sessions
  int max_sessions = 2;              // most recent sessions summarized
  int profile_top_categories = 3;
  int similar_items_k = 5;
  int similar_users_k = 3;
  int neighbor_recent_titles = 3;
  int rating_bucket_max = 5;         // titles listed per rating bucket
};

/**
 * Everything a tool may look at while answering one request.
 *
 * `user_prior` is the requesting user's interactions strictly before the
 * target event: the legitimate input context.  `visible` is the
 * train-visible stream used for other-user information (neighbour
 * summaries), frozen at the train boundary like the collaborative model.
 * Nothing here identifies which candidate is the target.
 */
struct ToolContext {
  const RecommendationRequest* request = nullptr;
  const Catalog* catalog = nullptr;
  const InteractionStream* visible = nullptr;
  std::span<const Interaction> user_prior;
  const CollabModel* collab = nullptr;      // null when collab tools disabled
  const ProfileStore* profiles = nullptr;   // optional cache
  ToolOptions options;
};

/// Builds a ToolContext, slicing the user's pre-target prefix out of the
/// full stream.  `full` must contain the request's user.
ToolContext make_tool_context(const RecommendationRequest& request,
                              const Catalog& catalog,
                              const InteractionStream& full,
                              const InteractionStream& visible,
                              const CollabModel* collab,
                              const ProfileStore* profiles,
                              const ToolOptions& options);

struct RegistryOptions {
  bool collab_enabled = true;  // registers the two collaborative tools
  /// When nonempty, keep only these tools (intersection, registration order
  /// preserved).  Used by the verification environments to shrink the
  /// action space to something exhaustively enumerable.
  std::vector<std::string> allowlist;
};

/**
 * The fixed tool set.  Names, in registration order:
 *   get_user_profile, item_info_search, candidates_analyze,
 *   get_session_behavior, get_rating_behavior, get_similar_items,
 *   get_similar_users
 * The last two require a collaborative model and are dropped when collab is
 * disabled.  Invocation is a pure function of (call, context).
 */
class ToolRegistry {
 public:
  explicit ToolRegistry(RegistryOptions options = {});

  /// Registration order; stable across runs, used as the action indexing.
  const std::vector<std::string>& names() const { return names_; }
  bool has(const std::string& name) const;
  std::size_t size() const { return names_.size(); }

  /// Schemas sorted by tool name.
  std::vector<ToolSchema> list_schemas() const;

  /// Executes a tool.  Unknown names and bad arguments come back as failed
  /// observations, not exceptions.
  Observation invoke(const ToolCall& call, const ToolContext& ctx) const;

 private:
  RegistryOptions options_;
  std::vector<std::string> names_;
};

/// Re-renders the human-readable text for a structured payload; invoke()
/// guarantees Observation::text == render_tool_text(name, structured).
std::string render_tool_text(const std::string& name, const json& structured);

/// Recomputes the structured profile template from a user's prior events
/// (exposed so the optional profile-update hook can refresh the store).
json compute_profile(const Catalog& catalog,
                     std::span<const Interaction> user_prior,
                     const ToolOptions& options);

}  // namespace agentrank
