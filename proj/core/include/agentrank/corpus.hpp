#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "agentrank/json_io.hpp"
#include "agentrank/rng.hpp"

namespace agentrank {

/// One catalog entry.  Optional fields may be absent in ingested files.
struct Item {
  std::string item_id;
  std::string title;
  std::vector<std::string> categories;  // nonempty, most specific first
  std::optional<double> price;
  std::optional<double> avg_rating;    // in [0, 5]
  std::optional<std::int64_t> review_count;
};

/// A single user/item event.  Rating is optional (not every event is rated).
struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;  // seconds-like integer clock
  std::optional<double> rating;  // in [0, 5]
};

/// Immutable item table keyed by item_id, preserving file order.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Item> items);

  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  bool contains(const std::string& item_id) const;
  /// Throws DataError naming the id when absent.
  const Item& lookup(const std::string& item_id) const;
  const Item* find(const std::string& item_id) const;

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-user, time-sorted interaction sequences.  Users are kept in
/// lexicographic id order so iteration is deterministic.
struct UserStream {
  std::string user_id;
  std::vector<Interaction> events;  // nondecreasing timestamps, stable order
};

class InteractionStream {
 public:
  InteractionStream() = default;
  /// Groups by user and stably sorts each user's events by timestamp.
  explicit InteractionStream(std::vector<Interaction> events);

  const std::vector<UserStream>& users() const { return users_; }
  std::size_t total_events() const { return total_; }

  const UserStream* find_user(const std::string& user_id) const;
  /// Throws DataError when the user is unknown.
  const UserStream& user(const std::string& user_id) const;

  /// Copy of this stream keeping only events with timestamp < cutoff.
  InteractionStream truncated_before(std::int64_t cutoff) const;

 private:
  std::vector<UserStream> users_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

enum class SplitTag { kTrain, kVal, kTest };

const char* split_tag_name(SplitTag tag);

/// One next-item task: rank the candidate list given the user's history.
struct RecommendationRequest {
  std::string user_id;
  std::vector<std::string> history;     // item ids, oldest first, capped
  std::vector<std::string> candidates;  // n distinct item ids, shuffled
  int positive_index = 0;               // 1-based position of the target
  SplitTag split_tag = SplitTag::kTrain;
  std::int64_t target_timestamp = 0;
  int target_pos = 0;        // index of the target within the user stream
  std::uint64_t uid = 0;     // stable id used to derive rollout seeds
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct RequestOptions {
  int n_candidates = 20;
  int max_history = 10;
  int min_history = 1;  // targets need at least this many prior events
};

struct DatasetSplit {
  std::vector<RecommendationRequest> train;
  std::vector<RecommendationRequest> val;
  std::vector<RecommendationRequest> test;
  std::uint64_t split_seed = 0;
  /// Timestamp of the earliest non-train target; events at or after this
  /// must not influence anything fitted on the train split.  Set to
  /// INT64_MAX when val and test are empty.
  std::int64_t train_visible_end = 0;
};

/// Parse an items JSONL file.  Unknown fields are ignored; missing or
/// malformed required fields raise ParseError with the offending line.
Catalog ingest_catalog(const std::filesystem::path& path);

/// Parse an interactions JSONL file against a catalog.  Every event must
/// reference a known item; dangling references raise DataError naming the id.
InteractionStream ingest_interactions(const std::filesystem::path& path,
                                      const Catalog& catalog);

/**
 * Build one request for the interaction at `target_pos` in `user_id`'s
 * stream.  History is the most recent `max_history` prior events (oldest
 * first); the candidate list is the target plus n-1 negatives sampled
 * uniformly without replacement from the catalog excluding the history and
 * the target, then shuffled.  Deterministic given the rng state.
 */
RecommendationRequest build_request(const Catalog& catalog,
                                    const InteractionStream& stream,
                                    const std::string& user_id, int target_pos,
                                    const RequestOptions& opt, Rng& rng);

/**
 * Chronological split: targets (events with >= min_history prior events by
 * the same user) are ordered by global timestamp and divided by the given
 * ratios, so every train target precedes every val target precedes every
 * test target.  Raises DataError when no targets exist.
 */
DatasetSplit chronological_split(const Catalog& catalog,
                                 const InteractionStream& stream,
                                 const SplitRatios& ratios,
                                 const RequestOptions& opt,
                                 std::uint64_t seed);

/// Planted-preference generator configuration.
struct SyntheticConfig {
  int num_items = 200;
  int num_users = 500;
  int num_categories = 10;
  int sessions_per_user = 4;
  int session_len_min = 2;
  int session_len_max = 4;
  /// Probability a fresh pick comes from the user's preferred categories.
  double category_affinity = 0.9;
  /// Probability a within-session pick follows the previous item's
  /// co-purchase neighborhood instead of a fresh pick.
  double cooc_strength = 0.6;
  /// Number of co-purchase companions per item (ring within its category).
  int cooc_degree = 4;
  /// Probability an interaction carries a rating.
  double rating_prob = 0.7;
};

struct SyntheticData {
  Catalog catalog;
  InteractionStream stream;
  /// Documents the planted structure (per-user preferred categories,
  /// companion degree, generator config) for verification.
  json metadata;
};

/// Deterministic generator for the planted-preference environment.
SyntheticData generate_synthetic(const SyntheticConfig& config,
                                 std::uint64_t seed);

/// Serialize to the JSONL formats accepted by the ingest functions.
void write_catalog_jsonl(const Catalog& catalog,
                         const std::filesystem::path& path);
void write_interactions_jsonl(const InteractionStream& stream,
                              const std::filesystem::path& path);

}  // namespace agentrank
