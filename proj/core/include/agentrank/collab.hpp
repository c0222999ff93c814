#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "agentrank/corpus.hpp"

namespace agentrank {

struct CollabConfig {
  int dim = 32;          // embedding dimension d
  int iterations = 50;   // least-squares refinement rounds
  double shift = 1.0;    // PPMI shift k (1 = plain PPMI)
  double reg = 0.01;     // ridge term keeping the solves well-posed
};

/// A scored neighbour returned by the similarity queries.
struct Neighbor {
  std::string id;
  double score = 0.0;
};

/**
 * Item/user embeddings fitted from co-occurrence statistics.
 *
 * Items that co-occur within user histories receive vectors with positive
 * inner products; items never observed in any window are "cold" and carry
 * the zero vector, which every scoring path treats as "no evidence"
 * (similarity and preference scores of exactly 0).
 */
class CollabModel {
 public:
  CollabModel() = default;

  int dim() const { return dim_; }
  std::uint64_t training_seed() const { return training_seed_; }

  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }

  /// Zero vector for unknown/cold ids.
  std::vector<double> item_vector(const std::string& item_id) const;
  std::vector<double> user_vector(const std::string& user_id) const;

  bool item_is_cold(const std::string& item_id) const;

  /// Preference score: dot(user vector, item vector); 0 when either is cold
  /// or unknown.
  double score(const std::string& user_id, const std::string& item_id) const;

  /// Top-k items by cosine similarity to the query item, excluding the query
  /// itself.  Ties (including the all-cold case, where every score is 0)
  /// break by ascending item id.  Unknown query raises DataError.
  std::vector<Neighbor> similar_items(const std::string& item_id,
                                      std::size_t k) const;

  /// Same over user vectors.
  std::vector<Neighbor> similar_users(const std::string& user_id,
                                      std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static CollabModel load(const std::filesystem::path& path);

  /**
   * Fit from the train-visible portion of an interaction stream.
   *
   * Pipeline: symmetric co-occurrence counts over within-user windows
   * (window = the user's full visible history), shifted-PPMI transform,
   * then a rank-d factorization M ~ W W^T found by repeated ridge
   * least-squares refinements W <- M W (W^T W + reg I)^-1 from a seeded
   * random start.  User vectors are the mean of the user's item vectors.
   * Deterministic given (stream, config, seed).
   */
  static CollabModel fit(const Catalog& catalog,
                         const InteractionStream& visible,
                         const CollabConfig& config, std::uint64_t seed);

  static constexpr int kFormatVersion = 1;

 private:
  int dim_ = 0;
  std::uint64_t training_seed_ = 0;
  std::vector<std::string> item_ids_;
  std::vector<std::string> user_ids_;
  std::vector<double> item_rows_;  // row-major [items x dim]
  std::vector<double> user_rows_;  // row-major [users x dim]
  std::vector<std::uint8_t> item_cold_;
  std::unordered_map<std::string, std::size_t> item_index_;
  std::unordered_map<std::string, std::size_t> user_index_;

  void rebuild_indices();
  std::vector<Neighbor> neighbors(const std::vector<std::string>& ids,
                                  const std::vector<double>& rows,
                                  std::size_t query, std::size_t k) const;
};

}  // namespace agentrank
