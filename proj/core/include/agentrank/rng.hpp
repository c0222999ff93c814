#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace agentrank {

/**
 * Deterministic random stream.
 *
 * Wraps std::mt19937_64 but implements its own uniform draws and shuffle so
 * results do not depend on standard-library distribution internals.  Every
 * randomized operation in the library is a pure function of (inputs, seed),
 * and independent streams are derived with Rng::derive rather than by
 * sharing one engine across call sites.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Fisher-Yates shuffle with this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Sample k distinct indices from [0, n) without replacement.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

  /// Derive a child seed from a parent seed and a list of stream labels
  /// (epoch, batch, request id, rollout index, ...).  SplitMix64-style
  /// avalanche so nearby labels give unrelated streams.
  static std::uint64_t derive(std::uint64_t seed,
                              std::initializer_list<std::uint64_t> labels);

  /// Stable 64-bit hash for strings (FNV-1a), used to label streams.
  static std::uint64_t hash_str(std::string_view s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace agentrank
