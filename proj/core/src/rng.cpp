#include "agentrank/rng.hpp"

#include "agentrank/errors.hpp"

namespace agentrank {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw ContractError("Rng::uniform_int: bound must be > 0");
  // Multiply-shift mapping of a 64-bit draw onto [0, bound).  The bias is
  // O(bound / 2^64), far below anything observable at this scale.
  unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * bound;
  return static_cast<std::uint64_t>(wide >> 64);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n,
                                                         std::size_t k) {
  if (k > n) {
    throw ContractError(
        "Rng::sample_without_replacement: requested more than population");
  }
  // Partial Fisher-Yates over an index array; O(n) setup is fine at the
  // catalog sizes this library targets.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::uint64_t Rng::derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> labels) {
  std::uint64_t h = splitmix64(seed ^ 0x8e93b7bcaa2c0f31ULL);
  for (std::uint64_t label : labels) {
    h = splitmix64(h ^ splitmix64(label));
  }
  return h;
}

std::uint64_t Rng::hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace agentrank
