#pragma once

// Seed derivation helpers. Monte Carlo work is split into fixed-size chunks,
// each with its own generator seeded from (experiment seed, chunk index), so
// results do not depend on how chunks are distributed across threads.

#include <cstdint>

namespace bitsnn::util {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk) {
  return splitmix64(splitmix64(seed) ^ (chunk + 1));
}

constexpr std::size_t kMonteCarloChunk = 65536;

}  // namespace bitsnn::util
