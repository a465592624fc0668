#pragma once

#include <cstdint>
#include <random>

namespace vcpanel {

// splitmix64 mix step; used to derive independent substreams from (seed, stream).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic engine for substream `stream` of a master seed. Replications,
// bootstrap draws and multistarts each get their own stream so results do not
// depend on scheduling.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(stream + 1));
  return std::mt19937_64(s);
}

}  // namespace vcpanel
