#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace brw {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream. Rule: splitmix64(root ^ splitmix64(stream)).
/// Replica r of an experiment with root seed s uses stream_seed(s, r).
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(root ^ splitmix64(stream));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Exp(rate) holding time.
inline double exponential(Rng& rng, double rate) {
  return -std::log1p(-uniform01(rng)) / rate;
}

/// Counter-based uniform in [0, 1) keyed by (seed, a, b); used for per-edge coins
/// so the decision for an edge does not depend on iteration order.
inline double hashed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(a)) ^ b);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace brw
