#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ioumatch {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Sub-seed for a labeled stream, e.g. derive_seed(seed, "split").
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
/// Sub-seed for an indexed stream (per-scene generators).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index);

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace ioumatch
