#pragma once

#include <cstdint>
#include <random>

namespace aggrml {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-streams from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` (a fixed tag) and index `index` under `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix_seed(mix_seed(seed ^ mix_seed(stream)) + index);
}

namespace streams {
inline constexpr std::uint64_t kSynth = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kLsh = 3;
inline constexpr std::uint64_t kSample = 4;
inline constexpr std::uint64_t kActiveUsers = 5;
}  // namespace streams

}  // namespace aggrml
