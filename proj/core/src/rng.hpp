#pragma once

#include <cstdint>
#include <random>

namespace divelab {

/// Engine for one (seed, stream) pair. Distinct streams give unrelated sequences.
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Stream ids. Values below 16 are reserved for SampleStream.
namespace streams {
inline constexpr std::uint64_t kClassMeans = 0;
inline constexpr std::uint64_t kSubsample = 16;
inline constexpr std::uint64_t kInit = 17;
inline constexpr std::uint64_t kShuffle = 18;
}  // namespace streams

}  // namespace divelab
