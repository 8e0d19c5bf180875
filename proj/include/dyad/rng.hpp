#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dyad {

/// Independent generator for (seed, stream...) built through std::seed_seq, so
/// any sub-stream can be reproduced without replaying the others.
inline std::mt19937_64 derived_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// A fresh 64-bit seed drawn from a derived stream.
inline std::uint64_t derived_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  return derived_rng(seed, stream)();
}

}  // namespace dyad
