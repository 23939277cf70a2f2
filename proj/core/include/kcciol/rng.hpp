// SPDX-License-Identifier: Apache-2.0
//
// All randomness in kcciol flows from one master seed. Child streams are
// obtained with derive_seed(parent, index), a SplitMix64 finalizer applied to
// the pair, so stream i never depends on how many draws stream i-1 made.

#pragma once

#include <cstdint>
#include <random>

namespace kcciol {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// seed_i = hash(master_seed, i)
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(parent) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng{splitmix64(seed)}; }

}  // namespace kcciol
