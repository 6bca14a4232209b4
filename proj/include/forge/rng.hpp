// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace forge {

/// SplitMix64 (Steele, Lea, Flood 2014) with the reference constants.
/// Every random draw in the toolkit goes through this generator so that
/// checkpoints, sample selections and masks are reproducible bit for bit.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Integer in [0, bound) by 128-bit multiply-shift of one draw.
  /// bound must be positive.
  std::uint64_t next_below(std::uint64_t bound) {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next()) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  /// Float in [0, 1) from the top 24 bits of one draw.
  float next_unit() {
    return static_cast<float>(next() >> 40) * 0x1.0p-24f;
  }

 private:
  std::uint64_t state_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace forge
