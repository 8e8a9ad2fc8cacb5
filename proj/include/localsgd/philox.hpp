// Copyright 2026 The localsgd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC'11).
//
// Every draw is a pure function of (key, counter), so a stream indexed by
// (worker, phase, step) can be evaluated in any order and on any thread.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace localsgd::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr Counter philox_round(const Counter& c, const Key& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

constexpr Counter philox4x32_10(Counter c, Key k) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kPhiloxW0;
      k[1] += kPhiloxW1;
    }
    c = philox_round(c, k);
  }
  return c;
}

// SplitMix64 finalizer; used to derive independent 64-bit keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr Key key_from_seed(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// High 64 bits of the 128-bit product a * b.
constexpr std::uint64_t mulhi64(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t a_lo = a & 0xFFFFFFFFu, a_hi = a >> 32;
  const std::uint64_t b_lo = b & 0xFFFFFFFFu, b_hi = b >> 32;
  const std::uint64_t lo_lo = a_lo * b_lo;
  const std::uint64_t hi_lo = a_hi * b_lo;
  const std::uint64_t lo_hi = a_lo * b_hi;
  const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xFFFFFFFFu) + lo_hi;
  return a_hi * b_hi + (hi_lo >> 32) + (cross >> 32);
}

// Uniform double in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

// Uniform double in (0, 1].
constexpr double to_unit_open0(std::uint32_t hi, std::uint32_t lo) {
  return 1.0 - to_unit(hi, lo);
}

// Random source addressed by a 3-word prefix; the fourth counter word walks
// through blocks of 4x32 bits. Each block yields two uniforms or two
// standard normals.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c)
      : key_(key_from_seed(seed)), prefix_{a, b, c} {}

  Counter block(std::uint32_t index) const {
    return philox4x32_10({index, prefix_[0], prefix_[1], prefix_[2]}, key_);
  }

  // Two independent N(0,1) variates from block `index` (Box-Muller).
  std::array<double, 2> normal_pair(std::uint32_t index) const {
    const Counter r = block(index);
    const double u1 = to_unit_open0(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  // Uniform integer in [0, n) from the first 64 bits of block `index`.
  std::uint64_t uniform_index(std::uint32_t index, std::uint64_t n) const {
    const Counter r = block(index);
    const std::uint64_t x = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    return mulhi64(x, n);
  }

  double uniform(std::uint32_t index) const {
    const Counter r = block(index);
    return to_unit(r[0], r[1]);
  }

 private:
  Key key_;
  std::array<std::uint32_t, 3> prefix_;
};

}  // namespace localsgd::rng
