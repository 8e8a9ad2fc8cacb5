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

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "localsgd/philox.hpp"

using namespace localsgd::rng;

// Known-answer vectors published with the Random123 reference
// implementation of Philox4x32-10.
TEST_CASE("philox known answers") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
        Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                      {0xffffffffu, 0xffffffffu}) ==
        Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                      {0xa4093822u, 0x299f31d0u}) ==
        Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox is usable at compile time") {
  static_assert(philox4x32_10({0, 0, 0, 0}, {0, 0})[0] == 0x6627e8d5u);
  static_assert(mulhi64(~0ull, ~0ull) == ~0ull - 1);
  static_assert(mulhi64(1ull << 63, 4) == 2);
}

TEST_CASE("mulhi64 agrees with long multiplication") {
  const std::uint64_t a = 0x123456789abcdef0ull, b = 0x0fedcba987654321ull;
  // Schoolbook product in 16-bit limbs as an independent oracle.
  std::vector<std::uint64_t> limbs(8, 0);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      limbs[static_cast<std::size_t>(i + j)] += ((a >> (16 * i)) & 0xffff) * ((b >> (16 * j)) & 0xffff);
    }
  }
  std::uint64_t carry = 0;
  for (auto& l : limbs) {
    l += carry;
    carry = l >> 16;
    l &= 0xffff;
  }
  const std::uint64_t hi = limbs[4] | (limbs[5] << 16) | (limbs[6] << 32) | (limbs[7] << 48);
  CHECK(mulhi64(a, b) == hi);
}

TEST_CASE("unit conversions stay in range") {
  CHECK(to_unit(0, 0) == 0.0);
  CHECK(to_unit(0xffffffffu, 0xffffffffu) < 1.0);
  CHECK(to_unit_open0(0xffffffffu, 0xffffffffu) > 0.0);
  CHECK(to_unit_open0(0, 0) == 1.0);
}

TEST_CASE("counter stream draws are pure and order independent") {
  const CounterStream s(42, 1, 2, 3);
  std::vector<double> forward, backward(64);
  for (std::uint32_t i = 0; i < 64; ++i) forward.push_back(s.normal_pair(i)[0]);
  for (std::uint32_t i = 64; i-- > 0;) backward[i] = s.normal_pair(i)[0];
  CHECK(forward == backward);
  const CounterStream other(42, 1, 2, 4);
  CHECK(other.block(0) != s.block(0));
  const CounterStream reseeded(43, 1, 2, 3);
  CHECK(reseeded.block(0) != s.block(0));
}

TEST_CASE("uniform_index covers its range") {
  const CounterStream s(7, 0, 0, 0);
  std::set<std::uint64_t> seen;
  for (std::uint32_t i = 0; i < 2000; ++i) {
    const auto v = s.uniform_index(i, 10);
    REQUIRE(v < 10);
    seen.insert(v);
  }
  CHECK(seen.size() == 10);
  CHECK(s.uniform_index(3, 1) == 0);
}

TEST_CASE("normal pairs have unit moments") {
  const CounterStream s(2026, 9, 9, 9);
  const int n = 200000;
  double sum = 0, sum2 = 0, sum4 = 0, cross = 0;
  for (int i = 0; i < n / 2; ++i) {
    const auto z = s.normal_pair(static_cast<std::uint32_t>(i));
    for (double v : z) {
      sum += v;
      sum2 += v * v;
      sum4 += v * v * v * v;
    }
    cross += z[0] * z[1];
  }
  const double mean = sum / n, var = sum2 / n, kurt = sum4 / n;
  // Standard errors: 1/sqrt(n), sqrt(2/n), sqrt(96/n).
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(kurt - 3.0) < 4.0 * std::sqrt(96.0 / n));
  CHECK(std::abs(cross / (n / 2)) < 4.0 / std::sqrt(n / 2.0));
}
