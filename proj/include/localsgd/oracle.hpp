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

#include <cstdint>
#include <memory>

#include "localsgd/model.hpp"
#include "localsgd/philox.hpp"
#include "localsgd/types.hpp"

namespace localsgd {

enum class OracleKind { additive_noise, sample_with_replacement };

const char* to_string(OracleKind kind);

// Worker index reserved for diagnostic draws (never used by a run).
inline constexpr std::uint32_t kDiagnosticWorker = 0xFFFFFFFFu;

// Unbiased stochastic gradients addressed by (worker p, phase t, step k).
//
// Each draw is keyed by the master seed with counter (block, p, t, k), so
// the result is a pure function of (seed, p, t, k, w). Workers are 0-based;
// phases and steps are 1-based as in the algorithm.
class OracleStream {
 public:
  // Empty stream; usable only after assignment from a factory.
  OracleStream() = default;

  // g(w) = F'(w) + zeta with zeta ~ N(0, (sigma_inf^2 / d) I).
  static OracleStream additive(std::shared_ptr<const Objective> objective, double sigma_inf,
                               std::uint64_t master_seed);
  // g(w) = gradient of one uniformly drawn row (with replacement).
  static OracleStream sampling(std::shared_ptr<const Objective> objective,
                               std::uint64_t master_seed);

  bool valid() const { return objective_ != nullptr; }
  OracleKind kind() const { return kind_; }
  double sigma_inf() const { return sigma_inf_; }
  std::uint64_t master_seed() const { return seed_; }
  const Objective& objective() const { return *objective_; }
  std::shared_ptr<const Objective> objective_ptr() const { return objective_; }

  // Same oracle, different seed.
  OracleStream reseeded(std::uint64_t master_seed) const;

  // Throws NumericInputError when w has a non-finite entry.
  void draw_gradient(std::uint32_t p, std::uint32_t t, std::uint32_t k, const Vector& w,
                     Vector& out) const;
  Vector draw_gradient(std::uint32_t p, std::uint32_t t, std::uint32_t k, const Vector& w) const;

  // Exact E||g(w*)||^2 and E||g(w*)||^4 of the additive kind.
  double exact_sigma2() const;
  double exact_sigma4() const;

 private:
  OracleKind kind_ = OracleKind::additive_noise;
  std::shared_ptr<const Objective> objective_;
  double sigma_inf_ = 0.0;
  std::uint64_t seed_ = 0;
};

struct SigmaEstimate {
  double sigma2 = 0.0;
  double sigma2_stderr = 0.0;
  double sigma4 = 0.0;
  double sigma4_stderr = 0.0;
  int draws = 0;
};

// Monte Carlo estimates of E||g(w*)||^2 and E||g(w*)||^4 from n_draws
// diagnostic draws. Throws UsageError when n_draws < 100.
SigmaEstimate estimate_sigma_at_opt(const OracleStream& stream, const Vector& w_star,
                                    int n_draws);

}  // namespace localsgd
