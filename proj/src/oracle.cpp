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

#include "localsgd/oracle.hpp"

#include <cmath>
#include <utility>

#include "localsgd/errors.hpp"

namespace localsgd {

const char* to_string(OracleKind kind) {
  return kind == OracleKind::additive_noise ? "additive" : "sampling";
}

OracleStream OracleStream::additive(std::shared_ptr<const Objective> objective,
                                    double sigma_inf, std::uint64_t master_seed) {
  if (!objective) throw UsageError("oracle needs an objective");
  if (!(sigma_inf >= 0.0) || !std::isfinite(sigma_inf)) {
    throw ConfigError("sigma_inf must be finite and non-negative");
  }
  OracleStream s;
  s.kind_ = OracleKind::additive_noise;
  s.objective_ = std::move(objective);
  s.sigma_inf_ = sigma_inf;
  s.seed_ = master_seed;
  return s;
}

OracleStream OracleStream::sampling(std::shared_ptr<const Objective> objective,
                                    std::uint64_t master_seed) {
  if (!objective) throw UsageError("oracle needs an objective");
  if (objective->dataset() == nullptr) {
    throw ConfigError("sampling oracle needs an objective built from a dataset");
  }
  OracleStream s;
  s.kind_ = OracleKind::sample_with_replacement;
  s.objective_ = std::move(objective);
  s.seed_ = master_seed;
  return s;
}

OracleStream OracleStream::reseeded(std::uint64_t master_seed) const {
  OracleStream s = *this;
  s.seed_ = master_seed;
  return s;
}

void OracleStream::draw_gradient(std::uint32_t p, std::uint32_t t, std::uint32_t k,
                                 const Vector& w, Vector& out) const {
  if (!w.allFinite()) throw NumericInputError("oracle queried at a non-finite point");
  const rng::CounterStream stream(seed_, p, t, k);
  if (kind_ == OracleKind::sample_with_replacement) {
    const auto n = static_cast<std::uint64_t>(objective_->dataset()->rows());
    objective_->row_gradient(static_cast<Index>(stream.uniform_index(0, n)), w, out);
    return;
  }
  objective_->gradient(w, out);
  if (sigma_inf_ == 0.0) return;
  const Index d = w.size();
  const double scale = sigma_inf_ / std::sqrt(static_cast<double>(d));
  for (Index j = 0; j < d; j += 2) {
    const auto z = stream.normal_pair(static_cast<std::uint32_t>(j / 2));
    out[j] += scale * z[0];
    if (j + 1 < d) out[j + 1] += scale * z[1];
  }
}

Vector OracleStream::draw_gradient(std::uint32_t p, std::uint32_t t, std::uint32_t k,
                                   const Vector& w) const {
  Vector out(w.size());
  draw_gradient(p, t, k, w, out);
  return out;
}

double OracleStream::exact_sigma2() const {
  if (kind_ != OracleKind::additive_noise) throw UsageError("exact moments need additive noise");
  return sigma_inf_ * sigma_inf_;
}

double OracleStream::exact_sigma4() const {
  // ||zeta||^2 is (sigma^2/d) chi^2_d, whose second moment is (sigma^2/d)^2 d (d+2).
  const double d = static_cast<double>(objective_->dim());
  const double s2 = exact_sigma2();
  return s2 * s2 * (d + 2.0) / d;
}

SigmaEstimate estimate_sigma_at_opt(const OracleStream& stream, const Vector& w_star,
                                    int n_draws) {
  if (n_draws < 100) throw UsageError("estimate_sigma_at_opt needs at least 100 draws");
  Vector g(w_star.size());
  double s2 = 0.0, s2sq = 0.0, s4 = 0.0, s4sq = 0.0;
  for (int i = 0; i < n_draws; ++i) {
    stream.draw_gradient(kDiagnosticWorker, 0, static_cast<std::uint32_t>(i), w_star, g);
    const double a = g.squaredNorm();
    const double b = a * a;
    s2 += a;
    s2sq += a * a;
    s4 += b;
    s4sq += b * b;
  }
  const double n = n_draws;
  SigmaEstimate est;
  est.draws = n_draws;
  est.sigma2 = s2 / n;
  est.sigma4 = s4 / n;
  auto stderr_of = [n](double sum, double sumsq) {
    const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
    return std::sqrt(var / n);
  };
  est.sigma2_stderr = stderr_of(s2, s2sq);
  est.sigma4_stderr = stderr_of(s4, s4sq);
  return est;
}

}  // namespace localsgd
