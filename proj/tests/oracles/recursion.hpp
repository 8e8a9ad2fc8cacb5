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

// Exact moment recursions for diagonal quadratics under additive Gaussian
// noise. Each coordinate j evolves as e <- (1 - eta lambda_j) e + eta z with
// z ~ N(0, s2 / d), independently across workers and steps, so means and
// variances propagate in closed form.

#include <cstdint>
#include <vector>

namespace oracle {

struct CoordinateMoments {
  double mean = 0.0;
  double var = 0.0;
  double second() const { return mean * mean + var; }
};

// E||hat w^t - w*||^2 after each phase (index 0 is the start), for a
// diagonal spectrum, start offset e0 per coordinate, P workers and phase
// lengths N^t.
inline std::vector<double> hat_second_moments(const std::vector<double>& spectrum,
                                              const std::vector<double>& e0, double eta,
                                              double sigma_inf2, int P,
                                              const std::vector<std::int64_t>& lengths) {
  const double noise = sigma_inf2 / static_cast<double>(spectrum.size());
  std::vector<CoordinateMoments> m(spectrum.size());
  for (std::size_t j = 0; j < m.size(); ++j) m[j].mean = e0[j];
  std::vector<double> out;
  auto total = [&m] {
    double s = 0.0;
    for (const auto& c : m) s += c.second();
    return s;
  };
  out.push_back(total());
  for (auto N : lengths) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double q = 1.0 - eta * spectrum[j];
      double local_var = 0.0;  // variance added within the phase by one worker
      for (std::int64_t k = 0; k < N; ++k) {
        m[j].mean *= q;
        m[j].var *= q * q;
        local_var = q * q * local_var + eta * eta * noise;
      }
      m[j].var += local_var / P;
    }
    out.push_back(total());
  }
  return out;
}

// Per-worker E||w_{p,k} - w*||^2 within every phase, k = 0..N, flattened.
inline std::vector<double> local_second_moments(const std::vector<double>& spectrum,
                                                const std::vector<double>& e0, double eta,
                                                double sigma_inf2, int P,
                                                const std::vector<std::int64_t>& lengths) {
  const double noise = sigma_inf2 / static_cast<double>(spectrum.size());
  std::vector<CoordinateMoments> start(spectrum.size());
  for (std::size_t j = 0; j < start.size(); ++j) start[j].mean = e0[j];
  std::vector<double> out;
  for (auto N : lengths) {
    std::vector<CoordinateMoments> cur = start;
    std::vector<double> local(spectrum.size(), 0.0);
    for (std::int64_t k = 0; k <= N; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < cur.size(); ++j) s += cur[j].mean * cur[j].mean + cur[j].var + local[j];
      out.push_back(s);
      if (k == N) break;
      for (std::size_t j = 0; j < cur.size(); ++j) {
        const double q = 1.0 - eta * spectrum[j];
        cur[j].mean *= q;
        cur[j].var *= q * q;
        local[j] = q * q * local[j] + eta * eta * noise;
      }
    }
    for (std::size_t j = 0; j < cur.size(); ++j) {
      start[j].mean = cur[j].mean;
      start[j].var = cur[j].var + local[j] / P;
    }
  }
  return out;
}

// 1-D serial (or mini-batch, via sigma_inf2 / P) second moment
// e_{k+1} = (1 - eta lambda)^2 e_k + eta^2 s2, for k = 0..K.
inline std::vector<double> scalar_second_moments(double lambda, double e0, double eta, double s2,
                                                 std::int64_t K) {
  std::vector<double> out{e0};
  const double q = 1.0 - eta * lambda;
  for (std::int64_t k = 0; k < K; ++k) out.push_back(q * q * out.back() + eta * eta * s2);
  return out;
}

// 1-D Gaussian fourth moment: e = m + v with m the mean and v the variance
// gives E e^4 = m^4 + 6 m^2 v + 3 v^2.
inline std::vector<double> scalar_fourth_moments(double lambda, double e0, double eta, double s2,
                                                 std::int64_t K) {
  std::vector<double> out;
  double m = e0, v = 0.0;
  const double q = 1.0 - eta * lambda;
  for (std::int64_t k = 0; k <= K; ++k) {
    out.push_back(m * m * m * m + 6.0 * m * m * v + 3.0 * v * v);
    m *= q;
    v = q * q * v + eta * eta * s2;
  }
  return out;
}

}  // namespace oracle
