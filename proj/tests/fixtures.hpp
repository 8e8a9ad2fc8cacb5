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

// Shared fixtures for the unit tests.

#include <memory>
#include <random>
#include <vector>

#include "localsgd/dataset.hpp"
#include "localsgd/engine.hpp"
#include "localsgd/model.hpp"
#include "localsgd/oracle.hpp"
#include "localsgd/schedule.hpp"

namespace fixtures {

using namespace localsgd;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline Vector random_vector(std::mt19937_64& rng, Index d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

inline std::shared_ptr<const Objective> quadratic(std::initializer_list<double> spectrum,
                                                  std::optional<Vector> optimum = std::nullopt,
                                                  std::optional<std::uint64_t> rotation = std::nullopt) {
  const Vector s = vec(spectrum);
  return std::make_shared<const Objective>(
      make_quadratic(s, optimum ? *optimum : Vector::Zero(s.size()), rotation));
}

inline std::shared_ptr<const Objective> logistic(Index n = 300, double lambda = 0.1,
                                                 std::uint64_t seed = 5) {
  const Matrix sigma = vec({1.0, 0.5, 0.25}).asDiagonal();
  auto data = std::make_shared<const Dataset>(
      make_logistic_dataset(n, sigma, vec({1.0, -1.0, 0.5}), seed));
  return std::make_shared<const Objective>(make_empirical_objective(data, lambda));
}

inline std::shared_ptr<const Objective> lsr(Index n = 400, double noise = 0.5,
                                            std::uint64_t seed = 3) {
  const Matrix sigma = vec({1.0, 0.3}).asDiagonal();
  auto data = std::make_shared<const Dataset>(make_lsr_dataset(n, sigma, vec({2.0, -1.0}), noise, seed));
  return std::make_shared<const Objective>(make_empirical_objective(data, 0.0));
}

// Local-SGD run config over an additive-noise oracle.
inline RunConfig local_config(std::shared_ptr<const Objective> obj, double sigma_inf,
                              std::int64_t P, CommSchedule comm, LearningRateSchedule lr,
                              Vector w0, std::uint64_t seed = 11) {
  RunConfig cfg;
  cfg.workers = P;
  cfg.comm = std::move(comm);
  cfg.lr = lr;
  cfg.w0 = std::move(w0);
  cfg.master_seed = seed;
  cfg.oracle = OracleStream::additive(obj, sigma_inf, seed);
  return cfg;
}

}  // namespace fixtures
