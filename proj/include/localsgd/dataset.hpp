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
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "localsgd/types.hpp"

namespace localsgd {

enum class Task { regression, classification };
enum class DataSource { synthetic, file };

// Rows (x_i, y_i) stored as a dense n x d feature matrix and a label vector.
// Immutable once built; share through std::shared_ptr<const Dataset>.
struct Dataset {
  RowMatrix features;
  Vector labels;
  Task task = Task::regression;
  DataSource source = DataSource::synthetic;

  Index rows() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  // Throws InvalidProblemError on non-finite entries, on a size mismatch, or
  // on classification labels outside {-1, +1}.
  void validate() const;

  // Largest Euclidean row norm.
  double max_row_norm() const;
};

enum class FeatureNormalization { none, unit_norm };

Dataset normalize_features(const Dataset& data, FeatureNormalization mode);

// Features are drawn i.i.d. with covariance `sigma` from a Gaussian truncated
// at 6 standard deviations (rescaled to unit variance), so every row is
// bounded. Labels are <x, w_true> plus N(0, label_noise_sd^2) noise.
Dataset make_lsr_dataset(Index n, const Matrix& sigma, const Vector& w_true,
                         double label_noise_sd, std::uint64_t seed);

// Same feature construction; labels are +1 with probability
// 1 / (1 + exp(-<x, w_true>)) and -1 otherwise.
Dataset make_logistic_dataset(Index n, const Matrix& sigma, const Vector& w_true,
                              std::uint64_t seed);

// Orthogonal matrix drawn from a seeded Gaussian QR factorization (sign
// corrected so the distribution is Haar).
Matrix random_rotation(Index d, std::uint64_t seed);

// Symmetric square root of a symmetric positive definite matrix.
Matrix spd_sqrt(const Matrix& sigma);

}  // namespace localsgd
