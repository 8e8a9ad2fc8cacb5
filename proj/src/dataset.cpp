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

#include "localsgd/dataset.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "localsgd/errors.hpp"
#include "localsgd/philox.hpp"

namespace localsgd {
namespace {

constexpr double kTruncation = 6.0;

// Variance of a standard normal truncated to [-a, a].
double truncated_variance(double a) {
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  const double mass = std::erf(a / std::sqrt(2.0));
  return 1.0 - 2.0 * a * pdf / mass;
}

// Rejection sampling against the truncation, with each attempt drawing from
// its own counter so rows stay reproducible in isolation.
double truncated_normal(std::uint64_t seed, std::uint32_t row, std::uint32_t col) {
  static const double scale = 1.0 / std::sqrt(truncated_variance(kTruncation));
  const rng::CounterStream stream(seed, 0x11, row, col);
  for (std::uint32_t attempt = 0;; ++attempt) {
    const double z = stream.normal_pair(attempt)[0];
    if (std::abs(z) <= kTruncation) return z * scale;
  }
}

RowMatrix bounded_features(Index n, const Matrix& sigma, std::uint64_t seed) {
  if (n <= 0) throw InvalidProblemError("dataset size must be positive");
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw InvalidProblemError("feature covariance must be square and non-empty");
  }
  const Index d = sigma.rows();
  const Matrix root = spd_sqrt(sigma);
  RowMatrix z(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      z(i, j) = truncated_normal(seed, static_cast<std::uint32_t>(i),
                                 static_cast<std::uint32_t>(j));
    }
  }
  return z * root;  // root is symmetric
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() == 0 || features.cols() == 0) {
    throw InvalidProblemError("dataset is empty");
  }
  if (labels.size() != features.rows()) {
    throw InvalidProblemError("label count does not match row count");
  }
  if (!features.allFinite() || !labels.allFinite()) {
    throw InvalidProblemError("dataset contains non-finite values");
  }
  if (task == Task::classification) {
    for (Index i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0 && labels[i] != -1.0) {
        throw InvalidProblemError("classification labels must be -1 or +1");
      }
    }
  }
}

double Dataset::max_row_norm() const {
  if (features.rows() == 0) return 0.0;
  return features.rowwise().norm().maxCoeff();
}

Dataset normalize_features(const Dataset& data, FeatureNormalization mode) {
  Dataset out = data;
  if (mode == FeatureNormalization::unit_norm) {
    for (Index i = 0; i < out.features.rows(); ++i) {
      const double norm = out.features.row(i).norm();
      if (norm > 0.0) out.features.row(i) /= norm;
    }
  }
  return out;
}

Matrix spd_sqrt(const Matrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  if (eig.info() != Eigen::Success) throw InvalidProblemError("eigendecomposition failed");
  const Vector& values = eig.eigenvalues();
  if (values.minCoeff() <= 0.0) {
    throw InvalidProblemError("covariance must be positive definite");
  }
  return eig.eigenvectors() * values.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

Matrix random_rotation(Index d, std::uint64_t seed) {
  const rng::CounterStream stream(seed, 0x22, 0, 0);
  Matrix g(d, d);
  std::uint32_t index = 0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) g(i, j) = stream.normal_pair(index++)[0];
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Dataset make_lsr_dataset(Index n, const Matrix& sigma, const Vector& w_true,
                         double label_noise_sd, std::uint64_t seed) {
  if (w_true.size() != sigma.rows()) throw InvalidProblemError("w_true has the wrong dimension");
  if (!(label_noise_sd >= 0.0)) throw InvalidProblemError("label noise must be non-negative");
  Dataset data;
  data.features = bounded_features(n, sigma, seed);
  data.task = Task::regression;
  data.source = DataSource::synthetic;
  data.labels.resize(n);
  for (Index i = 0; i < n; ++i) data.labels[i] = data.features.row(i).transpose().dot(w_true);
  const rng::CounterStream noise(seed, 0x33, 0, 0);
  for (Index i = 0; i < n; ++i) {
    data.labels[i] += label_noise_sd * noise.normal_pair(static_cast<std::uint32_t>(i))[0];
  }
  data.validate();
  return data;
}

Dataset make_logistic_dataset(Index n, const Matrix& sigma, const Vector& w_true,
                              std::uint64_t seed) {
  if (w_true.size() != sigma.rows()) throw InvalidProblemError("w_true has the wrong dimension");
  Dataset data;
  data.features = bounded_features(n, sigma, seed);
  data.task = Task::classification;
  data.source = DataSource::synthetic;
  data.labels.resize(n);
  const rng::CounterStream coin(seed, 0x44, 0, 0);
  for (Index i = 0; i < n; ++i) {
    const double z = data.features.row(i).transpose().dot(w_true);
    const double p = 1.0 / (1.0 + std::exp(-z));
    data.labels[i] = coin.uniform(static_cast<std::uint32_t>(i)) < p ? 1.0 : -1.0;
  }
  data.validate();
  return data;
}

}  // namespace localsgd
