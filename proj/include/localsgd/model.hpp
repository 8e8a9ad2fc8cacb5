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
#include <optional>

#include "localsgd/dataset.hpp"
#include "localsgd/types.hpp"

namespace localsgd {

enum class ObjectiveKind { quadratic, logistic };

const char* to_string(ObjectiveKind kind);

// Assumption constants carried by every objective: strong convexity mu,
// smoothness L and the third-derivative bound M (zero for quadratics).
struct AssumptionConstants {
  double mu = 0.0;
  double L = 0.0;
  double M = 0.0;
};

// A strongly convex objective with a known (or solver-computed) minimizer.
//
// Quadratic objectives are F(w) = 1/2 (w - w*)^T Sigma (w - w*). Logistic
// objectives are the l2-regularized empirical logistic risk over a dataset.
// A quadratic may also carry the dataset it was fitted on (least-squares
// regression), which enables per-row sampling oracles.
class Objective {
 public:
  static Objective quadratic(Matrix sigma, Vector optimum);
  static Objective quadratic_from_data(Matrix sigma, Vector optimum,
                                       std::shared_ptr<const Dataset> data,
                                       double lambda_reg);
  static Objective logistic(std::shared_ptr<const Dataset> data, double lambda_reg,
                            Vector optimum, Matrix hessian_at_opt,
                            AssumptionConstants constants);

  ObjectiveKind kind() const { return kind_; }
  Index dim() const { return optimum_.size(); }
  const Vector& optimum() const { return optimum_; }
  const Matrix& hessian_at_opt() const { return hessian_at_opt_; }
  const AssumptionConstants& constants() const { return constants_; }
  double mu() const { return constants_.mu; }
  double L() const { return constants_.L; }
  double M() const { return constants_.M; }
  double regularizer() const { return lambda_reg_; }
  const Dataset* dataset() const { return data_.get(); }
  std::shared_ptr<const Dataset> dataset_ptr() const { return data_; }

  // F(w). For quadratics the value is exact relative to F(w*) = 0.
  double value(const Vector& w) const;
  void gradient(const Vector& w, Vector& out) const;
  Vector gradient(const Vector& w) const;
  Matrix hessian(const Vector& w) const;

  // Gradient of the loss on row i (plus the regularizer); requires a dataset.
  void row_gradient(Index i, const Vector& w, Vector& out) const;

  // Solver tolerance under which `optimum()` was computed (0 when exact).
  double optimum_tolerance() const { return optimum_tol_; }
  void set_optimum_tolerance(double tol) { optimum_tol_ = tol; }

 private:
  Objective() = default;

  ObjectiveKind kind_ = ObjectiveKind::quadratic;
  Vector optimum_;
  Matrix hessian_at_opt_;
  Matrix sigma_;
  AssumptionConstants constants_;
  std::shared_ptr<const Dataset> data_;
  double lambda_reg_ = 0.0;
  double optimum_tol_ = 0.0;
};

// Quadratic with Sigma = R diag(spectrum) R^T, where R is identity unless a
// rotation seed is given. Throws InvalidProblemError on a non-positive entry.
Objective make_quadratic(const Vector& spectrum, const Vector& optimum,
                         std::optional<std::uint64_t> rotation_seed = std::nullopt);

// The logistic loss phi(z) = log(1 + e^{-z}) has |phi'''| <= 1/(6 sqrt 3).
inline constexpr double kLogisticThirdDerivativeBound = 0.09622504486493763;

struct ReferenceOptimum {
  Vector optimum;
  Matrix hessian_at_opt;
  AssumptionConstants constants;
  double grad_norm = 0.0;
  int iterations = 0;
};

inline constexpr double kDefaultOptimumTolerance = 1e-10;

// Deterministic full-gradient solve of the empirical risk (least squares for
// regression, regularized logistic for classification). lambda_reg must be
// positive for classification. Throws SolverError when the gradient norm does
// not reach `tol` within the iteration cap.
ReferenceOptimum solve_reference_optimum(const Dataset& data, Task task, double lambda_reg,
                                         double tol = kDefaultOptimumTolerance,
                                         int max_iterations = 100);

// Damped Newton iteration on an arbitrary objective, started from zero.
ReferenceOptimum solve_reference_optimum(const Objective& objective,
                                         double tol = kDefaultOptimumTolerance,
                                         int max_iterations = 100);

// Builds the empirical-risk objective of a dataset with its reference
// optimum and assumption constants.
Objective make_empirical_objective(std::shared_ptr<const Dataset> data, double lambda_reg,
                                   double tol = kDefaultOptimumTolerance);

}  // namespace localsgd
