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

#include "localsgd/model.hpp"

#include <cmath>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "localsgd/errors.hpp"

namespace localsgd {
namespace {

// log(1 + e^{-z}) without overflow.
double logistic_loss(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

// 1 / (1 + e^{z}), the derivative magnitude of logistic_loss at z.
double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

std::pair<double, double> extreme_eigenvalues(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw InvalidProblemError("eigendecomposition failed");
  return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
}

Matrix logistic_hessian(const Dataset& data, double lambda, const Vector& w) {
  const Index n = data.rows();
  const Index d = data.dim();
  Matrix h = Matrix::Zero(d, d);
  for (Index i = 0; i < n; ++i) {
    const double z = data.labels[i] * data.features.row(i).dot(w);
    const double s = sigmoid_neg(z);
    h.selfadjointView<Eigen::Lower>().rankUpdate(data.features.row(i).transpose(), s * (1.0 - s));
  }
  h = h.selfadjointView<Eigen::Lower>();
  h /= static_cast<double>(n);
  h.diagonal().array() += lambda;
  return h;
}

}  // namespace

const char* to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::quadratic ? "quadratic" : "logistic";
}

Objective Objective::quadratic(Matrix sigma, Vector optimum) {
  if (sigma.rows() != sigma.cols() || sigma.rows() != optimum.size() || optimum.size() == 0) {
    throw InvalidProblemError("quadratic: Hessian and optimum sizes disagree");
  }
  if (!sigma.allFinite() || !optimum.allFinite()) {
    throw InvalidProblemError("quadratic: non-finite input");
  }
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
    throw InvalidProblemError("quadratic: Hessian is not symmetric");
  }
  const auto [lo, hi] = extreme_eigenvalues(sigma);
  if (!(lo > 0.0)) throw InvalidProblemError("quadratic: Hessian is not positive definite");
  Objective obj;
  obj.kind_ = ObjectiveKind::quadratic;
  obj.sigma_ = std::move(sigma);
  obj.hessian_at_opt_ = obj.sigma_;
  obj.optimum_ = std::move(optimum);
  obj.constants_ = {lo, hi, 0.0};
  return obj;
}

Objective Objective::quadratic_from_data(Matrix sigma, Vector optimum,
                                         std::shared_ptr<const Dataset> data,
                                         double lambda_reg) {
  if (!data) throw InvalidProblemError("quadratic_from_data: null dataset");
  if (data->dim() != optimum.size()) throw InvalidProblemError("dataset dimension mismatch");
  Objective obj = quadratic(std::move(sigma), std::move(optimum));
  obj.data_ = std::move(data);
  obj.lambda_reg_ = lambda_reg;
  return obj;
}

Objective Objective::logistic(std::shared_ptr<const Dataset> data, double lambda_reg,
                              Vector optimum, Matrix hessian_at_opt,
                              AssumptionConstants constants) {
  if (!data) throw InvalidProblemError("logistic: null dataset");
  if (data->task != Task::classification) {
    throw InvalidProblemError("logistic objective needs a classification dataset");
  }
  if (!(lambda_reg > 0.0)) throw InvalidProblemError("logistic: regularizer must be positive");
  Objective obj;
  obj.kind_ = ObjectiveKind::logistic;
  obj.data_ = std::move(data);
  obj.lambda_reg_ = lambda_reg;
  obj.optimum_ = std::move(optimum);
  obj.hessian_at_opt_ = std::move(hessian_at_opt);
  obj.constants_ = constants;
  return obj;
}

double Objective::value(const Vector& w) const {
  if (kind_ == ObjectiveKind::quadratic) {
    const Vector e = w - optimum_;
    return 0.5 * e.dot(sigma_ * e);
  }
  const Dataset& data = *data_;
  double total = 0.0;
  for (Index i = 0; i < data.rows(); ++i) {
    total += logistic_loss(data.labels[i] * data.features.row(i).dot(w));
  }
  return total / static_cast<double>(data.rows()) + 0.5 * lambda_reg_ * w.squaredNorm();
}

void Objective::gradient(const Vector& w, Vector& out) const {
  if (kind_ == ObjectiveKind::quadratic) {
    out.noalias() = sigma_ * (w - optimum_);
    return;
  }
  const Dataset& data = *data_;
  out = lambda_reg_ * w;
  const double inv_n = 1.0 / static_cast<double>(data.rows());
  for (Index i = 0; i < data.rows(); ++i) {
    const double y = data.labels[i];
    const double s = sigmoid_neg(y * data.features.row(i).dot(w));
    out.noalias() -= (inv_n * y * s) * data.features.row(i).transpose();
  }
}

Vector Objective::gradient(const Vector& w) const {
  Vector out(dim());
  gradient(w, out);
  return out;
}

Matrix Objective::hessian(const Vector& w) const {
  if (kind_ == ObjectiveKind::quadratic) return sigma_;
  return logistic_hessian(*data_, lambda_reg_, w);
}

void Objective::row_gradient(Index i, const Vector& w, Vector& out) const {
  if (!data_) throw UsageError("row gradients need an objective built from a dataset");
  const Dataset& data = *data_;
  if (i < 0 || i >= data.rows()) throw UsageError("row index out of range");
  const auto x = data.features.row(i).transpose();
  const double y = data.labels[i];
  if (kind_ == ObjectiveKind::quadratic) {
    out.noalias() = (x.dot(w) - y) * x;
  } else {
    out.noalias() = (-y * sigmoid_neg(y * x.dot(w))) * x;
  }
  out.noalias() += lambda_reg_ * w;
}

Objective make_quadratic(const Vector& spectrum, const Vector& optimum,
                         std::optional<std::uint64_t> rotation_seed) {
  if (spectrum.size() != optimum.size()) {
    throw InvalidProblemError("spectrum and optimum sizes disagree");
  }
  for (Index i = 0; i < spectrum.size(); ++i) {
    if (!(spectrum[i] > 0.0) || !std::isfinite(spectrum[i])) {
      throw InvalidProblemError("spectrum entries must be positive and finite");
    }
  }
  Matrix sigma = spectrum.asDiagonal();
  if (rotation_seed) {
    const Matrix r = random_rotation(spectrum.size(), *rotation_seed);
    sigma = r * sigma * r.transpose();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
  }
  return Objective::quadratic(std::move(sigma), optimum);
}

ReferenceOptimum solve_reference_optimum(const Dataset& data, Task task, double lambda_reg,
                                         double tol, int max_iterations) {
  data.validate();
  if (data.task != task) throw InvalidProblemError("dataset task does not match request");
  if (!(lambda_reg >= 0.0)) throw InvalidProblemError("regularizer must be non-negative");
  const Index n = data.rows();
  const Index d = data.dim();
  ReferenceOptimum ref;

  if (task == Task::regression) {
    Matrix h = Matrix::Zero(d, d);
    h.selfadjointView<Eigen::Lower>().rankUpdate(data.features.transpose(), 1.0);
    h = h.selfadjointView<Eigen::Lower>();
    h /= static_cast<double>(n);
    h.diagonal().array() += lambda_reg;
    const Vector rhs = data.features.transpose() * data.labels / static_cast<double>(n);
    const auto [lo, hi] = extreme_eigenvalues(h);
    if (!(lo > 0.0)) {
      throw InvalidProblemError("empirical Hessian is singular; add a regularizer");
    }
    Eigen::LDLT<Matrix> ldlt(h);
    ref.optimum = ldlt.solve(rhs);
    // One refinement step tightens the residual on ill-conditioned problems.
    ref.optimum += ldlt.solve(rhs - h * ref.optimum);
    ref.grad_norm = (h * ref.optimum - rhs).norm();
    ref.iterations = 1;
    ref.hessian_at_opt = h;
    ref.constants = {lo, hi, 0.0};
    if (!(ref.grad_norm <= tol)) {
      throw SolverError("least-squares solve did not reach tolerance", ref.grad_norm);
    }
    return ref;
  }

  if (!(lambda_reg > 0.0)) {
    throw InvalidProblemError("logistic regression needs a positive regularizer");
  }
  auto shared = std::make_shared<const Dataset>(data);
  const Objective obj = Objective::logistic(shared, lambda_reg, Vector::Zero(d),
                                            Matrix::Identity(d, d), {});
  ReferenceOptimum solved = solve_reference_optimum(obj, tol, max_iterations);

  Matrix cov = Matrix::Zero(d, d);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(data.features.transpose(), 1.0);
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n);
  const double r = data.max_row_norm();
  solved.constants.mu = lambda_reg;
  solved.constants.L = extreme_eigenvalues(cov).second / 4.0 + lambda_reg;
  solved.constants.M = r * r * r * kLogisticThirdDerivativeBound;
  return solved;
}

ReferenceOptimum solve_reference_optimum(const Objective& objective, double tol,
                                         int max_iterations) {
  const Index d = objective.dim();
  ReferenceOptimum ref;
  Vector w = Vector::Zero(d);
  Vector g(d);
  objective.gradient(w, g);
  double f = objective.value(w);
  int it = 0;
  for (; it < max_iterations && g.norm() > tol; ++it) {
    const Matrix h = objective.hessian(w);
    const Vector step = h.ldlt().solve(g);
    double t = 1.0;
    Vector candidate = w - step;
    double fc = objective.value(candidate);
    // Armijo backtracking; the Newton decrement is g^T step.
    const double decrement = g.dot(step);
    // Near the optimum the decrease drops below rounding in f; take the
    // full step there.
    const bool local = decrement <= 1e-12 * (1.0 + std::abs(f));
    while (!local && fc > f - 0.25 * t * decrement && t > 1e-12) {
      t *= 0.5;
      candidate = w - t * step;
      fc = objective.value(candidate);
    }
    w = candidate;
    f = fc;
    objective.gradient(w, g);
  }
  ref.grad_norm = g.norm();
  ref.iterations = it;
  if (!std::isfinite(ref.grad_norm) || ref.grad_norm > tol) {
    throw SolverError("Newton solve did not reach tolerance", ref.grad_norm);
  }
  ref.optimum = w;
  ref.hessian_at_opt = objective.hessian(w);
  ref.constants = objective.constants();
  return ref;
}

Objective make_empirical_objective(std::shared_ptr<const Dataset> data, double lambda_reg,
                                   double tol) {
  if (!data) throw InvalidProblemError("null dataset");
  ReferenceOptimum ref = solve_reference_optimum(*data, data->task, lambda_reg, tol);
  Objective obj = data->task == Task::regression
                      ? Objective::quadratic_from_data(ref.hessian_at_opt, ref.optimum, data,
                                                       lambda_reg)
                      : Objective::logistic(data, lambda_reg, ref.optimum, ref.hessian_at_opt,
                                            ref.constants);
  obj.set_optimum_tolerance(tol);
  return obj;
}

}  // namespace localsgd
