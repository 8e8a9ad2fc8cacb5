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
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace localsgd {

// Problem and algorithm constants consumed by the bound evaluators.
// sigma is the fourth-moment constant at the optimum (E||g(w*)||^4 <= sigma^4)
// and sigma_inf the uniform noise bound (E||g - F'||^2 <= sigma_inf^2).
struct BoundInputs {
  double mu = 0.0;
  double L = 0.0;
  double M = 0.0;
  double sigma = 0.0;
  double sigma_inf = 0.0;
  double d0 = 0.0;  // ||w0 - w*||^2
  std::int64_t P = 1;
  std::vector<std::int64_t> phase_lengths;
  double eta = 0.0;    // constant rate
  double c_eta = 0.0;  // online rate c_eta * l^-alpha
  double alpha = 0.0;

  bool online() const { return c_eta > 0.0; }
  std::int64_t phases() const { return static_cast<std::int64_t>(phase_lengths.size()); }
  // N_1^t = N^1 + ... + N^t (t = 0 gives 0).
  std::int64_t cumulative(std::int64_t t) const;
  std::int64_t steps_per_worker() const { return cumulative(phases()); }
  std::int64_t T() const { return P * steps_per_worker(); }
  double sigma2() const { return sigma * sigma; }
  double sigma_inf2() const { return sigma_inf * sigma_inf; }
  // Rate at global step l >= 1.
  double rate(std::int64_t l) const;
};

struct QConstants {
  double bias = 0.0;
  double var1 = 0.0;
  double var2 = 0.0;
};

QConstants q_constants(const BoundInputs& in, double X);

// Mini-batch distance bound after t steps. Throws DomainError if eta mu >= 1.
double prop1_dist_bound(std::int64_t t, const BoundInputs& in);
// One-shot averaging: the same shape without the 1/P reduction.
double prop2_dist_bound(std::int64_t k, const BoundInputs& in);

// Shape bound (absolute constant set to 1):
//   d0 Q_bias / (eta X)^2 + sigma^2/T (1 + Q1(X)/kappa + Q2(X)/kappa^2).
double fh_maha_bound(const BoundInputs& in, double X, double kappa);
// Mini-batch: X = C (phase count), kappa = P.
double prop1_maha_bound(const BoundInputs& in);
// One-shot: X = N (steps per worker), kappa = 1.
double prop2_maha_bound(const BoundInputs& in);

struct Prop3Bounds {
  double hat = 0.0;    // bound on E||hat w^{t-1} - w*||^2
  double local = 0.0;  // bound on E||w^t_{p,k} - w*||^2
};

// Quadratic objective with additive noise and a constant rate. t is the
// 1-based phase number and k the local step (0..N^t).
Prop3Bounds prop3_bounds(std::int64_t t, std::int64_t k, const BoundInputs& in);

struct TauConstants {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double exponent = 0.0;        // mu N_1^t eta^2
  bool small_constant = false;  // exponent <= ln 2
};

// Constant-rate constants of phase t (1-based).
TauConstants tau_constants(const BoundInputs& in, std::int64_t t);

struct KappaConstants {
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  bool above_threshold = false;
};

inline constexpr double kDefaultKappaThreshold = 2.0;

// Summed-squared-rate analogues of tau (any rate schedule).
KappaConstants kappa_constants(const BoundInputs& in, std::int64_t t,
                               double threshold = kDefaultKappaThreshold);

// Quadratic bounds inflated by the tau constants.
Prop3Bounds quad_corollary_bounds(std::int64_t t, std::int64_t k, const BoundInputs& in);

struct RConstants {
  double bias = 0.0;
  double var1 = 0.0;
  double var2 = 0.0;
};

RConstants r_constants(const BoundInputs& in, double X);
// d0 R_bias / (X c)^2 + 2 sigma^2/T (1 + R1/kappa + R2/kappa^2).
double online_maha_bound(const BoundInputs& in, double X, double kappa);

// Decay exponent of the online variance correction R1/X-type terms:
// min(1 - alpha, alpha, 2 alpha - 1), maximized at alpha = 2/3.
double online_variance_decay_exponent(double alpha);

struct BetaConstants {
  double b1 = 0.0, b2 = 0.0, b3 = 0.0, b4 = 0.0, b5 = 0.0, b6 = 0.0;
};

BetaConstants beta_constants(double mu, double c_eta, double alpha);

// prod_{m<=t} (1 - mu c m^-alpha) <= exp(-mu c t^{1-alpha} / (2 (1-alpha))).
double tech1_bound(std::int64_t t, double mu, double c_eta, double alpha);
// Bound on sum_{m<=t} eta_m^2 prod_{l>m} (1 - mu eta_l).
double tech2_bound(std::int64_t t, double mu, double c_eta, double alpha);
// Large-t form of tech2 (alpha in (1/2, 1)).
double tech2_limit_bound(std::int64_t t, double mu, double c_eta, double alpha);
// sum_t exp(-a t^b) <= Gamma(1/b) / (b a^{1/b}).
double tech3_bound(double a, double b);
// sum_t exp(-a t^b) / t^c <= Gamma((1-c)/b) / (b a^{(1-c)/b}).
double tech8_bound(double a, double b, double c);
// sum_{t<=C} t^{a-1} <= C^a / a.
double tech4_bound(std::int64_t C, double a);

// C_{P,M,t} = 1 + M P eta sum_k E||breve w_{k-1} - w*||, from the mean
// ghost distances of one phase (k = 1..N^t, i.e. ghost indices 0..N^t-1).
double c_pmt(const BoundInputs& in, const std::vector<double>& ghost_dists);

// General-function local bound of phase t (1-based), step k, given
// sup_{t' <= t} C_{P,M,t'}.
double general_local_bound(std::int64_t t, std::int64_t k, const BoundInputs& in, double sup_c);

// One value per (t, k) (k = 0..N^t, phases in order) from per-phase ghost
// distance estimates.
std::vector<double> general_local_curve(const BoundInputs& in,
                                        const std::vector<std::vector<double>>& ghost_dists);

// Bound on sqrt(E||w_k - w*||^4) after k constant-rate steps from a start
// with sqrt(E||w_0 - w*||^4) = root_m4_start. DomainError if eta > 1/(18L).
double moment4_bound(std::int64_t k, const BoundInputs& in, double root_m4_start);

// E||xi||^2 <= 2 L^2 E||w - w*||^2 + 2 sigma^2.
double xi_second_moment_bound(double L, double dist2, double sigma2);

// (1/P) sum_p E||w_{p,k} - breve w_k||^2 <= sigma_inf^2 sum_j eta_j^2 prod (1 - eta_s mu),
// for the rates of steps 1..k of one phase.
double divergence_bound(const std::vector<double>& rates, double mu, double sigma_inf);

// sqrt(N C) / (P mu).
double communication_savings(double N, double C, double P, double mu);

// Named constants and curves, ordered for stable serialization.
struct BoundReport {
  std::map<std::string, double> constants;
  std::map<std::string, std::vector<double>> curves;
  std::map<std::string, bool> flags;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

struct ReportOptions {
  double kappa_threshold = kDefaultKappaThreshold;
  // Ghost distance estimates per phase for the general-function curve.
  std::vector<std::vector<double>> ghost_dists;
};

// Evaluates every bound that applies to the inputs. Bounds whose domain
// conditions fail are omitted and noted.
BoundReport evaluate_bounds(const BoundInputs& in, const ReportOptions& options = {});

}  // namespace localsgd
