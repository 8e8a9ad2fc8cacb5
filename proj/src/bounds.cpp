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

#include "localsgd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "localsgd/errors.hpp"
#include "localsgd/schedule.hpp"

namespace localsgd {
namespace {

void require_constant(const BoundInputs& in) {
  if (!(in.eta > 0.0)) throw DomainError("bound needs a constant rate eta > 0");
  if (!(in.mu > 0.0)) throw DomainError("bound needs mu > 0");
}

void require_online(const BoundInputs& in) {
  if (!(in.c_eta > 0.0)) throw DomainError("bound needs an online rate c_eta > 0");
  if (!(in.alpha > 0.5 && in.alpha < 1.0)) throw DomainError("alpha must lie in (1/2, 1)");
  if (!(in.mu > 0.0)) throw DomainError("bound needs mu > 0");
}

// (1 - eta mu), checked to be a contraction.
double contraction(const BoundInputs& in) {
  require_constant(in);
  const double q = 1.0 - in.eta * in.mu;
  if (!(q > 0.0)) throw DomainError("bound needs eta mu < 1");
  return q;
}

void require_phase(const BoundInputs& in, std::int64_t t) {
  if (t < 1 || t > in.phases()) throw DomainError("phase index out of range");
}

}  // namespace

std::int64_t BoundInputs::cumulative(std::int64_t t) const {
  if (t < 0 || t > phases()) throw DomainError("phase index out of range");
  std::int64_t s = 0;
  for (std::int64_t i = 0; i < t; ++i) s += phase_lengths[static_cast<std::size_t>(i)];
  return s;
}

double BoundInputs::rate(std::int64_t l) const {
  if (online()) return c_eta * std::pow(static_cast<double>(l), -alpha);
  return eta;
}

QConstants q_constants(const BoundInputs& in, double X) {
  require_constant(in);
  if (!(X > 0.0)) throw DomainError("X must be positive");
  const double eta = in.eta, mu = in.mu, P = static_cast<double>(in.P);
  QConstants q;
  q.bias = 1.0 + in.M * in.M * eta * in.d0 / mu + in.L * in.L * eta / (mu * P);
  q.var1 = in.L * in.L * eta / mu + P / (X * eta * mu);
  q.var2 = in.M * in.M * X * P * eta * eta * in.sigma2() / (mu * mu);
  return q;
}

double prop1_dist_bound(std::int64_t t, const BoundInputs& in) {
  const double q = std::pow(contraction(in), static_cast<double>(t));
  return q * in.d0 +
         (2.0 * in.sigma2() * in.eta / static_cast<double>(in.P)) * (1.0 - q) / in.mu;
}

double prop2_dist_bound(std::int64_t k, const BoundInputs& in) {
  const double q = std::pow(contraction(in), static_cast<double>(k));
  return q * in.d0 + 2.0 * in.sigma2() * in.eta * (1.0 - q) / in.mu;
}

double fh_maha_bound(const BoundInputs& in, double X, double kappa) {
  const QConstants q = q_constants(in, X);
  const double T = static_cast<double>(in.T());
  if (!(T > 0.0)) throw DomainError("T must be positive");
  return in.d0 * q.bias / (in.eta * in.eta * X * X) +
         in.sigma2() / T * (1.0 + q.var1 / kappa + q.var2 / (kappa * kappa));
}

double prop1_maha_bound(const BoundInputs& in) {
  return fh_maha_bound(in, static_cast<double>(in.phases()), static_cast<double>(in.P));
}

double prop2_maha_bound(const BoundInputs& in) {
  return fh_maha_bound(in, static_cast<double>(in.steps_per_worker()), 1.0);
}

Prop3Bounds prop3_bounds(std::int64_t t, std::int64_t k, const BoundInputs& in) {
  const double q = contraction(in);
  if (t < 1 || t > in.phases() + 1) throw DomainError("phase index out of range");
  if (k < 0) throw DomainError("step index must be non-negative");
  const auto n1 = static_cast<double>(in.cumulative(t - 1));
  const double qn = std::pow(q, n1);
  const double qk = std::pow(q, static_cast<double>(k));
  const double s2 = in.sigma_inf2();
  const double P = static_cast<double>(in.P);
  Prop3Bounds b;
  b.hat = qn * in.d0 + (s2 * in.eta / P) * (1.0 - qn) / in.mu;
  b.local = qn * qk * in.d0 + s2 * in.eta * ((1.0 - qn) / (P * in.mu) + (1.0 - qk) / in.mu);
  return b;
}

TauConstants tau_constants(const BoundInputs& in, std::int64_t t) {
  require_constant(in);
  require_phase(in, t);
  const double eta2 = in.eta * in.eta;
  TauConstants c;
  c.tau1 = 4.0 + in.mu * static_cast<double>(in.phase_lengths[static_cast<std::size_t>(t - 1)]) * eta2;
  c.exponent = in.mu * static_cast<double>(in.cumulative(t)) * eta2;
  c.tau2 = std::exp(c.exponent);
  c.small_constant = c.exponent <= std::numbers::ln2;
  return c;
}

KappaConstants kappa_constants(const BoundInputs& in, std::int64_t t, double threshold) {
  require_phase(in, t);
  if (!(in.mu > 0.0)) throw DomainError("bound needs mu > 0");
  const std::int64_t start = in.cumulative(t - 1);
  const std::int64_t end = in.cumulative(t);
  double phase_sum = 0.0, total = 0.0;
  for (std::int64_t l = 1; l <= end; ++l) {
    const double r = in.rate(l);
    total += r * r;
    if (l > start) phase_sum += r * r;
  }
  KappaConstants c;
  c.kappa1 = 4.0 + in.mu * phase_sum;
  c.kappa2 = std::exp(in.mu * total);
  c.above_threshold = c.kappa2 > threshold;
  return c;
}

Prop3Bounds quad_corollary_bounds(std::int64_t t, std::int64_t k, const BoundInputs& in) {
  const double q = contraction(in);
  require_phase(in, t);
  const TauConstants tau = tau_constants(in, t);
  double sup_tau1 = 0.0;
  for (std::int64_t s = 1; s <= t; ++s) sup_tau1 = std::max(sup_tau1, tau_constants(in, s).tau1);
  const auto n1 = static_cast<double>(in.cumulative(t - 1));
  const double qn = std::pow(q, n1);
  const double qk = std::pow(q, static_cast<double>(k));
  const double P = static_cast<double>(in.P);
  Prop3Bounds b;
  b.hat = tau.tau2 * qn * in.d0 +
          2.0 * tau.tau1 * tau.tau2 * in.sigma2() * in.eta / P * (1.0 - qn) / in.mu;
  b.local = tau.tau2 * qn * qk * in.d0 +
            2.0 * in.sigma2() * in.eta *
                (sup_tau1 * tau.tau2 * (1.0 - qn) / (P * in.mu) + (1.0 - qk) / in.mu);
  return b;
}

RConstants r_constants(const BoundInputs& in, double X) {
  require_online(in);
  if (!(X >= 1.0)) throw DomainError("X must be at least 1");
  const double a = in.alpha, c = in.c_eta, mu = in.mu, P = static_cast<double>(in.P);
  const double lx = std::log(X);
  const double mc = mu * c;
  const double one_a = 1.0 - a;
  RConstants r;
  r.bias = 1.0 + std::exp(2.0 * a * lx - mc * std::pow(X, one_a)) +
           std::exp(-std::log(mc) / one_a) +
           in.M * in.M * c * c * in.d0 * std::exp(-2.0 * std::log(mc) / one_a) +
           2.0 * in.L * in.L * c * c / P * std::exp(-std::log(mc) / one_a);
  r.var1 = std::exp((2.0 * a - 1.0) * lx + std::log(P) - std::log(2.0 * a - 1.0) -
                    mu * std::pow(X, one_a) / (2.0 * one_a)) +
           P / (std::pow(X, one_a) * c * mu) +
           P * std::exp(-lx - (2.0 * a / one_a) * std::log(mu) - (2.0 / one_a) * std::log(c)) +
           in.L * in.L * P * c * c / (std::pow(X, a) * mu * mu);
  r.var2 = in.M * in.M * in.sigma2() * P * c * c / (mu * mu * std::pow(X, 2.0 * a - 1.0));
  return r;
}

double online_maha_bound(const BoundInputs& in, double X, double kappa) {
  const RConstants r = r_constants(in, X);
  const double T = static_cast<double>(in.T());
  if (!(T > 0.0)) throw DomainError("T must be positive");
  return in.d0 * r.bias / (X * X * in.c_eta * in.c_eta) +
         2.0 * in.sigma2() / T * (1.0 + r.var1 / kappa + r.var2 / (kappa * kappa));
}

double online_variance_decay_exponent(double alpha) {
  if (!(alpha > 0.5 && alpha < 1.0)) throw DomainError("alpha must lie in (1/2, 1)");
  return std::min({1.0 - alpha, alpha, 2.0 * alpha - 1.0});
}

BetaConstants beta_constants(double mu, double c, double a) {
  if (!(mu > 0.0) || !(c > 0.0)) throw DomainError("beta constants need mu, c_eta > 0");
  if (!(a > 0.5 && a < 1.0)) throw DomainError("alpha must lie in (1/2, 1)");
  const double one_a = 1.0 - a;
  const double lmc = std::log(mu * c);
  const double lg_a = std::lgamma(a / one_a);
  const double lg_1 = std::lgamma(1.0 / one_a);
  const double l1a = std::log(one_a);
  const double ln2 = std::numbers::ln2;
  const double lshrink = lmc + std::log(std::pow(2.0, one_a) - 1.0);
  BetaConstants b;
  b.b1 = std::exp((1.0 + 3.0 * a) / one_a * ln2 + (4.0 * a - 2.0) / one_a * l1a -
                  2.0 * a / one_a * lmc + 2.0 * lg_a);
  b.b2 = std::exp((1.0 + 2.0 * a - a * a) / one_a * 2.0 * ln2 + (2.0 * a - 1.0) / one_a * l1a +
                  2.0 * std::log(c) - std::log(2.0 * a - 1.0) - 2.0 * a / one_a * lshrink +
                  2.0 * lg_a);
  b.b3 = 32.0 * c / (a * a * mu);
  b.b4 = std::exp(ln2 / one_a + a / one_a * l1a - lmc / one_a + lg_1);
  b.b5 = std::exp((3.0 - 2.0 * a) / one_a * ln2 + a / one_a * l1a + std::log(a) +
                  2.0 * std::log(c) - std::log(2.0 * a - 1.0) - lshrink / one_a + lg_1);
  b.b6 = 2.0 * c / (one_a * mu);
  return b;
}

double tech1_bound(std::int64_t t, double mu, double c, double a) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  return std::exp(-mu * c * std::pow(static_cast<double>(t), 1.0 - a) / (2.0 * (1.0 - a)));
}

namespace {

double tech2_decay(std::int64_t t, double mu, double c, double a) {
  return std::exp(-mu * c * std::pow(static_cast<double>(t), 1.0 - a) / (2.0 * (1.0 - a)) *
                  (1.0 - std::pow(2.0, a - 1.0)));
}

}  // namespace

double tech2_bound(std::int64_t t, double mu, double c, double a) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (t < 1) throw DomainError("t must be at least 1");
  const double tt = static_cast<double>(t);
  const double e = 1.0 - 2.0 * a;
  const double sum = std::abs(e) < 1e-12 ? 1.0 + std::log(tt) : 1.0 + std::expm1(e * std::log(tt)) / e;
  return tech2_decay(t, mu, c, a) * c * c * sum + 2.0 * c / (std::pow(tt, a) * mu);
}

double tech2_limit_bound(std::int64_t t, double mu, double c, double a) {
  if (!(a > 0.5 && a < 1.0)) throw DomainError("alpha must lie in (1/2, 1)");
  if (t < 1) throw DomainError("t must be at least 1");
  return tech2_decay(t, mu, c, a) * 2.0 * a * c * c / (2.0 * a - 1.0) +
         2.0 * c / (std::pow(static_cast<double>(t), a) * mu);
}

double tech3_bound(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("tech3 needs a, b > 0");
  return std::exp(std::lgamma(1.0 / b) - std::log(b) - std::log(a) / b);
}

double tech8_bound(double a, double b, double c) {
  if (!(a > 0.0) || !(b > 0.0) || !(c < 1.0)) throw DomainError("tech8 needs a, b > 0, c < 1");
  const double s = (1.0 - c) / b;
  return std::exp(std::lgamma(s) - std::log(b) - s * std::log(a));
}

double tech4_bound(std::int64_t C, double a) {
  if (!(a > 0.0 && a < 1.0) || C < 1) throw DomainError("tech4 needs a in (0, 1), C >= 1");
  return std::pow(static_cast<double>(C), a) / a;
}

double c_pmt(const BoundInputs& in, const std::vector<double>& ghost_dists) {
  require_constant(in);
  double sum = 0.0;
  for (double v : ghost_dists) {
    if (!(v >= 0.0)) throw DomainError("distance estimates must be non-negative");
    sum += v;
  }
  return 1.0 + in.M * static_cast<double>(in.P) * in.eta * sum;
}

double general_local_bound(std::int64_t t, std::int64_t k, const BoundInputs& in, double sup_c) {
  const double q = contraction(in);
  const TauConstants tau = tau_constants(in, t);
  const double qn = std::pow(q, static_cast<double>(in.cumulative(t - 1)));
  const double qk = std::pow(q, static_cast<double>(k));
  return tau.tau2 * qn * qk * in.d0 +
         in.sigma_inf2() * in.eta *
             (sup_c * (1.0 - qn) / (static_cast<double>(in.P) * in.mu) + 2.0 * (1.0 - qk) / in.mu);
}

std::vector<double> general_local_curve(const BoundInputs& in,
                                        const std::vector<std::vector<double>>& ghost_dists) {
  if (static_cast<std::int64_t>(ghost_dists.size()) != in.phases()) {
    throw DomainError("need one distance series per phase");
  }
  std::vector<double> curve;
  double sup_c = 0.0;
  for (std::int64_t t = 1; t <= in.phases(); ++t) {
    sup_c = std::max(sup_c, c_pmt(in, ghost_dists[static_cast<std::size_t>(t - 1)]));
    const std::int64_t N = in.phase_lengths[static_cast<std::size_t>(t - 1)];
    for (std::int64_t k = 0; k <= N; ++k) curve.push_back(general_local_bound(t, k, in, sup_c));
  }
  return curve;
}

double moment4_bound(std::int64_t k, const BoundInputs& in, double root_m4_start) {
  const double q = contraction(in);
  if (!(in.L > 0.0) || in.eta > 1.0 / (18.0 * in.L)) {
    throw DomainError("fourth-moment bound needs eta <= 1/(18 L)");
  }
  return std::pow(q, static_cast<double>(k)) * root_m4_start +
         20.0 * in.eta * in.sigma2() / in.mu;
}

double xi_second_moment_bound(double L, double dist2, double sigma2) {
  return 2.0 * L * L * dist2 + 2.0 * sigma2;
}

double divergence_bound(const std::vector<double>& rates, double mu, double sigma_inf) {
  // Horner form of sum_j eta_j^2 prod_{s > j} (1 - eta_s mu).
  double acc = 0.0;
  for (double r : rates) acc = acc * (1.0 - r * mu) + r * r;
  return sigma_inf * sigma_inf * acc;
}

double communication_savings(double N, double C, double P, double mu) {
  if (!(N > 0.0 && C > 0.0 && P > 0.0 && mu > 0.0)) {
    throw DomainError("communication_savings needs positive inputs");
  }
  return std::sqrt(N * C) / (P * mu);
}

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j;
  j["constants"] = constants;
  j["curves"] = curves;
  j["flags"] = flags;
  j["notes"] = notes;
  return j;
}

BoundReport evaluate_bounds(const BoundInputs& in, const ReportOptions& options) {
  BoundReport r;
  const std::int64_t C = in.phases();
  if (C < 1) throw DomainError("bound inputs have no phases");
  const std::int64_t steps = in.steps_per_worker();
  r.constants["T"] = static_cast<double>(in.T());
  r.constants["P"] = static_cast<double>(in.P);
  r.constants["C"] = static_cast<double>(C);
  r.constants["steps_per_worker"] = static_cast<double>(steps);
  const double mean_n = static_cast<double>(steps) / static_cast<double>(C);
  r.constants["communication_savings"] =
      communication_savings(mean_n, static_cast<double>(C), static_cast<double>(in.P), in.mu);

  // Rate-independent kappa constants.
  std::vector<double> k1, k2;
  bool kappa_flag = false;
  for (std::int64_t t = 1; t <= C; ++t) {
    const KappaConstants kc = kappa_constants(in, t, options.kappa_threshold);
    k1.push_back(kc.kappa1);
    k2.push_back(kc.kappa2);
    kappa_flag = kappa_flag || kc.above_threshold;
  }
  r.curves["kappa1"] = k1;
  r.curves["kappa2"] = k2;
  r.constants["kappa2_final"] = k2.back();
  r.constants["kappa_threshold"] = options.kappa_threshold;
  r.flags["kappa2_above_threshold"] = kappa_flag;

  if (!in.online()) {
    const double steps_d = static_cast<double>(steps);
    const QConstants qc = q_constants(in, static_cast<double>(C));
    const QConstants qn = q_constants(in, steps_d);
    r.constants["Q_bias"] = qc.bias;
    r.constants["Q1var_C"] = qc.var1;
    r.constants["Q2var_C"] = qc.var2;
    r.constants["Q1var_N"] = qn.var1;
    r.constants["Q2var_N"] = qn.var2;
    r.constants["mba_maha_shape_bound"] = fh_maha_bound(in, static_cast<double>(C), static_cast<double>(in.P));
    r.constants["osa_maha_shape_bound"] = fh_maha_bound(in, steps_d, 1.0);
    r.constants["max_phase_quadratic"] =
        static_cast<double>(max_phase_quadratic(in.mu, in.eta, in.P));
    r.constants["max_phase_general"] = static_cast<double>(
        max_phase_general(in.mu, in.eta, in.P, in.M, std::sqrt(in.d0)));

    std::vector<double> tau1, tau2;
    bool small = true;
    for (std::int64_t t = 1; t <= C; ++t) {
      const TauConstants tc = tau_constants(in, t);
      tau1.push_back(tc.tau1);
      tau2.push_back(tc.tau2);
      small = small && tc.small_constant;
    }
    r.curves["tau1"] = tau1;
    r.curves["tau2"] = tau2;
    r.flags["small_constant_regime"] = small;

    if (in.eta * in.mu < 1.0) {
      std::vector<double> p1, p2, hat, local, qhat;
      for (std::int64_t t = 0; t <= C; ++t) {
        const std::int64_t n1 = in.cumulative(t);
        p1.push_back(prop1_dist_bound(n1, in));
        p2.push_back(prop2_dist_bound(n1, in));
        hat.push_back(prop3_bounds(t + 1, 0, in).hat);
      }
      for (std::int64_t t = 1; t <= C; ++t) {
        const std::int64_t N = in.phase_lengths[static_cast<std::size_t>(t - 1)];
        for (std::int64_t k = 0; k <= N; ++k) local.push_back(prop3_bounds(t, k, in).local);
        qhat.push_back(quad_corollary_bounds(t, 0, in).hat);
      }
      r.curves["prop1_dist_at_phase_end"] = p1;
      r.curves["prop2_dist_at_phase_end"] = p2;
      r.curves["prop3_hat"] = hat;
      r.curves["prop3_local"] = local;
      r.curves["quad_corollary_hat"] = qhat;
      if (in.L > 0.0 && in.eta <= 1.0 / (18.0 * in.L)) {
        std::vector<double> m4;
        for (std::int64_t t = 0; t <= C; ++t) m4.push_back(moment4_bound(in.cumulative(t), in, in.d0));
        r.curves["moment4_root_at_phase_end"] = m4;
      } else {
        r.notes.push_back("fourth-moment bound omitted: eta > 1/(18 L)");
      }
      if (!options.ghost_dists.empty()) {
        r.curves["general_local"] = general_local_curve(in, options.ghost_dists);
      }
    } else {
      r.notes.push_back("distance bounds omitted: eta mu >= 1");
    }
  } else {
    const RConstants rc = r_constants(in, static_cast<double>(C));
    const RConstants rn = r_constants(in, static_cast<double>(steps));
    r.constants["R_bias_C"] = rc.bias;
    r.constants["R1var_C"] = rc.var1;
    r.constants["R2var_C"] = rc.var2;
    r.constants["R_bias_N"] = rn.bias;
    r.constants["R1var_N"] = rn.var1;
    r.constants["R2var_N"] = rn.var2;
    r.constants["mba_online_shape_bound"] =
        online_maha_bound(in, static_cast<double>(C), static_cast<double>(in.P));
    r.constants["osa_online_shape_bound"] = online_maha_bound(in, static_cast<double>(steps), 1.0);
    r.constants["variance_decay_exponent"] = online_variance_decay_exponent(in.alpha);
    const BetaConstants b = beta_constants(in.mu, in.c_eta, in.alpha);
    r.constants["beta1"] = b.b1;
    r.constants["beta2"] = b.b2;
    r.constants["beta3"] = b.b3;
    r.constants["beta4"] = b.b4;
    r.constants["beta5"] = b.b5;
    r.constants["beta6"] = b.b6;
  }
  return r;
}

}  // namespace localsgd
