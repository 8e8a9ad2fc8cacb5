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

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "localsgd/bounds.hpp"
#include "localsgd/errors.hpp"
#include "oracles/bounds_oracle.hpp"
#include "oracles/recursion.hpp"

using namespace localsgd;
using oracle::F;

namespace {

BoundInputs constant_inputs(double mu, double L, double M, double sigma, double sigma_inf,
                            double d0, std::int64_t P, std::vector<std::int64_t> lengths,
                            double eta) {
  BoundInputs in;
  in.mu = mu;
  in.L = L;
  in.M = M;
  in.sigma = sigma;
  in.sigma_inf = sigma_inf;
  in.d0 = d0;
  in.P = P;
  in.phase_lengths = std::move(lengths);
  in.eta = eta;
  return in;
}

BoundInputs online_inputs(double mu, double L, double M, double sigma, double d0, std::int64_t P,
                          std::vector<std::int64_t> lengths, double c, double alpha) {
  BoundInputs in = constant_inputs(mu, L, M, sigma, sigma, d0, P, std::move(lengths), 0.0);
  in.c_eta = c;
  in.alpha = alpha;
  return in;
}

oracle::Params params(const BoundInputs& in) {
  // Inputs are converted from their decimal text so the oracle sees the
  // same binary values the library does.
  return {F(in.mu), F(in.L), F(in.M), F(in.sigma) * F(in.sigma), F(in.sigma_inf) * F(in.sigma_inf),
          F(in.d0), F(in.P), F(in.eta), F(in.c_eta), F(in.alpha)};
}

std::vector<BoundInputs> constant_points() {
  return {
      constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 1.0, 10, {10, 10, 10}, 0.1),
      constant_inputs(0.5, 2.0, 0.3, 0.7, 1.2, 4.0, 4, {5, 7, 3, 9}, 0.05),
      constant_inputs(0.01, 0.5, 1.5, 2.0, 0.5, 0.25, 32, std::vector<std::int64_t>(20, 8), 0.3),
      constant_inputs(1.0, 1.0, 0.0, 1.3, 1.0, 9.0, 8, {1, 1, 1, 1, 1, 1}, 0.2),
      constant_inputs(0.2, 3.0, 0.05, 0.4, 0.9, 0.01, 2, {64, 64}, 0.01),
  };
}

std::vector<BoundInputs> online_points() {
  return {
      online_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 8, {16, 16, 16, 16}, 0.5, 2.0 / 3.0),
      online_inputs(0.5, 2.0, 0.3, 0.7, 4.0, 4, {5, 7, 3, 9}, 0.25, 0.6),
      online_inputs(1.0, 1.0, 1.0, 2.0, 0.5, 32, std::vector<std::int64_t>(12, 4), 1.0, 0.75),
      online_inputs(0.05, 0.5, 0.2, 0.3, 2.0, 2, {100, 100}, 2.0, 0.9),
      online_inputs(2.0, 4.0, 0.0, 1.5, 1.0, 16, {3, 3, 3}, 0.1, 0.55),
  };
}

constexpr double kTol = 1e-10;

void check_close(double got, const F& want) {
  CHECK(oracle::relative_error(got, want) <= kTol);
}

}  // namespace

TEST_CASE("gamma helper values") {
  CHECK(std::tgamma(0.5) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-15));
  CHECK(std::tgamma(1.0) == 1.0);
  CHECK(std::tgamma(2.0) == 1.0);
  for (double x : {0.3, 1.7, 3.0, 5.5, 12.25}) check_close(std::tgamma(x), oracle::gamma(F(x)));
}

TEST_CASE("Q constants") {
  auto in = constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 1.0, 10, {10}, 0.1);
  CHECK(q_constants(in, 5.0).bias == doctest::Approx(1.1).epsilon(1e-15));
  for (double X : {1.0, 10.0, 1000.0}) CHECK(q_constants(in, X).var2 == 0.0);
  in.P = 4;
  CHECK(q_constants(in, 100.0).var1 == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(q_constants(in, 0.0), DomainError);
}

TEST_CASE("mini-batch distance bound") {
  const auto in = constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 1.0, 10, {10}, 0.1);
  CHECK(prop1_dist_bound(0, in) == 1.0);
  CHECK(prop1_dist_bound(10, in) == doctest::Approx(0.9235).epsilon(1e-4));
  CHECK(prop1_dist_bound(1000000, in) == doctest::Approx(2.0 * 0.1 / (10 * 0.1)).epsilon(1e-12));
  auto bad = in;
  bad.eta = 10.0;
  CHECK_THROWS_AS(prop1_dist_bound(3, bad), DomainError);
}

TEST_CASE("mini-batch distance bound is monotone toward its limit") {
  auto in = constant_inputs(0.3, 1.0, 0.0, 1.0, 1.0, 5.0, 4, {10}, 0.1);
  for (int t = 0; t < 200; ++t) CHECK(prop1_dist_bound(t + 1, in) <= prop1_dist_bound(t, in));
  in.d0 = 0.0;
  for (int t = 0; t < 200; ++t) CHECK(prop1_dist_bound(t + 1, in) >= prop1_dist_bound(t, in));
}

TEST_CASE("MBA and OSA shape bounds share the leading variance term") {
  const auto in = constant_inputs(0.2, 1.0, 0.5, 1.0, 1.0, 0.0, 8, std::vector<std::int64_t>(64, 1), 0.05);
  // d0 = 0 isolates the variance part; with X = N = C the corrections of
  // MBA are P and P^2 times smaller.
  const double X = 64.0;
  const QConstants q = q_constants(in, X);
  const double T = static_cast<double>(in.T());
  const double mba = fh_maha_bound(in, X, 8.0), osa = fh_maha_bound(in, X, 1.0);
  CHECK(mba - 1.0 / T == doctest::Approx(1.0 / T * (q.var1 / 8 + q.var2 / 64)));
  CHECK(osa - 1.0 / T == doctest::Approx(1.0 / T * (q.var1 + q.var2)));
  auto quad = in;
  quad.M = 0.0;
  CHECK(q_constants(quad, X).var2 == 0.0);
  CHECK(prop1_maha_bound(in) == fh_maha_bound(in, 64.0, 8.0));
  CHECK(prop2_maha_bound(in) == fh_maha_bound(in, 64.0, 1.0));
}

TEST_CASE("bounded-noise local-SGD bounds") {
  const auto in = constant_inputs(0.5, 1.0, 0.0, 1.0, 1.0, 2.0, 4, {10, 10, 10}, 0.1);
  for (std::int64_t t = 1; t <= 3; ++t) {
    CHECK(prop3_bounds(t, 0, in).local == doctest::Approx(prop3_bounds(t, 0, in).hat).epsilon(1e-15));
  }
  auto far = constant_inputs(0.5, 1.0, 0.0, 1.0, 1.0, 2.0, 4, {100000}, 0.1);
  const Prop3Bounds lim = prop3_bounds(2, 100000, far);
  CHECK(lim.local == doctest::Approx(0.1 / (4 * 0.5) + 0.1 / 0.5));
  CHECK(prop3_bounds(2, 0, far).hat == doctest::Approx(0.1 / (4 * 0.5)));
  CHECK_THROWS_AS(prop3_bounds(5, 0, in), DomainError);
}

TEST_CASE("exact recursions stay below the bounded-noise bounds") {
  // 1-D, e_{k+1} = (1 - eta lambda)^2 e_k + eta^2 sigma_inf^2 / P at phase ends.
  for (int P : {1, 4, 8}) {
    for (double e0 : {0.0, 1.0, 4.0}) {
      const std::vector<std::int64_t> lengths(40, 5);
      const auto in = constant_inputs(1.0, 1.0, 0.0, 1.0, 1.0, e0 * e0, P, lengths, 0.05);
      const auto hat = oracle::hat_second_moments({1.0}, {e0}, 0.05, 1.0, P, lengths);
      for (std::size_t t = 0; t < hat.size(); ++t) {
        CHECK(hat[t] <= prop3_bounds(static_cast<std::int64_t>(t) + 1, 0, in).hat * (1 + 1e-12));
      }
      const auto local = oracle::local_second_moments({1.0}, {e0}, 0.05, 1.0, P, lengths);
      std::size_t i = 0;
      for (std::int64_t t = 1; t <= 40; ++t) {
        for (std::int64_t k = 0; k <= 5; ++k, ++i) CHECK(local[i] <= prop3_bounds(t, k, in).local * (1 + 1e-12));
      }
    }
  }
  // d = 4 with a spread spectrum; mu is the smallest eigenvalue.
  const std::vector<double> spec{1.0, 0.5, 0.25, 0.1};
  const std::vector<std::int64_t> lengths(16, 32);
  const auto in = constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 4.0, 8, lengths, 0.05);
  const auto hat = oracle::hat_second_moments(spec, {1, 1, 1, 1}, 0.05, 1.0, 8, lengths);
  for (std::size_t t = 0; t < hat.size(); ++t) {
    CHECK(hat[t] <= prop3_bounds(static_cast<std::int64_t>(t) + 1, 0, in).hat);
  }
}

TEST_CASE("tau constants") {
  const auto in = constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 1.0, 1, {1000}, 0.01);
  const TauConstants t = tau_constants(in, 1);
  CHECK(t.tau2 == doctest::Approx(1.01005).epsilon(1e-6));
  CHECK(t.tau1 == doctest::Approx(4.01));
  CHECK(t.small_constant);
  const auto tiny = constant_inputs(1e-12, 1.0, 0.0, 1.0, 1.0, 1.0, 1, {1}, 1e-6);
  CHECK(tau_constants(tiny, 1).tau2 == 1.0);
  const auto big = constant_inputs(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1, {1000}, 0.05);
  CHECK_FALSE(tau_constants(big, 1).small_constant);
  // Under N mu P eta <= 1 the exponent is at most C eta / P.
  const auto reg = constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 1.0, 4, std::vector<std::int64_t>(10, 25), 0.1);
  for (std::int64_t s = 1; s <= 10; ++s) CHECK(tau_constants(reg, s).exponent <= s * 0.1 / 4 + 1e-15);
}

TEST_CASE("kappa equals tau for constant rates") {
  const auto in = constant_inputs(0.3, 1.0, 0.0, 1.0, 1.0, 1.0, 4, {7, 3, 11}, 0.05);
  for (std::int64_t t = 1; t <= 3; ++t) {
    CHECK(kappa_constants(in, t).kappa1 == doctest::Approx(tau_constants(in, t).tau1).epsilon(1e-14));
    CHECK(kappa_constants(in, t).kappa2 == doctest::Approx(tau_constants(in, t).tau2).epsilon(1e-14));
  }
  CHECK(kappa_constants(in, 3, 1.0).above_threshold);
  CHECK_FALSE(kappa_constants(in, 3).above_threshold);
}

TEST_CASE("online variance exponent peaks at two thirds") {
  const double best = online_variance_decay_exponent(2.0 / 3.0);
  CHECK(best == doctest::Approx(1.0 / 3.0));
  CHECK(1.0 - 2.0 / 3.0 == doctest::Approx(2.0 * (2.0 / 3.0) - 1.0));
  for (double a : {0.55, 0.6, 0.7, 0.8, 0.95}) CHECK(online_variance_decay_exponent(a) < best);
  CHECK_THROWS_AS(online_variance_decay_exponent(0.5), DomainError);
}

TEST_CASE("R bias approaches its polynomial floor for large mu c") {
  auto in = online_inputs(1.0, 1.0, 0.0, 1.0, 1.0, 4, {100}, 50.0, 0.6);
  const RConstants r = r_constants(in, 100.0);
  const double floor = 1.0 + std::pow(50.0, -1.0 / 0.4) + 2.0 * 2500.0 / 4.0 * std::pow(50.0, -1.0 / 0.4);
  CHECK(r.bias == doctest::Approx(floor).epsilon(1e-12));
}

TEST_CASE("general-function bound collapses for quadratics") {
  const auto in = constant_inputs(0.2, 1.0, 0.0, 1.0, 1.5, 2.0, 4, {6, 6, 6}, 0.05);
  CHECK(c_pmt(in, {1.0, 2.0, 3.0}) == 1.0);
  const auto p = params(in);
  for (std::int64_t t = 1; t <= 3; ++t) {
    for (std::int64_t k = 0; k <= 6; ++k) {
      const std::int64_t n1 = in.cumulative(t - 1);
      const F q = 1 - p.eta * p.mu;
      const F want = oracle::tau2(p, in.cumulative(t)) * pow(q, n1 + k) * p.d0 +
                     p.sigma_inf2 * p.eta * ((1 - pow(q, n1)) / (p.P * p.mu) + 2 * (1 - pow(q, k)) / p.mu);
      check_close(general_local_bound(t, k, in, 1.0), want);
      CHECK(general_local_bound(t, k, in, 1.0) >= prop3_bounds(t, k, in).local);
    }
  }
  auto g = in;
  g.M = 0.7;
  CHECK(c_pmt(g, std::vector<double>(6, 0.4)) == doctest::Approx(1.0 + 0.7 * 4 * 0.05 * 6 * 0.4));
  CHECK_THROWS_AS(c_pmt(g, {-1.0}), DomainError);
  const auto curve = general_local_curve(in, {{1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1}});
  CHECK(curve.size() == 21);
}

TEST_CASE("fourth-moment bound") {
  auto in = constant_inputs(1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1, {100}, 0.05);
  CHECK(moment4_bound(10, in, 2.0) == doctest::Approx(std::pow(0.95, 10) * 2.0));
  in.sigma = 1.0;
  CHECK(moment4_bound(100000, in, 2.0) == doctest::Approx(20.0 * 0.05));
  in.eta = 0.1;
  CHECK_THROWS_AS(moment4_bound(1, in, 1.0), DomainError);
  // 1-D Gaussian oracle: sigma^2 = sqrt(E g(w*)^4) = sqrt(3) sigma_inf^2.
  for (double e0 : {0.0, 0.5, 3.0}) {
    const double eta = 1.0 / 18.0;
    auto g = constant_inputs(1.0, 1.0, 0.0, std::pow(3.0, 0.25), 1.0, e0 * e0, 1, {400}, eta);
    const auto m4 = oracle::scalar_fourth_moments(1.0, e0, eta, 1.0, 400);
    for (std::int64_t k = 0; k <= 400; ++k) {
      CHECK(std::sqrt(m4[static_cast<std::size_t>(k)]) <= moment4_bound(k, g, e0 * e0) * (1 + 1e-12));
    }
  }
}

TEST_CASE("communication savings") {
  CHECK(communication_savings(100, 100, 10, 1) == doctest::Approx(10.0));
  CHECK(communication_savings(16, 4, 8, 1) == doctest::Approx(1.0));
  CHECK(communication_savings(100, 100, 20, 1) == doctest::Approx(5.0));
  CHECK_THROWS_AS(communication_savings(0, 1, 1, 1), DomainError);
}

TEST_CASE("divergence and xi bounds") {
  const std::vector<double> rates{0.1, 0.08, 0.05, 0.05};
  double direct = 0.0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    double prod = 1.0;
    for (std::size_t s = j + 1; s < rates.size(); ++s) prod *= 1.0 - rates[s] * 0.5;
    direct += rates[j] * rates[j] * prod;
  }
  CHECK(divergence_bound(rates, 0.5, 2.0) == doctest::Approx(4.0 * direct).epsilon(1e-14));
  CHECK(xi_second_moment_bound(2.0, 0.5, 1.0) == 6.0);
}

TEST_CASE("extended-precision cross-check, constant rate") {
  for (const auto& in : constant_points()) {
    const auto p = params(in);
    for (double X : {1.0, static_cast<double>(in.phases()), static_cast<double>(in.steps_per_worker())}) {
      const QConstants q = q_constants(in, X);
      const oracle::Q o = oracle::q(p, F(X));
      check_close(q.bias, o.bias);
      check_close(q.var1, o.var1);
      check_close(q.var2, o.var2);
      check_close(fh_maha_bound(in, X, 3.0), oracle::fh_maha(p, F(X), F(3), F(in.T())));
    }
    for (std::int64_t t : {0, 1, 7, 50}) {
      check_close(prop1_dist_bound(t, in), oracle::prop1(p, t));
      check_close(prop2_dist_bound(t, in), oracle::prop2(p, t));
    }
    for (std::int64_t t = 1; t <= in.phases(); ++t) {
      const std::int64_t n1 = in.cumulative(t - 1);
      const std::int64_t N = in.phase_lengths[static_cast<std::size_t>(t - 1)];
      check_close(prop3_bounds(t, 0, in).hat, oracle::prop3_hat(p, n1));
      check_close(prop3_bounds(t, N, in).local, oracle::prop3_local(p, n1, N));
      const TauConstants tc = tau_constants(in, t);
      check_close(tc.tau1, oracle::tau1(p, N));
      check_close(tc.tau2, oracle::tau2(p, in.cumulative(t)));
      const auto [k1, k2] = oracle::kappa(p, n1, in.cumulative(t), [&](std::int64_t) { return p.eta; });
      check_close(kappa_constants(in, t).kappa1, k1);
      check_close(kappa_constants(in, t).kappa2, k2);
      check_close(quad_corollary_bounds(t, 0, in).hat, oracle::quad_corollary_hat(p, N, n1, in.cumulative(t)));
      if (in.eta <= 1.0 / (18.0 * in.L)) {
        check_close(moment4_bound(n1, in, 1.5), oracle::moment4(p, n1, F(1.5)));
      }
    }
  }
}

TEST_CASE("extended-precision cross-check, online rate") {
  for (const auto& in : online_points()) {
    const auto p = params(in);
    for (double X : {static_cast<double>(in.phases()), static_cast<double>(in.steps_per_worker()), 1000.0}) {
      const RConstants r = r_constants(in, X);
      const oracle::R o = oracle::r(p, F(X));
      check_close(r.bias, o.bias);
      check_close(r.var1, o.var1);
      check_close(r.var2, o.var2);
    }
    for (std::int64_t t = 1; t <= in.phases(); ++t) {
      const auto [k1, k2] = oracle::kappa(p, in.cumulative(t - 1), in.cumulative(t),
                                          [&](std::int64_t l) { return oracle::online_rate(p, l); });
      check_close(kappa_constants(in, t).kappa1, k1);
      check_close(kappa_constants(in, t).kappa2, k2);
    }
    const BetaConstants b = beta_constants(in.mu, in.c_eta, in.alpha);
    const oracle::Beta o = oracle::beta(p.mu, p.c, p.alpha);
    check_close(b.b1, o.b1);
    check_close(b.b2, o.b2);
    check_close(b.b3, o.b3);
    check_close(b.b4, o.b4);
    check_close(b.b5, o.b5);
    check_close(b.b6, o.b6);
    for (std::int64_t t : {1, 10, 1000}) {
      check_close(tech1_bound(t, in.mu, in.c_eta, in.alpha), oracle::tech1(t, p.mu, p.c, p.alpha));
      check_close(tech2_bound(t, in.mu, in.c_eta, in.alpha), oracle::tech2(t, p.mu, p.c, p.alpha));
      check_close(tech2_limit_bound(t, in.mu, in.c_eta, in.alpha),
                  oracle::tech2_limit(t, p.mu, p.c, p.alpha));
      check_close(tech4_bound(t, in.alpha), oracle::tech4(t, p.alpha));
    }
    const double a = in.mu * in.c_eta / (2.0 * (1.0 - in.alpha));
    check_close(tech3_bound(a, 1.0 - in.alpha), oracle::tech3(F(a), 1 - p.alpha));
    check_close(tech8_bound(a, 1.0 - in.alpha, 0.3), oracle::tech8(F(a), 1 - p.alpha, F(0.3)));
  }
}

TEST_CASE("sum and product estimates cover their targets") {
  for (double a : {0.55, 2.0 / 3.0, 0.9}) {
    const double mu = 0.5, c = 0.8;
    double prod = 1.0, sum = 0.0;
    for (std::int64_t m = 1; m <= 5000; ++m) {
      const double r = c * std::pow(static_cast<double>(m), -a);
      prod *= 1.0 - mu * r;
      sum = sum * (1.0 - mu * r) + r * r;
      if (m % 500 == 0) {
        CHECK(prod <= tech1_bound(m, mu, c, a));
        CHECK(sum <= tech2_bound(m, mu, c, a));
      }
    }
    double s3 = 0.0;
    for (int t = 1; t <= 20000; ++t) s3 += std::exp(-0.1 * std::pow(t, 1.0 - a));
    CHECK(s3 <= tech3_bound(0.1, 1.0 - a));
    double s4 = 0.0;
    for (int t = 1; t <= 1000; ++t) s4 += std::pow(t, a - 1.0);
    CHECK(s4 <= tech4_bound(1000, a));
  }
  // alpha = 1/2 takes the logarithmic limit of (t^{1-2a} - 1)/(1 - 2a).
  CHECK(tech2_bound(100, 0.5, 1.0, 0.5) > 0.0);
}

TEST_CASE("bound report") {
  const auto in = constant_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 1.0, 8, {8, 8, 8, 8}, 0.05);
  const BoundReport r = evaluate_bounds(in);
  CHECK(r.constants.count("Q_bias"));
  CHECK(r.curves.at("prop3_hat").size() == 5);
  CHECK(r.curves.at("prop3_local").size() == 36);
  CHECK(r.curves.count("moment4_root_at_phase_end") == 1);
  auto fast = in;
  fast.eta = 0.1;
  CHECK(evaluate_bounds(fast).curves.count("moment4_root_at_phase_end") == 0);
  CHECK(r.flags.at("small_constant_regime"));
  CHECK(evaluate_bounds(in).to_json() == r.to_json());
  const auto on = online_inputs(0.1, 1.0, 0.0, 1.0, 1.0, 4, {8, 8}, 0.5, 2.0 / 3.0);
  const BoundReport ro = evaluate_bounds(on);
  CHECK(ro.constants.count("beta6"));
  CHECK(ro.constants.count("R_bias_C"));
  CHECK(ro.curves.count("prop3_hat") == 0);
  BoundInputs empty = in;
  empty.phase_lengths.clear();
  CHECK_THROWS_AS(evaluate_bounds(empty), DomainError);
}
