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

// Extended-precision recomputation of the bound formulas, written straight
// from their closed forms (no log-space tricks) so that it shares no code
// path with the library evaluators.

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cstdint>
#include <vector>

namespace oracle {

using F = boost::multiprecision::cpp_bin_float_50;

struct Params {
  F mu, L, M, sigma2, sigma_inf2, d0, P, eta, c, alpha;
};

inline F gamma(const F& x) { return boost::math::tgamma(x); }

struct Q {
  F bias, var1, var2;
};

inline Q q(const Params& p, const F& X) {
  return {1 + p.M * p.M * p.eta * p.d0 / p.mu + p.L * p.L * p.eta / (p.mu * p.P),
          p.L * p.L * p.eta / p.mu + p.P / (X * p.eta * p.mu),
          p.M * p.M * X * p.P * p.eta * p.eta * p.sigma2 / (p.mu * p.mu)};
}

inline F prop1(const Params& p, std::int64_t t) {
  const F qt = pow(1 - p.eta * p.mu, t);
  return qt * p.d0 + 2 * p.sigma2 * p.eta / p.P * (1 - qt) / p.mu;
}

inline F prop2(const Params& p, std::int64_t k) {
  const F qk = pow(1 - p.eta * p.mu, k);
  return qk * p.d0 + 2 * p.sigma2 * p.eta * (1 - qk) / p.mu;
}

inline F fh_maha(const Params& p, const F& X, const F& kappa, const F& T) {
  const Q c = q(p, X);
  return p.d0 / (p.eta * p.eta * X * X) * c.bias +
         p.sigma2 / T * (1 + c.var1 / kappa + c.var2 / (kappa * kappa));
}

inline F prop3_hat(const Params& p, std::int64_t n1) {
  const F qn = pow(1 - p.eta * p.mu, n1);
  return qn * p.d0 + p.sigma_inf2 * p.eta / p.P * (1 - qn) / p.mu;
}

inline F prop3_local(const Params& p, std::int64_t n1, std::int64_t k) {
  const F q = 1 - p.eta * p.mu;
  const F qn = pow(q, n1), qk = pow(q, k);
  return qn * qk * p.d0 + p.sigma_inf2 * p.eta * ((1 - qn) / (p.P * p.mu) + (1 - qk) / p.mu);
}

inline F tau1(const Params& p, std::int64_t Nt) { return 4 + p.mu * Nt * p.eta * p.eta; }
inline F tau2(const Params& p, std::int64_t N1t) { return exp(p.mu * N1t * p.eta * p.eta); }

inline F online_rate(const Params& p, std::int64_t l) { return p.c / pow(F(l), p.alpha); }

// kappa1 over the steps of phase t and kappa2 over all steps so far, for a
// rate sequence given by its global index.
template <typename Rate>
std::pair<F, F> kappa(const Params& p, std::int64_t start, std::int64_t end, Rate rate) {
  F phase = 0, total = 0;
  for (std::int64_t l = 1; l <= end; ++l) {
    const F r = rate(l);
    total += r * r;
    if (l > start) phase += r * r;
  }
  return {4 + p.mu * phase, exp(p.mu * total)};
}

inline F quad_corollary_hat(const Params& p, std::int64_t Nt, std::int64_t n1_prev,
                            std::int64_t n1) {
  const F qn = pow(1 - p.eta * p.mu, n1_prev);
  return tau2(p, n1) * qn * p.d0 +
         2 * tau1(p, Nt) * tau2(p, n1) * p.sigma2 * p.eta / p.P * (1 - qn) / p.mu;
}

struct R {
  F bias, var1, var2;
};

inline R r(const Params& p, const F& X) {
  const F a = p.alpha, c = p.c, mu = p.mu, mc = mu * c, oa = 1 - a;
  R out;
  out.bias = 1 + pow(X, 2 * a) * exp(-mc * pow(X, oa)) + 1 / pow(mc, 1 / oa) +
             p.M * p.M * c * c * p.d0 / pow(mc, 2 / oa) + 2 * p.L * p.L * c * c / (p.P * pow(mc, 1 / oa));
  out.var1 = pow(X, 2 * a - 1) * p.P / (2 * a - 1) * exp(-mu * pow(X, oa) / (2 * oa)) +
             p.P / pow(X, oa) / (c * mu) + p.P / (X * pow(mu, 2 * a / oa) * pow(c, 2 / oa)) +
             p.L * p.L * p.P * c * c / (pow(X, a) * mu * mu);
  out.var2 = p.M * p.M * p.sigma2 * p.P * c * c / (mu * mu * pow(X, 2 * a - 1));
  return out;
}

struct Beta {
  F b1, b2, b3, b4, b5, b6;
};

inline Beta beta(const F& mu, const F& c, const F& a) {
  const F oa = 1 - a, mc = mu * c;
  const F ga = gamma(a / oa), g1 = gamma(1 / oa);
  const F shrink = mc * (pow(F(2), oa) - 1);
  Beta b;
  b.b1 = pow(F(2), (1 + 3 * a) / oa) * pow(oa, (4 * a - 2) / oa) / pow(mc, 2 * a / oa) * ga * ga;
  b.b2 = pow(F(4), (1 + 2 * a - a * a) / oa) * pow(oa, (2 * a - 1) / oa) * c * c /
         ((2 * a - 1) * pow(shrink, 2 * a / oa)) * ga * ga;
  b.b3 = 32 * c / (a * a * mu);
  b.b4 = pow(F(2), 1 / oa) * pow(oa, a / oa) / pow(mc, 1 / oa) * g1;
  b.b5 = pow(F(2), (3 - 2 * a) / oa) * pow(oa, a / oa) * a * c * c /
         ((2 * a - 1) * pow(shrink, 1 / oa)) * g1;
  b.b6 = 2 * c / (oa * mu);
  return b;
}

inline F tech1(std::int64_t t, const F& mu, const F& c, const F& a) {
  return exp(-mu * c * pow(F(t), 1 - a) / (2 * (1 - a)));
}

inline F tech2(std::int64_t t, const F& mu, const F& c, const F& a) {
  const F tt = t;
  const F decay = exp(-mu * c * pow(tt, 1 - a) / (2 * (1 - a)) * (1 - 1 / pow(F(2), 1 - a)));
  return decay * c * c * (1 + (pow(tt, 1 - 2 * a) - 1) / (1 - 2 * a)) + 2 * c / (pow(tt, a) * mu);
}

inline F tech2_limit(std::int64_t t, const F& mu, const F& c, const F& a) {
  const F tt = t;
  const F decay = exp(-mu * c * pow(tt, 1 - a) / (2 * (1 - a)) * (1 - 1 / pow(F(2), 1 - a)));
  return decay * 2 * a * c * c / (2 * a - 1) + 2 * c / (pow(tt, a) * mu);
}

inline F tech3(const F& a, const F& b) { return gamma(1 / b) / (b * pow(a, 1 / b)); }
inline F tech8(const F& a, const F& b, const F& c) {
  return gamma((1 - c) / b) / (b * pow(a, (1 - c) / b));
}
inline F tech4(std::int64_t C, const F& a) { return pow(F(C), a) / a; }

inline F moment4(const Params& p, std::int64_t k, const F& root_m4_start) {
  return pow(1 - p.eta * p.mu, k) * root_m4_start + 20 * p.eta * p.sigma2 / p.mu;
}

inline F relative_error(double got, const F& want) {
  const F diff = abs(F(got) - want);
  return want == 0 ? diff : diff / abs(want);
}

}  // namespace oracle
