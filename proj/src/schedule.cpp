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

#include "localsgd/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "localsgd/errors.hpp"

namespace localsgd {
namespace {

std::int64_t clamp_cap(double raw) {
  if (!(raw >= 1.0)) return 1;
  if (raw >= 9.0e18) return std::numeric_limits<std::int64_t>::max();
  // Absorb a few ulps so that e.g. 1 / (0.1 * 0.01 * 10) floors to 100.
  return static_cast<std::int64_t>(std::floor(raw * (1.0 + 1e-12)));
}

void require_positive_steps(std::int64_t steps) {
  if (steps < 1) throw ConfigError("step count must be at least 1");
}

}  // namespace

const char* to_string(RateKind kind) {
  return kind == RateKind::constant ? "constant" : "online";
}

LearningRateSchedule LearningRateSchedule::constant(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive and finite");
  LearningRateSchedule s;
  s.kind_ = RateKind::constant;
  s.eta_ = eta;
  return s;
}

LearningRateSchedule LearningRateSchedule::online(double c_eta, double alpha) {
  if (!(c_eta > 0.0) || !std::isfinite(c_eta)) {
    throw ConfigError("c_eta must be positive and finite");
  }
  // alpha = 1/2 is admitted as a schedule; the online bounds still need
  // alpha > 1/2 and reject it there.
  if (!(alpha >= 0.5 && alpha < 1.0)) throw ConfigError("alpha must lie in [1/2, 1)");
  LearningRateSchedule s;
  s.kind_ = RateKind::online_power;
  s.c_eta_ = c_eta;
  s.alpha_ = alpha;
  return s;
}

LearningRateSchedule LearningRateSchedule::finite_horizon(double c,
                                                          std::int64_t steps_per_worker,
                                                          double L) {
  require_positive_steps(steps_per_worker);
  auto s = constant(c / std::sqrt(static_cast<double>(steps_per_worker)));
  const GuardResult guard = check_step_guard(s, L);
  if (!guard.ok) {
    throw ConfigError("finite-horizon rate violates 2 eta L <= 1 (product " +
                      std::to_string(guard.product) + ")");
  }
  return s;
}

double LearningRateSchedule::rate_at(std::int64_t t, std::int64_t k,
                                     std::int64_t cum_prev) const {
  (void)t;
  return at_global(cum_prev + k);
}

double LearningRateSchedule::at_global(std::int64_t l) const {
  if (kind_ == RateKind::constant) return eta_;
  return c_eta_ * std::pow(static_cast<double>(l), -alpha_);
}

double LearningRateSchedule::max_rate() const {
  return kind_ == RateKind::constant ? eta_ : c_eta_;
}

GuardResult check_step_guard(const LearningRateSchedule& lr, double L) {
  GuardResult r;
  r.product = 2.0 * lr.max_rate() * L;
  r.ok = r.product <= 1.0;
  return r;
}

GuardResult check_step_guard(const LearningRateSchedule& lr, const Objective& objective) {
  return check_step_guard(lr, objective.L());
}

double raw_phase_cap_quadratic(double mu, double eta, std::int64_t P) {
  if (!(mu > 0.0) || !(eta > 0.0) || P < 1) {
    throw DomainError("phase cap needs mu > 0, eta > 0 and P >= 1");
  }
  return 1.0 / (mu * eta * static_cast<double>(P));
}

double raw_phase_cap_general(double mu, double eta, std::int64_t P, double M, double dist) {
  if (!(dist >= 0.0) || !(M >= 0.0)) throw DomainError("phase cap needs M >= 0 and dist >= 0");
  const double quad = raw_phase_cap_quadratic(mu, eta, P);
  if (M == 0.0 || dist == 0.0) return quad;
  return std::min(1.0 / (eta * static_cast<double>(P) * M * dist), quad);
}

std::int64_t max_phase_quadratic(double mu, double eta, std::int64_t P) {
  return clamp_cap(raw_phase_cap_quadratic(mu, eta, P));
}

std::int64_t max_phase_general(double mu, double eta, std::int64_t P, double M, double dist) {
  return clamp_cap(raw_phase_cap_general(mu, eta, P, M, dist));
}

const char* to_string(CommKind kind) {
  switch (kind) {
    case CommKind::fixed_phases: return "fixed";
    case CommKind::mba: return "mba";
    case CommKind::osa: return "osa";
    case CommKind::serial: return "serial";
    case CommKind::adaptive_quadratic: return "adaptive_quadratic";
    case CommKind::adaptive_general: return "adaptive_general";
  }
  return "fixed";
}

CommKind comm_kind_from_string(const std::string& name) {
  for (CommKind k : {CommKind::fixed_phases, CommKind::mba, CommKind::osa, CommKind::serial,
                     CommKind::adaptive_quadratic, CommKind::adaptive_general}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown communication schedule '" + name + "'");
}

CommSchedule CommSchedule::fixed(std::vector<std::int64_t> lengths) {
  if (lengths.empty()) throw ConfigError("phase list is empty");
  for (auto n : lengths) {
    if (n < 1) throw ConfigError("phase lengths must be positive");
  }
  CommSchedule s;
  s.kind_ = CommKind::fixed_phases;
  s.steps_ = std::accumulate(lengths.begin(), lengths.end(), std::int64_t{0});
  s.lengths_ = std::move(lengths);
  return s;
}

CommSchedule CommSchedule::uniform(std::int64_t N, std::int64_t C) {
  if (N < 1 || C < 1) throw ConfigError("N and C must be positive");
  return fixed(std::vector<std::int64_t>(static_cast<std::size_t>(C), N));
}

CommSchedule CommSchedule::budget(std::int64_t N, std::int64_t steps_per_worker) {
  if (N < 1) throw ConfigError("N must be positive");
  require_positive_steps(steps_per_worker);
  std::vector<std::int64_t> lengths(static_cast<std::size_t>(steps_per_worker / N), N);
  if (steps_per_worker % N != 0) lengths.push_back(steps_per_worker % N);
  return fixed(std::move(lengths));
}

CommSchedule CommSchedule::mba(std::int64_t steps) {
  require_positive_steps(steps);
  CommSchedule s = uniform(1, steps);
  s.kind_ = CommKind::mba;
  return s;
}

CommSchedule CommSchedule::osa(std::int64_t steps) {
  require_positive_steps(steps);
  CommSchedule s = fixed({steps});
  s.kind_ = CommKind::osa;
  return s;
}

CommSchedule CommSchedule::serial(std::int64_t steps) {
  require_positive_steps(steps);
  CommSchedule s = fixed({steps});
  s.kind_ = CommKind::serial;
  return s;
}

CommSchedule CommSchedule::adaptive_quadratic(std::int64_t steps_per_worker) {
  require_positive_steps(steps_per_worker);
  CommSchedule s;
  s.kind_ = CommKind::adaptive_quadratic;
  s.steps_ = steps_per_worker;
  return s;
}

CommSchedule CommSchedule::adaptive_general(std::int64_t steps_per_worker) {
  CommSchedule s = adaptive_quadratic(steps_per_worker);
  s.kind_ = CommKind::adaptive_general;
  return s;
}

PhasePlan CommSchedule::plan(std::int64_t t, std::int64_t steps_done,
                             const PlanContext& ctx) const {
  PhasePlan out;
  out.raw_cap = std::numeric_limits<double>::quiet_NaN();
  const std::int64_t remaining = steps_ - steps_done;
  if (remaining <= 0) return out;
  if (!adaptive()) {
    if (t < 0 || t >= phases()) return out;
    out.length = lengths_[static_cast<std::size_t>(t)];
    return out;
  }
  out.raw_cap = kind_ == CommKind::adaptive_quadratic
                    ? raw_phase_cap_quadratic(ctx.mu, ctx.eta, ctx.P)
                    : raw_phase_cap_general(ctx.mu, ctx.eta, ctx.P, ctx.M, ctx.dist);
  out.degenerate = !(out.raw_cap >= 1.0);
  out.length = std::min(clamp_cap(out.raw_cap), remaining);
  return out;
}

}  // namespace localsgd
