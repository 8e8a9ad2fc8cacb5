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
#include <string>
#include <vector>

#include "localsgd/model.hpp"

namespace localsgd {

enum class RateKind { constant, online_power };

const char* to_string(RateKind kind);

// Step sizes eta^t_k. The online kind depends only on the global step index
// l = cum_prev + k, never on the worker.
class LearningRateSchedule {
 public:
  static LearningRateSchedule constant(double eta);
  static LearningRateSchedule online(double c_eta, double alpha);
  // eta = c / sqrt(N C). Throws ConfigError when 2 eta L > 1.
  static LearningRateSchedule finite_horizon(double c, std::int64_t steps_per_worker, double L);

  RateKind kind() const { return kind_; }
  double eta() const { return eta_; }
  double c_eta() const { return c_eta_; }
  double alpha() const { return alpha_; }

  // t and k are 1-based; cum_prev = sum of earlier phase lengths.
  double rate_at(std::int64_t t, std::int64_t k, std::int64_t cum_prev) const;
  // Rate at global step index l >= 1.
  double at_global(std::int64_t l) const;
  // Largest rate the schedule ever uses.
  double max_rate() const;

  bool operator==(const LearningRateSchedule&) const = default;

 private:
  RateKind kind_ = RateKind::constant;
  double eta_ = 0.0;
  double c_eta_ = 0.0;
  double alpha_ = 0.0;
};

struct GuardResult {
  bool ok = true;
  double product = 0.0;  // 2 * max_rate * L
};

GuardResult check_step_guard(const LearningRateSchedule& lr, const Objective& objective);
GuardResult check_step_guard(const LearningRateSchedule& lr, double L);

// floor(1 / (mu eta P)), clamped below at 1.
std::int64_t max_phase_quadratic(double mu, double eta, std::int64_t P);
// floor(min(1 / (eta P M dist), 1 / (mu eta P))), clamped below at 1. A zero
// distance or zero M leaves the quadratic cap alone.
std::int64_t max_phase_general(double mu, double eta, std::int64_t P, double M, double dist);

// Unclamped caps, so callers can tell when the clamp fired.
double raw_phase_cap_quadratic(double mu, double eta, std::int64_t P);
double raw_phase_cap_general(double mu, double eta, std::int64_t P, double M, double dist);

enum class CommKind { fixed_phases, mba, osa, serial, adaptive_quadratic, adaptive_general };

const char* to_string(CommKind kind);
CommKind comm_kind_from_string(const std::string& name);

// Context handed to adaptive schedules at each communication barrier.
struct PlanContext {
  double mu = 0.0;
  double M = 0.0;
  double eta = 0.0;  // rate at the first step of the coming phase
  std::int64_t P = 1;
  double dist = 0.0;  // estimate of E||hat w^t - w*||
};

struct PhasePlan {
  std::int64_t length = 0;
  double raw_cap = 0.0;   // NaN for non-adaptive schedules
  bool degenerate = false;  // cap fell below 1 and was clamped
};

// Phase-length policy. Fixed kinds resolve their lengths up front; adaptive
// kinds plan each phase from a PlanContext, capped by a per-worker step
// budget (the last phase is truncated to fit).
class CommSchedule {
 public:
  static CommSchedule fixed(std::vector<std::int64_t> lengths);
  // C phases of N steps each.
  static CommSchedule uniform(std::int64_t N, std::int64_t C);
  // Phases of N steps until `steps_per_worker` is reached; last phase truncated.
  static CommSchedule budget(std::int64_t N, std::int64_t steps_per_worker);
  static CommSchedule mba(std::int64_t steps);
  static CommSchedule osa(std::int64_t steps);
  // Serial SGD: one phase; the run must use P = 1.
  static CommSchedule serial(std::int64_t steps);
  static CommSchedule adaptive_quadratic(std::int64_t steps_per_worker);
  static CommSchedule adaptive_general(std::int64_t steps_per_worker);

  CommKind kind() const { return kind_; }
  bool adaptive() const {
    return kind_ == CommKind::adaptive_quadratic || kind_ == CommKind::adaptive_general;
  }
  // Per-worker step count (sum of N^t for fixed kinds).
  std::int64_t steps_per_worker() const { return steps_; }
  // Empty for adaptive kinds.
  const std::vector<std::int64_t>& phase_lengths() const { return lengths_; }
  std::int64_t phases() const { return static_cast<std::int64_t>(lengths_.size()); }

  // Length of phase `t` (0-based) given `steps_done` per-worker steps so far.
  // Returns length 0 once the budget is exhausted.
  PhasePlan plan(std::int64_t t, std::int64_t steps_done, const PlanContext& ctx) const;

  bool operator==(const CommSchedule&) const = default;

 private:
  CommKind kind_ = CommKind::fixed_phases;
  std::vector<std::int64_t> lengths_;
  std::int64_t steps_ = 0;
};

// Total gradient count T = P * sum_t N^t.
inline std::int64_t total_gradients(std::int64_t P, std::int64_t steps_per_worker) {
  return P * steps_per_worker;
}

}  // namespace localsgd
