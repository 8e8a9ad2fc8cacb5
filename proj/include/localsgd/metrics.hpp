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

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "localsgd/engine.hpp"

namespace localsgd {

// ||F''(w*) (w - w*)||^2.
double mahalanobis_error(const Vector& w, const Objective& objective);

// Sum with pairwise splitting, so rounding grows as O(log n).
double pairwise_sum(const double* values, std::size_t n);
double pairwise_mean(const std::vector<double>& values);

// Iterate series that can be tracked across replicas.
enum class Selector { hat, ghost, local, local_mean, phase_avg, pr_running, pr_avg };
inline constexpr std::size_t kSelectorCount = 7;

const char* to_string(Selector s);
Selector selector_from_string(const std::string& name);

// Per-index scalar summaries of one replica's series.
struct Channel {
  std::vector<double> sq;      // ||w - w*||^2
  std::vector<double> maha;    // ||F''(w*)(w - w*)||^2
  std::vector<double> fourth;  // ||w - w*||^4
  std::vector<double> loss;    // F(w)
  std::size_t size() const { return sq.size(); }
};

struct ReplicaRecord {
  std::uint64_t seed = 0;
  std::vector<std::int64_t> phase_lengths;
  std::vector<std::int64_t> checkpoints;
  std::array<Channel, kSelectorCount> channels;
  std::vector<double> planned_caps;
  std::int64_t degenerate_caps = 0;
};

struct EnsembleOptions {
  int replicas = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<Selector> selectors = {Selector::hat, Selector::pr_avg};
  std::int64_t local_worker = 0;  // worker tracked by Selector::local
};

// Replicated runs with seeds derived from the ensemble seed. Only scalar
// channels are kept, never whole traces.
struct Ensemble {
  RunConfig base;
  EnsembleOptions options;
  std::vector<ReplicaRecord> records;

  int replicas() const { return static_cast<int>(records.size()); }
};

// Seed of replica i; pairwise distinct across i for a fixed ensemble seed.
std::uint64_t replica_seed(std::uint64_t ensemble_seed, std::int64_t i);

// Runs the ensemble. Replica parallelism uses options.threads; results do not
// depend on the thread count. Adaptive schedules with the replica_mean
// estimator advance all replicas in lockstep from the shared estimate.
Ensemble run_ensemble(const RunConfig& base, const EnsembleOptions& options);

// Scalar channels of one trace.
ReplicaRecord extract_record(const Trace& trace, const Objective& objective,
                             const std::vector<Selector>& selectors, std::int64_t local_worker);

struct MomentPoint {
  std::int64_t t = 0;          // 1-based phase (hat: communication round, 0 = start)
  std::int64_t k = 0;          // step within phase (ghost/local) or checkpoint
  std::int64_t gradients = 0;  // total gradients used so far
  double sq = 0.0, sq_se = 0.0;
  double maha = 0.0, maha_se = 0.0;
  double fourth = 0.0, fourth_se = 0.0;
  double root_fourth = 0.0, root_fourth_se = 0.0;  // sqrt(E||w - w*||^4)
  double loss = 0.0, loss_var = 0.0;               // replica mean and variance of F
};

struct MomentSeries {
  Selector selector = Selector::hat;
  int replicas = 0;
  std::vector<MomentPoint> points;

  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

// Jackknife standard error of f(mean of values).
double jackknife_stderr(const std::vector<double>& values,
                        const std::function<double(double)>& f);

// Throws EnsembleError on mismatched shapes or a missing channel, and
// UsageError for fewer than 2 replicas.
MomentSeries estimate_moments(const Ensemble& ensemble, Selector selector);

// Relative residual of the parallel decomposition identity
//
//   F''(w*)(lagged average - w*) = P(w0 - w*)/(T eta_1) - P(hat w^C - w*)/(T eta_{N^C+1})
//       - (1/T) sum (w_{p,k} - w*)(1/eta_k - 1/eta_{k+1}) + (1/T) sum delta + (1/T) sum xi,
//
// where the lagged average is (1/T) sum_{t,p,k} w_{p,k-1}. delta is
// recomputed from the stored iterates; xi comes from the trace accumulators.
// Returns ||LHS - RHS|| / (1 + ||LHS||). UsageError without full records.
double decomposition_residual(const Trace& trace, const Objective& objective,
                              const LearningRateSchedule& lr);
// Same, with xi replayed from the oracle instead of the accumulators.
double decomposition_residual(const Trace& trace, const Objective& objective,
                              const LearningRateSchedule& lr, const OracleStream& oracle);

struct RoundProfile {
  std::int64_t t = 0;
  double pre = 0.0, pre_se = 0.0;    // E||w_{p,N} - w*||^2 (worker mean)
  double post = 0.0, post_se = 0.0;  // E||hat w^t - w*||^2
  double ratio = 0.0;                // post / pre
  double z = 0.0;                    // paired z-score of pre - post
  double confidence = 0.0;           // Phi(z)
};

struct PhaseProfile {
  MomentSeries local;  // worker-mean second moment over (t, k)
  std::vector<RoundProfile> rounds;

  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

// Needs Selector::local_mean and Selector::hat in the ensemble.
PhaseProfile within_phase_profile(const Ensemble& ensemble);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // 95% interval
  std::size_t points = 0;
};

// Least-squares fit of log y on log x. FitError on fewer than 10 points or
// non-positive values.
SlopeFit slope_fit(const std::vector<double>& x, const std::vector<double>& y);

enum class MomentField { sq, maha, fourth, root_fourth, loss };

// Fit over points whose gradient count lies in [lo, hi].
SlopeFit slope_fit(const MomentSeries& series, std::int64_t lo, std::int64_t hi,
                   MomentField field = MomentField::sq);

}  // namespace localsgd
