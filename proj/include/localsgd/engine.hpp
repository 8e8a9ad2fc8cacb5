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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "localsgd/oracle.hpp"
#include "localsgd/schedule.hpp"
#include "localsgd/types.hpp"

namespace localsgd {

enum class RecordLevel { summary, ghost, full };

const char* to_string(RecordLevel level);
RecordLevel record_level_from_string(const std::string& name);

// How adaptive schedules estimate E||hat w^t - w*|| when re-planning.
// plug_in uses the run's own ||hat w^t - w*||; replica_mean is honored by
// the ensemble runner, which feeds the same estimate to every replica.
enum class DistanceEstimator { plug_in, replica_mean };

const char* to_string(DistanceEstimator est);

struct RunConfig {
  std::int64_t workers = 1;
  CommSchedule comm;
  LearningRateSchedule lr;
  Vector w0;
  std::uint64_t master_seed = 0;
  // Oracle template; the run reseeds it with master_seed.
  OracleStream oracle;
  RecordLevel record = RecordLevel::summary;
  bool allow_guard_violation = false;
  int threads = 1;
  // Per-worker step counts at which the running Polyak-Ruppert average is
  // recorded (values beyond the run are ignored).
  std::vector<std::int64_t> pr_checkpoints;
  // Accumulate xi and delta sums per phase (always on at RecordLevel::full).
  bool accumulate_noise = false;
  DistanceEstimator distance = DistanceEstimator::plug_in;

  // Throws ConfigError (or UsageError for missing pieces). Guard violations
  // are errors unless allow_guard_violation is set.
  void validate() const;
  const Objective& objective() const { return oracle.objective(); }
};

// Everything a run produced. Phases are 0-based here: phase t of the
// algorithm is index t-1, hat_w[0] = w0 and hat_w[t] is the average formed
// at the end of phase index t-1, so ghost[i][N] == hat_w[i+1].
struct Trace {
  std::int64_t workers = 0;
  RecordLevel record = RecordLevel::summary;
  std::vector<std::int64_t> phase_lengths;
  std::vector<Vector> hat_w;
  std::vector<Vector> phase_avg;
  Vector pr_avg;
  // Running Polyak-Ruppert averages at the configured checkpoints.
  std::vector<std::int64_t> pr_checkpoints;
  std::vector<Vector> pr_running;
  // ghost[i][k], k = 0..N (ghost level and above).
  std::vector<std::vector<Vector>> ghost;
  // per_worker[i][p][k], k = 0..N (full level).
  std::vector<std::vector<std::vector<Vector>>> per_worker;
  // rates[i][k-1] = eta at step k; next_rates[i] = eta at global index
  // cum_prev + N + 1, which no step uses.
  std::vector<std::vector<double>> rates;
  std::vector<double> next_rates;
  // Sum over workers and steps of xi = F'(w) - g and
  // delta = F''(w*)(w - w*) - F'(w), both at the pre-step iterate.
  std::vector<Vector> xi_sums;
  std::vector<Vector> delta_sums;
  // Adaptive schedules: unclamped cap per phase and clamp count.
  std::vector<double> planned_caps;
  std::int64_t degenerate_caps = 0;
  std::uint64_t master_seed = 0;

  std::int64_t phases() const { return static_cast<std::int64_t>(phase_lengths.size()); }
  std::int64_t steps_per_worker() const;
  std::int64_t total_gradients() const { return workers * steps_per_worker(); }
  bool has_noise_sums() const { return !xi_sums.empty(); }
};

// w - eta g; throws DivergenceError at (t, k, p) on a non-finite result.
Vector local_step(const Vector& w, const Vector& g, double eta, std::int64_t t = 0,
                  std::int64_t k = 0, std::int64_t p = 0);
void local_step_inplace(Vector& w, const Vector& g, double eta, std::int64_t t,
                        std::int64_t k, std::int64_t p);

// Arithmetic mean, summed in index order. Throws UsageError on empty input or
// mismatched dimensions.
Vector aggregate(const std::vector<Vector>& models);

// sum_t N^t avg_t / sum_t N^t.
Vector polyak_ruppert(const std::vector<Vector>& phase_avg,
                      const std::vector<std::int64_t>& lengths);

// Stepwise driver; lets callers interleave phases of several runs.
class Simulation {
 public:
  explicit Simulation(RunConfig config);

  bool done() const;
  std::int64_t phases_done() const { return static_cast<std::int64_t>(trace_.phase_lengths.size()); }
  std::int64_t steps_done() const { return steps_done_; }
  const Vector& current_hat() const { return trace_.hat_w.back(); }
  const RunConfig& config() const { return config_; }

  // Plans the next phase. dist overrides the plug-in distance estimate.
  PhasePlan plan_next(std::optional<double> dist = std::nullopt) const;
  // Runs one phase of N local steps per worker.
  void run_phase(std::int64_t N);
  // plan_next + run_phase; returns the length run (0 when done).
  std::int64_t advance(std::optional<double> dist = std::nullopt);
  void run_to_end();
  Trace finish();

 private:
  RunConfig config_;
  OracleStream oracle_;
  Trace trace_;
  std::int64_t steps_done_ = 0;
  Vector running_sum_;  // sum over workers of all iterates so far
  std::size_t next_checkpoint_ = 0;
  bool finished_ = false;
};

Trace run(const RunConfig& config);

enum class Variant { local, mba, osa, serial };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);

// Runs the variant on a dedicated code path. The schedule is derived from
// the config's per-worker step count: mba uses N^t = 1, osa uses C = 1 and
// serial forces P = 1. Records beyond summary level go through run().
Trace run_variant(const RunConfig& config, Variant variant);

// One row per recorded iterate: kind,t,k,p,dist_sq,w_0..w_{d-1}, with
// t 1-based and k = 0 the phase start. kind is hat, phase_avg, ghost,
// worker, pr_running or pr_avg.
void write_trace_csv(std::ostream& out, const Trace& trace, const Objective& objective);

// Config echo plus final distances. Contains nothing time-dependent.
nlohmann::json trace_summary_json(const Trace& trace, const RunConfig& config);
nlohmann::json run_config_json(const RunConfig& config);

}  // namespace localsgd
