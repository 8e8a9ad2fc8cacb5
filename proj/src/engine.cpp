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

#include "localsgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <utility>

#include "localsgd/errors.hpp"

namespace localsgd {
namespace {

using json = nlohmann::json;

std::uint32_t as_index(std::int64_t v) { return static_cast<std::uint32_t>(v); }

// Per-worker results of one phase.
struct WorkerSlot {
  Vector w;
  Vector sum;
  std::vector<Vector> path;         // k = 0..N when recording
  std::vector<Vector> checkpoints;  // partial sums at checkpoints in this phase
  Vector xi;
  Vector delta;
  std::exception_ptr error;
};

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

void rethrow_first(const std::vector<WorkerSlot>& slots) {
  for (const auto& s : slots) {
    if (s.error) std::rethrow_exception(s.error);
  }
}

}  // namespace

const char* to_string(RecordLevel level) {
  switch (level) {
    case RecordLevel::summary: return "summary";
    case RecordLevel::ghost: return "ghost";
    case RecordLevel::full: return "full";
  }
  return "summary";
}

RecordLevel record_level_from_string(const std::string& name) {
  for (RecordLevel l : {RecordLevel::summary, RecordLevel::ghost, RecordLevel::full}) {
    if (name == to_string(l)) return l;
  }
  throw ConfigError("unknown record level '" + name + "'");
}

const char* to_string(DistanceEstimator est) {
  return est == DistanceEstimator::plug_in ? "plug_in" : "replica_mean";
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::local: return "local";
    case Variant::mba: return "mba";
    case Variant::osa: return "osa";
    case Variant::serial: return "serial";
  }
  return "local";
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : {Variant::local, Variant::mba, Variant::osa, Variant::serial}) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

void RunConfig::validate() const {
  if (!oracle.valid()) throw UsageError("run config has no oracle");
  if (workers < 1) throw ConfigError("P must be at least 1");
  if (workers > 0xFFFFFFF0) throw ConfigError("too many workers");
  if (threads < 1) throw ConfigError("thread count must be at least 1");
  if (comm.steps_per_worker() < 1) throw ConfigError("communication schedule has no steps");
  if (lr.max_rate() <= 0.0) throw ConfigError("learning-rate schedule is not set");
  if (w0.size() != objective().dim()) throw ConfigError("w0 has the wrong dimension");
  if (!w0.allFinite()) throw ConfigError("w0 is not finite");
  if (comm.kind() == CommKind::serial && workers != 1) {
    throw ConfigError("serial schedule requires P = 1");
  }
  const GuardResult guard = check_step_guard(lr, objective());
  if (!guard.ok && !allow_guard_violation) {
    throw ConfigError("step-size guard violated: 2 eta L = " + std::to_string(guard.product) +
                      " > 1");
  }
}

std::int64_t Trace::steps_per_worker() const {
  return std::accumulate(phase_lengths.begin(), phase_lengths.end(), std::int64_t{0});
}

void local_step_inplace(Vector& w, const Vector& g, double eta, std::int64_t t, std::int64_t k,
                        std::int64_t p) {
  w -= eta * g;
  if (!w.allFinite()) throw DivergenceError("iterate became non-finite", t, k, p);
}

Vector local_step(const Vector& w, const Vector& g, double eta, std::int64_t t, std::int64_t k,
                  std::int64_t p) {
  Vector out = w;
  local_step_inplace(out, g, eta, t, k, p);
  return out;
}

Vector aggregate(const std::vector<Vector>& models) {
  if (models.empty()) throw UsageError("aggregate of an empty set");
  Vector sum = models.front();
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (models[i].size() != sum.size()) throw UsageError("aggregate: dimension mismatch");
    sum += models[i];
  }
  sum /= static_cast<double>(models.size());
  return sum;
}

Vector polyak_ruppert(const std::vector<Vector>& phase_avg,
                      const std::vector<std::int64_t>& lengths) {
  if (phase_avg.empty() || phase_avg.size() != lengths.size()) {
    throw UsageError("polyak_ruppert: phase averages and lengths disagree");
  }
  Vector sum = Vector::Zero(phase_avg.front().size());
  double weight = 0.0;
  for (std::size_t i = 0; i < phase_avg.size(); ++i) {
    sum += static_cast<double>(lengths[i]) * phase_avg[i];
    weight += static_cast<double>(lengths[i]);
  }
  return sum / weight;
}

Simulation::Simulation(RunConfig config) : config_(std::move(config)) {
  config_.validate();
  oracle_ = config_.oracle.reseeded(config_.master_seed);
  if (config_.record == RecordLevel::full) config_.accumulate_noise = true;
  std::sort(config_.pr_checkpoints.begin(), config_.pr_checkpoints.end());
  config_.pr_checkpoints.erase(
      std::unique(config_.pr_checkpoints.begin(), config_.pr_checkpoints.end()),
      config_.pr_checkpoints.end());
  std::erase_if(config_.pr_checkpoints, [this](std::int64_t c) {
    return c < 1 || c > config_.comm.steps_per_worker();
  });
  trace_.workers = config_.workers;
  trace_.record = config_.record;
  trace_.master_seed = config_.master_seed;
  trace_.hat_w.push_back(config_.w0);
  running_sum_ = Vector::Zero(config_.w0.size());
}

bool Simulation::done() const {
  return finished_ || steps_done_ >= config_.comm.steps_per_worker();
}

PhasePlan Simulation::plan_next(std::optional<double> dist) const {
  const Objective& obj = config_.objective();
  PlanContext ctx;
  ctx.mu = obj.mu();
  ctx.M = obj.M();
  ctx.P = config_.workers;
  ctx.eta = config_.lr.at_global(steps_done_ + 1);
  ctx.dist = dist ? *dist : (current_hat() - obj.optimum()).norm();
  return config_.comm.plan(phases_done(), steps_done_, ctx);
}

std::int64_t Simulation::advance(std::optional<double> dist) {
  if (done()) return 0;
  const PhasePlan plan = plan_next(dist);
  if (plan.length <= 0) return 0;
  if (config_.comm.adaptive()) {
    trace_.planned_caps.push_back(plan.raw_cap);
    if (plan.degenerate) ++trace_.degenerate_caps;
  }
  run_phase(plan.length);
  return plan.length;
}

void Simulation::run_to_end() {
  while (advance() > 0) {
  }
}

void Simulation::run_phase(std::int64_t N) {
  if (finished_) throw UsageError("simulation already finished");
  if (N < 1) throw UsageError("phase length must be positive");
  const Objective& obj = config_.objective();
  const std::int64_t P = config_.workers;
  const std::int64_t t = phases_done() + 1;  // 1-based phase number
  const std::int64_t cum_prev = steps_done_;
  const Vector start = current_hat();
  const Index d = start.size();
  const bool keep_path = config_.record != RecordLevel::summary;
  const bool noise = config_.accumulate_noise;

  std::vector<double> rates(static_cast<std::size_t>(N));
  for (std::int64_t k = 1; k <= N; ++k) {
    rates[static_cast<std::size_t>(k - 1)] = config_.lr.rate_at(t, k, cum_prev);
  }
  // Checkpoints that fall inside this phase, as local step numbers.
  std::vector<std::int64_t> local_cps;
  for (std::size_t c = next_checkpoint_; c < config_.pr_checkpoints.size(); ++c) {
    const std::int64_t cp = config_.pr_checkpoints[c];
    if (cp > cum_prev + N) break;
    local_cps.push_back(cp - cum_prev);
  }

  std::vector<WorkerSlot> slots(static_cast<std::size_t>(P));
  auto work = [&](std::int64_t p) {
    WorkerSlot& s = slots[static_cast<std::size_t>(p)];
    try {
      s.w = start;
      s.sum = Vector::Zero(d);
      if (keep_path) {
        s.path.reserve(static_cast<std::size_t>(N + 1));
        s.path.push_back(s.w);
      }
      if (noise) {
        s.xi = Vector::Zero(d);
        s.delta = Vector::Zero(d);
      }
      Vector g(d), fg(d);
      std::size_t cp = 0;
      for (std::int64_t k = 1; k <= N; ++k) {
        oracle_.draw_gradient(as_index(p), as_index(t), as_index(k), s.w, g);
        if (noise) {
          obj.gradient(s.w, fg);
          s.xi += fg - g;
          s.delta += obj.hessian_at_opt() * (s.w - obj.optimum()) - fg;
        }
        local_step_inplace(s.w, g, rates[static_cast<std::size_t>(k - 1)], t, k, p);
        s.sum += s.w;
        if (keep_path) s.path.push_back(s.w);
        while (cp < local_cps.size() && local_cps[cp] == k) {
          s.checkpoints.push_back(s.sum);
          ++cp;
        }
      }
    } catch (...) {
      s.error = std::current_exception();
    }
  };

  const int threads = static_cast<int>(std::min<std::int64_t>(config_.threads, P));
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (std::int64_t p = 0; p < P; ++p) work(p);
  rethrow_first(slots);

  // Barrier: fixed-order reductions.
  std::vector<Vector> finals, sums;
  finals.reserve(slots.size());
  sums.reserve(slots.size());
  for (const auto& s : slots) {
    finals.push_back(s.w);
    sums.push_back(s.sum);
  }
  Vector hat = aggregate(finals);
  Vector avg = aggregate(sums) / static_cast<double>(N);

  for (std::size_t c = 0; c < local_cps.size(); ++c) {
    Vector partial = running_sum_;
    for (const auto& s : slots) partial += s.checkpoints[c];
    const std::int64_t cp = config_.pr_checkpoints[next_checkpoint_ + c];
    trace_.pr_checkpoints.push_back(cp);
    trace_.pr_running.push_back(partial / static_cast<double>(P * cp));
  }
  next_checkpoint_ += local_cps.size();
  for (const auto& s : slots) running_sum_ += s.sum;

  if (keep_path) {
    std::vector<Vector> ghost(static_cast<std::size_t>(N + 1));
    std::vector<Vector> column(static_cast<std::size_t>(P));
    for (std::int64_t k = 0; k <= N; ++k) {
      for (std::int64_t p = 0; p < P; ++p) {
        column[static_cast<std::size_t>(p)] = slots[static_cast<std::size_t>(p)].path[k];
      }
      ghost[static_cast<std::size_t>(k)] = aggregate(column);
    }
    // Same reduction as `hat`, so the two agree bit for bit.
    ghost.back() = hat;
    trace_.ghost.push_back(std::move(ghost));
    if (config_.record == RecordLevel::full) {
      std::vector<std::vector<Vector>> paths;
      paths.reserve(slots.size());
      for (auto& s : slots) paths.push_back(std::move(s.path));
      trace_.per_worker.push_back(std::move(paths));
    }
  }
  if (noise) {
    Vector xi = Vector::Zero(d), delta = Vector::Zero(d);
    for (const auto& s : slots) {
      xi += s.xi;
      delta += s.delta;
    }
    trace_.xi_sums.push_back(std::move(xi));
    trace_.delta_sums.push_back(std::move(delta));
  }

  trace_.rates.push_back(std::move(rates));
  trace_.next_rates.push_back(config_.lr.rate_at(t, N + 1, cum_prev));
  trace_.phase_lengths.push_back(N);
  trace_.phase_avg.push_back(std::move(avg));
  trace_.hat_w.push_back(std::move(hat));
  steps_done_ += N;
}

Trace Simulation::finish() {
  if (finished_) throw UsageError("simulation already finished");
  if (trace_.phase_lengths.empty()) throw UsageError("no phase has been run");
  finished_ = true;
  trace_.pr_avg = polyak_ruppert(trace_.phase_avg, trace_.phase_lengths);
  return std::move(trace_);
}

Trace run(const RunConfig& config) {
  Simulation sim(config);
  sim.run_to_end();
  return sim.finish();
}

namespace {

Trace summary_trace(const RunConfig& cfg, std::int64_t P) {
  Trace trace;
  trace.workers = P;
  trace.record = RecordLevel::summary;
  trace.master_seed = cfg.master_seed;
  trace.hat_w.push_back(cfg.w0);
  return trace;
}

void close_phase(Trace& trace, const LearningRateSchedule& lr, std::int64_t t, std::int64_t N,
                 std::int64_t cum_prev, Vector hat, Vector avg) {
  std::vector<double> rates(static_cast<std::size_t>(N));
  for (std::int64_t k = 1; k <= N; ++k) rates[static_cast<std::size_t>(k - 1)] = lr.rate_at(t, k, cum_prev);
  trace.rates.push_back(std::move(rates));
  trace.next_rates.push_back(lr.rate_at(t, N + 1, cum_prev));
  trace.phase_lengths.push_back(N);
  trace.phase_avg.push_back(std::move(avg));
  trace.hat_w.push_back(std::move(hat));
}

// Mini-batch SGD with batch size P: each step averages the P single-sample
// updates of the shared iterate.
Trace run_mba_path(const RunConfig& cfg) {
  const OracleStream oracle = cfg.oracle.reseeded(cfg.master_seed);
  const std::int64_t P = cfg.workers;
  const std::int64_t steps = cfg.comm.steps_per_worker();
  Trace trace = summary_trace(cfg, P);
  Vector w = cfg.w0;
  Vector g(w.size());
  for (std::int64_t t = 1; t <= steps; ++t) {
    const double eta = cfg.lr.rate_at(t, 1, t - 1);
    Vector next;
    for (std::int64_t p = 0; p < P; ++p) {
      oracle.draw_gradient(as_index(p), as_index(t), 1, w, g);
      Vector update = w - eta * g;
      if (!update.allFinite()) throw DivergenceError("iterate became non-finite", t, 1, p);
      if (p == 0) {
        next = std::move(update);
      } else {
        next += update;
      }
    }
    next /= static_cast<double>(P);
    Vector avg = next;
    close_phase(trace, cfg.lr, t, 1, t - 1, std::move(next), std::move(avg));
    w = trace.hat_w.back();
  }
  trace.pr_avg = polyak_ruppert(trace.phase_avg, trace.phase_lengths);
  return trace;
}

// P independent SGD runs averaged once at the end (P = 1 gives serial SGD).
Trace run_single_phase_path(const RunConfig& cfg, std::int64_t P) {
  const OracleStream oracle = cfg.oracle.reseeded(cfg.master_seed);
  const std::int64_t N = cfg.comm.steps_per_worker();
  Trace trace = summary_trace(cfg, P);
  std::vector<Vector> finals(static_cast<std::size_t>(P)), sums(static_cast<std::size_t>(P));
  for (std::int64_t p = 0; p < P; ++p) {
    Vector w = cfg.w0;
    Vector sum = Vector::Zero(w.size());
    Vector g(w.size());
    for (std::int64_t k = 1; k <= N; ++k) {
      oracle.draw_gradient(as_index(p), 1, as_index(k), w, g);
      w -= cfg.lr.rate_at(1, k, 0) * g;
      if (!w.allFinite()) throw DivergenceError("iterate became non-finite", 1, k, p);
      sum += w;
    }
    finals[static_cast<std::size_t>(p)] = std::move(w);
    sums[static_cast<std::size_t>(p)] = std::move(sum);
  }
  Vector hat = aggregate(finals);
  Vector avg = aggregate(sums) / static_cast<double>(N);
  close_phase(trace, cfg.lr, 1, N, 0, std::move(hat), std::move(avg));
  trace.pr_avg = polyak_ruppert(trace.phase_avg, trace.phase_lengths);
  return trace;
}

}  // namespace

Trace run_variant(const RunConfig& config, Variant variant) {
  RunConfig cfg = config;
  const std::int64_t steps = config.comm.steps_per_worker();
  switch (variant) {
    case Variant::local:
      return run(cfg);
    case Variant::mba:
      cfg.comm = CommSchedule::mba(steps);
      break;
    case Variant::osa:
      cfg.comm = CommSchedule::osa(steps);
      break;
    case Variant::serial:
      cfg.workers = 1;
      cfg.comm = CommSchedule::serial(steps);
      break;
  }
  cfg.validate();
  if (cfg.record != RecordLevel::summary || !cfg.pr_checkpoints.empty() || cfg.accumulate_noise) {
    return run(cfg);
  }
  if (variant == Variant::mba) return run_mba_path(cfg);
  return run_single_phase_path(cfg, cfg.workers);
}

void write_trace_csv(std::ostream& out, const Trace& trace, const Objective& objective) {
  const Vector& ws = objective.optimum();
  const Index d = ws.size();
  out.precision(17);
  out << "kind,t,k,p,dist_sq";
  for (Index j = 0; j < d; ++j) out << ",w_" << j;
  out << '\n';
  auto row = [&](const char* kind, std::int64_t t, std::int64_t k, std::int64_t p,
                 const Vector& w) {
    out << kind << ',' << t << ',' << k << ',';
    if (p >= 0) out << p;
    out << ',' << (w - ws).squaredNorm();
    for (Index j = 0; j < d; ++j) out << ',' << w[j];
    out << '\n';
  };
  for (std::size_t t = 0; t < trace.hat_w.size(); ++t) {
    row("hat", static_cast<std::int64_t>(t), 0, -1, trace.hat_w[t]);
  }
  for (std::size_t t = 0; t < trace.phase_avg.size(); ++t) {
    row("phase_avg", static_cast<std::int64_t>(t + 1), 0, -1, trace.phase_avg[t]);
  }
  for (std::size_t t = 0; t < trace.ghost.size(); ++t) {
    for (std::size_t k = 0; k < trace.ghost[t].size(); ++k) {
      row("ghost", static_cast<std::int64_t>(t + 1), static_cast<std::int64_t>(k), -1,
          trace.ghost[t][k]);
    }
  }
  for (std::size_t t = 0; t < trace.per_worker.size(); ++t) {
    for (std::size_t p = 0; p < trace.per_worker[t].size(); ++p) {
      for (std::size_t k = 0; k < trace.per_worker[t][p].size(); ++k) {
        row("worker", static_cast<std::int64_t>(t + 1), static_cast<std::int64_t>(k),
            static_cast<std::int64_t>(p), trace.per_worker[t][p][k]);
      }
    }
  }
  for (std::size_t c = 0; c < trace.pr_running.size(); ++c) {
    row("pr_running", 0, trace.pr_checkpoints[c], -1, trace.pr_running[c]);
  }
  if (trace.pr_avg.size() == d) row("pr_avg", trace.phases(), 0, -1, trace.pr_avg);
}

nlohmann::json run_config_json(const RunConfig& config) {
  json j;
  j["P"] = config.workers;
  j["comm"] = {{"kind", to_string(config.comm.kind())},
               {"steps_per_worker", config.comm.steps_per_worker()},
               {"phase_lengths", config.comm.phase_lengths()}};
  json lr = {{"kind", to_string(config.lr.kind())}};
  if (config.lr.kind() == RateKind::constant) {
    lr["eta"] = config.lr.eta();
  } else {
    lr["c_eta"] = config.lr.c_eta();
    lr["alpha"] = config.lr.alpha();
  }
  j["lr"] = lr;
  j["w0"] = vector_json(config.w0);
  j["master_seed"] = config.master_seed;
  j["oracle"] = {{"kind", to_string(config.oracle.kind())},
                 {"sigma_inf", config.oracle.sigma_inf()}};
  j["record"] = to_string(config.record);
  j["allow_guard_violation"] = config.allow_guard_violation;
  j["distance_estimator"] = to_string(config.distance);
  return j;
}

nlohmann::json trace_summary_json(const Trace& trace, const RunConfig& config) {
  const Objective& obj = config.objective();
  const Vector& ws = obj.optimum();
  json j;
  j["config"] = run_config_json(config);
  j["phases"] = trace.phases();
  j["steps_per_worker"] = trace.steps_per_worker();
  j["total_gradients"] = trace.total_gradients();
  j["phase_lengths"] = trace.phase_lengths;
  j["final_hat_dist_sq"] = (trace.hat_w.back() - ws).squaredNorm();
  j["pr_avg_dist_sq"] = (trace.pr_avg - ws).squaredNorm();
  const Vector maha = obj.hessian_at_opt() * (trace.pr_avg - ws);
  j["pr_avg_mahalanobis"] = maha.squaredNorm();
  j["optimum_tolerance"] = obj.optimum_tolerance();
  if (!trace.planned_caps.empty()) {
    j["planned_caps"] = trace.planned_caps;
    j["degenerate_caps"] = trace.degenerate_caps;
  }
  return j;
}

}  // namespace localsgd
