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

#include "localsgd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>

#include <boost/math/distributions/students_t.hpp>

#include "localsgd/errors.hpp"
#include "localsgd/philox.hpp"

namespace localsgd {
namespace {

using json = nlohmann::json;

constexpr std::size_t index_of(Selector s) { return static_cast<std::size_t>(s); }

bool wants(const std::vector<Selector>& selectors, Selector s) {
  return std::find(selectors.begin(), selectors.end(), s) != selectors.end();
}

void push_point(Channel& ch, const Vector& w, const Objective& obj) {
  const Vector e = w - obj.optimum();
  const double sq = e.squaredNorm();
  ch.sq.push_back(sq);
  ch.maha.push_back((obj.hessian_at_opt() * e).squaredNorm());
  ch.fourth.push_back(sq * sq);
  ch.loss.push_back(obj.value(w));
}

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  const double m = pairwise_mean(v);
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - m) * (v[i] - m);
  return pairwise_sum(dev.data(), dev.size()) / (n - 1.0);
}

double normal_cdf(double z) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

}  // namespace

double mahalanobis_error(const Vector& w, const Objective& objective) {
  return (objective.hessian_at_opt() * (w - objective.optimum())).squaredNorm();
}

double pairwise_sum(const double* values, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

double pairwise_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return pairwise_sum(values.data(), values.size()) / static_cast<double>(values.size());
}

const char* to_string(Selector s) {
  switch (s) {
    case Selector::hat: return "hat";
    case Selector::ghost: return "ghost";
    case Selector::local: return "local";
    case Selector::local_mean: return "local_mean";
    case Selector::phase_avg: return "phase_avg";
    case Selector::pr_running: return "pr_running";
    case Selector::pr_avg: return "pr_avg";
  }
  return "hat";
}

Selector selector_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kSelectorCount; ++i) {
    const auto s = static_cast<Selector>(i);
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown selector '" + name + "'");
}

std::uint64_t replica_seed(std::uint64_t ensemble_seed, std::int64_t i) {
  // mix64 is a bijection, so distinct offsets give distinct seeds.
  return rng::mix64(ensemble_seed + static_cast<std::uint64_t>(i));
}

ReplicaRecord extract_record(const Trace& trace, const Objective& obj,
                             const std::vector<Selector>& selectors, std::int64_t local_worker) {
  ReplicaRecord rec;
  rec.seed = trace.master_seed;
  rec.phase_lengths = trace.phase_lengths;
  rec.checkpoints = trace.pr_checkpoints;
  rec.planned_caps = trace.planned_caps;
  rec.degenerate_caps = trace.degenerate_caps;
  for (Selector s : selectors) {
    Channel& ch = rec.channels[index_of(s)];
    ch = Channel{};
    switch (s) {
      case Selector::hat:
        for (const auto& w : trace.hat_w) push_point(ch, w, obj);
        break;
      case Selector::ghost:
        if (trace.ghost.empty()) throw EnsembleError("ghost series needs ghost-level records");
        for (const auto& phase : trace.ghost) {
          for (const auto& w : phase) push_point(ch, w, obj);
        }
        break;
      case Selector::local:
        if (trace.per_worker.empty()) throw EnsembleError("local series needs full records");
        if (local_worker < 0 || local_worker >= trace.workers) {
          throw EnsembleError("local worker index out of range");
        }
        for (const auto& phase : trace.per_worker) {
          for (const auto& w : phase[static_cast<std::size_t>(local_worker)]) push_point(ch, w, obj);
        }
        break;
      case Selector::local_mean: {
        if (trace.per_worker.empty()) throw EnsembleError("local series needs full records");
        const double P = static_cast<double>(trace.workers);
        for (const auto& phase : trace.per_worker) {
          const std::size_t len = phase.front().size();
          for (std::size_t k = 0; k < len; ++k) {
            Channel tmp;
            for (const auto& path : phase) push_point(tmp, path[k], obj);
            ch.sq.push_back(pairwise_sum(tmp.sq.data(), tmp.sq.size()) / P);
            ch.maha.push_back(pairwise_sum(tmp.maha.data(), tmp.maha.size()) / P);
            ch.fourth.push_back(pairwise_sum(tmp.fourth.data(), tmp.fourth.size()) / P);
            ch.loss.push_back(pairwise_sum(tmp.loss.data(), tmp.loss.size()) / P);
          }
        }
        break;
      }
      case Selector::phase_avg:
        for (const auto& w : trace.phase_avg) push_point(ch, w, obj);
        break;
      case Selector::pr_running:
        for (const auto& w : trace.pr_running) push_point(ch, w, obj);
        break;
      case Selector::pr_avg:
        push_point(ch, trace.pr_avg, obj);
        break;
    }
  }
  return rec;
}

Ensemble run_ensemble(const RunConfig& base, const EnsembleOptions& options) {
  if (options.replicas < 1) throw UsageError("ensemble needs at least one replica");
  if (options.threads < 1) throw UsageError("thread count must be at least 1");
  RunConfig cfg = base;
  cfg.threads = 1;
  const bool need_full =
      wants(options.selectors, Selector::local) || wants(options.selectors, Selector::local_mean);
  const bool need_ghost = wants(options.selectors, Selector::ghost);
  if (need_full) {
    cfg.record = RecordLevel::full;
  } else if (need_ghost && cfg.record == RecordLevel::summary) {
    cfg.record = RecordLevel::ghost;
  }
  cfg.validate();

  Ensemble ens;
  ens.base = base;
  ens.options = options;
  const auto n = static_cast<std::size_t>(options.replicas);
  ens.records.resize(n);
  std::vector<std::exception_ptr> errors(n);
  const Objective& obj = cfg.objective();

  if (cfg.comm.adaptive() && cfg.distance == DistanceEstimator::replica_mean) {
    std::vector<Simulation> sims;
    sims.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      RunConfig c = cfg;
      c.master_seed = replica_seed(options.seed, static_cast<std::int64_t>(i));
      sims.emplace_back(std::move(c));
    }
    std::vector<double> dists(n);
    while (!sims.front().done()) {
      for (std::size_t i = 0; i < n; ++i) {
        dists[i] = (sims[i].current_hat() - obj.optimum()).norm();
      }
      const double shared = pairwise_mean(dists);
#pragma omp parallel for schedule(static) num_threads(options.threads) if (options.threads > 1)
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (errors[u]) continue;
        try {
          sims[u].advance(shared);
        } catch (...) {
          errors[u] = std::current_exception();
        }
      }
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
#pragma omp parallel for schedule(static) num_threads(options.threads) if (options.threads > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      const auto u = static_cast<std::size_t>(i);
      try {
        const Trace trace = sims[u].finish();
        ens.records[u] = extract_record(trace, obj, options.selectors, options.local_worker);
      } catch (...) {
        errors[u] = std::current_exception();
      }
    }
  } else {
#pragma omp parallel for schedule(dynamic) num_threads(options.threads) if (options.threads > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      const auto u = static_cast<std::size_t>(i);
      try {
        RunConfig c = cfg;
        c.master_seed = replica_seed(options.seed, i);
        const Trace trace = run(c);
        ens.records[u] = extract_record(trace, obj, options.selectors, options.local_worker);
      } catch (...) {
        errors[u] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return ens;
}

double jackknife_stderr(const std::vector<double>& values, const std::function<double(double)>& f) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double m = pairwise_mean(values);
  const double scale = 1.0 / static_cast<double>(n - 1);
  // Leave-one-out means as m + (m - x_i)/(n-1), centered on the first
  // replicate, so identical inputs give exactly zero.
  std::vector<double> theta(n);
  for (std::size_t i = 0; i < n; ++i) theta[i] = f(m + (m - values[i]) * scale);
  const double ref = theta[0];
  for (auto& v : theta) v -= ref;
  const double mean = pairwise_mean(theta);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = (theta[i] - mean) * (theta[i] - mean);
  const double nn = static_cast<double>(n);
  return std::sqrt((nn - 1.0) / nn * pairwise_sum(dev.data(), n));
}

MomentSeries estimate_moments(const Ensemble& ensemble, Selector selector) {
  if (ensemble.records.size() < 2) throw UsageError("moment estimates need at least 2 replicas");
  if (!wants(ensemble.options.selectors, selector)) {
    throw EnsembleError(std::string("ensemble did not record selector ") + to_string(selector));
  }
  const ReplicaRecord& first = ensemble.records.front();
  const std::size_t idx = index_of(selector);
  const std::size_t len = first.channels[idx].size();
  for (const auto& r : ensemble.records) {
    if (r.phase_lengths != first.phase_lengths || r.channels[idx].size() != len ||
        r.checkpoints != first.checkpoints) {
      throw EnsembleError("replica traces have mismatched shapes");
    }
  }
  const std::int64_t P = ensemble.base.workers;
  MomentSeries series;
  series.selector = selector;
  series.replicas = ensemble.replicas();

  // Index metadata.
  std::vector<MomentPoint> meta;
  const auto& lengths = first.phase_lengths;
  std::vector<std::int64_t> cum(lengths.size() + 1, 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) cum[i + 1] = cum[i] + lengths[i];
  switch (selector) {
    case Selector::hat:
      for (std::size_t t = 0; t <= lengths.size(); ++t) {
        meta.push_back({static_cast<std::int64_t>(t), 0, P * cum[t]});
      }
      break;
    case Selector::ghost:
    case Selector::local:
    case Selector::local_mean:
      for (std::size_t i = 0; i < lengths.size(); ++i) {
        for (std::int64_t k = 0; k <= lengths[i]; ++k) {
          meta.push_back({static_cast<std::int64_t>(i + 1), k, P * (cum[i] + k)});
        }
      }
      break;
    case Selector::phase_avg:
      for (std::size_t i = 0; i < lengths.size(); ++i) {
        meta.push_back({static_cast<std::int64_t>(i + 1), lengths[i], P * cum[i + 1]});
      }
      break;
    case Selector::pr_running:
      for (auto cp : first.checkpoints) meta.push_back({0, cp, P * cp});
      break;
    case Selector::pr_avg:
      meta.push_back({static_cast<std::int64_t>(lengths.size()), 0, P * cum.back()});
      break;
  }
  if (meta.size() != len) throw EnsembleError("channel length does not match the phase layout");

  const std::size_t n = ensemble.records.size();
  std::vector<double> col(n);
  auto gather = [&](const std::vector<double> Channel::*field, std::size_t j) {
    for (std::size_t r = 0; r < n; ++r) col[r] = (ensemble.records[r].channels[idx].*field)[j];
  };
  const auto identity = [](double x) { return x; };
  const auto root = [](double x) { return std::sqrt(std::max(0.0, x)); };
  for (std::size_t j = 0; j < len; ++j) {
    MomentPoint pt = meta[j];
    gather(&Channel::sq, j);
    pt.sq = pairwise_mean(col);
    pt.sq_se = jackknife_stderr(col, identity);
    gather(&Channel::maha, j);
    pt.maha = pairwise_mean(col);
    pt.maha_se = jackknife_stderr(col, identity);
    gather(&Channel::fourth, j);
    pt.fourth = pairwise_mean(col);
    pt.fourth_se = jackknife_stderr(col, identity);
    pt.root_fourth = std::sqrt(pt.fourth);
    pt.root_fourth_se = jackknife_stderr(col, root);
    gather(&Channel::loss, j);
    pt.loss = pairwise_mean(col);
    pt.loss_var = sample_variance(col);
    series.points.push_back(pt);
  }
  return series;
}

void MomentSeries::write_csv(std::ostream& out) const {
  out.precision(17);
  out << "selector,t,k,gradients,sq,sq_se,maha,maha_se,fourth,fourth_se,root_fourth,"
         "root_fourth_se,loss,loss_var\n";
  for (const auto& p : points) {
    out << to_string(selector) << ',' << p.t << ',' << p.k << ',' << p.gradients << ',' << p.sq
        << ',' << p.sq_se << ',' << p.maha << ',' << p.maha_se << ',' << p.fourth << ','
        << p.fourth_se << ',' << p.root_fourth << ',' << p.root_fourth_se << ',' << p.loss << ','
        << p.loss_var << '\n';
  }
}

nlohmann::json MomentSeries::to_json() const {
  json j;
  j["selector"] = to_string(selector);
  j["replicas"] = replicas;
  json pts = json::array();
  for (const auto& p : points) {
    pts.push_back({{"t", p.t}, {"k", p.k}, {"gradients", p.gradients}, {"sq", p.sq},
                   {"sq_se", p.sq_se}, {"maha", p.maha}, {"maha_se", p.maha_se},
                   {"fourth", p.fourth}, {"fourth_se", p.fourth_se},
                   {"root_fourth", p.root_fourth}, {"root_fourth_se", p.root_fourth_se},
                   {"loss", p.loss}, {"loss_var", p.loss_var}});
  }
  j["points"] = pts;
  return j;
}

namespace {

double decomposition_residual_impl(const Trace& trace, const Objective& obj,
                                   const LearningRateSchedule& lr, const OracleStream* oracle) {
  if (trace.record != RecordLevel::full || trace.per_worker.empty()) {
    throw UsageError("decomposition check needs a trace recorded at full level");
  }
  if (!oracle && !trace.has_noise_sums()) {
    throw UsageError("decomposition check needs xi accumulators in the trace");
  }
  const Index d = obj.dim();
  const Vector& ws = obj.optimum();
  const Matrix& H = obj.hessian_at_opt();
  const double P = static_cast<double>(trace.workers);
  const double T = static_cast<double>(trace.total_gradients());
  OracleStream replay;
  if (oracle) replay = oracle->reseeded(trace.master_seed);

  Vector lag = Vector::Zero(d), weighted = Vector::Zero(d);
  Vector delta = Vector::Zero(d), xi = Vector::Zero(d);
  Vector fg(d), g(d);
  std::int64_t cum = 0;
  double first_rate = 0.0, last_next_rate = 0.0;
  for (std::size_t i = 0; i < trace.per_worker.size(); ++i) {
    const std::int64_t t = static_cast<std::int64_t>(i) + 1;
    const std::int64_t N = trace.phase_lengths[i];
    std::vector<double> eta(static_cast<std::size_t>(N + 2));
    for (std::int64_t k = 1; k <= N + 1; ++k) eta[static_cast<std::size_t>(k)] = lr.rate_at(t, k, cum);
    if (i == 0) first_rate = eta[1];
    last_next_rate = eta[static_cast<std::size_t>(N + 1)];
    for (std::size_t p = 0; p < trace.per_worker[i].size(); ++p) {
      const auto& path = trace.per_worker[i][p];
      for (std::int64_t k = 1; k <= N; ++k) {
        const Vector& prev = path[static_cast<std::size_t>(k - 1)];
        const Vector e_prev = prev - ws;
        lag += e_prev;
        obj.gradient(prev, fg);
        delta += H * e_prev - fg;
        const double w8 = 1.0 / eta[static_cast<std::size_t>(k)] - 1.0 / eta[static_cast<std::size_t>(k + 1)];
        if (w8 != 0.0) weighted += w8 * (path[static_cast<std::size_t>(k)] - ws);
        if (oracle) {
          replay.draw_gradient(static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(t),
                               static_cast<std::uint32_t>(k), prev, g);
          xi += fg - g;
        }
      }
    }
    cum += N;
  }
  if (!oracle) {
    for (const auto& s : trace.xi_sums) xi += s;
  }
  const Vector lhs = H * lag / T;
  const Vector rhs = P * (trace.hat_w.front() - ws) / (T * first_rate) -
                     P * (trace.hat_w.back() - ws) / (T * last_next_rate) - weighted / T +
                     delta / T + xi / T;
  return (lhs - rhs).norm() / (1.0 + lhs.norm());
}

}  // namespace

double decomposition_residual(const Trace& trace, const Objective& objective,
                              const LearningRateSchedule& lr) {
  return decomposition_residual_impl(trace, objective, lr, nullptr);
}

double decomposition_residual(const Trace& trace, const Objective& objective,
                              const LearningRateSchedule& lr, const OracleStream& oracle) {
  return decomposition_residual_impl(trace, objective, lr, &oracle);
}

PhaseProfile within_phase_profile(const Ensemble& ensemble) {
  PhaseProfile prof;
  prof.local = estimate_moments(ensemble, Selector::local_mean);
  const MomentSeries hat = estimate_moments(ensemble, Selector::hat);
  const auto& lengths = ensemble.records.front().phase_lengths;
  const std::size_t n = ensemble.records.size();
  const std::size_t li = index_of(Selector::local_mean);
  const std::size_t hi = index_of(Selector::hat);
  std::size_t offset = 0;
  std::vector<double> pre(n), post(n), diff(n);
  const auto identity = [](double x) { return x; };
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const std::size_t end = offset + static_cast<std::size_t>(lengths[i]);
    for (std::size_t r = 0; r < n; ++r) {
      pre[r] = ensemble.records[r].channels[li].sq[end];
      post[r] = ensemble.records[r].channels[hi].sq[i + 1];
      diff[r] = pre[r] - post[r];
    }
    RoundProfile rp;
    rp.t = static_cast<std::int64_t>(i) + 1;
    rp.pre = pairwise_mean(pre);
    rp.pre_se = jackknife_stderr(pre, identity);
    rp.post = pairwise_mean(post);
    rp.post_se = jackknife_stderr(post, identity);
    rp.ratio = rp.pre == rp.post ? 1.0 : rp.post / rp.pre;
    const double dm = pairwise_mean(diff);
    const double dse = jackknife_stderr(diff, identity);
    if (dse > 0.0) {
      rp.z = dm / dse;
    } else {
      rp.z = dm > 0.0 ? std::numeric_limits<double>::infinity()
                      : (dm < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    }
    rp.confidence = normal_cdf(rp.z);
    prof.rounds.push_back(rp);
    offset = end + 1;
  }
  return prof;
}

void PhaseProfile::write_csv(std::ostream& out) const {
  out.precision(17);
  out << "t,pre,pre_se,post,post_se,ratio,z,confidence\n";
  for (const auto& r : rounds) {
    out << r.t << ',' << r.pre << ',' << r.pre_se << ',' << r.post << ',' << r.post_se << ','
        << r.ratio << ',' << r.z << ',' << r.confidence << '\n';
  }
}

nlohmann::json PhaseProfile::to_json() const {
  json rs = json::array();
  for (const auto& r : rounds) {
    rs.push_back({{"t", r.t}, {"pre", r.pre}, {"pre_se", r.pre_se}, {"post", r.post},
                  {"post_se", r.post_se}, {"ratio", r.ratio}, {"z", r.z},
                  {"confidence", r.confidence}});
  }
  return {{"rounds", rs}, {"local", local.to_json()}};
}

SlopeFit slope_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw FitError("x and y sizes differ");
  const std::size_t n = x.size();
  if (n < 10) throw FitError("slope fit needs at least 10 points");
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw FitError("slope fit needs positive values");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = pairwise_mean(lx), my = pairwise_mean(ly);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw FitError("slope fit needs distinct x values");
  SlopeFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - fit.intercept - fit.slope * lx[i];
    rss += r * r;
  }
  const double dof = static_cast<double>(n) - 2.0;
  fit.stderr_slope = std::sqrt(rss / dof / sxx);
  const boost::math::students_t dist(dof);
  const double q = boost::math::quantile(dist, 0.975);
  fit.ci_low = fit.slope - q * fit.stderr_slope;
  fit.ci_high = fit.slope + q * fit.stderr_slope;
  return fit;
}

SlopeFit slope_fit(const MomentSeries& series, std::int64_t lo, std::int64_t hi,
                   MomentField field) {
  std::vector<double> x, y;
  for (const auto& p : series.points) {
    if (p.gradients < lo || p.gradients > hi) continue;
    x.push_back(static_cast<double>(p.gradients));
    switch (field) {
      case MomentField::sq: y.push_back(p.sq); break;
      case MomentField::maha: y.push_back(p.maha); break;
      case MomentField::fourth: y.push_back(p.fourth); break;
      case MomentField::root_fourth: y.push_back(p.root_fourth); break;
      case MomentField::loss: y.push_back(p.loss); break;
    }
  }
  return slope_fit(x, y);
}

}  // namespace localsgd
