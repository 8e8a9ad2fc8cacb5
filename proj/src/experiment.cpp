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

#include "localsgd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "localsgd/errors.hpp"
#include "localsgd/libsvm.hpp"
#include "localsgd/model.hpp"

namespace localsgd {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Strict reader: every key must be known, missing keys keep defaults.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names = {"decomposition", "prop3_dominance",
                                                 "periodic_drop"};
  return names;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::int64_t> log_checkpoints(std::int64_t steps, int count) {
  std::vector<std::int64_t> out;
  if (count <= 0) return out;
  if (count == 1) return {steps};
  for (int i = 0; i < count; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(count - 1);
    out.push_back(static_cast<std::int64_t>(std::llround(std::pow(static_cast<double>(steps), f))));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LearningRateSchedule make_rate(const AlgorithmSpec& a, double L) {
  if (a.rate == "constant") return LearningRateSchedule::constant(a.eta);
  if (a.rate == "online") return LearningRateSchedule::online(a.c_eta, a.alpha);
  if (a.rate == "finite_horizon") {
    if (a.allow_guard_violation) {
      return LearningRateSchedule::constant(a.c_eta /
                                            std::sqrt(static_cast<double>(a.steps_per_worker)));
    }
    return LearningRateSchedule::finite_horizon(a.c_eta, a.steps_per_worker, L);
  }
  throw ConfigError("unknown rate kind '" + a.rate + "'");
}

std::vector<Selector> effective_selectors(const ExperimentSpec& spec) {
  std::vector<Selector> out;
  auto add = [&out](Selector s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  for (const auto& name : spec.metrics.selectors) add(selector_from_string(name));
  if (spec.metrics.profile) {
    add(Selector::hat);
    add(Selector::local_mean);
  }
  if (contains(spec.metrics.checks, "prop3_dominance")) add(Selector::hat);
  if (spec.metrics.pr_checkpoints > 0) add(Selector::pr_running);
  return out;
}

}  // namespace

json ExperimentSpec::to_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  json p;
  p["kind"] = problem.kind;
  p["spectrum"] = problem.spectrum;
  p["optimum"] = problem.optimum;
  p["rotation_seed"] = problem.rotation_seed ? json(*problem.rotation_seed) : json(nullptr);
  p["rows"] = problem.rows;
  p["w_true"] = problem.w_true;
  p["label_noise_sd"] = problem.label_noise_sd;
  p["data_seed"] = problem.data_seed;
  p["path"] = problem.path;
  p["task"] = problem.task;
  p["normalization"] = problem.normalization;
  p["lambda_reg"] = problem.lambda_reg;
  p["oracle"] = problem.oracle;
  p["sigma_inf"] = problem.sigma_inf;
  j["problem"] = p;
  json a;
  a["P"] = algorithm.P;
  a["steps_per_worker"] = algorithm.steps_per_worker;
  a["rate"] = algorithm.rate;
  a["eta"] = algorithm.eta;
  a["c_eta"] = algorithm.c_eta;
  a["alpha"] = algorithm.alpha;
  a["w0"] = algorithm.w0;
  a["w0_offset"] = algorithm.w0_offset;
  json arms = json::array();
  for (const auto& arm : algorithm.arms) {
    arms.push_back({{"label", arm.label}, {"comm", arm.comm}, {"N", arm.N}});
  }
  a["arms"] = arms;
  a["allow_guard_violation"] = algorithm.allow_guard_violation;
  a["distance_estimator"] = algorithm.distance_estimator;
  j["algorithm"] = a;
  json m;
  m["replicas"] = metrics.replicas;
  m["selectors"] = metrics.selectors;
  m["profile"] = metrics.profile;
  m["checks"] = metrics.checks;
  m["sigma_draws"] = metrics.sigma_draws;
  m["pr_checkpoints"] = metrics.pr_checkpoints;
  m["local_worker"] = metrics.local_worker;
  m["kappa_threshold"] = metrics.kappa_threshold;
  j["metrics"] = m;
  j["output"] = {{"directory", output.directory}, {"trace_csv", output.trace_csv}};
  return j;
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
  ExperimentSpec s;
  Reader top(j, "spec");
  top.get("name", s.name);
  top.get("seed", s.seed);
  if (const json* p = top.child("problem")) {
    Reader r(*p, "problem");
    r.get("kind", s.problem.kind);
    r.get("spectrum", s.problem.spectrum);
    r.get("optimum", s.problem.optimum);
    if (const json* rs = r.child("rotation_seed"); rs && !rs->is_null()) {
      s.problem.rotation_seed = rs->get<std::uint64_t>();
    }
    r.get("rows", s.problem.rows);
    r.get("w_true", s.problem.w_true);
    r.get("label_noise_sd", s.problem.label_noise_sd);
    r.get("data_seed", s.problem.data_seed);
    r.get("path", s.problem.path);
    r.get("task", s.problem.task);
    r.get("normalization", s.problem.normalization);
    r.get("lambda_reg", s.problem.lambda_reg);
    r.get("oracle", s.problem.oracle);
    r.get("sigma_inf", s.problem.sigma_inf);
    r.finish();
  }
  if (const json* a = top.child("algorithm")) {
    Reader r(*a, "algorithm");
    r.get("P", s.algorithm.P);
    r.get("steps_per_worker", s.algorithm.steps_per_worker);
    r.get("rate", s.algorithm.rate);
    r.get("eta", s.algorithm.eta);
    r.get("c_eta", s.algorithm.c_eta);
    r.get("alpha", s.algorithm.alpha);
    r.get("w0", s.algorithm.w0);
    r.get("w0_offset", s.algorithm.w0_offset);
    if (const json* arms = r.child("arms")) {
      if (!arms->is_array()) throw ConfigError("algorithm.arms: expected an array");
      s.algorithm.arms.clear();
      for (const auto& item : *arms) {
        ArmSpec arm;
        Reader ar(item, "algorithm.arms[]");
        ar.get("label", arm.label);
        ar.get("comm", arm.comm);
        ar.get("N", arm.N);
        ar.finish();
        s.algorithm.arms.push_back(arm);
      }
    }
    r.get("allow_guard_violation", s.algorithm.allow_guard_violation);
    r.get("distance_estimator", s.algorithm.distance_estimator);
    r.finish();
  }
  if (const json* m = top.child("metrics")) {
    Reader r(*m, "metrics");
    r.get("replicas", s.metrics.replicas);
    r.get("selectors", s.metrics.selectors);
    r.get("profile", s.metrics.profile);
    r.get("checks", s.metrics.checks);
    r.get("sigma_draws", s.metrics.sigma_draws);
    r.get("pr_checkpoints", s.metrics.pr_checkpoints);
    r.get("local_worker", s.metrics.local_worker);
    r.get("kappa_threshold", s.metrics.kappa_threshold);
    r.finish();
  }
  if (const json* o = top.child("output")) {
    Reader r(*o, "output");
    r.get("directory", s.output.directory);
    r.get("trace_csv", s.output.trace_csv);
    r.finish();
  }
  top.finish();
  return s;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return ExperimentSpec::from_json(j);
}

std::vector<std::string> preset_names() {
  return {"sweep-N", "start-at-optimum", "periodic-variance", "online-rate", "logistic-local"};
}

ExperimentSpec preset(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.problem.spectrum = {1.0, 0.5, 0.25, 0.1};
  s.algorithm.P = 8;
  s.algorithm.steps_per_worker = 512;
  s.algorithm.eta = 0.05;
  if (name == "sweep-N") {
    s.algorithm.arms = {{"N1", "mba", 1}, {"N8", "local", 8}, {"N64", "local", 64}, {"osa", "osa", 512}};
    s.metrics.selectors = {"hat", "phase_avg", "pr_avg"};
    s.metrics.checks = {"prop3_dominance"};
  } else if (name == "start-at-optimum") {
    s.algorithm.w0 = "optimum";
    s.algorithm.arms = {{"mba", "mba", 1}, {"N8", "local", 8}, {"osa", "osa", 512}};
    s.metrics.selectors = {"hat", "phase_avg", "pr_avg"};
    s.metrics.checks = {"prop3_dominance"};
  } else if (name == "periodic-variance") {
    s.problem.spectrum = {1.0};
    s.algorithm.w0 = "optimum";
    s.algorithm.steps_per_worker = 256;
    s.algorithm.arms = {{"N32", "local", 32}};
    s.metrics.selectors = {"hat", "ghost", "local_mean"};
    s.metrics.profile = true;
    s.metrics.checks = {"periodic_drop", "decomposition"};
  } else if (name == "online-rate") {
    s.problem.spectrum = {1.0, 0.5};
    s.algorithm.P = 1;
    s.algorithm.steps_per_worker = 4096;
    s.algorithm.rate = "online";
    s.algorithm.c_eta = 0.5;
    s.algorithm.alpha = 2.0 / 3.0;
    s.algorithm.w0 = "optimum";
    s.algorithm.arms = {{"serial", "serial", 4096}};
    s.metrics.selectors = {"pr_running", "pr_avg"};
    s.metrics.pr_checkpoints = 24;
    s.metrics.checks = {"decomposition"};
  } else if (name == "logistic-local") {
    s.problem.kind = "logistic";
    s.problem.spectrum = {1.0, 0.5, 0.25};
    s.problem.rows = 500;
    s.problem.w_true = {1.0, -1.0, 0.5};
    s.problem.lambda_reg = 0.1;
    s.problem.oracle = "sampling";
    s.algorithm.P = 4;
    s.algorithm.steps_per_worker = 256;
    s.algorithm.eta = 0.1;
    s.algorithm.arms = {{"mba", "mba", 1}, {"N16", "local", 16}, {"adaptive", "adaptive_general", 1}};
    s.metrics.selectors = {"hat", "pr_avg"};
    s.algorithm.distance_estimator = "replica_mean";
    s.metrics.replicas = 100;
    s.metrics.checks = {"decomposition"};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return s;
}

BuiltProblem build_problem(const ExperimentSpec& spec) {
  const ProblemSpec& p = spec.problem;
  BuiltProblem out;
  std::shared_ptr<const Objective> obj;
  if (p.kind == "quadratic") {
    const Vector spectrum = to_vector(p.spectrum);
    const Vector optimum =
        p.optimum.empty() ? Vector::Zero(spectrum.size()) : to_vector(p.optimum);
    obj = std::make_shared<const Objective>(make_quadratic(spectrum, optimum, p.rotation_seed));
  } else if (p.kind == "lsr" || p.kind == "logistic" || p.kind == "file") {
    std::shared_ptr<const Dataset> data;
    if (p.kind == "file") {
      if (p.path.empty()) throw ConfigError("problem.path is required for file problems");
      const Task task = p.task == "regression" ? Task::regression : Task::classification;
      if (p.task != "regression" && p.task != "classification") {
        throw ConfigError("problem.task must be regression or classification");
      }
      FeatureNormalization norm = FeatureNormalization::none;
      if (p.normalization == "unit_norm") {
        norm = FeatureNormalization::unit_norm;
      } else if (p.normalization != "none") {
        throw ConfigError("problem.normalization must be none or unit_norm");
      }
      data = std::make_shared<const Dataset>(normalize_features(read_libsvm_file(p.path, task), norm));
    } else {
      const Vector spectrum = to_vector(p.spectrum);
      const Matrix sigma = spectrum.asDiagonal();
      const Vector w_true =
          p.w_true.empty() ? Vector::Ones(spectrum.size()) : to_vector(p.w_true);
      data = std::make_shared<const Dataset>(
          p.kind == "lsr"
              ? make_lsr_dataset(p.rows, sigma, w_true, p.label_noise_sd, p.data_seed)
              : make_logistic_dataset(p.rows, sigma, w_true, p.data_seed));
    }
    obj = std::make_shared<const Objective>(make_empirical_objective(data, p.lambda_reg));
  } else {
    throw ConfigError("unknown problem kind '" + p.kind + "'");
  }
  out.objective = obj;
  if (p.oracle == "additive") {
    out.oracle = OracleStream::additive(obj, p.sigma_inf, spec.seed);
    out.exact_sigma = true;
    out.sigma_const = std::pow(out.oracle.exact_sigma4(), 0.25);
  } else if (p.oracle == "sampling") {
    out.oracle = OracleStream::sampling(obj, spec.seed);
  } else {
    throw ConfigError("problem.oracle must be additive or sampling");
  }
  out.sigma = estimate_sigma_at_opt(out.oracle, obj->optimum(), spec.metrics.sigma_draws);
  if (!out.exact_sigma) out.sigma_const = std::pow(out.sigma.sigma4, 0.25);

  const Vector& ws = obj->optimum();
  const std::string& w0 = spec.algorithm.w0;
  if (w0 == "optimum") {
    out.w0 = ws;
  } else if (w0 == "zero") {
    out.w0 = Vector::Zero(ws.size());
  } else if (w0 == "offset") {
    out.w0 = ws + Vector::Constant(ws.size(), spec.algorithm.w0_offset);
  } else {
    throw ConfigError("algorithm.w0 must be offset, optimum or zero");
  }
  return out;
}

BuiltProblem validate_spec(const ExperimentSpec& spec) {
  const AlgorithmSpec& a = spec.algorithm;
  if (spec.name.empty()) throw ConfigError("name must not be empty");
  if (a.P < 1) throw ConfigError("algorithm.P must be at least 1");
  if (a.steps_per_worker < 1) throw ConfigError("algorithm.steps_per_worker must be at least 1");
  if (a.arms.empty()) throw ConfigError("algorithm.arms must not be empty");
  std::set<std::string> labels;
  for (const auto& arm : a.arms) {
    if (arm.label.empty() || arm.label.find_first_of("/\\") != std::string::npos ||
        arm.label == "." || arm.label == "..") {
      throw ConfigError("arm labels must be plain non-empty names");
    }
    if (!labels.insert(arm.label).second) throw ConfigError("duplicate arm label '" + arm.label + "'");
    static const std::vector<std::string> comms = {"local", "mba", "osa", "serial",
                                                   "adaptive_quadratic", "adaptive_general"};
    if (!contains(comms, arm.comm)) throw ConfigError("unknown arm comm '" + arm.comm + "'");
    if (arm.comm.rfind("adaptive", 0) == 0 && a.distance_estimator != "replica_mean") {
      throw ConfigError("arm '" + arm.label +
                        "': adaptive arms need distance_estimator replica_mean so that "
                        "replicas share phase lengths");
    }
    if (arm.comm == "local" && (arm.N < 1 || arm.N > a.steps_per_worker)) {
      throw ConfigError("arm '" + arm.label + "': N must lie in [1, steps_per_worker]");
    }
  }
  if (a.distance_estimator != "plug_in" && a.distance_estimator != "replica_mean") {
    throw ConfigError("algorithm.distance_estimator must be plug_in or replica_mean");
  }
  const MetricsSpec& m = spec.metrics;
  if (m.replicas < 2) throw ConfigError("metrics.replicas must be at least 2");
  if (m.sigma_draws < 100) throw ConfigError("metrics.sigma_draws must be at least 100");
  for (const auto& s : m.selectors) selector_from_string(s);
  for (const auto& c : m.checks) {
    if (!contains(known_checks(), c)) throw ConfigError("unknown check '" + c + "'");
  }
  if (m.local_worker < 0 || m.local_worker >= a.P) {
    throw ConfigError("metrics.local_worker must lie in [0, P)");
  }
  BuiltProblem problem = build_problem(spec);
  // Building each arm's config runs the guard and schedule checks.
  for (const auto& arm : a.arms) arm_config(spec, arm, problem).validate();
  return problem;
}

RunConfig arm_config(const ExperimentSpec& spec, const ArmSpec& arm, const BuiltProblem& problem) {
  const AlgorithmSpec& a = spec.algorithm;
  RunConfig cfg;
  cfg.workers = a.P;
  const std::int64_t steps = a.steps_per_worker;
  if (arm.comm == "local") {
    cfg.comm = CommSchedule::budget(arm.N, steps);
  } else if (arm.comm == "mba") {
    cfg.comm = CommSchedule::mba(steps);
  } else if (arm.comm == "osa") {
    cfg.comm = CommSchedule::osa(steps);
  } else if (arm.comm == "serial") {
    cfg.comm = CommSchedule::serial(steps);
    cfg.workers = 1;
  } else if (arm.comm == "adaptive_quadratic") {
    cfg.comm = CommSchedule::adaptive_quadratic(steps);
  } else if (arm.comm == "adaptive_general") {
    cfg.comm = CommSchedule::adaptive_general(steps);
  } else {
    throw ConfigError("unknown arm comm '" + arm.comm + "'");
  }
  cfg.lr = make_rate(a, problem.objective->L());
  cfg.w0 = problem.w0;
  cfg.master_seed = spec.seed;
  cfg.oracle = problem.oracle;
  cfg.allow_guard_violation = a.allow_guard_violation;
  cfg.pr_checkpoints = log_checkpoints(steps, spec.metrics.pr_checkpoints);
  cfg.distance = a.distance_estimator == "replica_mean" ? DistanceEstimator::replica_mean
                                                        : DistanceEstimator::plug_in;
  return cfg;
}

BoundInputs bound_inputs(const ExperimentSpec& spec, const BuiltProblem& problem, std::int64_t P,
                         const std::vector<std::int64_t>& phase_lengths) {
  const Objective& obj = *problem.objective;
  BoundInputs in;
  in.mu = obj.mu();
  in.L = obj.L();
  in.M = obj.M();
  in.sigma = problem.sigma_const;
  in.sigma_inf = spec.problem.oracle == "additive" ? spec.problem.sigma_inf : 0.0;
  in.d0 = (problem.w0 - obj.optimum()).squaredNorm();
  in.P = P;
  in.phase_lengths = phase_lengths;
  const AlgorithmSpec& a = spec.algorithm;
  if (a.rate == "online") {
    in.c_eta = a.c_eta;
    in.alpha = a.alpha;
  } else {
    in.eta = a.rate == "constant" ? a.eta
                                  : a.c_eta / std::sqrt(static_cast<double>(a.steps_per_worker));
  }
  return in;
}

namespace {

json check_entry(const std::string& arm, const std::string& name, bool passed, json detail) {
  return {{"arm", arm}, {"check", name}, {"passed", passed}, {"detail", std::move(detail)}};
}

}  // namespace

RunOutcome run_experiment(const ExperimentSpec& spec, int threads) {
  const BuiltProblem problem = validate_spec(spec);
  const Objective& obj = *problem.objective;
  RunOutcome outcome;
  outcome.directory =
      spec.output.directory.empty() ? default_output_root() / spec.name : fs::path(spec.output.directory);
  fs::create_directories(outcome.directory);
  const fs::path& dir = outcome.directory;

  // The echo omits the output location so artifacts do not depend on it.
  ExperimentSpec echo = spec;
  echo.output.directory.clear();
  write_json(dir / "config.json", echo.to_json());
  json sigma = {{"oracle", spec.problem.oracle},
                {"draws", problem.sigma.draws},
                {"sigma2_hat", problem.sigma.sigma2},
                {"sigma2_stderr", problem.sigma.sigma2_stderr},
                {"sigma4_hat", problem.sigma.sigma4},
                {"sigma4_stderr", problem.sigma.sigma4_stderr},
                {"sigma_const", problem.sigma_const},
                {"sigma_exact", problem.exact_sigma},
                {"mu", obj.mu()},
                {"L", obj.L()},
                {"M", obj.M()},
                {"optimum_tolerance", obj.optimum_tolerance()}};
  write_json(dir / "sigma.json", sigma);

  const std::vector<Selector> selectors = effective_selectors(spec);
  json checks = json::array();
  json arm_list = json::array();
  bool all_passed = true;

  for (const auto& arm : spec.algorithm.arms) {
    const RunConfig cfg = arm_config(spec, arm, problem);
    const fs::path arm_dir = dir / arm.label;
    fs::create_directories(arm_dir);
    arm_list.push_back(arm.label);

    EnsembleOptions opts;
    opts.replicas = spec.metrics.replicas;
    opts.seed = spec.seed;
    opts.threads = threads;
    opts.selectors = selectors;
    opts.local_worker = std::min<std::int64_t>(spec.metrics.local_worker, cfg.workers - 1);
    const Ensemble ens = run_ensemble(cfg, opts);

    // Representative single run (replica 0) for the summary.
    RunConfig single = cfg;
    single.master_seed = replica_seed(spec.seed, 0);
    const bool lockstep = cfg.comm.adaptive() && cfg.distance == DistanceEstimator::replica_mean;
    if (spec.output.trace_csv) single.record = RecordLevel::ghost;
    const Trace trace = run(single);
    json summary = trace_summary_json(trace, single);
    summary["replicas"] = ens.replicas();
    summary["ensemble_phase_lengths"] = ens.records.front().phase_lengths;
    if (lockstep) summary["note"] = "summary run uses the plug-in distance estimate";
    write_json(arm_dir / "summary.json", summary);
    if (spec.output.trace_csv) {
      std::ostringstream csv;
      write_trace_csv(csv, trace, obj);
      write_text(arm_dir / "trace.csv", csv.str());
    }

    std::map<Selector, MomentSeries> series;
    for (Selector s : selectors) {
      MomentSeries ms = estimate_moments(ens, s);
      std::ostringstream csv;
      ms.write_csv(csv);
      write_text(arm_dir / (std::string("moments_") + to_string(s) + ".csv"), csv.str());
      write_json(arm_dir / (std::string("moments_") + to_string(s) + ".json"), ms.to_json());
      series.emplace(s, std::move(ms));
    }

    const auto& lengths = ens.records.front().phase_lengths;
    const bool uniform = std::all_of(ens.records.begin(), ens.records.end(),
                                     [&](const ReplicaRecord& r) { return r.phase_lengths == lengths; });
    const BoundInputs in = bound_inputs(spec, problem, cfg.workers, lengths);
    ReportOptions ropts;
    ropts.kappa_threshold = spec.metrics.kappa_threshold;
    if (series.count(Selector::ghost) && in.M > 0.0 && !in.online()) {
      std::vector<std::vector<double>> dists;
      const auto& pts = series.at(Selector::ghost).points;
      std::size_t off = 0;
      for (auto N : lengths) {
        std::vector<double> phase;
        for (std::int64_t k = 0; k < N; ++k) phase.push_back(std::sqrt(pts[off + static_cast<std::size_t>(k)].sq));
        dists.push_back(std::move(phase));
        off += static_cast<std::size_t>(N) + 1;
      }
      ropts.ghost_dists = std::move(dists);
    }
    json bounds;
    try {
      BoundReport report = evaluate_bounds(in, ropts);
      if (!uniform) report.notes.push_back("replica phase lengths differ; bounds use replica 0");
      if (spec.algorithm.allow_guard_violation) report.notes.push_back("step-size guard overridden");
      bounds = report.to_json();
    } catch (const DomainError& e) {
      bounds = {{"error", e.what()}};
    }
    write_json(arm_dir / "bounds.json", bounds);

    // Overlay of the measured post-communication moments and their bounds.
    const bool constant_rate = !in.online() && in.eta * in.mu < 1.0;
    if (series.count(Selector::hat) && uniform) {
      std::ostringstream csv;
      csv.precision(17);
      csv << "t,gradients,hat_sq,hat_sq_se,hat_maha,prop3_hat,prop1_dist\n";
      const auto& pts = series.at(Selector::hat).points;
      for (std::size_t t = 0; t < pts.size(); ++t) {
        csv << pts[t].t << ',' << pts[t].gradients << ',' << pts[t].sq << ',' << pts[t].sq_se << ','
            << pts[t].maha << ',';
        if (constant_rate) {
          csv << prop3_bounds(static_cast<std::int64_t>(t) + 1, 0, in).hat << ','
              << prop1_dist_bound(in.cumulative(static_cast<std::int64_t>(t)), in);
        } else {
          csv << ',';
        }
        csv << '\n';
      }
      write_text(arm_dir / "overlay.csv", csv.str());
    }

    PhaseProfile profile;
    const bool have_profile = spec.metrics.profile && uniform;
    if (have_profile) {
      profile = within_phase_profile(ens);
      std::ostringstream csv;
      profile.write_csv(csv);
      write_text(arm_dir / "profile.csv", csv.str());
    }

    for (const auto& name : spec.metrics.checks) {
      json entry;
      if (name == "decomposition") {
        RunConfig full = cfg;
        full.record = RecordLevel::full;
        full.master_seed = replica_seed(spec.seed, 0);
        const Trace ft = run(full);
        const double acc = decomposition_residual(ft, obj, full.lr);
        const double rep = decomposition_residual(ft, obj, full.lr, full.oracle);
        const bool ok = acc <= 1e-8 && rep <= 1e-8;
        entry = check_entry(arm.label, name, ok, {{"residual", acc}, {"replayed_residual", rep}, {"tolerance", 1e-8}});
      } else if (name == "prop3_dominance") {
        const bool applicable = constant_rate && spec.problem.oracle == "additive" &&
                                obj.kind() == ObjectiveKind::quadratic && uniform;
        if (!applicable) {
          entry = check_entry(arm.label, name, true, {{"skipped", "needs a quadratic, additive noise and a constant rate"}});
        } else {
          bool ok = true;
          double worst = -1e300;
          const auto& pts = series.at(Selector::hat).points;
          for (std::size_t t = 0; t < pts.size(); ++t) {
            const double bound = prop3_bounds(static_cast<std::int64_t>(t) + 1, 0, in).hat;
            const double slack = pts[t].sq - (bound + 4.0 * pts[t].sq_se);
            worst = std::max(worst, slack);
            ok = ok && slack <= 0.0;
          }
          entry = check_entry(arm.label, name, ok, {{"worst_excess", worst}});
        }
      } else if (name == "periodic_drop") {
        if (!have_profile) {
          entry = check_entry(arm.label, name, false, {{"error", "needs metrics.profile"}});
        } else {
          bool ok = true;
          double min_conf = 1.0;
          for (const auto& r : profile.rounds) {
            min_conf = std::min(min_conf, r.confidence);
            ok = ok && r.post < r.pre && r.confidence >= 0.95;
          }
          entry = check_entry(arm.label, name, ok, {{"min_confidence", min_conf}, {"rounds", profile.rounds.size()}});
        }
      }
      all_passed = all_passed && entry.at("passed").get<bool>();
      checks.push_back(entry);
    }
  }

  write_json(dir / "arms.json", arm_list);
  outcome.checks = {{"passed", all_passed},
                    {"guard_override", spec.algorithm.allow_guard_violation},
                    {"checks", checks}};
  write_json(dir / "checks.json", outcome.checks);
  outcome.checks_passed = all_passed;
  return outcome;
}

namespace {

struct HatColumn {
  std::string name;
  std::map<std::int64_t, std::pair<std::string, std::string>> values;  // gradients -> (sq, se)
  std::int64_t last = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

HatColumn read_hat(const fs::path& file, std::string name) {
  std::ifstream in(file);
  if (!in) throw ComparisonError("missing series '" + file.string() + "'");
  HatColumn col;
  col.name = std::move(name);
  std::string line;
  if (!std::getline(in, line)) throw ComparisonError("empty series '" + file.string() + "'");
  const auto header = split_csv(line);
  const auto find = [&](const std::string& key) {
    const auto it = std::find(header.begin(), header.end(), key);
    if (it == header.end()) throw ComparisonError("series '" + file.string() + "' lacks column " + key);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t gi = find("gradients"), si = find("sq"), ei = find("sq_se");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ComparisonError("ragged row in '" + file.string() + "'");
    const std::int64_t g = std::stoll(cells[gi]);
    col.values[g] = {cells[si], cells[ei]};
    col.last = std::max(col.last, g);
  }
  if (col.values.empty()) throw ComparisonError("empty series '" + file.string() + "'");
  return col;
}

}  // namespace

void compare_report(const std::vector<fs::path>& dirs, std::ostream& out) {
  if (dirs.empty()) throw ComparisonError("nothing to compare");
  std::vector<HatColumn> cols;
  for (const auto& d : dirs) {
    std::ifstream in(d / "arms.json");
    if (!in) throw ComparisonError("'" + d.string() + "' is not an artifact directory");
    const json arms = json::parse(in);
    const std::string base = d.filename().empty() ? d.parent_path().filename().string() : d.filename().string();
    for (const auto& label : arms) {
      const std::string l = label.get<std::string>();
      cols.push_back(read_hat(d / l / "moments_hat.csv", base + "/" + l));
    }
  }
  for (const auto& c : cols) {
    if (c.last != cols.front().last) {
      throw ComparisonError("series '" + c.name + "' ends at " + std::to_string(c.last) +
                            " gradients, expected " + std::to_string(cols.front().last));
    }
  }
  std::set<std::int64_t> grid;
  for (const auto& c : cols) {
    for (const auto& kv : c.values) grid.insert(kv.first);
  }
  out << "gradients";
  for (const auto& c : cols) out << ',' << c.name << ":sq," << c.name << ":sq_se";
  out << '\n';
  for (std::int64_t g : grid) {
    out << g;
    for (const auto& c : cols) {
      const auto it = c.values.find(g);
      if (it == c.values.end()) {
        out << ",,";
      } else {
        out << ',' << it->second.first << ',' << it->second.second;
      }
    }
    out << '\n';
  }
}

fs::path default_output_root() {
  const char* env = std::getenv("LOCALSGD_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("artifacts");
}

}  // namespace localsgd
