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

// Command-line front end: run, compare, bounds, validate, ingest.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <thread>
#include <sstream>

#include "localsgd/engine.hpp"
#include "localsgd/errors.hpp"
#include "localsgd/experiment.hpp"
#include "localsgd/libsvm.hpp"

namespace {

using namespace localsgd;
using json = nlohmann::json;

constexpr int kExitChecksFailed = 3;
constexpr int kExitConfig = 2;
constexpr int kExitFailure = 1;

// Spec source plus per-field overrides shared by run, bounds and validate.
struct SpecFlags {
  std::string preset;
  std::string config;
  std::optional<std::string> name;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::int64_t> P;
  std::optional<std::int64_t> steps;
  std::optional<std::string> rate;
  std::optional<double> eta;
  std::optional<double> c_eta;
  std::optional<double> alpha;
  std::optional<std::string> w0;
  std::optional<double> w0_offset;
  std::optional<double> sigma_inf;
  std::optional<double> lambda_reg;
  std::optional<std::string> oracle;
  std::optional<std::string> data;
  std::optional<std::string> task;
  std::vector<std::string> arms;
  std::optional<int> replicas;
  std::vector<std::string> selectors;
  std::vector<std::string> checks;
  bool allow_guard_violation = false;
  bool trace_csv = false;
};

void add_spec_flags(CLI::App* app, SpecFlags& f) {
  auto* src = app->add_option("--preset", f.preset, "Named preset");
  app->add_option("--config", f.config, "JSON experiment spec")->excludes(src);
  app->add_option("--name", f.name, "Experiment name");
  app->add_option("--seed", f.seed, "Master seed");
  app->add_option("--out", f.out, "Artifact directory");
  app->add_option("--workers,-P", f.P, "Worker count P");
  app->add_option("--steps", f.steps, "Local steps per worker");
  app->add_option("--rate", f.rate, "constant | online | finite_horizon");
  app->add_option("--eta", f.eta, "Constant step size");
  app->add_option("--c-eta", f.c_eta, "Rate scale for online/finite_horizon");
  app->add_option("--alpha", f.alpha, "Online decay exponent");
  app->add_option("--w0", f.w0, "offset | optimum | zero");
  app->add_option("--w0-offset", f.w0_offset, "Per-coordinate start offset");
  app->add_option("--sigma-inf", f.sigma_inf, "Additive noise level");
  app->add_option("--lambda", f.lambda_reg, "Ridge regularization");
  app->add_option("--oracle", f.oracle, "additive | sampling");
  app->add_option("--data", f.data, "LIBSVM file (sets problem kind to file)");
  app->add_option("--task", f.task, "regression | classification");
  app->add_option("--arm", f.arms, "Arm as label:comm[:N], repeatable");
  app->add_option("--replicas", f.replicas, "Replica count");
  app->add_option("--selector", f.selectors, "Moment selector, repeatable");
  app->add_option("--check", f.checks, "Property check, repeatable");
  app->add_flag("--allow-guard-violation", f.allow_guard_violation,
                "Accept 2 eta L > 1 (recorded in the artifacts)");
  app->add_flag("--trace-csv", f.trace_csv, "Also write replica-0 trace CSV");
}

ArmSpec parse_arm(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 2 || parts.size() > 3) throw UsageError("--arm expects label:comm[:N], got '" + text + "'");
  ArmSpec arm{parts[0], parts[1], 1};
  if (parts.size() == 3) {
    try {
      arm.N = std::stoll(parts[2]);
    } catch (const std::exception&) {
      throw UsageError("--arm: bad N in '" + text + "'");
    }
  }
  return arm;
}

ExperimentSpec resolve_spec(const SpecFlags& f) {
  ExperimentSpec s;
  if (!f.config.empty()) {
    s = load_spec(f.config);
  } else if (!f.preset.empty()) {
    s = preset(f.preset);
  } else {
    throw UsageError("one of --preset or --config is required");
  }
  if (f.name) s.name = *f.name;
  if (f.seed) s.seed = *f.seed;
  if (f.out) s.output.directory = *f.out;
  if (f.P) s.algorithm.P = *f.P;
  if (f.steps) s.algorithm.steps_per_worker = *f.steps;
  if (f.rate) s.algorithm.rate = *f.rate;
  if (f.eta) s.algorithm.eta = *f.eta;
  if (f.c_eta) s.algorithm.c_eta = *f.c_eta;
  if (f.alpha) s.algorithm.alpha = *f.alpha;
  if (f.w0) s.algorithm.w0 = *f.w0;
  if (f.w0_offset) s.algorithm.w0_offset = *f.w0_offset;
  if (f.sigma_inf) s.problem.sigma_inf = *f.sigma_inf;
  if (f.lambda_reg) s.problem.lambda_reg = *f.lambda_reg;
  if (f.oracle) s.problem.oracle = *f.oracle;
  if (f.data) {
    s.problem.kind = "file";
    s.problem.path = *f.data;
  }
  if (f.task) s.problem.task = *f.task;
  if (!f.arms.empty()) {
    s.algorithm.arms.clear();
    for (const auto& a : f.arms) s.algorithm.arms.push_back(parse_arm(a));
  }
  if (f.replicas) s.metrics.replicas = *f.replicas;
  if (!f.selectors.empty()) s.metrics.selectors = f.selectors;
  if (!f.checks.empty()) s.metrics.checks = f.checks;
  if (f.allow_guard_violation) s.algorithm.allow_guard_violation = true;
  if (f.trace_csv) s.output.trace_csv = true;
  return s;
}

int cmd_run(const SpecFlags& f, int threads) {
  const ExperimentSpec spec = resolve_spec(f);
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const RunOutcome outcome = run_experiment(spec, threads);
  std::cout << outcome.directory.string() << '\n';
  for (const auto& c : outcome.checks.at("checks")) {
    std::cout << (c.at("passed").get<bool>() ? "PASS " : "FAIL ") << c.at("arm").get<std::string>()
              << ' ' << c.at("check").get<std::string>() << '\n';
  }
  return outcome.checks_passed ? 0 : kExitChecksFailed;
}

int cmd_bounds(const SpecFlags& f) {
  const ExperimentSpec spec = resolve_spec(f);
  const BuiltProblem problem = validate_spec(spec);
  json out = json::object();
  for (const auto& arm : spec.algorithm.arms) {
    RunConfig cfg = arm_config(spec, arm, problem);
    // Adaptive schedules only reveal their phase lengths by running.
    const Trace trace = run(cfg);
    const BoundInputs in = bound_inputs(spec, problem, cfg.workers, trace.phase_lengths);
    try {
      out[arm.label] = evaluate_bounds(in).to_json();
    } catch (const DomainError& e) {
      out[arm.label] = {{"error", e.what()}};
    }
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_validate(const SpecFlags& f, bool dump) {
  const ExperimentSpec spec = resolve_spec(f);
  const BuiltProblem problem = validate_spec(spec);
  if (dump) {
    std::cout << spec.to_json().dump(2) << '\n';
  } else {
    std::cout << "ok: " << spec.name << " (mu=" << problem.objective->mu()
              << ", L=" << problem.objective->L() << ", arms=" << spec.algorithm.arms.size()
              << (spec.algorithm.allow_guard_violation ? ", guard overridden" : "") << ")\n";
  }
  return 0;
}

int cmd_ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  const LibsvmScan scan = scan_libsvm(in);
  json j = {{"rows", scan.rows},
            {"dim", scan.dim},
            {"nonzeros", scan.nonzeros},
            {"positive", scan.positive},
            {"negative", scan.negative},
            {"label_min", scan.label_min},
            {"label_max", scan.label_max},
            {"max_row_norm", scan.max_row_norm}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local-SGD simulation lab"};
  app.require_subcommand(1);

  SpecFlags run_flags, bounds_flags, validate_flags;
  int threads = 0;
  bool list = false;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write artifacts");
  add_spec_flags(run_cmd, run_flags);
  run_cmd->add_option("--threads", threads, "Replica threads (0 = runtime default)");
  run_cmd->add_flag("--list-presets", list, "Print preset names and exit");

  std::vector<std::string> dirs;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "Merge artifact directories by gradient count");
  compare_cmd->add_option("dirs", dirs, "Artifact directories")->required();
  compare_cmd->add_option("--out", compare_out, "Write the table here instead of stdout");

  auto* bounds_cmd = app.add_subcommand("bounds", "Evaluate bound reports only");
  add_spec_flags(bounds_cmd, bounds_flags);

  bool dump = false;
  auto* validate_cmd = app.add_subcommand("validate", "Check a spec without running it");
  add_spec_flags(validate_cmd, validate_flags);
  validate_cmd->add_flag("--dump", dump, "Print the resolved spec with all defaults");

  std::string ingest_path;
  auto* ingest_cmd = app.add_subcommand("ingest", "Sanity-scan a LIBSVM file");
  ingest_cmd->add_option("file", ingest_path, "LIBSVM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run_cmd->parsed()) {
      if (list) {
        for (const auto& n : preset_names()) std::cout << n << '\n';
        return 0;
      }
      return cmd_run(run_flags, threads);
    }
    if (compare_cmd->parsed()) {
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      if (compare_out.empty()) {
        compare_report(paths, std::cout);
      } else {
        std::ostringstream table;
        compare_report(paths, table);
        std::ofstream out(compare_out, std::ios::binary);
        if (!(out << table.str())) throw ConfigError("cannot write '" + compare_out + "'");
      }
      return 0;
    }
    if (bounds_cmd->parsed()) return cmd_bounds(bounds_flags);
    if (validate_cmd->parsed()) return cmd_validate(validate_flags, dump);
    if (ingest_cmd->parsed()) return cmd_ingest(ingest_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
