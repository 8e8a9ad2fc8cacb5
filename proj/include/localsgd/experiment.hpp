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
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "localsgd/bounds.hpp"
#include "localsgd/engine.hpp"
#include "localsgd/metrics.hpp"
#include "localsgd/oracle.hpp"

namespace localsgd {

struct ProblemSpec {
  // quadratic | lsr | logistic | file
  std::string kind = "quadratic";
  std::vector<double> spectrum = {1.0};
  std::vector<double> optimum;  // empty means the zero vector
  std::optional<std::uint64_t> rotation_seed;
  // Synthetic datasets (feature covariance is diag(spectrum)).
  std::int64_t rows = 2000;
  std::vector<double> w_true;  // empty means all ones
  double label_noise_sd = 0.5;
  std::uint64_t data_seed = 7;
  // File datasets.
  std::string path;
  std::string task = "classification";
  std::string normalization = "none";
  double lambda_reg = 0.0;
  // additive | sampling
  std::string oracle = "additive";
  double sigma_inf = 1.0;

  bool operator==(const ProblemSpec&) const = default;
};

struct ArmSpec {
  std::string label;
  // local | mba | osa | serial | adaptive_quadratic | adaptive_general
  std::string comm = "local";
  std::int64_t N = 1;

  bool operator==(const ArmSpec&) const = default;
};

struct AlgorithmSpec {
  std::int64_t P = 8;
  std::int64_t steps_per_worker = 512;
  // constant | online | finite_horizon
  std::string rate = "constant";
  double eta = 0.05;
  double c_eta = 0.5;
  double alpha = 2.0 / 3.0;
  // offset | optimum | zero
  std::string w0 = "offset";
  double w0_offset = 1.0;
  std::vector<ArmSpec> arms = {{"local", "local", 8}};
  bool allow_guard_violation = false;
  std::string distance_estimator = "plug_in";

  bool operator==(const AlgorithmSpec&) const = default;
};

struct MetricsSpec {
  int replicas = 200;
  std::vector<std::string> selectors = {"hat", "pr_avg"};
  bool profile = false;
  // decomposition | prop3_dominance | periodic_drop
  std::vector<std::string> checks;
  int sigma_draws = 1000;
  // Log-spaced running Polyak-Ruppert checkpoints per arm (0 disables).
  int pr_checkpoints = 0;
  std::int64_t local_worker = 0;
  double kappa_threshold = kDefaultKappaThreshold;

  bool operator==(const MetricsSpec&) const = default;
};

struct OutputSpec {
  std::string directory;  // empty: <output root>/<name>
  bool trace_csv = false;

  bool operator==(const OutputSpec&) const = default;
};

struct ExperimentSpec {
  std::string name = "experiment";
  ProblemSpec problem;
  AlgorithmSpec algorithm;
  MetricsSpec metrics;
  OutputSpec output;
  std::uint64_t seed = 1;

  bool operator==(const ExperimentSpec&) const = default;

  // Every field, defaults included.
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys raise ConfigError.
  static ExperimentSpec from_json(const nlohmann::json& j);
};

ExperimentSpec load_spec(const std::string& path);

std::vector<std::string> preset_names();
// Throws ConfigError for an unknown name.
ExperimentSpec preset(const std::string& name);

struct BuiltProblem {
  std::shared_ptr<const Objective> objective;
  OracleStream oracle;
  SigmaEstimate sigma;       // at the optimum
  double sigma_const = 0.0;  // fourth-root of E||g(w*)||^4
  bool exact_sigma = false;
  Vector w0;
};

BuiltProblem build_problem(const ExperimentSpec& spec);

// Cross-field checks; returns the built problem so callers need not rebuild.
BuiltProblem validate_spec(const ExperimentSpec& spec);

// Run config of one arm (seed and replicas are applied by the ensemble).
RunConfig arm_config(const ExperimentSpec& spec, const ArmSpec& arm, const BuiltProblem& problem);

BoundInputs bound_inputs(const ExperimentSpec& spec, const BuiltProblem& problem,
                         std::int64_t P, const std::vector<std::int64_t>& phase_lengths);

struct RunOutcome {
  std::filesystem::path directory;
  bool checks_passed = true;
  nlohmann::json checks;
};

// Writes config.json, sigma.json, checks.json and per-arm directories with
// summary.json, moments_<selector>.csv/.json, bounds.json, overlay.csv and
// (when enabled) profile.csv. Output depends only on the spec.
RunOutcome run_experiment(const ExperimentSpec& spec, int threads = 1);

// Merges the hat series of every arm in the given artifact directories into
// one CSV aligned by gradient count. ComparisonError on incompatible inputs.
void compare_report(const std::vector<std::filesystem::path>& dirs, std::ostream& out);

// LOCALSGD_OUTPUT_ROOT, or "artifacts" when unset.
std::filesystem::path default_output_root();

}  // namespace localsgd
