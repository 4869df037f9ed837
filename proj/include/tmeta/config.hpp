#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tmeta/bootstrap.hpp"
#include "tmeta/csv.hpp"
#include "tmeta/discrete_oracle.hpp"
#include "tmeta/pipeline.hpp"
#include "tmeta/simulation.hpp"

namespace tmeta {

// Full run configuration: a single JSON document, schema-validated with
// unknown keys rejected. Command-line flags overlay it afterwards.
struct RunConfig {
  std::string input_path;
  CsvSchema schema;
  Family outcome_family = Family::gaussian_identity;

  std::string estimator = "dr";
  std::string treatment;
  std::optional<std::string> treatment_prime;
  bool complete_case = false;
  bool survey_mode = false;

  std::string weight_scheme = "sample-size";
  std::vector<double> fixed_weights;
  bool project_simplex = false;

  bool outcome_quadratic = true;
  bool participation_quadratic = true;
  std::vector<std::pair<std::string, int>> outcome_degree_by_name;
  std::vector<std::pair<std::string, int>> participation_degree_by_name;

  int bootstrap_replicates = 1000;
  std::string bootstrap_mode = "stratified-by-source";
  std::string bootstrap_interval = "percentile";
  double bootstrap_level = 0.95;

  // simulate subcommand
  std::string scenario = "K2";
  int sim_replicates = 1000;
  int sim_n_total = 2000;
  std::uint64_t truth_mc_n = 10000000;

  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware
  std::string output_dir = "out";
};

RunConfig parse_run_config(const std::string& json_text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

EstimatorKind parse_estimator_kind(const std::string& name);

// Assembles the estimator configuration against a loaded dataset (resolves
// treatment labels and per-covariate overrides).
EstimatorConfig build_estimator_config(const RunConfig& config, const Dataset& dataset);

BootstrapPlan build_bootstrap_plan(const RunConfig& config);

// Finite-population file for the oracle subcommand: covariates, treatment
// levels, per-trial observed covariate names, and cells.
DiscretePopulation parse_population(const std::string& json_text, const std::string& origin);
DiscretePopulation load_population(const std::string& path);

}  // namespace tmeta
