// Command-line front end: estimate / bootstrap / simulate / oracle / diagnose.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "tmeta/bootstrap.hpp"
#include "tmeta/config.hpp"
#include "tmeta/csv.hpp"
#include "tmeta/discrete_oracle.hpp"
#include "tmeta/pipeline.hpp"
#include "tmeta/simulation.hpp"

using nlohmann::json;
using namespace tmeta;

namespace {

constexpr int kSchemaVersion = 1;

struct CommonFlags {
  std::string config_path;
  std::string input;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

struct EstimateFlags {
  std::string estimator;
  std::string treatment;
  std::string treatment_prime;
  std::string weights;
  std::string fixed_weights;
  bool project_simplex = false;
  bool complete_case = false;
  bool survey = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "JSON run configuration");
  if (config_required) opt->required();
  cmd->add_option("--input", flags.input, "input CSV (overrides config)");
  cmd->add_option("--out", flags.output_dir, "output directory (overrides config)");
  cmd->add_option("--seed", flags.seed, "global seed (overrides config)");
  cmd->add_option("--threads", flags.threads, "parallelism degree, 0 = all cores");
}

void add_estimate_flags(CLI::App* cmd, EstimateFlags& flags) {
  cmd->add_option("--estimator", flags.estimator,
                  "g-formula | weighting | weighting-normalized | dr | dr-normalized | "
                  "dr-sample-split | naive-pooled");
  cmd->add_option("--treatment", flags.treatment, "treatment level to estimate");
  cmd->add_option("--treatment-prime", flags.treatment_prime,
                  "second level: estimate the contrast treatment - treatment_prime");
  cmd->add_option("--weights", flags.weights, "sample-size | inverse-variance | optimal");
  cmd->add_option("--fixed-weights", flags.fixed_weights, "comma-separated fixed pattern weights");
  cmd->add_flag("--project-simplex", flags.project_simplex,
                "clip negative optimal weights and renormalize");
  cmd->add_flag("--complete-case", flags.complete_case, "drop trials with missing covariates");
  cmd->add_flag("--survey", flags.survey, "survey mode (eta-weighted target averages)");
}

RunConfig merge_config(const CommonFlags& common, const EstimateFlags* est) {
  RunConfig config =
      common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  if (!common.input.empty()) config.input_path = common.input;
  if (!common.output_dir.empty()) config.output_dir = common.output_dir;
  if (common.seed) config.seed = *common.seed;
  if (common.threads) config.threads = *common.threads;
  if (est != nullptr) {
    if (!est->estimator.empty()) config.estimator = est->estimator;
    if (!est->treatment.empty()) config.treatment = est->treatment;
    if (!est->treatment_prime.empty()) config.treatment_prime = est->treatment_prime;
    if (!est->weights.empty()) config.weight_scheme = est->weights;
    if (!est->fixed_weights.empty()) {
      config.fixed_weights.clear();
      std::istringstream in(est->fixed_weights);
      std::string piece;
      while (std::getline(in, piece, ',')) config.fixed_weights.push_back(std::stod(piece));
    }
    if (est->project_simplex) config.project_simplex = true;
    if (est->complete_case) config.complete_case = true;
    if (est->survey) config.survey_mode = true;
  }
  return config;
}

json estimand_json(const Dataset& dataset, const EstimateResult& r) {
  json j;
  j["treatment"] = dataset.treatment_levels[static_cast<std::size_t>(r.estimand.treatment)];
  if (r.estimand.treatment_prime)
    j["treatment_prime"] =
        dataset.treatment_levels[static_cast<std::size_t>(*r.estimand.treatment_prime)];
  return j;
}

json result_json(const Dataset& dataset, const EstimateResult& r) {
  json j;
  j["estimator"] = estimator_name(r.kind);
  j["estimand"] = estimand_json(dataset, r);
  j["value"] = r.value;
  j["complete_case"] = r.complete_case;
  j["survey_mode"] = r.survey_mode;
  json per_pattern = json::array();
  for (const auto& pe : r.per_pattern) {
    json p;
    p["pattern_id"] = pe.pattern_id;
    p["psi_k_hat"] = pe.psi_k_hat;
    p["gamma_hat"] = pe.gamma_hat;
    p["n_k_star"] = pe.n_k_star;
    per_pattern.push_back(std::move(p));
  }
  j["per_pattern"] = per_pattern;
  json w = json::array();
  for (int k = 0; k < r.pattern_weights.size(); ++k) w.push_back(r.pattern_weights[k]);
  j["pattern_weights"] = w;
  j["model_provenance"] = r.model_provenance;
  j["warnings"] = r.warnings;
  for (const auto& component : r.components)
    j["arms"].push_back(result_json(dataset, component));
  return j;
}

std::string per_pattern_csv(const EstimateResult& r) {
  std::ostringstream out;
  out << "pattern_id,psi_k_hat,gamma_hat,n_k_star,weight\n";
  for (std::size_t k = 0; k < r.per_pattern.size(); ++k) {
    const auto& pe = r.per_pattern[k];
    out << pe.pattern_id << ',' << fmt_double(pe.psi_k_hat) << ',' << fmt_double(pe.gamma_hat)
        << ',' << pe.n_k_star << ',' << fmt_double(r.pattern_weights[static_cast<Eigen::Index>(k)])
        << '\n';
  }
  return out.str();
}

void emit(const std::string& dir, const std::string& name, const json& report) {
  write_file_atomic((std::filesystem::path(dir) / name).string(), report.dump(2) + "\n");
}

int run_estimate(bool with_bootstrap, const RunConfig& config) {
  if (config.input_path.empty()) throw ConfigError("cli", "no input CSV given");
  Dataset dataset = ingest_csv(config.input_path, config.schema);
  for (const std::string& w : small_pattern_warnings(derive_patterns(dataset)))
    std::cerr << "warning: " << w << "\n";

  EstimatorConfig ec = build_estimator_config(config, dataset);
  EstimateResult result = run_estimator(dataset, ec);

  json report;
  report["schema_version"] = kSchemaVersion;
  report["command"] = with_bootstrap ? "bootstrap" : "estimate";
  report["input"] = config.input_path;
  report["seed"] = config.seed;
  report["weight_scheme"] =
      ec.scheme.kind == WeightSchemeKind::fixed ? "fixed" : weight_scheme_name(ec.scheme.kind);
  report["result"] = result_json(dataset, result);

  std::ostringstream text;
  text << "estimator: " << estimator_name(result.kind) << "\n";
  text << "psi_hat: " << fmt_double(result.value) << "\n";
  for (std::size_t k = 0; k < result.per_pattern.size(); ++k)
    text << "  pattern " << result.per_pattern[k].pattern_id << ": psi_k="
         << fmt_double(result.per_pattern[k].psi_k_hat)
         << " w=" << fmt_double(result.pattern_weights[static_cast<Eigen::Index>(k)])
         << " n_k*=" << result.per_pattern[k].n_k_star << "\n";
  for (const auto& w : result.warnings) text << "warning: " << w << "\n";

  if (with_bootstrap) {
    BootstrapPlan plan = build_bootstrap_plan(config);
    IntervalEstimate interval = bootstrap(dataset, ec, plan, config.threads);
    json ij;
    ij["point"] = interval.point;
    ij["se"] = interval.se;
    ij["lower"] = interval.lower;
    ij["upper"] = interval.upper;
    ij["level"] = plan.level;
    ij["B"] = plan.replicates;
    ij["B_effective"] = interval.B_effective;
    ij["mode"] = config.bootstrap_mode;
    ij["interval"] = config.bootstrap_interval;
    report["bootstrap"] = ij;
    text << "bootstrap: point=" << fmt_double(interval.point) << " se=" << fmt_double(interval.se)
         << " ci=[" << fmt_double(interval.lower) << ", " << fmt_double(interval.upper) << "]"
         << " B_effective=" << interval.B_effective << "\n";
  }

  emit(config.output_dir, with_bootstrap ? "bootstrap.json" : "estimate.json", report);
  write_file_atomic(
      (std::filesystem::path(config.output_dir) / (with_bootstrap ? "bootstrap.txt" : "estimate.txt"))
          .string(),
      text.str());
  if (!result.per_pattern.empty())
    write_file_atomic((std::filesystem::path(config.output_dir) / "per_pattern.csv").string(),
                      per_pattern_csv(result));
  std::cout << text.str();
  return 0;
}

int run_simulate(const RunConfig& config) {
  SimScenario scenario;
  if (config.scenario == "K2") {
    scenario.missingness = MissingnessScenario::K2;
  } else if (config.scenario == "K3") {
    scenario.missingness = MissingnessScenario::K3;
  } else {
    throw ConfigError("cli", "scenario must be K2 or K3");
  }
  scenario.n_total = config.sim_n_total;
  scenario.rng_seed = config.seed;

  double psi0 = true_psi(0, config.truth_mc_n, config.seed);
  double psi1 = true_psi(1, config.truth_mc_n, config.seed);
  std::vector<StudyRow> rows =
      run_study(scenario, config.sim_replicates, table1_grid(), psi0, psi1, config.threads);

  std::string csv = study_rows_to_csv(rows, scenario.missingness);
  write_file_atomic((std::filesystem::path(config.output_dir) / "study.csv").string(), csv);

  json report;
  report["schema_version"] = kSchemaVersion;
  report["command"] = "simulate";
  report["scenario"] = config.scenario;
  report["n_total"] = scenario.n_total;
  report["replicates"] = config.sim_replicates;
  report["seed"] = config.seed;
  report["true_psi"] = {{"a0", psi0}, {"a1", psi1}};
  json jrows = json::array();
  for (const StudyRow& r : rows) {
    json jr;
    jr["estimator"] = r.cell.estimator;
    jr["correct_outcome"] = r.cell.correct_outcome;
    jr["quadratic_participation"] = r.cell.quadratic_participation;
    jr["complete_case"] = r.cell.complete_case;
    jr["a"] = r.treatment;
    jr["bias_sqrt_n"] = r.bias_times_sqrt_n;
    jr["sd_sqrt_n"] = r.sd_times_sqrt_n;
    jr["reps"] = r.replicates;
    jr["failed"] = r.failed;
    jrows.push_back(std::move(jr));
  }
  report["rows"] = jrows;
  emit(config.output_dir, "study.json", report);
  std::cout << csv;
  return 0;
}

int run_oracle(const std::string& population_path, const RunConfig& config) {
  DiscretePopulation pop = load_population(population_path);
  auto patterns = pop.patterns();

  json report;
  report["schema_version"] = kSchemaVersion;
  report["command"] = "oracle";
  report["population"] = population_path;
  json rows = json::array();
  std::ostringstream text;
  for (const auto& pat : patterns) {
    for (std::size_t a = 0; a < pop.treatment_levels.size(); ++a) {
      double outcome = exact_psi_outcome(pop, pat.pattern_id, static_cast<int>(a));
      double weighting = exact_psi_weighting(pop, pat.pattern_id, static_cast<int>(a));
      json row;
      row["pattern_id"] = pat.pattern_id;
      row["treatment"] = pop.treatment_levels[a];
      row["psi_outcome"] = outcome;
      row["psi_weighting"] = weighting;
      row["gap"] = std::abs(outcome - weighting);
      rows.push_back(std::move(row));
      text << "pattern " << pat.pattern_id << " a=" << pop.treatment_levels[a]
           << ": outcome=" << fmt_double(outcome) << " weighting=" << fmt_double(weighting)
           << " gap=" << fmt_double(std::abs(outcome - weighting)) << "\n";
    }
  }
  report["functionals"] = rows;
  emit(config.output_dir, "oracle.json", report);
  std::cout << text.str();
  return 0;
}

int run_diagnose(const RunConfig& config) {
  if (config.input_path.empty()) throw ConfigError("cli", "no input CSV given");
  Dataset dataset = ingest_csv(config.input_path, config.schema);
  PatternIndex index = derive_patterns(dataset);

  json report;
  report["schema_version"] = kSchemaVersion;
  report["command"] = "diagnose";
  report["input"] = config.input_path;
  json rows = json::array();
  std::ostringstream text;
  for (int k = 1; k <= index.K(); ++k) {
    for (std::size_t a = 0; a < dataset.treatment_levels.size(); ++a) {
      ModelSpec spec = spec_for_pattern(index.pattern(k), config.outcome_family,
                                        config.outcome_quadratic, {}, {});
      json row;
      row["pattern_id"] = k;
      row["treatment"] = dataset.treatment_levels[a];
      ExchangeabilityDiagnostic diag =
          exchangeability_diagnostic(dataset, index, k, static_cast<int>(a), spec);
      row["applicable"] = diag.applicable;
      if (diag.applicable) {
        row["max_discrepancy"] = diag.max_discrepancy;
        row["worst_pair"] = {diag.trial_a, diag.trial_b};
        text << "pattern " << k << " a=" << dataset.treatment_levels[a]
             << ": max discrepancy " << fmt_double(diag.max_discrepancy) << " (trials "
             << diag.trial_a << " vs " << diag.trial_b << ")\n";
      } else {
        row["note"] = diag.note;
        text << "pattern " << k << " a=" << dataset.treatment_levels[a] << ": " << diag.note
             << "\n";
      }
      rows.push_back(std::move(row));
    }
  }
  report["diagnostics"] = rows;
  emit(config.output_dir, "diagnose.json", report);
  std::cout << text.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"target-population treatment effect estimation from multiple trials with "
               "systematically missing covariates"};
  app.require_subcommand(1);

  CommonFlags estimate_common, bootstrap_common, simulate_common, oracle_common, diagnose_common;
  EstimateFlags estimate_flags, bootstrap_flags;
  std::string population_path;
  std::string scenario_flag;
  std::optional<int> reps_flag, n_total_flag, bootstrap_b;
  std::string bootstrap_mode, bootstrap_interval;
  std::optional<std::uint64_t> truth_mc;

  CLI::App* estimate_cmd = app.add_subcommand("estimate", "point estimate on a CSV dataset");
  add_common(estimate_cmd, estimate_common, true);
  add_estimate_flags(estimate_cmd, estimate_flags);

  CLI::App* bootstrap_cmd =
      app.add_subcommand("bootstrap", "point estimate plus bootstrap interval");
  add_common(bootstrap_cmd, bootstrap_common, true);
  add_estimate_flags(bootstrap_cmd, bootstrap_flags);
  bootstrap_cmd->add_option("--B,--replicates", bootstrap_b, "bootstrap replicates");
  bootstrap_cmd->add_option("--mode", bootstrap_mode, "stratified-by-source | survey-design");
  bootstrap_cmd->add_option("--interval", bootstrap_interval, "percentile | normal-se");

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "simulation study table");
  add_common(simulate_cmd, simulate_common, false);
  simulate_cmd->add_option("--scenario", scenario_flag, "K2 | K3");
  simulate_cmd->add_option("--reps", reps_flag, "study replicates");
  simulate_cmd->add_option("--n-total", n_total_flag, "composite sample size per replicate");
  simulate_cmd->add_option("--truth-mc", truth_mc, "Monte Carlo draws for the true values");

  CLI::App* oracle_cmd =
      app.add_subcommand("oracle", "exact functionals of a finite population file");
  add_common(oracle_cmd, oracle_common, false);
  oracle_cmd->add_option("--population", population_path, "population JSON file")->required();

  CLI::App* diagnose_cmd =
      app.add_subcommand("diagnose", "per-pattern exchangeability diagnostic");
  add_common(diagnose_cmd, diagnose_common, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (estimate_cmd->parsed()) {
      return run_estimate(false, merge_config(estimate_common, &estimate_flags));
    }
    if (bootstrap_cmd->parsed()) {
      RunConfig config = merge_config(bootstrap_common, &bootstrap_flags);
      if (bootstrap_b) config.bootstrap_replicates = *bootstrap_b;
      if (!bootstrap_mode.empty()) config.bootstrap_mode = bootstrap_mode;
      if (!bootstrap_interval.empty()) config.bootstrap_interval = bootstrap_interval;
      return run_estimate(true, config);
    }
    if (simulate_cmd->parsed()) {
      RunConfig config = merge_config(simulate_common, nullptr);
      if (!scenario_flag.empty()) config.scenario = scenario_flag;
      if (reps_flag) config.sim_replicates = *reps_flag;
      if (n_total_flag) config.sim_n_total = *n_total_flag;
      if (truth_mc) config.truth_mc_n = *truth_mc;
      return run_simulate(config);
    }
    if (oracle_cmd->parsed()) {
      return run_oracle(population_path, merge_config(oracle_common, nullptr));
    }
    if (diagnose_cmd->parsed()) {
      return run_diagnose(merge_config(diagnose_common, nullptr));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.category()) {
      case ErrorCategory::config: return 2;
      case ErrorCategory::data: return 3;
      case ErrorCategory::numeric: return 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
