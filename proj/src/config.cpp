#include "tmeta/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tmeta {

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("cli", origin + ": " + e.what());
  }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where, const std::string& origin) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("cli", origin + ": unknown key '" + key + "' in " + where);
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("cli", "key '" + key + "': " + e.what());
  }
}

std::string read_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cli", "cannot open " + what + " '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::pair<std::string, int>> parse_degree_overrides(const json& obj,
                                                                const std::string& origin) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& [name, value] : obj.items()) {
    int degree = value.get<int>();
    if (degree != 1 && degree != 2)
      throw ConfigError("cli", origin + ": per-covariate degree must be 1 or 2");
    out.emplace_back(name, degree);
  }
  return out;
}

}  // namespace

namespace {

RunConfig run_config_from_json(const json& root, const std::string& origin) {
  if (!root.is_object()) throw ConfigError("cli", origin + ": config must be a JSON object");
  reject_unknown_keys(root,
                      {"input", "covariates", "outcome_type", "treatment_levels", "models",
                       "estimator", "weights", "bootstrap", "simulate", "seed", "threads",
                       "output_dir"},
                      "config", origin);

  RunConfig config;
  config.input_path = get_or<std::string>(root, "input", "");

  if (root.contains("covariates")) {
    for (const json& cov : root.at("covariates")) {
      if (cov.is_string()) {
        config.schema.covariates.push_back({cov.get<std::string>(), true});
        continue;
      }
      reject_unknown_keys(cov, {"name", "type"}, "covariates[]", origin);
      std::string type = get_or<std::string>(cov, "type", "continuous");
      if (type != "continuous" && type != "indicator")
        throw ConfigError("cli", origin + ": covariate type must be continuous or indicator");
      config.schema.covariates.push_back(
          {cov.at("name").get<std::string>(), type == "continuous"});
    }
  }
  if (root.contains("treatment_levels"))
    config.schema.treatment_levels = root.at("treatment_levels").get<std::vector<std::string>>();

  std::string outcome_type = get_or<std::string>(root, "outcome_type", "continuous");
  if (outcome_type == "continuous") {
    config.outcome_family = Family::gaussian_identity;
  } else if (outcome_type == "binary") {
    config.outcome_family = Family::binomial_logit;
  } else {
    throw ConfigError("cli", origin + ": outcome_type must be continuous or binary");
  }

  if (root.contains("models")) {
    const json& models = root.at("models");
    reject_unknown_keys(models, {"outcome", "participation"}, "models", origin);
    if (models.contains("outcome")) {
      const json& m = models.at("outcome");
      reject_unknown_keys(m, {"default_degree", "per_covariate"}, "models.outcome", origin);
      config.outcome_quadratic = get_or<int>(m, "default_degree", 2) == 2;
      if (m.contains("per_covariate"))
        config.outcome_degree_by_name = parse_degree_overrides(m.at("per_covariate"), origin);
    }
    if (models.contains("participation")) {
      const json& m = models.at("participation");
      reject_unknown_keys(m, {"default_degree", "per_covariate"}, "models.participation", origin);
      config.participation_quadratic = get_or<int>(m, "default_degree", 2) == 2;
      if (m.contains("per_covariate"))
        config.participation_degree_by_name =
            parse_degree_overrides(m.at("per_covariate"), origin);
    }
  }

  if (root.contains("estimator")) {
    const json& est = root.at("estimator");
    reject_unknown_keys(
        est, {"kind", "treatment", "treatment_prime", "complete_case", "survey_mode"},
        "estimator", origin);
    config.estimator = get_or<std::string>(est, "kind", "dr");
    config.treatment = get_or<std::string>(est, "treatment", "");
    if (est.contains("treatment_prime"))
      config.treatment_prime = est.at("treatment_prime").get<std::string>();
    config.complete_case = get_or<bool>(est, "complete_case", false);
    config.survey_mode = get_or<bool>(est, "survey_mode", false);
  }

  if (root.contains("weights")) {
    const json& w = root.at("weights");
    reject_unknown_keys(w, {"scheme", "fixed", "project_simplex"}, "weights", origin);
    config.weight_scheme = get_or<std::string>(w, "scheme", "sample-size");
    if (w.contains("fixed")) config.fixed_weights = w.at("fixed").get<std::vector<double>>();
    config.project_simplex = get_or<bool>(w, "project_simplex", false);
  }

  if (root.contains("bootstrap")) {
    const json& b = root.at("bootstrap");
    reject_unknown_keys(b, {"replicates", "mode", "interval", "level"}, "bootstrap", origin);
    config.bootstrap_replicates = get_or<int>(b, "replicates", 1000);
    config.bootstrap_mode = get_or<std::string>(b, "mode", "stratified-by-source");
    config.bootstrap_interval = get_or<std::string>(b, "interval", "percentile");
    config.bootstrap_level = get_or<double>(b, "level", 0.95);
  }

  if (root.contains("simulate")) {
    const json& s = root.at("simulate");
    reject_unknown_keys(s, {"scenario", "replicates", "n_total", "truth_mc_n"}, "simulate",
                        origin);
    config.scenario = get_or<std::string>(s, "scenario", "K2");
    config.sim_replicates = get_or<int>(s, "replicates", 1000);
    config.sim_n_total = get_or<int>(s, "n_total", 2000);
    config.truth_mc_n = get_or<std::uint64_t>(s, "truth_mc_n", 10000000ULL);
  }

  config.seed = get_or<std::uint64_t>(root, "seed", 0);
  config.threads = get_or<unsigned>(root, "threads", 0);
  config.output_dir = get_or<std::string>(root, "output_dir", "out");
  return config;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  json root = parse_json(text, origin);
  try {
    return run_config_from_json(root, origin);
  } catch (const json::exception& e) {
    throw ConfigError("cli", origin + ": " + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path, "config"), path);
}

EstimatorKind parse_estimator_kind(const std::string& name) {
  if (name == "g-formula") return EstimatorKind::g_formula;
  if (name == "weighting") return EstimatorKind::weighting;
  if (name == "weighting-normalized") return EstimatorKind::weighting_normalized;
  if (name == "dr") return EstimatorKind::dr;
  if (name == "dr-normalized") return EstimatorKind::dr_normalized;
  if (name == "dr-sample-split") return EstimatorKind::dr_sample_split;
  if (name == "naive-pooled") return EstimatorKind::naive_pooled;
  throw ConfigError("cli", "unknown estimator '" + name + "'");
}

EstimatorConfig build_estimator_config(const RunConfig& config, const Dataset& dataset) {
  EstimatorConfig ec;
  ec.kind = parse_estimator_kind(config.estimator);
  if (config.treatment.empty())
    throw ConfigError("cli", "estimator.treatment must name a treatment level");
  ec.treatment = dataset.treatment_index(config.treatment);
  if (config.treatment_prime.has_value())
    ec.treatment_prime = dataset.treatment_index(*config.treatment_prime);
  ec.complete_case = config.complete_case;
  ec.survey_mode = config.survey_mode;
  ec.seed = config.seed;

  if (!config.fixed_weights.empty()) {
    ec.scheme.kind = WeightSchemeKind::fixed;
    ec.scheme.fixed = Eigen::Map<const Eigen::VectorXd>(
        config.fixed_weights.data(), static_cast<Eigen::Index>(config.fixed_weights.size()));
  } else {
    ec.scheme = parse_weight_scheme(config.weight_scheme);
  }
  ec.scheme.project_simplex = config.project_simplex;

  ec.policy.outcome_family = config.outcome_family;
  ec.policy.outcome_quadratic = config.outcome_quadratic;
  ec.policy.participation_quadratic = config.participation_quadratic;
  ec.policy.participation_uses_survey_weights = config.survey_mode;
  for (const auto& cov : config.schema.covariates)
    ec.policy.covariate_is_continuous.push_back(cov.is_continuous);

  auto resolve = [&](const std::vector<std::pair<std::string, int>>& by_name) {
    std::vector<std::pair<int, int>> out;
    for (const auto& [name, degree] : by_name) {
      auto it = std::find(dataset.covariate_names.begin(), dataset.covariate_names.end(), name);
      if (it == dataset.covariate_names.end())
        throw ConfigError("cli", "per-covariate degree names unknown covariate '" + name + "'");
      out.emplace_back(static_cast<int>(it - dataset.covariate_names.begin()), degree);
    }
    return out;
  };
  ec.policy.outcome_degree_overrides = resolve(config.outcome_degree_by_name);
  ec.policy.participation_degree_overrides = resolve(config.participation_degree_by_name);
  return ec;
}

BootstrapPlan build_bootstrap_plan(const RunConfig& config) {
  BootstrapPlan plan;
  plan.replicates = config.bootstrap_replicates;
  plan.seed = config.seed;
  if (config.bootstrap_mode == "stratified-by-source") {
    plan.mode = ResampleMode::stratified_by_source;
  } else if (config.bootstrap_mode == "survey-design") {
    plan.mode = ResampleMode::survey_design;
  } else {
    throw ConfigError("cli", "bootstrap.mode must be stratified-by-source or survey-design");
  }
  if (config.bootstrap_interval == "percentile") {
    plan.interval = IntervalKind::percentile;
  } else if (config.bootstrap_interval == "normal-se") {
    plan.interval = IntervalKind::normal_se;
  } else {
    throw ConfigError("cli", "bootstrap.interval must be percentile or normal-se");
  }
  plan.level = config.bootstrap_level;
  if (!(plan.level > 0.0 && plan.level < 1.0))
    throw ConfigError("cli", "bootstrap.level must be in (0,1)");
  return plan;
}

namespace {

DiscretePopulation population_from_json(const json& root, const std::string& origin) {
  reject_unknown_keys(root, {"covariates", "treatment_levels", "trial_observed", "cells"},
                      "population", origin);
  DiscretePopulation pop;
  pop.covariate_names = root.at("covariates").get<std::vector<std::string>>();
  pop.treatment_levels = root.at("treatment_levels").get<std::vector<std::string>>();

  auto covariate_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < pop.covariate_names.size(); ++i)
      if (pop.covariate_names[i] == name) return static_cast<int>(i);
    throw ConfigError("cli", origin + ": unknown covariate '" + name + "' in trial_observed");
  };
  for (const auto& [trial, names] : root.at("trial_observed").items()) {
    int s = std::stoi(trial);
    std::set<int> observed;
    for (const std::string& name : names.get<std::vector<std::string>>())
      observed.insert(covariate_index(name));
    pop.observed_by_trial[s] = std::move(observed);
  }

  for (const json& cell : root.at("cells")) {
    reject_unknown_keys(cell, {"x", "s", "a", "mass", "mean_y"}, "cells[]", origin);
    PopulationCell c;
    c.x = cell.at("x").get<std::vector<double>>();
    c.s = cell.at("s").get<int>();
    c.mass = cell.at("mass").get<double>();
    if (c.s != 0) {
      std::string label = cell.at("a").get<std::string>();
      c.a = -1;
      for (std::size_t i = 0; i < pop.treatment_levels.size(); ++i)
        if (pop.treatment_levels[i] == label) c.a = static_cast<int>(i);
      if (c.a < 0)
        throw ConfigError("cli", origin + ": cell treatment '" + label + "' not in levels");
      c.mean_y = cell.at("mean_y").get<double>();
    }
    pop.cells.push_back(std::move(c));
  }
  pop.check();
  return pop;
}

}  // namespace

DiscretePopulation parse_population(const std::string& text, const std::string& origin) {
  json root = parse_json(text, origin);
  try {
    return population_from_json(root, origin);
  } catch (const json::exception& e) {
    throw ConfigError("cli", origin + ": " + e.what());
  }
}

DiscretePopulation load_population(const std::string& path) {
  return parse_population(read_file(path, "population"), path);
}

}  // namespace tmeta
