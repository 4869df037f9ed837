#include "tmeta/pipeline.hpp"

#include <algorithm>

namespace tmeta {

ModelSpec spec_for_pattern(const MissingnessPattern& pattern, Family family, bool quadratic,
                           const std::vector<bool>& continuous,
                           const std::vector<std::pair<int, int>>& overrides) {
  auto degree_for = [&](int covariate) {
    for (const auto& [cov, deg] : overrides)
      if (cov == covariate) return deg;
    bool cont = continuous.empty() || continuous[static_cast<std::size_t>(covariate)];
    return (quadratic && cont) ? 2 : 1;
  };
  ModelSpec spec;
  spec.family = family;
  for (int cov : pattern.observed_covariates) spec.terms.push_back({cov, 1});
  for (int cov : pattern.observed_covariates)
    if (degree_for(cov) == 2) spec.terms.push_back({cov, 2});
  check_spec(spec);
  return spec;
}

std::vector<NuisanceSpec> make_specs(const SpecPolicy& policy, const PatternIndex& index) {
  std::vector<NuisanceSpec> specs;
  specs.reserve(static_cast<std::size_t>(index.K()));
  for (const MissingnessPattern& pat : index.patterns) {
    NuisanceSpec s;
    s.outcome_spec = spec_for_pattern(pat, policy.outcome_family, policy.outcome_quadratic,
                                      policy.covariate_is_continuous,
                                      policy.outcome_degree_overrides);
    s.participation_spec =
        spec_for_pattern(pat, Family::binomial_logit, policy.participation_quadratic,
                         policy.covariate_is_continuous, policy.participation_degree_overrides);
    // Treatment model: main effects only.
    s.treatment_spec =
        spec_for_pattern(pat, Family::binomial_logit, false, policy.covariate_is_continuous, {});
    s.participation_uses_survey_weights = policy.participation_uses_survey_weights;
    specs.push_back(std::move(s));
  }
  return specs;
}

Dataset restrict_to_arm_trials(const Dataset& dataset, int a) {
  std::set<int> keep;
  for (const Record& r : dataset.records)
    if (!r.is_target() && *r.treatment == a) keep.insert(r.source_id);
  if (keep.empty())
    throw DataError("estimators", "treatment arm " + std::to_string(a) +
                                      " is supported by no trial");
  Dataset out;
  out.covariate_names = dataset.covariate_names;
  out.treatment_levels = dataset.treatment_levels;
  for (const Record& r : dataset.records)
    if (r.is_target() || keep.count(r.source_id)) out.records.push_back(r);
  return out;
}

namespace {

EstimateResult run_single_arm(const Dataset& input, const EstimatorConfig& config, int a) {
  Dataset restricted = restrict_to_arm_trials(input, a);
  PatternIndex index = derive_patterns(restricted);
  std::vector<NuisanceSpec> specs = make_specs(config.policy, index);

  if (config.kind == EstimatorKind::naive_pooled) return estimate_naive_pooled(restricted, a);

  std::vector<std::string> warnings = small_pattern_warnings(index);

  if (config.kind == EstimatorKind::dr_sample_split) {
    Eigen::VectorXd w;
    if (config.scheme.kind == WeightSchemeKind::sample_size ||
        config.scheme.kind == WeightSchemeKind::fixed) {
      w = pattern_weights(config.scheme, restricted, index, a, nullptr, nullptr, &warnings);
    } else {
      PreliminaryRun prelim =
          preliminary_dr_run(restricted, index, specs, a, config.survey_mode);
      w = pattern_weights(config.scheme, restricted, index, a, &prelim, nullptr, &warnings);
    }
    EstimateResult r = estimate_dr_sample_split(restricted, index, specs, a, w, config.seed);
    r.warnings = warnings;
    return r;
  }

  NuisanceFits fits = fit_nuisances(restricted, index, specs, {a});

  Eigen::VectorXd w;
  if (config.scheme.kind == WeightSchemeKind::inverse_variance ||
      config.scheme.kind == WeightSchemeKind::optimal) {
    PreliminaryRun prelim;
    prelim.fits = fits;
    prelim.estimate = estimate_dr(restricted, index, fits, a, sample_size_weights(index), false,
                                  config.survey_mode);
    prelim.psi_hat = prelim.estimate.value;
    w = pattern_weights(config.scheme, restricted, index, a, &prelim, nullptr, &warnings);
  } else {
    w = pattern_weights(config.scheme, restricted, index, a, nullptr, nullptr, &warnings);
  }

  EstimateResult result;
  switch (config.kind) {
    case EstimatorKind::g_formula:
      result = estimate_g_formula(restricted, index, fits, a, w, config.survey_mode);
      break;
    case EstimatorKind::weighting:
      result = estimate_weighting(restricted, index, fits, a, w, false, config.survey_mode);
      break;
    case EstimatorKind::weighting_normalized:
      result = estimate_weighting(restricted, index, fits, a, w, true, config.survey_mode);
      break;
    case EstimatorKind::dr:
      result = estimate_dr(restricted, index, fits, a, w, false, config.survey_mode);
      break;
    case EstimatorKind::dr_normalized:
      result = estimate_dr(restricted, index, fits, a, w, true, config.survey_mode);
      break;
    default:
      throw ConfigError("pipeline", "unhandled estimator kind");
  }
  result.warnings.insert(result.warnings.end(), warnings.begin(), warnings.end());
  return result;
}

}  // namespace

EstimateResult run_estimator(const Dataset& dataset, const EstimatorConfig& config) {
  Dataset working = config.complete_case ? complete_case_mode(dataset) : dataset;

  if (!config.treatment_prime.has_value()) {
    EstimateResult r = run_single_arm(working, config, config.treatment);
    r.complete_case = config.complete_case;
    r.survey_mode = config.survey_mode && config.kind != EstimatorKind::naive_pooled;
    return r;
  }

  int a = config.treatment;
  int a_prime = *config.treatment_prime;
  EstimateResult arm_a = run_single_arm(working, config, a);
  EstimateResult result;
  result.estimand.treatment = a;
  result.estimand.treatment_prime = a_prime;
  result.kind = config.kind;
  result.complete_case = config.complete_case;
  result.survey_mode = config.survey_mode;
  if (a == a_prime) {
    // Identical arms share one run; the contrast is exactly zero.
    result.value = 0.0;
    result.components = {arm_a, arm_a};
    return result;
  }
  EstimateResult arm_b = run_single_arm(working, config, a_prime);
  result.value = arm_a.value - arm_b.value;
  result.components = {arm_a, arm_b};
  return result;
}

}  // namespace tmeta
