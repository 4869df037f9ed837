#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/estimators.hpp"
#include "tmeta/pattern_weights.hpp"

namespace tmeta {

// Global model policy expanded into per-pattern specs over each pattern's
// observed covariates. Quadratic terms are added for continuous covariates
// only; squaring an indicator duplicates its linear column.
struct SpecPolicy {
  Family outcome_family = Family::gaussian_identity;
  bool outcome_quadratic = true;
  bool participation_quadratic = true;
  bool participation_uses_survey_weights = false;
  std::vector<bool> covariate_is_continuous;  // per dataset covariate; empty = all continuous
  // Per-covariate degree overrides (covariate index -> degree 1 or 2),
  // applied on top of the global choice.
  std::vector<std::pair<int, int>> outcome_degree_overrides;
  std::vector<std::pair<int, int>> participation_degree_overrides;
};

ModelSpec spec_for_pattern(const MissingnessPattern& pattern, Family family, bool quadratic,
                           const std::vector<bool>& continuous,
                           const std::vector<std::pair<int, int>>& overrides);

std::vector<NuisanceSpec> make_specs(const SpecPolicy& policy, const PatternIndex& index);

// Everything needed to run one estimator end to end; bootstrap replicates
// re-run this config on resampled data.
struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::dr;
  int treatment = 0;
  std::optional<int> treatment_prime;  // contrast when set
  WeightScheme scheme;
  bool survey_mode = false;
  bool complete_case = false;
  SpecPolicy policy;
  std::uint64_t seed = 0;  // sample-split fold stream
};

// Full pipeline: optional complete-case restriction, pattern derivation,
// nuisance fits, weight selection, estimator evaluation. For contrasts each
// arm restricts to the trials containing it and reruns the pipeline.
EstimateResult run_estimator(const Dataset& dataset, const EstimatorConfig& config);

// Restriction to trials with at least one record of arm a.
Dataset restrict_to_arm_trials(const Dataset& dataset, int a);

}  // namespace tmeta
