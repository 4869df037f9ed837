#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/glm.hpp"

namespace tmeta {

// Model choices for one missingness pattern; every term must reference a
// covariate the pattern observes.
struct NuisanceSpec {
  ModelSpec outcome_spec;
  ModelSpec participation_spec;
  ModelSpec treatment_spec;
  bool participation_uses_survey_weights = false;
};

// Fitted outcome (g), treatment (e), and participation (p) models. Keys are
// (treatment index, pattern_id) for g and e, pattern_id for p. Participation
// predictions get clamped at use sites, never inside the stored fit.
struct NuisanceFits {
  std::map<std::pair<int, int>, FittedGlm> g_hat;
  std::map<std::pair<int, int>, FittedGlm> e_hat;
  std::map<int, FittedGlm> p_hat;

  const FittedGlm& g(int a, int k) const;
  const FittedGlm& e(int a, int k) const;
  const FittedGlm& p(int k) const;
  bool has(int a, int k) const;
};

// Participation-odds transport weights for one (treatment, pattern), aligned
// with the full record vector; zero off {S in pattern trials, A = a}.
struct TransportWeights {
  int treatment = 0;
  int pattern_id = 0;
  std::vector<double> values;
};

// Outcome regression for arm a on the pattern's trial records only.
FittedGlm fit_outcome_model(const Dataset& dataset, const PatternIndex& index, int k, int a,
                            const ModelSpec& spec);

// Trial-membership model on the pattern subsample, label I(S in pattern
// trials); target rows optionally carry their survey weights.
FittedGlm fit_participation_model(const Dataset& dataset, const PatternIndex& index, int k,
                                  const ModelSpec& spec, bool use_survey_weights);

// One-vs-rest treatment model on the pattern's trial records, label I(A = a).
FittedGlm fit_treatment_model(const Dataset& dataset, const PatternIndex& index, int k, int a,
                              const ModelSpec& spec);

// All fits needed to estimate the requested treatment arms.
NuisanceFits fit_nuisances(const Dataset& dataset, const PatternIndex& index,
                           const std::vector<NuisanceSpec>& specs_by_pattern,
                           const std::vector<int>& treatments);

TransportWeights compute_transport_weights(const NuisanceFits& fits, const Dataset& dataset,
                                           const PatternIndex& index, int k, int a);

// Per-trial outcome fits within a pattern plus the largest prediction gap
// between any two trials over the target covariate grid. Diagnostic only.
struct ExchangeabilityDiagnostic {
  bool applicable = false;
  std::string note;
  std::vector<int> trial_ids;
  std::vector<FittedGlm> per_trial_fits;
  double max_discrepancy = 0.0;
  int trial_a = 0, trial_b = 0;  // pair attaining the max
};

ExchangeabilityDiagnostic exchangeability_diagnostic(const Dataset& dataset,
                                                     const PatternIndex& index, int k, int a,
                                                     const ModelSpec& spec,
                                                     std::size_t max_grid = 1000);

}  // namespace tmeta
