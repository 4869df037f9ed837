#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/nuisance.hpp"

namespace tmeta {

enum class EstimatorKind {
  g_formula,
  weighting,
  weighting_normalized,
  dr,
  dr_normalized,
  dr_sample_split,
  naive_pooled,
};

std::string estimator_name(EstimatorKind kind);

struct PatternEstimate {
  int pattern_id = 0;
  double psi_k_hat = 0.0;
  double gamma_hat = 0.0;  // (n0 + n_k*) / n0
  int n_k_star = 0;
  // Per-record integrand over the pattern subsample, in subsample order;
  // psi_k_hat is their (possibly weighted) average.
  std::vector<double> term_values;
};

struct Estimand {
  int treatment = 0;
  std::optional<int> treatment_prime;  // set for contrasts

  bool is_contrast() const { return treatment_prime.has_value(); }
};

struct EstimateResult {
  Estimand estimand;
  EstimatorKind kind = EstimatorKind::dr;
  double value = 0.0;
  std::vector<PatternEstimate> per_pattern;
  Eigen::VectorXd pattern_weights;
  bool complete_case = false;
  bool survey_mode = false;
  // Model-spec provenance, one description per pattern.
  std::vector<std::string> model_provenance;
  std::vector<std::string> warnings;
  // Contrasts carry the two per-arm results.
  std::vector<EstimateResult> components;
};

// Potential-outcome-mean estimators for treatment a. Plain mode averages over
// the n0 target records; survey mode replaces target averages with
// survey-weight eta-weighted averages.
EstimateResult estimate_g_formula(const Dataset& dataset, const PatternIndex& index,
                                  const NuisanceFits& fits, int a,
                                  const Eigen::VectorXd& pattern_weights, bool survey_mode);

EstimateResult estimate_weighting(const Dataset& dataset, const PatternIndex& index,
                                  const NuisanceFits& fits, int a,
                                  const Eigen::VectorXd& pattern_weights, bool normalized,
                                  bool survey_mode);

EstimateResult estimate_dr(const Dataset& dataset, const PatternIndex& index,
                           const NuisanceFits& fits, int a,
                           const Eigen::VectorXd& pattern_weights, bool normalized,
                           bool survey_mode);

// Two-fold cross-fitting: fit nuisances on one fold, evaluate the doubly
// robust formula on the other, swap, average. Folds are stratified by
// (source, treatment) with the target as its own stratum. fold_override, when
// given, assigns records to folds 0/1 directly (testing hook).
EstimateResult estimate_dr_sample_split(const Dataset& dataset, const PatternIndex& index,
                                        const std::vector<NuisanceSpec>& specs, int a,
                                        const Eigen::VectorXd& pattern_weights, std::uint64_t seed,
                                        const std::vector<int>* fold_override = nullptr);

// Average outcome among treated trial records, ignoring covariates and the
// target sample.
EstimateResult estimate_naive_pooled(const Dataset& dataset, int a);

// Restriction to trials observing every covariate; downstream estimators see
// a single full pattern.
Dataset complete_case_mode(const Dataset& dataset);

// Verifies sum-to-one and the per-pattern combination identity.
void check_pattern_weights(const Eigen::VectorXd& w, int K);

}  // namespace tmeta
