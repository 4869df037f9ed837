#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/estimators.hpp"
#include "tmeta/nuisance.hpp"

namespace tmeta {

enum class WeightSchemeKind { sample_size, inverse_variance, optimal, fixed };

struct WeightScheme {
  WeightSchemeKind kind = WeightSchemeKind::sample_size;
  Eigen::VectorXd fixed;         // used by WeightSchemeKind::fixed
  bool project_simplex = false;  // clip negatives and renormalize (optimal)
};

WeightScheme parse_weight_scheme(const std::string& name);
std::string weight_scheme_name(WeightSchemeKind kind);

// Plug-in influence contributions per (pattern, record); zero outside the
// pattern subsample.
struct InfluenceTable {
  int treatment = 0;
  std::vector<std::vector<double>> contributions;  // [k-1][record]
};

// Quadratic objective of the weight choice: w' diag(V) w plus the off-diagonal
// covariance cross terms, minimized subject to sum(w) = 1.
struct OptimalWeightProblem {
  Eigen::VectorXd V_hat;
  Eigen::MatrixXd C_hat;  // symmetric, zero diagonal
  Eigen::VectorXd w;      // output
  double lambda = 0.0;    // output
  double kkt_residual = 0.0;
  bool fell_back_to_inverse_variance = false;
  bool has_negative_weights = false;
  std::vector<std::string> warnings;

  double objective(const Eigen::VectorXd& weights) const;
};

InfluenceTable influence_contributions(const Dataset& dataset, const PatternIndex& index,
                                       const NuisanceFits& fits, int a, double psi_hat);

// V_k is the mean squared contribution over the pattern subsample; C_kj pairs
// the outcome-model deviations of patterns k and j over target records, with
// the gamma factors and the n0/n rescaling placing everything on the
// per-composite-observation scale.
OptimalWeightProblem estimate_V_C(const InfluenceTable& table, const Dataset& dataset,
                                  const PatternIndex& index, int a, const NuisanceFits& fits,
                                  double psi_hat);

// Solves the stationarity system {2 w_j V_j + 2 sum_{k!=j} w_k C_kj = lambda,
// sum w = 1}. Singular systems fall back to inverse-variance weights.
void solve_optimal_weights(OptimalWeightProblem& problem);

// Preliminary pass feeding the variance-based schemes: sample-size-weighted
// doubly robust estimate plus its fits.
struct PreliminaryRun {
  NuisanceFits fits;
  double psi_hat = 0.0;
  EstimateResult estimate;
};

PreliminaryRun preliminary_dr_run(const Dataset& dataset, const PatternIndex& index,
                                  const std::vector<NuisanceSpec>& specs, int a, bool survey_mode);

Eigen::VectorXd sample_size_weights(const PatternIndex& index);

// Dispatch over the schemes; inverse-variance and optimal need the
// preliminary run, the others ignore it. diagnostics, when non-null, receives
// the solved problem for the optimal scheme.
Eigen::VectorXd pattern_weights(const WeightScheme& scheme, const Dataset& dataset,
                                const PatternIndex& index, int a, const PreliminaryRun* preliminary,
                                OptimalWeightProblem* diagnostics = nullptr,
                                std::vector<std::string>* warnings = nullptr);

}  // namespace tmeta
