#pragma once

#include <cstdint>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/pipeline.hpp"
#include "tmeta/rng.hpp"

namespace tmeta {

enum class ResampleMode { stratified_by_source, survey_design };
enum class IntervalKind { percentile, normal_se };

struct BootstrapPlan {
  int replicates = 1000;
  std::uint64_t seed = 0;
  ResampleMode mode = ResampleMode::stratified_by_source;
  IntervalKind interval = IntervalKind::percentile;
  double level = 0.95;
  double max_failure_share = 0.05;
};

struct IntervalEstimate {
  double point = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int B_effective = 0;
  std::vector<double> replicate_values;  // successful replicates, index order
};

// One resampled dataset. stratified-by-source draws n_s records with
// replacement within every source; survey-design additionally resamples the
// target at the PSU level within each stratum, keeping PSU blocks intact and
// survey weights unchanged.
Dataset resample(const Dataset& dataset, ResampleMode mode, Rng& rng);

// Type-1 (inverse empirical CDF) quantile of the replicate estimates.
double empirical_quantile(std::vector<double> values, double p);

// Full-pipeline bootstrap: every replicate re-derives patterns, refits
// nuisances, recomputes weights, and re-evaluates the estimator. Failing
// replicates are dropped; more than max_failure_share failures is an error.
IntervalEstimate bootstrap(const Dataset& dataset, const EstimatorConfig& config,
                           const BootstrapPlan& plan, unsigned n_threads = 0);

}  // namespace tmeta
