#pragma once

// Shared test fixtures: small hand-built datasets, random finite populations,
// and constant-prediction nuisance stubs.

#include <cmath>
#include <optional>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/discrete_oracle.hpp"
#include "tmeta/nuisance.hpp"
#include "tmeta/rng.hpp"

namespace fixtures {

using namespace tmeta;

inline Record target_record(std::vector<double> x, double eta = 1.0, const char* stratum = nullptr,
                            const char* psu = nullptr) {
  Record r;
  r.source_id = 0;
  for (double v : x) r.covariates.emplace_back(v);
  r.survey_weight = eta;
  if (stratum) r.stratum_id = stratum;
  if (psu) r.psu_id = psu;
  return r;
}

inline Record trial_record(int source, int treatment, double outcome, std::vector<double> x,
                           const std::vector<int>& missing = {}) {
  Record r;
  r.source_id = source;
  r.treatment = treatment;
  r.outcome = outcome;
  for (double v : x) r.covariates.emplace_back(v);
  for (int j : missing) r.covariates[static_cast<std::size_t>(j)].reset();
  return r;
}

// Two complete trials, one covariate, binary treatment; K = 1.
inline Dataset tiny_dataset() {
  Dataset d;
  d.covariate_names = {"x1"};
  d.treatment_levels = {"0", "1"};
  d.records = {
      trial_record(1, 1, 2.0, {0.5}), trial_record(1, 0, 1.0, {-0.5}),
      trial_record(1, 1, 3.0, {1.0}), trial_record(1, 0, 0.5, {0.0}),
      trial_record(2, 1, 2.5, {0.2}), trial_record(2, 0, 0.8, {-0.2}),
      trial_record(2, 1, 2.2, {0.6}), trial_record(2, 0, 1.1, {0.4}),
      target_record({0.1}),           target_record({-0.3}),
      target_record({0.7}),
  };
  return d;
}

// Three trials over two covariates; trial 3 misses x2 -> K = 2 with
// patterns {1,2} (full) and {3}.
inline Dataset k2_shaped_dataset() {
  Dataset d;
  d.covariate_names = {"x1", "x2"};
  d.treatment_levels = {"0", "1"};
  d.records = {
      trial_record(1, 1, 1.8, {0.3, 0.1}),  trial_record(1, 0, -0.4, {-0.2, 0.5}),
      trial_record(1, 1, 2.4, {0.9, -0.3}), trial_record(1, 0, 0.2, {0.1, 0.2}),
      trial_record(2, 1, 2.0, {0.0, 0.4}),  trial_record(2, 0, -0.1, {0.5, -0.1}),
      trial_record(2, 1, 1.5, {-0.4, 0.6}), trial_record(2, 0, 0.3, {0.2, 0.0}),
      trial_record(3, 1, 2.2, {0.4, 0.0}, {1}), trial_record(3, 0, 0.1, {-0.1, 0.0}, {1}),
      trial_record(3, 1, 1.9, {0.7, 0.0}, {1}), trial_record(3, 0, -0.2, {0.3, 0.0}, {1}),
      target_record({0.2, 0.3}), target_record({-0.1, 0.1}),
      target_record({0.5, -0.2}), target_record({0.0, 0.0}),
  };
  return d;
}

// k2_shaped_dataset scaled up with jitter so bootstrap replicates keep at
// least two records per trial arm almost surely.
inline Dataset enlarged_k2_dataset(int copies = 8) {
  Dataset base = k2_shaped_dataset();
  Dataset d;
  d.covariate_names = base.covariate_names;
  d.treatment_levels = base.treatment_levels;
  Rng rng(404, streams::fixture);
  for (int c = 0; c < copies; ++c) {
    for (Record r : base.records) {
      for (auto& cov : r.covariates)
        if (cov.has_value()) cov = *cov + 0.05 * rng.normal();
      if (r.outcome.has_value()) r.outcome = *r.outcome + 0.1 * rng.normal();
      d.records.push_back(std::move(r));
    }
  }
  return d;
}

// Constant-prediction stubs. An intercept-only binomial fit with coefficient
// logit(p); logit(1) overflows, so "exactly one" uses an intercept of 40
// (expit(40) rounds to 1.0 in double precision).
inline FittedGlm stub_fit(Family family, double intercept) {
  FittedGlm fit;
  fit.spec.family = family;
  fit.coefficients = Eigen::VectorXd::Constant(1, intercept);
  fit.converged = true;
  fit.iterations = 0;
  return fit;
}

inline FittedGlm stub_probability_one() { return stub_fit(Family::binomial_logit, 40.0); }
inline FittedGlm stub_probability(double p) {
  return stub_fit(Family::binomial_logit, std::log(p / (1.0 - p)));
}
inline FittedGlm stub_constant_mean(double c) { return stub_fit(Family::gaussian_identity, c); }

// Arbitrary random finite population: masses and conditional means are
// unstructured, so only the per-pattern outcome/weighting equality holds.
inline DiscretePopulation random_population(std::uint64_t seed, int max_trials = 3) {
  Rng rng(seed, streams::population);
  DiscretePopulation pop;
  pop.covariate_names = {"x1", "x2"};
  pop.treatment_levels = {"0", "1"};

  int n_trials = 1 + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(max_trials)));
  // Trial 1 observes both covariates; later trials may drop x2.
  for (int s = 1; s <= n_trials; ++s) {
    if (s > 1 && rng.bernoulli(0.5))
      pop.observed_by_trial[s] = {0};
    else
      pop.observed_by_trial[s] = {0, 1};
  }

  std::vector<double> grid1 = {0.0, 1.0};
  std::vector<double> grid2 = {0.0, 1.0, 2.0};
  double total = 0.0;
  for (double x1 : grid1) {
    for (double x2 : grid2) {
      for (int s = 0; s <= n_trials; ++s) {
        for (int a = 0; a < (s == 0 ? 1 : 2); ++a) {
          PopulationCell c;
          c.x = {x1, x2};
          c.s = s;
          c.a = s == 0 ? -1 : a;
          c.mass = 0.05 + rng.uniform();
          c.mean_y = s == 0 ? 0.0 : rng.normal(0.0, 2.0);
          total += c.mass;
          pop.cells.push_back(std::move(c));
        }
      }
    }
  }
  for (PopulationCell& c : pop.cells) c.mass /= total;
  return pop;
}

// Population satisfying the identification conditions: the conditional
// outcome mean depends only on x1 (observed by every trial) and the
// treatment, so every pattern identifies the same target functional.
inline DiscretePopulation random_transportable_population(std::uint64_t seed) {
  Rng rng(seed, streams::population);
  DiscretePopulation pop;
  pop.covariate_names = {"x1", "x2"};
  pop.treatment_levels = {"0", "1"};

  int n_trials = 2 + static_cast<int>(rng.uniform_int(2));  // 2 or 3
  for (int s = 1; s <= n_trials; ++s)
    pop.observed_by_trial[s] = (s % 2 == 0) ? std::set<int>{0} : std::set<int>{0, 1};

  std::vector<double> grid1 = {0.0, 1.0, 2.0};
  std::vector<double> grid2 = {0.0, 1.0};
  std::map<std::pair<double, int>, double> mean_by_x1_a;
  for (double x1 : grid1)
    for (int a = 0; a < 2; ++a) mean_by_x1_a[{x1, a}] = rng.normal(0.0, 2.0);

  double total = 0.0;
  for (double x1 : grid1) {
    for (double x2 : grid2) {
      for (int s = 0; s <= n_trials; ++s) {
        for (int a = 0; a < (s == 0 ? 1 : 2); ++a) {
          PopulationCell c;
          c.x = {x1, x2};
          c.s = s;
          c.a = s == 0 ? -1 : a;
          c.mass = 0.05 + rng.uniform();
          c.mean_y = s == 0 ? 0.0 : mean_by_x1_a[{x1, a}];
          total += c.mass;
          pop.cells.push_back(std::move(c));
        }
      }
    }
  }
  for (PopulationCell& c : pop.cells) c.mass /= total;
  return pop;
}

}  // namespace fixtures
