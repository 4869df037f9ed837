#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/glm.hpp"
#include "tmeta/rng.hpp"

namespace tmeta {

// One support point of a finite joint law over (X, S, A) with E[Y | X, S, A].
// Target cells (s = 0) carry no treatment or outcome mean.
struct PopulationCell {
  std::vector<double> x;
  int s = 0;
  int a = -1;
  double mass = 0.0;
  double mean_y = 0.0;
};

// Finite-support population used as exact ground truth for the
// identification functionals. Pattern structure mirrors the data model:
// per-trial observed covariate sets grouped into maximal patterns.
struct DiscretePopulation {
  std::vector<PopulationCell> cells;
  std::vector<std::string> covariate_names;
  std::vector<std::string> treatment_levels;
  std::map<int, std::set<int>> observed_by_trial;

  std::vector<MissingnessPattern> patterns() const { return group_patterns(observed_by_trial); }
  void check() const;  // masses positive and summing to one, shapes consistent
};

// Exact potential-outcome mean for pattern k, treatment a, via the
// outcome-model representation: inner pooled conditional mean over the
// pattern's trial cells at each observed-covariate value, outer average over
// the target marginal. Positivity is verified by enumeration first.
double exact_psi_outcome(const DiscretePopulation& pop, int k, int a);

// The same functional through the weighting representation, enumerated
// independently: participation and treatment probabilities conditional on
// the pattern subsample, averaged with inverse-odds weights.
double exact_psi_weighting(const DiscretePopulation& pop, int k, int a);

// i.i.d. cells by mass; trial outcomes are mean_y plus Normal(0, noise_sd);
// target records keep covariates only; systematic masks follow the pattern
// structure. drawn_cells, when non-null, receives the sampled cell indices.
Dataset sample_from(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed,
                    double noise_sd, std::vector<std::size_t>* drawn_cells = nullptr);

// Same draw (identical cells for identical seeds), with covariates recoded as
// per-pattern cell indicators: one column per support point of each pattern's
// observed covariate projection. On the encoded data a degree-1 spec over a
// pattern's block (first level dropped) is saturated, so GLM fits recover
// exact conditional means.
Dataset sample_from_encoded(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed,
                            double noise_sd, std::vector<std::size_t>* drawn_cells = nullptr);

// Saturated model specs (per derived pattern, in pattern order) matching
// sample_from_encoded's column layout.
struct SaturatedSpecs {
  std::vector<std::vector<Term>> terms_by_pattern;  // drop-first indicator terms
};
SaturatedSpecs saturated_specs(const DiscretePopulation& pop);

// The population whose masses are the empirical frequencies of the drawn
// cells (conditional means kept; meaningful for noise-free samples). Cells
// never drawn are dropped.
DiscretePopulation empirical_population(const DiscretePopulation& pop,
                                        const std::vector<std::size_t>& drawn_cells);

}  // namespace tmeta
