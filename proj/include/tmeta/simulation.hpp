#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmeta/data.hpp"
#include "tmeta/pipeline.hpp"

namespace tmeta {

// Generating design for the simulation study: five correlated normal
// covariates, logistic selection into the trial pool, a three-trial
// multinomial split, marginally randomized binary treatment, and quadratic
// continuous potential-outcome means. Coefficients are fixed constants of the
// design; scenarios differ only in which covariates the trials fail to
// collect.
enum class MissingnessScenario {
  K2,  // trial 3 does not collect x5
  K3,  // trial 2 does not collect x4, trial 3 does not collect x5
};

struct SimScenario {
  int n_total = 2000;
  MissingnessScenario missingness = MissingnessScenario::K2;
  std::uint64_t rng_seed = 0;
};

// Covariate-conditional pieces of the generating process, exposed for tests.
double participation_target_probability(const double* x);  // Pr[S = 0 | X]
double outcome_mean_treated(const double* x);
double outcome_mean_control(const double* x, bool in_trial_2);

Dataset simulate_dataset(const SimScenario& scenario);

// Replicate r of a study draws from stream (rng_seed, r).
Dataset simulate_dataset_replicate(const SimScenario& scenario, std::uint64_t replicate);

// Monte Carlo value of E[Y^a | S = 0] via importance weighting by the target
// membership probability; the additive noise has mean zero and is skipped.
double true_psi(int a, std::size_t mc_n, std::uint64_t seed);

struct StudyCell {
  std::string estimator;  // Naive | GF | W | DR
  bool correct_outcome = false;
  bool quadratic_participation = false;
  bool complete_case = false;
};

struct StudyRow {
  StudyCell cell;
  int treatment = 0;
  double bias_times_sqrt_n = 0.0;
  double sd_times_sqrt_n = 0.0;
  int replicates = 0;
  int failed = 0;
  double mean_estimate = 0.0;
};

// The twelve-row grid of the simulation study.
std::vector<StudyCell> table1_grid();

// Runs `replicates` simulated datasets through every grid cell and both
// treatment arms. Replicate r uses stream (seed, r); rows come out in grid
// order and are independent of the thread count.
std::vector<StudyRow> run_study(const SimScenario& scenario, int replicates,
                                const std::vector<StudyCell>& grid, double true_psi0,
                                double true_psi1, unsigned n_threads = 0);

std::string study_rows_to_csv(const std::vector<StudyRow>& rows, MissingnessScenario scenario);

}  // namespace tmeta
