#include "tmeta/simulation.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <sstream>

#include "tmeta/parallel.hpp"
#include "tmeta/rng.hpp"

namespace tmeta {

namespace {

constexpr int kDim = 5;
constexpr double kLog13 = 0.26236426446749106;  // log(1.3)
constexpr double kLog08 = -0.2231435513142097;  // log(0.8)

const Eigen::MatrixXd& covariance_cholesky() {
  static const Eigen::MatrixXd L = [] {
    Eigen::MatrixXd cov(kDim, kDim);
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j) cov(i, j) = std::pow(0.6, std::abs(i - j));
    return Eigen::MatrixXd(cov.llt().matrixL());
  }();
  return L;
}

void draw_covariates(Rng& rng, double* x) {
  Eigen::VectorXd z(kDim);
  for (int i = 0; i < kDim; ++i) z[i] = rng.normal();
  Eigen::VectorXd v = covariance_cholesky() * z;
  for (int i = 0; i < kDim; ++i) x[i] = v[i];
}

}  // namespace

double participation_target_probability(const double* x) {
  double lp = 1.0 + 0.2 * (x[0] + x[1] + x[2]) +
              0.1 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
  return 1.0 - expit(lp);
}

double outcome_mean_treated(const double* x) {
  return 1.0 + 0.2 * x[0] + 0.2 * x[1] + 0.1 * x[0] * x[0] + 0.1 * x[1] * x[1];
}

double outcome_mean_control(const double* x, bool in_trial_2) {
  double x4_term = in_trial_2 ? 0.0 : -0.2 * x[3];
  return -0.2 * x[0] + x4_term - 0.1 * x[0] * x[0] - 0.1 * x[1] * x[1];
}

Dataset simulate_dataset(const SimScenario& scenario) { return simulate_dataset_replicate(scenario, 0); }

Dataset simulate_dataset_replicate(const SimScenario& scenario, std::uint64_t replicate) {
  Dataset data;
  data.covariate_names = {"x1", "x2", "x3", "x4", "x5"};
  data.treatment_levels = {"0", "1"};
  data.records.reserve(static_cast<std::size_t>(scenario.n_total));

  Rng rng(scenario.rng_seed, streams::simulate, replicate);
  double x[kDim];
  for (int i = 0; i < scenario.n_total; ++i) {
    draw_covariates(rng, x);
    Record r;
    if (rng.uniform() < participation_target_probability(x)) {
      r.source_id = 0;
      r.covariates.assign(x, x + kDim);
    } else {
      // Trial membership is exchangeable across pool members: the multinomial
      // probabilities are evaluated on an independent covariate draw, so each
      // trial inherits the pooled covariate distribution and only the trial
      // sizes vary.
      double xa[kDim];
      draw_covariates(rng, xa);
      double theta = std::exp(kLog13 * (xa[0] + xa[1] + xa[2]));
      double zeta = std::exp(kLog08 * (xa[0] + xa[1] + xa[2]));
      double denom = 1.0 + theta + zeta;
      double u = rng.uniform();
      int s = u < theta / denom ? 1 : (u < (theta + zeta) / denom ? 2 : 3);
      r.source_id = s;
      int a = rng.bernoulli(0.5) ? 1 : 0;
      double eps1 = rng.normal();
      double eps0 = rng.normal();
      double y1 = outcome_mean_treated(x) + eps1;
      double y0 = outcome_mean_control(x, s == 2) + eps0;
      r.treatment = a;
      r.outcome = a == 1 ? y1 : y0;
      r.covariates.assign(x, x + kDim);
      // Systematic masks; x5 sits at index 4, x4 at index 3.
      if (scenario.missingness == MissingnessScenario::K2) {
        if (s == 3) r.covariates[4].reset();
      } else {
        if (s == 2) r.covariates[3].reset();
        if (s == 3) r.covariates[4].reset();
      }
    }
    data.records.push_back(std::move(r));
  }
  return data;
}

double true_psi(int a, std::size_t mc_n, std::uint64_t seed) {
  if (a != 0 && a != 1) throw ConfigError("simulation", "treatment must be 0 or 1");
  Rng rng(seed, streams::truth);
  double x[kDim];
  double weighted_sum = 0.0;
  double weight_total = 0.0;
  for (std::size_t i = 0; i < mc_n; ++i) {
    draw_covariates(rng, x);
    double w = participation_target_probability(x);
    double m = a == 1 ? outcome_mean_treated(x) : outcome_mean_control(x, false);
    weighted_sum += w * m;
    weight_total += w;
  }
  return weighted_sum / weight_total;
}

std::vector<StudyCell> table1_grid() {
  return {
      {"Naive", false, false, false},
      {"GF", true, false, false},
      {"GF", false, false, false},
      {"GF", true, false, true},
      {"W", false, true, false},
      {"W", false, false, false},
      {"W", false, true, true},
      {"DR", true, true, false},
      {"DR", false, true, false},
      {"DR", true, false, false},
      {"DR", false, false, false},
      {"DR", true, true, true},
  };
}

namespace {

// Nuisance fits shared across grid cells within one replicate; each variant
// of each model is fit at most once per dataset.
struct ReplicateContext {
  Dataset data;
  PatternIndex index;
  Eigen::VectorXd weights;
  std::map<std::tuple<bool, int, int>, FittedGlm> outcome;  // (quadratic, a, k)
  std::map<std::pair<bool, int>, FittedGlm> participation;  // (quadratic, k)
  std::map<std::pair<int, int>, FittedGlm> treatment;       // (a, k)

  explicit ReplicateContext(Dataset d) : data(std::move(d)) {
    index = derive_patterns(data);
    weights = sample_size_weights(index);
  }

  ModelSpec spec_for(int k, Family family, bool quadratic) const {
    return spec_for_pattern(index.pattern(k), family, quadratic, {}, {});
  }

  const FittedGlm& outcome_fit(bool quadratic, int a, int k) {
    auto key = std::make_tuple(quadratic, a, k);
    auto it = outcome.find(key);
    if (it == outcome.end())
      it = outcome
               .emplace(key, fit_outcome_model(data, index, k, a,
                                               spec_for(k, Family::gaussian_identity, quadratic)))
               .first;
    return it->second;
  }

  const FittedGlm& participation_fit(bool quadratic, int k) {
    auto key = std::make_pair(quadratic, k);
    auto it = participation.find(key);
    if (it == participation.end())
      it = participation
               .emplace(key, fit_participation_model(
                                 data, index, k, spec_for(k, Family::binomial_logit, quadratic),
                                 false))
               .first;
    return it->second;
  }

  const FittedGlm& treatment_fit(int a, int k) {
    auto key = std::make_pair(a, k);
    auto it = treatment.find(key);
    if (it == treatment.end())
      it = treatment
               .emplace(key,
                        fit_treatment_model(data, index, k, a,
                                            spec_for(k, Family::binomial_logit, false)))
               .first;
    return it->second;
  }

  double evaluate(const StudyCell& cell, int a) {
    if (cell.estimator == "Naive") return estimate_naive_pooled(data, a).value;
    NuisanceFits fits;
    bool needs_outcome = cell.estimator != "W";
    bool needs_transport = cell.estimator != "GF";
    for (int k = 1; k <= index.K(); ++k) {
      if (needs_outcome) fits.g_hat.emplace(std::make_pair(a, k), outcome_fit(cell.correct_outcome, a, k));
      if (needs_transport) {
        fits.p_hat.emplace(k, participation_fit(cell.quadratic_participation, k));
        fits.e_hat.emplace(std::make_pair(a, k), treatment_fit(a, k));
      }
    }
    if (cell.estimator == "GF")
      return estimate_g_formula(data, index, fits, a, weights, false).value;
    if (cell.estimator == "W")
      return estimate_weighting(data, index, fits, a, weights, false, false).value;
    if (cell.estimator == "DR") return estimate_dr(data, index, fits, a, weights, false, false).value;
    throw ConfigError("simulation", "unknown estimator label '" + cell.estimator + "'");
  }
};

}  // namespace

std::vector<StudyRow> run_study(const SimScenario& scenario, int replicates,
                                const std::vector<StudyCell>& grid, double true_psi0,
                                double true_psi1, unsigned n_threads) {
  if (replicates < 2) throw ConfigError("simulation", "run_study needs at least 2 replicates");

  const std::size_t cells = grid.size();
  std::vector<double> values(static_cast<std::size_t>(replicates) * cells * 2, 0.0);
  std::vector<char> ok(values.size(), 0);
  bool any_complete_case = false;
  for (const StudyCell& cell : grid) any_complete_case |= cell.complete_case;

  parallel_for(static_cast<std::size_t>(replicates), n_threads, [&](std::size_t rep) {
    ReplicateContext full(simulate_dataset_replicate(scenario, rep));
    std::optional<ReplicateContext> restricted;
    if (any_complete_case) restricted.emplace(complete_case_mode(full.data));
    for (std::size_t c = 0; c < cells; ++c) {
      ReplicateContext& ctx = grid[c].complete_case ? *restricted : full;
      for (int a = 0; a <= 1; ++a) {
        std::size_t slot = (rep * cells + c) * 2 + static_cast<std::size_t>(a);
        try {
          values[slot] = ctx.evaluate(grid[c], a);
          ok[slot] = 1;
        } catch (const Error&) {
          ok[slot] = 0;
        }
      }
    }
  });

  double sqrt_n = std::sqrt(static_cast<double>(scenario.n_total));
  std::vector<StudyRow> rows;
  for (std::size_t c = 0; c < cells; ++c) {
    for (int a = 0; a <= 1; ++a) {
      std::vector<double> estimates;
      estimates.reserve(static_cast<std::size_t>(replicates));
      for (std::size_t rep = 0; rep < static_cast<std::size_t>(replicates); ++rep) {
        std::size_t slot = (rep * cells + c) * 2 + static_cast<std::size_t>(a);
        if (ok[slot]) estimates.push_back(values[slot]);
      }
      StudyRow row;
      row.cell = grid[c];
      row.treatment = a;
      row.replicates = static_cast<int>(estimates.size());
      row.failed = replicates - row.replicates;
      if (estimates.size() < 2)
        throw NumericError("simulation", "fewer than 2 successful replicates for estimator " +
                                             grid[c].estimator);
      row.mean_estimate = mean(estimates);
      double truth = a == 1 ? true_psi1 : true_psi0;
      row.bias_times_sqrt_n = sqrt_n * (row.mean_estimate - truth);
      row.sd_times_sqrt_n = sqrt_n * sd(estimates);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string study_rows_to_csv(const std::vector<StudyRow>& rows, MissingnessScenario scenario) {
  std::ostringstream out;
  out << "K,estimator,correct_outcome,quadratic_participation,complete_case,a,bias_sqrt_n,"
         "sd_sqrt_n,reps\n";
  int K = scenario == MissingnessScenario::K2 ? 2 : 3;
  for (const StudyRow& r : rows) {
    out << K << ',' << r.cell.estimator << ',' << (r.cell.correct_outcome ? 1 : 0) << ','
        << (r.cell.quadratic_participation ? 1 : 0) << ',' << (r.cell.complete_case ? 1 : 0) << ','
        << r.treatment << ',' << fmt_double(r.bias_times_sqrt_n) << ','
        << fmt_double(r.sd_times_sqrt_n) << ',' << r.replicates << '\n';
  }
  return out.str();
}

}  // namespace tmeta
