#include "tmeta/pattern_weights.hpp"

#include <algorithm>
#include <cmath>

namespace tmeta {

WeightScheme parse_weight_scheme(const std::string& name) {
  WeightScheme s;
  if (name == "sample-size") {
    s.kind = WeightSchemeKind::sample_size;
  } else if (name == "inverse-variance") {
    s.kind = WeightSchemeKind::inverse_variance;
  } else if (name == "optimal") {
    s.kind = WeightSchemeKind::optimal;
  } else {
    throw ConfigError("weights", "unknown weight scheme '" + name +
                                     "' (expected sample-size, inverse-variance, optimal, or an "
                                     "explicit fixed vector)");
  }
  return s;
}

std::string weight_scheme_name(WeightSchemeKind kind) {
  switch (kind) {
    case WeightSchemeKind::sample_size: return "sample-size";
    case WeightSchemeKind::inverse_variance: return "inverse-variance";
    case WeightSchemeKind::optimal: return "optimal";
    case WeightSchemeKind::fixed: return "fixed";
  }
  return "unknown";
}

double OptimalWeightProblem::objective(const Eigen::VectorXd& weights) const {
  double t = 0.0;
  int K = static_cast<int>(V_hat.size());
  for (int k = 0; k < K; ++k) {
    t += weights[k] * weights[k] * V_hat[k];
    for (int j = 0; j < k; ++j) t += 2.0 * weights[k] * weights[j] * C_hat(k, j);
  }
  return t;
}

InfluenceTable influence_contributions(const Dataset& dataset, const PatternIndex& index,
                                       const NuisanceFits& fits, int a, double psi_hat) {
  InfluenceTable table;
  table.treatment = a;
  table.contributions.assign(static_cast<std::size_t>(index.K()),
                             std::vector<double>(dataset.records.size(), 0.0));
  double n0 = static_cast<double>(dataset.n_target());

  for (int k = 1; k <= index.K(); ++k) {
    const MissingnessPattern& pat = index.pattern(k);
    double gamma = (n0 + static_cast<double>(pat.n_k_star)) / n0;
    TransportWeights tw = compute_transport_weights(fits, dataset, index, k, a);
    const FittedGlm& g_fit = fits.g(a, k);
    auto& col = table.contributions[static_cast<std::size_t>(k - 1)];
    for (std::size_t i : pattern_subsample(dataset, index, k)) {
      const Record& r = dataset.records[i];
      if (r.is_target()) {
        col[i] = gamma * (g_fit.predict_record(r.covariates) - psi_hat);
      } else if (tw.values[i] != 0.0) {
        col[i] = gamma * tw.values[i] * (*r.outcome - g_fit.predict_record(r.covariates));
      }
    }
  }
  return table;
}

OptimalWeightProblem estimate_V_C(const InfluenceTable& table, const Dataset& dataset,
                                  const PatternIndex& index, int a, const NuisanceFits& fits,
                                  double psi_hat) {
  int K = index.K();
  OptimalWeightProblem problem;
  problem.V_hat = Eigen::VectorXd::Zero(K);
  problem.C_hat = Eigen::MatrixXd::Zero(K, K);

  for (int k = 1; k <= K; ++k) {
    const auto& col = table.contributions[static_cast<std::size_t>(k - 1)];
    auto sub = pattern_subsample(dataset, index, k);
    double ss = 0.0;
    for (std::size_t i : sub) ss += col[i] * col[i];
    problem.V_hat[k - 1] = ss / static_cast<double>(sub.size());
  }

  double n0 = static_cast<double>(dataset.n_target());
  double n = static_cast<double>(dataset.n_total());
  for (int k = 1; k <= K; ++k) {
    double gamma_k = (n0 + index.pattern(k).n_k_star) / n0;
    const FittedGlm& g_k = fits.g(a, k);
    for (int j = 1; j < k; ++j) {
      double gamma_j = (n0 + index.pattern(j).n_k_star) / n0;
      const FittedGlm& g_j = fits.g(a, j);
      double cross = 0.0;
      for (const Record& r : dataset.records) {
        if (!r.is_target()) continue;
        cross += (g_k.predict_record(r.covariates) - psi_hat) *
                 (g_j.predict_record(r.covariates) - psi_hat);
      }
      double c = gamma_k * gamma_j * (cross / n0) * (n0 / n);
      problem.C_hat(k - 1, j - 1) = c;
      problem.C_hat(j - 1, k - 1) = c;
    }
  }
  return problem;
}

namespace {

Eigen::VectorXd inverse_variance_from(const Eigen::VectorXd& V) {
  Eigen::VectorXd w(V.size());
  double total = 0.0;
  for (int k = 0; k < V.size(); ++k) {
    if (!(V[k] > 0.0))
      throw NumericError("weights", "inverse-variance weights need positive pattern variances");
    w[k] = 1.0 / V[k];
    total += w[k];
  }
  return w / total;
}

}  // namespace

void solve_optimal_weights(OptimalWeightProblem& problem) {
  int K = static_cast<int>(problem.V_hat.size());

  // KKT system in (w, lambda).
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(K + 1, K + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K + 1);
  for (int j = 0; j < K; ++j) {
    kkt(j, j) = 2.0 * problem.V_hat[j];
    for (int k = 0; k < K; ++k)
      if (k != j) kkt(j, k) = 2.0 * problem.C_hat(j, k);
    kkt(j, K) = -1.0;
    kkt(K, j) = 1.0;
  }
  rhs[K] = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) {
    problem.fell_back_to_inverse_variance = true;
    problem.warnings.push_back("optimal-weight KKT system is singular; falling back to "
                               "inverse-variance weights");
    problem.w = inverse_variance_from(problem.V_hat);
    problem.lambda = 0.0;
    problem.kkt_residual = 0.0;
    return;
  }

  Eigen::VectorXd solution = lu.solve(rhs);
  problem.w = solution.head(K);
  problem.lambda = solution[K];
  problem.kkt_residual = (kkt * solution - rhs).cwiseAbs().maxCoeff();
  if (problem.kkt_residual > 1e-10)
    throw NumericError("weights", "optimal-weight KKT residual " +
                                      fmt_double(problem.kkt_residual) + " exceeds 1e-10");

  for (int k = 0; k < K; ++k)
    if (problem.w[k] < 0.0) problem.has_negative_weights = true;
  if (problem.has_negative_weights)
    problem.warnings.push_back("optimal weights contain negative components (the constraint is "
                               "sum-to-one only); use project_simplex to clip");
}

PreliminaryRun preliminary_dr_run(const Dataset& dataset, const PatternIndex& index,
                                  const std::vector<NuisanceSpec>& specs, int a,
                                  bool survey_mode) {
  PreliminaryRun run;
  run.fits = fit_nuisances(dataset, index, specs, {a});
  Eigen::VectorXd w = sample_size_weights(index);
  run.estimate = estimate_dr(dataset, index, run.fits, a, w, false, survey_mode);
  run.psi_hat = run.estimate.value;
  return run;
}

Eigen::VectorXd sample_size_weights(const PatternIndex& index) {
  Eigen::VectorXd w(index.K());
  double total = 0.0;
  for (int k = 1; k <= index.K(); ++k) {
    w[k - 1] = static_cast<double>(index.pattern(k).n_k_star);
    total += w[k - 1];
  }
  if (!(total > 0.0)) throw DataError("weights", "no trial records");
  return w / total;
}

Eigen::VectorXd pattern_weights(const WeightScheme& scheme, const Dataset& dataset,
                                const PatternIndex& index, int a, const PreliminaryRun* preliminary,
                                OptimalWeightProblem* diagnostics,
                                std::vector<std::string>* warnings) {
  int K = index.K();
  switch (scheme.kind) {
    case WeightSchemeKind::fixed: {
      if (scheme.fixed.size() != K)
        throw ConfigError("weights", "fixed weight vector length does not match K");
      for (int k = 0; k < K; ++k)
        if (scheme.fixed[k] < 0.0)
          throw ConfigError("weights", "fixed weights must be nonnegative");
      if (std::abs(scheme.fixed.sum() - 1.0) > 1e-12)
        throw ConfigError("weights", "fixed weights must sum to 1");
      return scheme.fixed;
    }
    case WeightSchemeKind::sample_size:
      return sample_size_weights(index);
    case WeightSchemeKind::inverse_variance:
    case WeightSchemeKind::optimal: {
      if (preliminary == nullptr)
        throw ConfigError("weights", weight_scheme_name(scheme.kind) +
                                         " weights need a preliminary doubly robust run");
      InfluenceTable table =
          influence_contributions(dataset, index, preliminary->fits, a, preliminary->psi_hat);
      OptimalWeightProblem problem =
          estimate_V_C(table, dataset, index, a, preliminary->fits, preliminary->psi_hat);
      if (scheme.kind == WeightSchemeKind::inverse_variance) {
        if (diagnostics) *diagnostics = problem;
        return inverse_variance_from(problem.V_hat);
      }
      solve_optimal_weights(problem);
      // The KKT solve enforces the sum constraint to its residual tolerance;
      // rescale so downstream sum-to-one checks see an exact unit sum.
      Eigen::VectorXd w = problem.w / problem.w.sum();
      if (problem.has_negative_weights && scheme.project_simplex) {
        for (int k = 0; k < K; ++k) w[k] = std::max(w[k], 0.0);
        double total = w.sum();
        if (!(total > 0.0))
          throw NumericError("weights", "simplex projection collapsed all weights to zero");
        w /= total;
        problem.warnings.push_back("negative optimal weights projected onto the simplex");
      }
      if (warnings)
        warnings->insert(warnings->end(), problem.warnings.begin(), problem.warnings.end());
      if (diagnostics) *diagnostics = problem;
      return w;
    }
  }
  throw ConfigError("weights", "unhandled weight scheme");
}

}  // namespace tmeta
