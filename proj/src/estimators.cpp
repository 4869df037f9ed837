#include "tmeta/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tmeta/rng.hpp"

namespace tmeta {

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::g_formula: return "g-formula";
    case EstimatorKind::weighting: return "weighting";
    case EstimatorKind::weighting_normalized: return "weighting-normalized";
    case EstimatorKind::dr: return "dr";
    case EstimatorKind::dr_normalized: return "dr-normalized";
    case EstimatorKind::dr_sample_split: return "dr-sample-split";
    case EstimatorKind::naive_pooled: return "naive-pooled";
  }
  return "unknown";
}

void check_pattern_weights(const Eigen::VectorXd& w, int K) {
  if (w.size() != K)
    throw ConfigError("estimators", "pattern weight vector has length " +
                                        std::to_string(w.size()) + " but K = " + std::to_string(K));
  if (std::abs(w.sum() - 1.0) > 1e-12)
    throw ConfigError("estimators", "pattern weights must sum to 1");
}

namespace {

struct TargetNormalizer {
  double denom = 0.0;  // n0 (plain) or sum of eta over target (survey)
};

TargetNormalizer target_normalizer(const Dataset& dataset, bool survey_mode) {
  TargetNormalizer t;
  for (const Record& r : dataset.records)
    if (r.is_target()) t.denom += survey_mode ? r.survey_weight : 1.0;
  if (!(t.denom > 0.0)) throw DataError("estimators", "no target records");
  return t;
}

double gamma_hat(const Dataset& dataset, const MissingnessPattern& pat) {
  double n0 = static_cast<double>(dataset.n_target());
  return (n0 + static_cast<double>(pat.n_k_star)) / n0;
}

std::string provenance(const NuisanceFits& fits, int a, int k, bool with_outcome,
                       bool with_transport) {
  auto describe = [](const FittedGlm& f) {
    std::string fam = f.spec.family == Family::gaussian_identity ? "gaussian" : "binomial";
    int deg2 = 0;
    for (const Term& t : f.spec.terms)
      if (t.degree == 2) ++deg2;
    return fam + "(" + std::to_string(f.spec.terms.size()) + " terms, " + std::to_string(deg2) +
           " quadratic)";
  };
  std::string out = "k=" + std::to_string(k);
  if (with_outcome) out += " outcome=" + describe(fits.g(a, k));
  if (with_transport)
    out += " participation=" + describe(fits.p(k)) + " treatment=" + describe(fits.e(a, k));
  return out;
}

enum class Formula { g_formula, weighting, dr };

// Shared per-pattern evaluation of the three plug-in estimators. The sums run
// over the pattern subsample only; transport weights vanish off it anyway.
EstimateResult combine_patterns(const Dataset& dataset, const PatternIndex& index,
                                const NuisanceFits& fits, int a,
                                const Eigen::VectorXd& pattern_weights, Formula formula,
                                bool normalized, bool survey_mode) {
  check_pattern_weights(pattern_weights, index.K());
  TargetNormalizer norm = target_normalizer(dataset, survey_mode);

  EstimateResult result;
  result.estimand.treatment = a;
  result.survey_mode = survey_mode;
  result.pattern_weights = pattern_weights;

  const bool needs_outcome = formula != Formula::weighting;
  const bool needs_transport = formula != Formula::g_formula;

  for (int k = 1; k <= index.K(); ++k) {
    const MissingnessPattern& pat = index.pattern(k);
    const FittedGlm* g_fit = needs_outcome ? &fits.g(a, k) : nullptr;
    TransportWeights tw;
    if (needs_transport) tw = compute_transport_weights(fits, dataset, index, k, a);

    PatternEstimate pe;
    pe.pattern_id = k;
    pe.n_k_star = pat.n_k_star;
    pe.gamma_hat = gamma_hat(dataset, pat);

    double sum_target = 0.0;   // sum of (eta) * g over target records
    double sum_ipw = 0.0;      // sum of o_a * Y over trial records
    double sum_resid = 0.0;    // sum of o_a * (Y - g)
    double sum_o = 0.0;        // sum of o_a
    for (std::size_t i : pattern_subsample(dataset, index, k)) {
      const Record& r = dataset.records[i];
      double term = 0.0;
      if (r.is_target()) {
        if (needs_outcome) {
          double eta = survey_mode ? r.survey_weight : 1.0;
          double g_val = g_fit->predict_record(r.covariates);
          sum_target += eta * g_val;
          term = eta * g_val;
        }
      } else if (needs_transport) {
        double o = tw.values[i];
        if (o != 0.0) {
          double y = *r.outcome;
          sum_ipw += o * y;
          sum_o += o;
          if (formula == Formula::weighting) {
            term = o * y;
          } else {
            double g_val = g_fit->predict_record(r.covariates);
            sum_resid += o * (y - g_val);
            term = o * (y - g_val);
          }
        }
      }
      pe.term_values.push_back(term);
    }

    switch (formula) {
      case Formula::g_formula:
        pe.psi_k_hat = sum_target / norm.denom;
        break;
      case Formula::weighting:
        if (normalized) {
          if (sum_o <= 0.0)
            throw NumericError("estimators", "normalized weighting is degenerate: transport "
                                             "weights sum to zero in pattern " + std::to_string(k));
          pe.psi_k_hat = sum_ipw / sum_o;
        } else {
          pe.psi_k_hat = sum_ipw / norm.denom;
        }
        break;
      case Formula::dr:
        if (normalized) {
          if (sum_o <= 0.0)
            throw NumericError("estimators", "normalized dr is degenerate: transport weights "
                                             "sum to zero in pattern " + std::to_string(k));
          pe.psi_k_hat = sum_resid / sum_o + sum_target / norm.denom;
        } else {
          pe.psi_k_hat = (sum_resid + sum_target) / norm.denom;
        }
        break;
    }

    result.per_pattern.push_back(std::move(pe));
    result.model_provenance.push_back(provenance(fits, a, k, needs_outcome, needs_transport));
  }

  result.value = 0.0;
  for (int k = 0; k < index.K(); ++k)
    result.value += pattern_weights[k] * result.per_pattern[static_cast<std::size_t>(k)].psi_k_hat;
  return result;
}

}  // namespace

EstimateResult estimate_g_formula(const Dataset& dataset, const PatternIndex& index,
                                  const NuisanceFits& fits, int a,
                                  const Eigen::VectorXd& pattern_weights, bool survey_mode) {
  EstimateResult r = combine_patterns(dataset, index, fits, a, pattern_weights,
                                      Formula::g_formula, false, survey_mode);
  r.kind = EstimatorKind::g_formula;
  return r;
}

EstimateResult estimate_weighting(const Dataset& dataset, const PatternIndex& index,
                                  const NuisanceFits& fits, int a,
                                  const Eigen::VectorXd& pattern_weights, bool normalized,
                                  bool survey_mode) {
  EstimateResult r = combine_patterns(dataset, index, fits, a, pattern_weights, Formula::weighting,
                                      normalized, survey_mode);
  r.kind = normalized ? EstimatorKind::weighting_normalized : EstimatorKind::weighting;
  return r;
}

EstimateResult estimate_dr(const Dataset& dataset, const PatternIndex& index,
                           const NuisanceFits& fits, int a,
                           const Eigen::VectorXd& pattern_weights, bool normalized,
                           bool survey_mode) {
  EstimateResult r = combine_patterns(dataset, index, fits, a, pattern_weights, Formula::dr,
                                      normalized, survey_mode);
  r.kind = normalized ? EstimatorKind::dr_normalized : EstimatorKind::dr;
  return r;
}

namespace {

// Fold assignment stratified by (source, treatment); deterministic in seed.
std::vector<int> make_folds(const Dataset& dataset, std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const Record& r = dataset.records[i];
    int arm = r.is_target() ? -1 : *r.treatment;
    strata[{r.source_id, arm}].push_back(i);
  }
  std::vector<int> fold(dataset.records.size(), 0);
  Rng rng(seed, streams::sample_split);
  for (auto& [key, rows] : strata) {
    // Fisher-Yates, then alternate halves so sizes differ by at most one.
    for (std::size_t i = rows.size(); i > 1; --i) {
      std::size_t j = rng.uniform_int(i);
      std::swap(rows[i - 1], rows[j]);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = static_cast<int>(i % 2);
  }
  return fold;
}

Dataset subset_records(const Dataset& dataset, const std::vector<int>& fold, int which) {
  Dataset out;
  out.covariate_names = dataset.covariate_names;
  out.treatment_levels = dataset.treatment_levels;
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    if (fold[i] == which) out.records.push_back(dataset.records[i]);
  return out;
}

void check_fold_support(const Dataset& fold_data, const Dataset& full, int a) {
  std::map<int, int> arm_counts;
  int targets = 0;
  for (const Record& r : fold_data.records) {
    if (r.is_target())
      ++targets;
    else if (*r.treatment == a)
      ++arm_counts[r.source_id];
  }
  if (targets < 2)
    throw DataError("estimators", "sample-split fold has fewer than 2 target records; "
                                  "sample splitting needs a larger dataset");
  for (int trial : full.trial_ids()) {
    if (arm_counts[trial] < 2)
      throw DataError("estimators",
                      "sample-split fold has fewer than 2 records for trial " +
                          std::to_string(trial) + " arm " + std::to_string(a) +
                          "; sample splitting needs a larger dataset");
  }
}

// One cross-fitting direction: nuisances from fit_data, evaluation on
// eval_data, target normalizer = target count within eval_data.
double dr_on_fold(const Dataset& eval_data, const Dataset& fit_data,
                  const std::vector<NuisanceSpec>& specs, int a,
                  const Eigen::VectorXd& pattern_weights,
                  std::vector<PatternEstimate>* per_pattern) {
  PatternIndex fit_index = derive_patterns(fit_data);
  PatternIndex eval_index = derive_patterns(eval_data);
  if (fit_index.K() != eval_index.K())
    throw DataError("estimators", "folds disagree on the pattern structure");
  NuisanceFits fits = fit_nuisances(fit_data, fit_index, specs, {a});

  double value = 0.0;
  double n0_eval = static_cast<double>(eval_data.n_target());
  for (int k = 1; k <= eval_index.K(); ++k) {
    TransportWeights tw = compute_transport_weights(fits, eval_data, eval_index, k, a);
    const FittedGlm& g_fit = fits.g(a, k);
    PatternEstimate pe;
    pe.pattern_id = k;
    pe.n_k_star = eval_index.pattern(k).n_k_star;
    pe.gamma_hat = gamma_hat(eval_data, eval_index.pattern(k));
    double sum = 0.0;
    for (std::size_t i : pattern_subsample(eval_data, eval_index, k)) {
      const Record& r = eval_data.records[i];
      double term = 0.0;
      if (r.is_target()) {
        term = g_fit.predict_record(r.covariates);
      } else if (tw.values[i] != 0.0) {
        term = tw.values[i] * (*r.outcome - g_fit.predict_record(r.covariates));
      }
      sum += term;
      pe.term_values.push_back(term);
    }
    pe.psi_k_hat = sum / n0_eval;
    value += pattern_weights[k - 1] * pe.psi_k_hat;
    if (per_pattern) per_pattern->push_back(std::move(pe));
  }
  return value;
}

}  // namespace

EstimateResult estimate_dr_sample_split(const Dataset& dataset, const PatternIndex& index,
                                        const std::vector<NuisanceSpec>& specs, int a,
                                        const Eigen::VectorXd& pattern_weights, std::uint64_t seed,
                                        const std::vector<int>* fold_override) {
  check_pattern_weights(pattern_weights, index.K());
  std::vector<int> fold = fold_override ? *fold_override : make_folds(dataset, seed);
  if (fold.size() != dataset.records.size())
    throw ConfigError("estimators", "fold assignment length mismatch");

  Dataset fold0 = subset_records(dataset, fold, 0);
  Dataset fold1 = subset_records(dataset, fold, 1);
  check_fold_support(fold0, dataset, a);
  check_fold_support(fold1, dataset, a);

  EstimateResult result;
  result.estimand.treatment = a;
  result.kind = EstimatorKind::dr_sample_split;
  result.pattern_weights = pattern_weights;

  std::vector<PatternEstimate> pp1, pp2;
  double psi1 = dr_on_fold(fold0, fold1, specs, a, pattern_weights, &pp1);
  double psi2 = dr_on_fold(fold1, fold0, specs, a, pattern_weights, &pp2);
  result.value = 0.5 * (psi1 + psi2);

  for (int k = 0; k < index.K(); ++k) {
    PatternEstimate pe;
    pe.pattern_id = k + 1;
    pe.n_k_star = index.pattern(k + 1).n_k_star;
    pe.gamma_hat = gamma_hat(dataset, index.pattern(k + 1));
    pe.psi_k_hat = 0.5 * (pp1[static_cast<std::size_t>(k)].psi_k_hat +
                          pp2[static_cast<std::size_t>(k)].psi_k_hat);
    result.per_pattern.push_back(std::move(pe));
  }
  return result;
}

EstimateResult estimate_naive_pooled(const Dataset& dataset, int a) {
  double sum = 0.0;
  long count = 0;
  for (const Record& r : dataset.records) {
    if (r.is_target() || *r.treatment != a) continue;
    sum += *r.outcome;
    ++count;
  }
  if (count == 0)
    throw DataError("estimators",
                    "no trial records with treatment " + std::to_string(a) + " for the naive "
                    "pooled estimator");
  EstimateResult result;
  result.estimand.treatment = a;
  result.kind = EstimatorKind::naive_pooled;
  result.value = sum / static_cast<double>(count);
  result.pattern_weights = Eigen::VectorXd();
  return result;
}

Dataset complete_case_mode(const Dataset& dataset) {
  std::size_t p = dataset.covariate_names.size();
  std::set<int> complete_trials;
  std::map<int, std::size_t> observed_count;
  for (const Record& r : dataset.records) {
    if (r.is_target()) continue;
    if (observed_count.count(r.source_id)) continue;
    std::size_t obs = 0;
    for (const auto& c : r.covariates)
      if (c.has_value()) ++obs;
    observed_count[r.source_id] = obs;
    if (obs == p) complete_trials.insert(r.source_id);
  }
  if (complete_trials.empty())
    throw DataError("estimators", "complete-case mode impossible: no trial observes every "
                                  "covariate");
  Dataset out;
  out.covariate_names = dataset.covariate_names;
  out.treatment_levels = dataset.treatment_levels;
  for (const Record& r : dataset.records)
    if (r.is_target() || complete_trials.count(r.source_id)) out.records.push_back(r);
  return out;
}

}  // namespace tmeta
