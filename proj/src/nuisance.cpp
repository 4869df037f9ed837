#include "tmeta/nuisance.hpp"

#include <algorithm>
#include <cmath>

namespace tmeta {

namespace {

void check_terms_observed(const ModelSpec& spec, const MissingnessPattern& pat,
                          const std::string& what) {
  for (const Term& t : spec.terms)
    if (!pat.observes(t.covariate))
      throw ConfigError("nuisance", what + " spec for pattern " + std::to_string(pat.pattern_id) +
                                        " references covariate " + std::to_string(t.covariate) +
                                        " outside the pattern's observed set");
}

std::vector<std::string> spec_labels(const ModelSpec& spec, const Dataset& dataset) {
  std::vector<std::string> labels;
  labels.reserve(spec.terms.size());
  for (const Term& t : spec.terms) labels.push_back(term_label(t, &dataset.covariate_names));
  return labels;
}

struct DesignRows {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

DesignRows assemble(const Dataset& dataset, const ModelSpec& spec,
                    const std::vector<std::size_t>& rows,
                    const std::vector<double>& responses, const std::vector<double>& weights) {
  DesignRows d;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(spec.n_features()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  d.w.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.X.row(static_cast<Eigen::Index>(i)) =
        build_design(spec, dataset.records[rows[i]].covariates).transpose();
    d.y[static_cast<Eigen::Index>(i)] = responses[i];
    d.w[static_cast<Eigen::Index>(i)] = weights[i];
  }
  return d;
}

}  // namespace

const FittedGlm& NuisanceFits::g(int a, int k) const {
  auto it = g_hat.find({a, k});
  if (it == g_hat.end())
    throw NumericError("nuisance", "missing outcome fit for (a=" + std::to_string(a) +
                                       ", k=" + std::to_string(k) + ")");
  return it->second;
}

const FittedGlm& NuisanceFits::e(int a, int k) const {
  auto it = e_hat.find({a, k});
  if (it == e_hat.end())
    throw NumericError("nuisance", "missing treatment fit for (a=" + std::to_string(a) +
                                       ", k=" + std::to_string(k) + ")");
  return it->second;
}

const FittedGlm& NuisanceFits::p(int k) const {
  auto it = p_hat.find(k);
  if (it == p_hat.end())
    throw NumericError("nuisance", "missing participation fit for pattern " + std::to_string(k));
  return it->second;
}

bool NuisanceFits::has(int a, int k) const {
  return g_hat.count({a, k}) > 0 && e_hat.count({a, k}) > 0 && p_hat.count(k) > 0;
}

FittedGlm fit_outcome_model(const Dataset& dataset, const PatternIndex& index, int k, int a,
                            const ModelSpec& spec) {
  const MissingnessPattern& pat = index.pattern(k);
  check_terms_observed(spec, pat, "outcome");

  std::vector<std::size_t> rows;
  std::vector<double> y;
  for (std::size_t i : pattern_subsample(dataset, index, k)) {
    const Record& r = dataset.records[i];
    if (r.is_target() || *r.treatment != a) continue;
    rows.push_back(i);
    y.push_back(*r.outcome);
  }
  if (rows.empty())
    throw DataError("nuisance",
                    "no records with treatment " + std::to_string(a) + " in pattern " +
                        std::to_string(k) +
                        ": positivity of treatment assignment (condition A3) fails");
  if (rows.size() < 2)
    throw DataError("nuisance", "need at least 2 records in pattern " + std::to_string(k) +
                                    " arm " + std::to_string(a) + " to fit an outcome model");
  std::vector<double> w(rows.size(), 1.0);
  auto d = assemble(dataset, spec, rows, y, w);
  auto labels = spec_labels(spec, dataset);
  return fit_glm(spec, d.X, d.y, d.w, &labels);
}

FittedGlm fit_participation_model(const Dataset& dataset, const PatternIndex& index, int k,
                                  const ModelSpec& spec, bool use_survey_weights) {
  const MissingnessPattern& pat = index.pattern(k);
  check_terms_observed(spec, pat, "participation");
  if (spec.family != Family::binomial_logit)
    throw ConfigError("nuisance", "participation model must be binomial-logit");

  std::vector<std::size_t> rows = pattern_subsample(dataset, index, k);
  std::vector<double> y, w;
  y.reserve(rows.size());
  w.reserve(rows.size());
  bool any_trial = false, any_target = false;
  for (std::size_t i : rows) {
    const Record& r = dataset.records[i];
    bool in_trials = !r.is_target();
    y.push_back(in_trials ? 1.0 : 0.0);
    w.push_back(in_trials ? 1.0 : (use_survey_weights ? r.survey_weight : 1.0));
    any_trial |= in_trials;
    any_target |= !in_trials;
  }
  if (!any_trial || !any_target)
    throw DataError("nuisance", "participation model for pattern " + std::to_string(k) +
                                    " needs both trial and target records");
  auto d = assemble(dataset, spec, rows, y, w);
  auto labels = spec_labels(spec, dataset);
  return fit_glm(spec, d.X, d.y, d.w, &labels);
}

FittedGlm fit_treatment_model(const Dataset& dataset, const PatternIndex& index, int k, int a,
                              const ModelSpec& spec) {
  const MissingnessPattern& pat = index.pattern(k);
  check_terms_observed(spec, pat, "treatment");
  if (spec.family != Family::binomial_logit)
    throw ConfigError("nuisance", "treatment model must be binomial-logit");

  std::vector<std::size_t> rows;
  std::vector<double> y;
  bool any_one = false, any_zero = false;
  for (std::size_t i : pattern_subsample(dataset, index, k)) {
    const Record& r = dataset.records[i];
    if (r.is_target()) continue;
    rows.push_back(i);
    double label = *r.treatment == a ? 1.0 : 0.0;
    y.push_back(label);
    (label == 1.0 ? any_one : any_zero) = true;
  }
  if (!any_one)
    throw DataError("nuisance",
                    "no records with treatment " + std::to_string(a) + " in pattern " +
                        std::to_string(k) +
                        ": positivity of treatment assignment (condition A3) fails");
  if (!any_zero) {
    // Every record in the pattern received arm a (single-arm trials used for
    // indirect comparisons): the assignment probability is identically one.
    FittedGlm certain;
    certain.spec.family = Family::binomial_logit;
    certain.coefficients = Eigen::VectorXd::Constant(1, 40.0);  // expit -> 1.0
    certain.converged = true;
    return certain;
  }
  std::vector<double> w(rows.size(), 1.0);
  auto d = assemble(dataset, spec, rows, y, w);
  auto labels = spec_labels(spec, dataset);
  return fit_glm(spec, d.X, d.y, d.w, &labels);
}

NuisanceFits fit_nuisances(const Dataset& dataset, const PatternIndex& index,
                           const std::vector<NuisanceSpec>& specs_by_pattern,
                           const std::vector<int>& treatments) {
  if (specs_by_pattern.size() != static_cast<std::size_t>(index.K()))
    throw ConfigError("nuisance", "one NuisanceSpec per pattern required");
  NuisanceFits fits;
  for (int k = 1; k <= index.K(); ++k) {
    const NuisanceSpec& spec = specs_by_pattern[static_cast<std::size_t>(k - 1)];
    fits.p_hat.emplace(k, fit_participation_model(dataset, index, k, spec.participation_spec,
                                                  spec.participation_uses_survey_weights));
    for (int a : treatments) {
      fits.g_hat.emplace(std::make_pair(a, k),
                         fit_outcome_model(dataset, index, k, a, spec.outcome_spec));
      fits.e_hat.emplace(std::make_pair(a, k),
                         fit_treatment_model(dataset, index, k, a, spec.treatment_spec));
    }
  }
  return fits;
}

TransportWeights compute_transport_weights(const NuisanceFits& fits, const Dataset& dataset,
                                           const PatternIndex& index, int k, int a) {
  const MissingnessPattern& pat = index.pattern(k);
  const FittedGlm& p_fit = fits.p(k);
  const FittedGlm& e_fit = fits.e(a, k);

  TransportWeights tw;
  tw.treatment = a;
  tw.pattern_id = k;
  tw.values.assign(dataset.records.size(), 0.0);
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const Record& r = dataset.records[i];
    if (r.is_target() || *r.treatment != a) continue;
    if (!std::binary_search(pat.trial_ids.begin(), pat.trial_ids.end(), r.source_id)) continue;
    double p_raw = p_fit.predict_record(r.covariates);
    double e_val = e_fit.predict_record(r.covariates);
    // Participation odds (1-p)/p with the denominator clamped away from zero;
    // the raw numerator keeps the weight exactly zero when p == 1.
    tw.values[i] = (1.0 - p_raw) / (e_val * clamp_probability(p_raw));
  }
  return tw;
}

ExchangeabilityDiagnostic exchangeability_diagnostic(const Dataset& dataset,
                                                     const PatternIndex& index, int k, int a,
                                                     const ModelSpec& spec, std::size_t max_grid) {
  const MissingnessPattern& pat = index.pattern(k);
  ExchangeabilityDiagnostic diag;
  diag.trial_ids = pat.trial_ids;
  if (pat.trial_ids.size() < 2) {
    diag.note = "not applicable: pattern " + std::to_string(k) + " has a single trial";
    return diag;
  }

  // One outcome fit per trial in the pattern.
  for (int trial : pat.trial_ids) {
    std::vector<std::size_t> rows;
    std::vector<double> y;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
      const Record& r = dataset.records[i];
      if (r.source_id != trial || *r.treatment != a) continue;
      rows.push_back(i);
      y.push_back(*r.outcome);
    }
    if (rows.size() < 2)
      throw DataError("nuisance", "trial " + std::to_string(trial) +
                                      " has fewer than 2 records in arm " + std::to_string(a));
    std::vector<double> w(rows.size(), 1.0);
    auto d = assemble(dataset, spec, rows, y, w);
    auto labels = spec_labels(spec, dataset);
    diag.per_trial_fits.push_back(fit_glm(spec, d.X, d.y, d.w, &labels));
  }

  // Evaluation grid: observed target covariate points, deterministically
  // strided down to max_grid.
  std::vector<std::size_t> target_rows;
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    if (dataset.records[i].is_target()) target_rows.push_back(i);
  std::vector<std::size_t> grid;
  if (target_rows.size() <= max_grid) {
    grid = target_rows;
  } else {
    for (std::size_t j = 0; j < max_grid; ++j)
      grid.push_back(target_rows[j * target_rows.size() / max_grid]);
  }

  diag.applicable = true;
  for (std::size_t i = 0; i + 1 < diag.per_trial_fits.size(); ++i) {
    for (std::size_t j = i + 1; j < diag.per_trial_fits.size(); ++j) {
      double worst = 0.0;
      for (std::size_t row : grid) {
        Eigen::VectorXd f = build_design(spec, dataset.records[row].covariates);
        worst = std::max(worst, std::abs(diag.per_trial_fits[i].predict(f) -
                                         diag.per_trial_fits[j].predict(f)));
      }
      if (worst >= diag.max_discrepancy) {
        diag.max_discrepancy = worst;
        diag.trial_a = pat.trial_ids[i];
        diag.trial_b = pat.trial_ids[j];
      }
    }
  }
  return diag;
}

}  // namespace tmeta
