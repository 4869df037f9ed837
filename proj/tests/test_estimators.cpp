#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "tmeta/estimators.hpp"
#include "tmeta/pipeline.hpp"

using namespace tmeta;
using namespace fixtures;

namespace {

Eigen::VectorXd weights1() { return Eigen::VectorXd::Ones(1); }

SpecPolicy linear_policy() {
  SpecPolicy p;
  p.outcome_quadratic = false;
  p.participation_quadratic = false;
  return p;
}

NuisanceFits real_fits(const Dataset& d, const PatternIndex& index, int a,
                       const SpecPolicy& policy) {
  return fit_nuisances(d, index, make_specs(policy, index), {a});
}

}  // namespace

TEST_CASE("constant outcome model makes the g-formula constant for any weights") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits;
  for (int k = 1; k <= 2; ++k) fits.g_hat.emplace(std::make_pair(1, k), stub_constant_mean(3.25));
  Eigen::VectorXd w(2);
  w << 0.4, 0.6;
  EstimateResult r = estimate_g_formula(d, index, fits, 1, w, false);
  CHECK(r.value == doctest::Approx(3.25).epsilon(1e-12));

  w << 0.9, 0.1;
  CHECK(estimate_g_formula(d, index, fits, 1, w, false).value ==
        doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("normalized weighting of a constant outcome is exactly the constant") {
  Dataset d = tiny_dataset();
  for (auto& r : d.records)
    if (!r.is_target()) r.outcome = 7.5;
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  EstimateResult r = estimate_weighting(d, index, fits, 1, weights1(), true, false);
  CHECK(r.value == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("normalized weighting stays within the outcome range") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  Eigen::VectorXd w = sample_size_weights(index);
  EstimateResult r = estimate_weighting(d, index, fits, 1, w, true, false);
  double lo = 1e300, hi = -1e300;
  for (const auto& rec : d.records) {
    if (rec.is_target() || *rec.treatment != 1) continue;
    lo = std::min(lo, *rec.outcome);
    hi = std::max(hi, *rec.outcome);
  }
  CHECK(r.value >= lo - 1e-12);
  CHECK(r.value <= hi + 1e-12);
}

TEST_CASE("reduction identities: p=1 collapses DR to g-formula, g=0 to weighting") {
  for (bool survey : {false, true}) {
    Dataset d = k2_shaped_dataset();
    if (survey)
      for (auto& r : d.records)
        if (r.is_target()) r.survey_weight = 1.0 + 0.5 * static_cast<double>(r.covariates[0].value() > 0);
    PatternIndex index = derive_patterns(d);
    NuisanceFits fits = real_fits(d, index, 1, linear_policy());
    Eigen::VectorXd w = sample_size_weights(index);

    NuisanceFits p_one = fits;
    p_one.p_hat.clear();
    for (int k = 1; k <= index.K(); ++k) p_one.p_hat.emplace(k, stub_probability_one());
    double dr_value = estimate_dr(d, index, p_one, 1, w, false, survey).value;
    double gf_value = estimate_g_formula(d, index, fits, 1, w, survey).value;
    CHECK(std::abs(dr_value - gf_value) <= 1e-12);

    NuisanceFits g_zero = fits;
    g_zero.g_hat.clear();
    for (int k = 1; k <= index.K(); ++k)
      g_zero.g_hat.emplace(std::make_pair(1, k), stub_constant_mean(0.0));
    double dr0 = estimate_dr(d, index, g_zero, 1, w, false, survey).value;
    double w0 = estimate_weighting(d, index, fits, 1, w, false, survey).value;
    CHECK(std::abs(dr0 - w0) <= 1e-12);
  }
}

TEST_CASE("survey mode with unit weights equals plain mode for every estimator") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  Eigen::VectorXd w = sample_size_weights(index);

  CHECK(std::abs(estimate_g_formula(d, index, fits, 1, w, true).value -
                 estimate_g_formula(d, index, fits, 1, w, false).value) <= 1e-12);
  for (bool normalized : {false, true}) {
    CHECK(std::abs(estimate_weighting(d, index, fits, 1, w, normalized, true).value -
                   estimate_weighting(d, index, fits, 1, w, normalized, false).value) <= 1e-12);
    CHECK(std::abs(estimate_dr(d, index, fits, 1, w, normalized, true).value -
                   estimate_dr(d, index, fits, 1, w, normalized, false).value) <= 1e-12);
  }
}

TEST_CASE("g-formula survey mode cancels any constant weight scale") {
  Dataset d = k2_shaped_dataset();
  Dataset scaled = d;
  for (auto& r : scaled.records)
    if (r.is_target()) r.survey_weight = 2.5;
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  Eigen::VectorXd w = sample_size_weights(index);
  double plain = estimate_g_formula(d, index, fits, 1, w, false).value;
  double survey = estimate_g_formula(scaled, index, fits, 1, w, true).value;
  CHECK(std::abs(plain - survey) <= 1e-12);
}

TEST_CASE("combined value is the weighted combination of per-pattern values") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  Eigen::VectorXd w(2);
  w << 0.25, 0.75;
  for (auto kind : {EstimatorKind::g_formula, EstimatorKind::weighting, EstimatorKind::dr}) {
    EstimateResult r = kind == EstimatorKind::g_formula
                           ? estimate_g_formula(d, index, fits, 1, w, false)
                           : kind == EstimatorKind::weighting
                                 ? estimate_weighting(d, index, fits, 1, w, false, false)
                                 : estimate_dr(d, index, fits, 1, w, false, false);
    double combo = 0.0;
    for (int k = 0; k < 2; ++k) combo += w[k] * r.per_pattern[static_cast<std::size_t>(k)].psi_k_hat;
    CHECK(std::abs(r.value - combo) <= 1e-12);
    CHECK(std::abs(r.pattern_weights.sum() - 1.0) <= 1e-12);
    for (const auto& pe : r.per_pattern) CHECK(pe.gamma_hat >= 1.0);
  }

  Eigen::VectorXd bad(2);
  bad << 0.5, 0.6;
  CHECK_THROWS_AS(estimate_g_formula(d, index, fits, 1, bad, false), ConfigError);
}

TEST_CASE("location equivariance of g-formula and DR under outcome shifts") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  Eigen::VectorXd w = sample_size_weights(index);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  double gf = estimate_g_formula(d, index, fits, 1, w, false).value;
  double dr = estimate_dr(d, index, fits, 1, w, false, false).value;

  const double shift = 11.25;
  Dataset shifted = d;
  for (auto& r : shifted.records)
    if (!r.is_target()) r.outcome = *r.outcome + shift;
  NuisanceFits fits2 = real_fits(shifted, index, 1, linear_policy());
  CHECK(std::abs(estimate_g_formula(shifted, index, fits2, 1, w, false).value - gf - shift) <=
        1e-10);
  CHECK(std::abs(estimate_dr(shifted, index, fits2, 1, w, false, false).value - dr - shift) <=
        1e-10);
}

TEST_CASE("naive pooled estimator arithmetic and errors") {
  Dataset d;
  d.covariate_names = {"x1"};
  d.treatment_levels = {"0", "1"};
  d.records = {trial_record(1, 1, 1.0, {0.0}), trial_record(1, 1, 2.0, {0.0}),
               trial_record(1, 0, -1.0, {0.0}), trial_record(2, 1, 6.0, {0.0}),
               trial_record(2, 0, -2.0, {0.0}), target_record({0.0})};
  CHECK(estimate_naive_pooled(d, 1).value == doctest::Approx(3.0).epsilon(1e-12));

  for (auto& r : d.records)
    if (!r.is_target() && *r.treatment == 1) r.outcome = 5.0;
  CHECK(estimate_naive_pooled(d, 1).value == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_THROWS_AS(estimate_naive_pooled(d, 7), DataError);
}

TEST_CASE("complete-case mode keeps fully observed trials only") {
  Dataset d = k2_shaped_dataset();
  Dataset cc = complete_case_mode(d);
  std::set<int> sources;
  for (const auto& r : cc.records) sources.insert(r.source_id);
  CHECK(sources == std::set<int>{0, 1, 2});
  CHECK(derive_patterns(cc).K() == 1);

  Dataset complete = tiny_dataset();
  CHECK(complete_case_mode(complete).records.size() == complete.records.size());

  Dataset none = k2_shaped_dataset();
  for (auto& r : none.records)
    if (!r.is_target()) r.covariates[1].reset();
  CHECK_THROWS_AS(complete_case_mode(none), DataError);
}

TEST_CASE("sample split on duplicated data with explicit folds equals plain DR") {
  Dataset d = k2_shaped_dataset();
  std::size_t n = d.records.size();
  Dataset doubled = d;
  for (std::size_t i = 0; i < n; ++i) doubled.records.push_back(d.records[i]);
  PatternIndex index = derive_patterns(doubled);
  Eigen::VectorXd w = sample_size_weights(index);
  std::vector<NuisanceSpec> specs = make_specs(linear_policy(), index);

  std::vector<int> folds(doubled.records.size(), 0);
  for (std::size_t i = n; i < doubled.records.size(); ++i) folds[i] = 1;

  EstimateResult split = estimate_dr_sample_split(doubled, index, specs, 1, w, 99, &folds);

  PatternIndex single_index = derive_patterns(d);
  NuisanceFits fits = fit_nuisances(d, single_index, make_specs(linear_policy(), single_index), {1});
  double plain = estimate_dr(d, single_index, fits, 1, sample_size_weights(single_index), false,
                             false).value;
  CHECK(std::abs(split.value - plain) <= 1e-10);
}

TEST_CASE("sample split is deterministic in the seed and order-stable") {
  Dataset d = k2_shaped_dataset();
  // Enlarge so folds keep 2 records per (trial, arm).
  Dataset big = d;
  for (int copy = 0; copy < 3; ++copy)
    for (const auto& r : d.records) big.records.push_back(r);
  PatternIndex index = derive_patterns(big);
  Eigen::VectorXd w = sample_size_weights(index);
  std::vector<NuisanceSpec> specs = make_specs(linear_policy(), index);

  EstimateResult a = estimate_dr_sample_split(big, index, specs, 1, w, 1234);
  EstimateResult b = estimate_dr_sample_split(big, index, specs, 1, w, 1234);
  CHECK(a.value == b.value);
  EstimateResult c = estimate_dr_sample_split(big, index, specs, 1, w, 4321);
  CHECK(a.value != c.value);
}

TEST_CASE("sample split rejects degenerate folds") {
  Dataset d = tiny_dataset();  // 2 records per (trial, arm): folds get 1 each
  PatternIndex index = derive_patterns(d);
  std::vector<NuisanceSpec> specs = make_specs(linear_policy(), index);
  CHECK_THROWS_AS(
      estimate_dr_sample_split(d, index, specs, 1, weights1(), 5), DataError);
}

TEST_CASE("contrast: equal arms cancel exactly; single-arm trials combine") {
  Dataset d = k2_shaped_dataset();
  EstimatorConfig config;
  config.kind = EstimatorKind::dr;
  config.policy = linear_policy();
  config.treatment = 1;
  config.treatment_prime = 1;
  EstimateResult same = run_estimator(d, config);
  CHECK(same.value == 0.0);

  // Arm 1 only in trial 1, arm 0 only in trial 2: indirect comparison.
  Dataset indirect;
  indirect.covariate_names = {"x1"};
  indirect.treatment_levels = {"0", "1"};
  Rng rng(3, streams::fixture);
  for (int i = 0; i < 40; ++i) {
    double x = rng.normal();
    indirect.records.push_back(trial_record(1, 1, 1.0 + x + 0.1 * rng.normal(), {x}));
    double x2 = rng.normal();
    indirect.records.push_back(trial_record(2, 0, -1.0 + x2 + 0.1 * rng.normal(), {x2}));
    indirect.records.push_back(target_record({rng.normal()}));
  }
  config.treatment = indirect.treatment_index("1");
  config.treatment_prime = indirect.treatment_index("0");
  EstimateResult contrast = run_estimator(indirect, config);
  REQUIRE(contrast.components.size() == 2);
  CHECK(contrast.value ==
        doctest::Approx(contrast.components[0].value - contrast.components[1].value));
  CHECK(contrast.value == doctest::Approx(2.0).epsilon(0.25));

  // An arm supported by no trial errors out.
  Dataset no_arm = indirect;
  for (auto& r : no_arm.records)
    if (!r.is_target()) r.treatment = 0;
  CHECK_THROWS_AS(restrict_to_arm_trials(no_arm, 1), DataError);
}

TEST_CASE("weighting with zero transport mass rejects normalization") {
  Dataset d = tiny_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = real_fits(d, index, 1, linear_policy());
  NuisanceFits p_one = fits;
  p_one.p_hat.clear();
  p_one.p_hat.emplace(1, stub_probability_one());  // all transport weights zero
  CHECK_THROWS_AS(estimate_weighting(d, index, p_one, 1, weights1(), true, false), NumericError);
}
