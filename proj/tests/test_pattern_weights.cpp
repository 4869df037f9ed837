#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "tmeta/pattern_weights.hpp"
#include "tmeta/pipeline.hpp"

using namespace tmeta;
using namespace fixtures;

namespace {

SpecPolicy linear_policy() {
  SpecPolicy p;
  p.outcome_quadratic = false;
  p.participation_quadratic = false;
  return p;
}

}  // namespace

TEST_CASE("influence contributions vanish outside the pattern subsample") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = fit_nuisances(d, index, make_specs(linear_policy(), index), {1});
  double psi = estimate_dr(d, index, fits, 1, sample_size_weights(index), false, false).value;
  InfluenceTable table = influence_contributions(d, index, fits, 1, psi);

  for (int k = 1; k <= 2; ++k) {
    auto sub = pattern_subsample(d, index, k);
    std::set<std::size_t> members(sub.begin(), sub.end());
    for (std::size_t i = 0; i < d.records.size(); ++i)
      if (!members.count(i))
        CHECK(table.contributions[static_cast<std::size_t>(k - 1)][i] == 0.0);
  }
}

TEST_CASE("p=1 reduces influence contributions to the outcome-model part") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  NuisanceFits fits = fit_nuisances(d, index, make_specs(linear_policy(), index), {1});
  for (int k = 1; k <= 2; ++k) {
    fits.p_hat.erase(k);
    fits.p_hat.emplace(k, stub_probability_one());
  }
  double psi = 0.9;
  InfluenceTable table = influence_contributions(d, index, fits, 1, psi);
  double n0 = static_cast<double>(d.n_target());
  for (int k = 1; k <= 2; ++k) {
    double gamma = (n0 + index.pattern(k).n_k_star) / n0;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      const Record& r = d.records[i];
      double got = table.contributions[static_cast<std::size_t>(k - 1)][i];
      if (r.is_target()) {
        double expected = gamma * (fits.g(1, k).predict_record(r.covariates) - psi);
        CHECK(got == doctest::Approx(expected).epsilon(1e-12));
      } else {
        CHECK(got == 0.0);  // transport weight is exactly zero
      }
    }
  }
}

TEST_CASE("V and C plug-ins match direct enumeration on a 10-record dataset") {
  // Two trials with different observed sets -> K = 2, plus 4 target records.
  Dataset d;
  d.covariate_names = {"x1", "x2"};
  d.treatment_levels = {"0", "1"};
  d.records = {
      trial_record(1, 1, 1.0, {0.0, 1.0}),  trial_record(1, 0, 0.0, {1.0, 0.0}),
      trial_record(1, 1, 2.0, {1.0, 1.0}),  trial_record(2, 1, 1.5, {0.0, 0.0}, {1}),
      trial_record(2, 0, 0.5, {1.0, 0.0}, {1}), trial_record(2, 1, 2.5, {1.0, 0.0}, {1}),
      target_record({0.0, 0.0}), target_record({1.0, 0.0}),
      target_record({0.0, 1.0}), target_record({1.0, 1.0}),
  };
  PatternIndex index = derive_patterns(d);
  REQUIRE(index.K() == 2);

  // Hand-picked constant stubs make every piece analytic.
  NuisanceFits fits;
  fits.g_hat.emplace(std::make_pair(1, 1), stub_constant_mean(1.5));
  fits.g_hat.emplace(std::make_pair(1, 2), stub_constant_mean(2.0));
  fits.p_hat.emplace(1, stub_probability(0.5));
  fits.p_hat.emplace(2, stub_probability(0.4));
  fits.e_hat.emplace(std::make_pair(1, 1), stub_probability(0.5));
  fits.e_hat.emplace(std::make_pair(1, 2), stub_probability(0.5));

  const double psi = 1.0;
  InfluenceTable table = influence_contributions(d, index, fits, 1, psi);
  OptimalWeightProblem problem = estimate_V_C(table, d, index, 1, fits, psi);

  // Pattern 1: gamma = (4+3)/4 = 1.75; o = (0.5/0.5)/0.5 = 2 on arm-1 rows.
  // Contributions: trials {2*(1-1.5), 2*(2-1.5)} = {-1, 1} on arm 1, 0 on arm 0;
  // targets: 1.75*(1.5-1) = 0.875 each... times gamma for trials too.
  double g1 = 1.75;
  double c_t1a = g1 * 2.0 * (1.0 - 1.5);
  double c_t1b = g1 * 2.0 * (2.0 - 1.5);
  double c_tgt1 = g1 * (1.5 - 1.0);
  double V1 = (c_t1a * c_t1a + c_t1b * c_t1b + 4.0 * c_tgt1 * c_tgt1) / 7.0;
  CHECK(problem.V_hat[0] == doctest::Approx(V1).epsilon(1e-12));

  // Pattern 2: gamma = 1.75; o = (0.6/0.4)/0.5 = 3; arm-1 rows at y {1.5, 2.5}.
  double o2 = (1.0 - 0.4) / (0.4 * 0.5);
  double c_t2a = g1 * o2 * (1.5 - 2.0);
  double c_t2b = g1 * o2 * (2.5 - 2.0);
  double c_tgt2 = g1 * (2.0 - 1.0);
  double V2 = (c_t2a * c_t2a + c_t2b * c_t2b + 4.0 * c_tgt2 * c_tgt2) / 7.0;
  CHECK(problem.V_hat[1] == doctest::Approx(V2).epsilon(1e-12));

  // C12 = gamma1*gamma2 * mean_target[(g1-psi)(g2-psi)] * n0/n
  double C12 = g1 * g1 * ((1.5 - 1.0) * (2.0 - 1.0)) * (4.0 / 10.0);
  CHECK(problem.C_hat(0, 1) == doctest::Approx(C12).epsilon(1e-12));
  CHECK(problem.C_hat(1, 0) == doctest::Approx(C12).epsilon(1e-12));
}

TEST_CASE("KKT solve: symmetric case, hand-solved case, decoupling") {
  OptimalWeightProblem symmetric;
  symmetric.V_hat = Eigen::VectorXd::Ones(2);
  symmetric.C_hat = Eigen::MatrixXd::Zero(2, 2);
  solve_optimal_weights(symmetric);
  CHECK(symmetric.w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(symmetric.w[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(symmetric.lambda == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(symmetric.kkt_residual <= 1e-10);

  OptimalWeightProblem skew;
  skew.V_hat = Eigen::VectorXd(2);
  skew.V_hat << 1.0, 2.0;
  skew.C_hat = Eigen::MatrixXd::Zero(2, 2);
  solve_optimal_weights(skew);
  CHECK(skew.w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(skew.w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // With C = 0 the solution is inverse variance for any K.
  OptimalWeightProblem decoupled;
  decoupled.V_hat = Eigen::VectorXd(3);
  decoupled.V_hat << 0.5, 1.25, 4.0;
  decoupled.C_hat = Eigen::MatrixXd::Zero(3, 3);
  solve_optimal_weights(decoupled);
  double total = 1.0 / 0.5 + 1.0 / 1.25 + 1.0 / 4.0;
  for (int k = 0; k < 3; ++k)
    CHECK(decoupled.w[k] == doctest::Approx((1.0 / decoupled.V_hat[k]) / total).epsilon(1e-10));
}

TEST_CASE("negative optimal weights surface as-is and project on request") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);

  OptimalWeightProblem problem;
  problem.V_hat = Eigen::VectorXd(2);
  problem.V_hat << 1.0, 4.0;
  problem.C_hat = Eigen::MatrixXd::Zero(2, 2);
  problem.C_hat(0, 1) = problem.C_hat(1, 0) = 2.0;
  solve_optimal_weights(problem);
  CHECK(problem.has_negative_weights);
  CHECK(problem.w[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(problem.w[1] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(problem.w.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("optimal weights achieve the lowest objective among standard schemes") {
  Dataset d = k2_shaped_dataset();
  PatternIndex index = derive_patterns(d);
  std::vector<NuisanceSpec> specs = make_specs(linear_policy(), index);
  PreliminaryRun prelim = preliminary_dr_run(d, index, specs, 1, false);

  InfluenceTable table = influence_contributions(d, index, prelim.fits, 1, prelim.psi_hat);
  OptimalWeightProblem problem = estimate_V_C(table, d, index, 1, prelim.fits, prelim.psi_hat);
  solve_optimal_weights(problem);

  Eigen::VectorXd ss = sample_size_weights(index);
  Eigen::VectorXd equal = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd iv(2);
  iv << 1.0 / problem.V_hat[0], 1.0 / problem.V_hat[1];
  iv /= iv.sum();
  double t_opt = problem.objective(problem.w);
  CHECK(t_opt <= problem.objective(ss) + 1e-12);
  CHECK(t_opt <= problem.objective(equal) + 1e-12);
  CHECK(t_opt <= problem.objective(iv) + 1e-12);
}

TEST_CASE("pattern_weights dispatch") {
  PatternIndex index;
  index.patterns = {{1, {1, 2}, {0}, 1080}, {2, {3}, {0}, 466}};

  Dataset dummy;  // sample-size path touches only the index
  WeightScheme ss;
  Eigen::VectorXd w = pattern_weights(ss, dummy, index, 1, nullptr);
  CHECK(w[0] == doctest::Approx(0.6986).epsilon(1e-3));
  CHECK(w[1] == doctest::Approx(0.3014).epsilon(1e-3));
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));

  WeightScheme fixed;
  fixed.kind = WeightSchemeKind::fixed;
  fixed.fixed = Eigen::VectorXd(2);
  fixed.fixed << 0.3, 0.7;
  Eigen::VectorXd wf = pattern_weights(fixed, dummy, index, 1, nullptr);
  CHECK(wf[0] == 0.3);
  CHECK(wf[1] == 0.7);

  fixed.fixed << 0.3, 0.8;
  CHECK_THROWS_AS(pattern_weights(fixed, dummy, index, 1, nullptr), ConfigError);

  WeightScheme opt;
  opt.kind = WeightSchemeKind::optimal;
  CHECK_THROWS_AS(pattern_weights(opt, dummy, index, 1, nullptr), ConfigError);
}

TEST_CASE("influence contributions center at zero under saturated fits") {
  DiscretePopulation pop = random_transportable_population(7);
  const std::size_t n = 100000;
  Dataset d = sample_from_encoded(pop, n, 61, 1.0);
  PatternIndex index = derive_patterns(d);
  SaturatedSpecs sat = saturated_specs(pop);
  std::vector<NuisanceSpec> specs;
  for (const auto& terms : sat.terms_by_pattern) {
    NuisanceSpec s;
    s.outcome_spec = {Family::gaussian_identity, terms};
    s.participation_spec = {Family::binomial_logit, terms};
    s.treatment_spec = {Family::binomial_logit, terms};
    specs.push_back(std::move(s));
  }
  NuisanceFits fits = fit_nuisances(d, index, specs, {1});
  double psi_exact = exact_psi_outcome(pop, 1, 1);
  InfluenceTable table = influence_contributions(d, index, fits, 1, psi_exact);
  for (int k = 1; k <= index.K(); ++k) {
    auto sub = pattern_subsample(d, index, k);
    std::vector<double> values;
    values.reserve(sub.size());
    for (std::size_t i : sub)
      values.push_back(table.contributions[static_cast<std::size_t>(k - 1)][i]);
    double se = sd(values) / std::sqrt(static_cast<double>(values.size()));
    CHECK(std::abs(mean(values)) <= 2.0 * se);
  }
}

TEST_CASE("inverse variance with equal pattern variances gives equal weights") {
  // Symmetric construction: two trials with identical data in distinct
  // patterns (different observed sets).
  Dataset d;
  d.covariate_names = {"x1", "x2"};
  d.treatment_levels = {"0", "1"};
  for (int i = 0; i < 6; ++i) {
    double x = (i % 3) - 1.0;
    double y = 1.0 + x + 0.1 * ((i % 2) ? 1 : -1);
    d.records.push_back(trial_record(1, i % 2, y, {x, 0.0}, {1}));
    d.records.push_back(trial_record(2, i % 2, y, {0.0, x}, {0}));
  }
  for (int i = 0; i < 4; ++i) d.records.push_back(target_record({(i % 3) - 1.0, (i % 3) - 1.0}));
  PatternIndex index = derive_patterns(d);
  REQUIRE(index.K() == 2);

  SpecPolicy policy;
  policy.outcome_quadratic = false;
  policy.participation_quadratic = false;
  std::vector<NuisanceSpec> specs = make_specs(policy, index);
  PreliminaryRun prelim = preliminary_dr_run(d, index, specs, 1, false);
  WeightScheme iv;
  iv.kind = WeightSchemeKind::inverse_variance;
  Eigen::VectorXd w = pattern_weights(iv, d, index, 1, &prelim);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
}
