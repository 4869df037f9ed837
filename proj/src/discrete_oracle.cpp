#include "tmeta/discrete_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tmeta {

namespace {

std::vector<double> project(const std::vector<double>& x, const std::vector<int>& coords) {
  std::vector<double> v;
  v.reserve(coords.size());
  for (int c : coords) v.push_back(x[static_cast<std::size_t>(c)]);
  return v;
}

std::string describe_point(const std::vector<double>& v) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << fmt_double(v[i]);
  out << ")";
  return out.str();
}

MissingnessPattern pattern_of(const DiscretePopulation& pop, int k) {
  auto patterns = pop.patterns();
  if (k < 1 || static_cast<std::size_t>(k) > patterns.size())
    throw DataError("discrete-oracle", "unknown pattern_id " + std::to_string(k));
  return patterns[static_cast<std::size_t>(k - 1)];
}

bool in_trials(const MissingnessPattern& pat, int s) {
  return std::binary_search(pat.trial_ids.begin(), pat.trial_ids.end(), s);
}

}  // namespace

void DiscretePopulation::check() const {
  if (cells.empty()) throw DataError("discrete-oracle", "population has no cells");
  double total = 0.0;
  for (const PopulationCell& c : cells) {
    if (!(c.mass > 0.0)) throw DataError("discrete-oracle", "cell masses must be positive");
    if (c.x.size() != covariate_names.size())
      throw DataError("discrete-oracle", "cell covariate length mismatch");
    if (c.s != 0 && (c.a < 0 || static_cast<std::size_t>(c.a) >= treatment_levels.size()))
      throw DataError("discrete-oracle", "trial cell has an invalid treatment index");
    if (c.s != 0 && observed_by_trial.find(c.s) == observed_by_trial.end())
      throw DataError("discrete-oracle",
                      "trial " + std::to_string(c.s) + " lacks an observed-covariate declaration");
    total += c.mass;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DataError("discrete-oracle", "cell masses sum to " + fmt_double(total) + ", not 1");
  bool any_target = false;
  for (const PopulationCell& c : cells) any_target |= c.s == 0;
  if (!any_target) throw DataError("discrete-oracle", "population has no target cells");
}

double exact_psi_outcome(const DiscretePopulation& pop, int k, int a) {
  pop.check();
  MissingnessPattern pat = pattern_of(pop, k);

  // Group by the observed covariate projection.
  std::map<std::vector<double>, double> target_mass;
  std::map<std::vector<double>, double> arm_mass;
  std::map<std::vector<double>, double> arm_mass_y;
  double target_total = 0.0;
  for (const PopulationCell& c : pop.cells) {
    std::vector<double> v = project(c.x, pat.observed_covariates);
    if (c.s == 0) {
      target_mass[v] += c.mass;
      target_total += c.mass;
    } else if (in_trials(pat, c.s) && c.a == a) {
      arm_mass[v] += c.mass;
      arm_mass_y[v] += c.mass * c.mean_y;
    }
  }

  double psi = 0.0;
  for (const auto& [v, m0] : target_mass) {
    auto it = arm_mass.find(v);
    if (it == arm_mass.end() || !(it->second > 0.0))
      throw DataError("discrete-oracle",
                      "positivity fails (conditions A3/A5): target-supported point " +
                          describe_point(v) + " has no pattern-" + std::to_string(k) +
                          " trial mass at treatment " + std::to_string(a));
    double conditional_mean = arm_mass_y[v] / it->second;
    psi += (m0 / target_total) * conditional_mean;
  }
  return psi;
}

double exact_psi_weighting(const DiscretePopulation& pop, int k, int a) {
  pop.check();
  MissingnessPattern pat = pattern_of(pop, k);

  // Conditional probabilities within the pattern subsample.
  std::map<std::vector<double>, double> target_mass;
  std::map<std::vector<double>, double> trial_mass;      // all arms
  std::map<std::vector<double>, double> trial_arm_mass;  // arm a
  double subsample_mass = 0.0;
  double target_total = 0.0;
  for (const PopulationCell& c : pop.cells) {
    bool is_target = c.s == 0;
    if (!is_target && !in_trials(pat, c.s)) continue;
    std::vector<double> v = project(c.x, pat.observed_covariates);
    subsample_mass += c.mass;
    if (is_target) {
      target_mass[v] += c.mass;
      target_total += c.mass;
    } else {
      trial_mass[v] += c.mass;
      if (c.a == a) trial_arm_mass[v] += c.mass;
    }
  }

  for (const auto& [v, m0] : target_mass) {
    if (!(trial_arm_mass[v] > 0.0))
      throw DataError("discrete-oracle",
                      "positivity fails (conditions A3/A5): target-supported point " +
                          describe_point(v) + " has no pattern-" + std::to_string(k) +
                          " trial mass at treatment " + std::to_string(a));
  }

  double pr_target = target_total / subsample_mass;
  double expectation = 0.0;
  for (const PopulationCell& c : pop.cells) {
    if (c.s == 0 || !in_trials(pat, c.s) || c.a != a) continue;
    std::vector<double> v = project(c.x, pat.observed_covariates);
    double m0 = target_mass.count(v) ? target_mass[v] : 0.0;
    double mt = trial_mass[v];
    double pr_target_given_v = m0 / (m0 + mt);
    double pr_trials_given_v = mt / (m0 + mt);
    double pr_arm_given_v = trial_arm_mass[v] / mt;
    double weight = pr_target_given_v / (pr_arm_given_v * pr_trials_given_v);
    expectation += (c.mass / subsample_mass) * weight * c.mean_y;
  }
  return expectation / pr_target;
}

namespace {

struct DrawCore {
  std::vector<std::size_t> cells;
  std::vector<double> outcomes;  // aligned; unused for target cells
};

DrawCore draw_cells(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed,
                    double noise_sd) {
  if (n < 1) throw ConfigError("discrete-oracle", "sample size must be at least 1");
  std::vector<double> mass;
  mass.reserve(pop.cells.size());
  for (const PopulationCell& c : pop.cells) mass.push_back(c.mass);

  DrawCore core;
  core.cells.reserve(n);
  core.outcomes.reserve(n);
  Rng rng(seed, streams::oracle_sample);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = rng.categorical(mass);
    const PopulationCell& c = pop.cells[idx];
    core.cells.push_back(idx);
    core.outcomes.push_back(c.s == 0 ? 0.0
                                     : c.mean_y + (noise_sd > 0.0 ? rng.normal(0.0, noise_sd) : 0.0));
  }
  return core;
}

}  // namespace

Dataset sample_from(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed,
                    double noise_sd, std::vector<std::size_t>* drawn_cells) {
  pop.check();
  DrawCore core = draw_cells(pop, n, seed, noise_sd);
  if (drawn_cells) *drawn_cells = core.cells;

  Dataset data;
  data.covariate_names = pop.covariate_names;
  data.treatment_levels = pop.treatment_levels;
  data.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PopulationCell& c = pop.cells[core.cells[i]];
    Record r;
    r.source_id = c.s;
    r.covariates.assign(pop.covariate_names.size(), std::nullopt);
    if (c.s == 0) {
      for (std::size_t j = 0; j < c.x.size(); ++j) r.covariates[j] = c.x[j];
    } else {
      r.treatment = c.a;
      r.outcome = core.outcomes[i];
      for (int j : pop.observed_by_trial.at(c.s)) r.covariates[static_cast<std::size_t>(j)] = c.x[static_cast<std::size_t>(j)];
    }
    data.records.push_back(std::move(r));
  }
  return data;
}

namespace {

// Per-pattern level tables for the indicator encoding.
struct Encoding {
  std::vector<MissingnessPattern> patterns;
  std::vector<std::vector<std::vector<double>>> levels;  // [pattern][level] = projection
  std::vector<std::size_t> block_offset;                 // column offset per pattern
  std::size_t n_columns = 0;
};

Encoding build_encoding(const DiscretePopulation& pop) {
  Encoding enc;
  enc.patterns = pop.patterns();
  for (const MissingnessPattern& pat : enc.patterns) {
    std::set<std::vector<double>> support;
    for (const PopulationCell& c : pop.cells) support.insert(project(c.x, pat.observed_covariates));
    enc.block_offset.push_back(enc.n_columns);
    enc.levels.emplace_back(support.begin(), support.end());
    enc.n_columns += enc.levels.back().size();
  }
  return enc;
}

std::size_t level_index(const std::vector<std::vector<double>>& levels,
                        const std::vector<double>& v) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  return static_cast<std::size_t>(it - levels.begin());
}

}  // namespace

Dataset sample_from_encoded(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed,
                            double noise_sd, std::vector<std::size_t>* drawn_cells) {
  pop.check();
  Encoding enc = build_encoding(pop);
  DrawCore core = draw_cells(pop, n, seed, noise_sd);
  if (drawn_cells) *drawn_cells = core.cells;

  Dataset data;
  data.treatment_levels = pop.treatment_levels;
  for (std::size_t k = 0; k < enc.patterns.size(); ++k)
    for (std::size_t u = 0; u < enc.levels[k].size(); ++u)
      data.covariate_names.push_back("k" + std::to_string(k + 1) + "_cell" + std::to_string(u));

  data.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PopulationCell& c = pop.cells[core.cells[i]];
    Record r;
    r.source_id = c.s;
    r.covariates.assign(enc.n_columns, std::nullopt);
    const std::set<int>* observed =
        c.s == 0 ? nullptr : &pop.observed_by_trial.at(c.s);
    for (std::size_t k = 0; k < enc.patterns.size(); ++k) {
      const auto& coords = enc.patterns[k].observed_covariates;
      // A source can evaluate block k only when it observes all of X^(k).
      if (observed != nullptr) {
        bool covered = std::all_of(coords.begin(), coords.end(),
                                   [&](int cv) { return observed->count(cv) > 0; });
        if (!covered) continue;
      }
      std::vector<double> v = project(c.x, coords);
      std::size_t hit = level_index(enc.levels[k], v);
      for (std::size_t u = 0; u < enc.levels[k].size(); ++u)
        r.covariates[enc.block_offset[k] + u] = u == hit ? 1.0 : 0.0;
    }
    if (c.s != 0) {
      r.treatment = c.a;
      r.outcome = core.outcomes[i];
    }
    data.records.push_back(std::move(r));
  }
  return data;
}

SaturatedSpecs saturated_specs(const DiscretePopulation& pop) {
  Encoding enc = build_encoding(pop);
  SaturatedSpecs specs;
  for (std::size_t k = 0; k < enc.patterns.size(); ++k) {
    std::vector<Term> terms;
    // First level dropped: it is the reference absorbed by the intercept.
    for (std::size_t u = 1; u < enc.levels[k].size(); ++u)
      terms.push_back({static_cast<int>(enc.block_offset[k] + u), 1});
    specs.terms_by_pattern.push_back(std::move(terms));
  }
  return specs;
}

DiscretePopulation empirical_population(const DiscretePopulation& pop,
                                        const std::vector<std::size_t>& drawn_cells) {
  std::vector<std::size_t> counts(pop.cells.size(), 0);
  for (std::size_t idx : drawn_cells) counts.at(idx) += 1;
  DiscretePopulation emp;
  emp.covariate_names = pop.covariate_names;
  emp.treatment_levels = pop.treatment_levels;
  emp.observed_by_trial = pop.observed_by_trial;
  double n = static_cast<double>(drawn_cells.size());
  for (std::size_t i = 0; i < pop.cells.size(); ++i) {
    if (counts[i] == 0) continue;
    PopulationCell c = pop.cells[i];
    c.mass = static_cast<double>(counts[i]) / n;
    emp.cells.push_back(std::move(c));
  }
  return emp;
}

}  // namespace tmeta
