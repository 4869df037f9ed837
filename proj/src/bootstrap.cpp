#include "tmeta/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tmeta/parallel.hpp"

namespace tmeta {

namespace {

// Draw n_source records with replacement within every source.
Dataset resample_by_source(const Dataset& dataset, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    by_source[dataset.records[i].source_id].push_back(i);

  Dataset out;
  out.covariate_names = dataset.covariate_names;
  out.treatment_levels = dataset.treatment_levels;
  out.records.reserve(dataset.records.size());
  for (const auto& [source, rows] : by_source)
    for (std::size_t d = 0; d < rows.size(); ++d)
      out.records.push_back(dataset.records[rows[rng.uniform_int(rows.size())]]);
  return out;
}

Dataset resample_survey(const Dataset& dataset, Rng& rng) {
  Dataset out;
  out.covariate_names = dataset.covariate_names;
  out.treatment_levels = dataset.treatment_levels;

  // Trials: record-level within trial.
  std::map<int, std::vector<std::size_t>> trial_rows;
  // Target: records grouped by stratum then PSU.
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> strata;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const Record& r = dataset.records[i];
    if (!r.is_target()) {
      trial_rows[r.source_id].push_back(i);
      continue;
    }
    if (!r.stratum_id.has_value() || !r.psu_id.has_value())
      throw DataError("inference",
                      "survey-design bootstrap requires stratum and psu on every target record");
    strata[*r.stratum_id][*r.psu_id].push_back(i);
  }

  for (const auto& [trial, rows] : trial_rows)
    for (std::size_t d = 0; d < rows.size(); ++d)
      out.records.push_back(dataset.records[rows[rng.uniform_int(rows.size())]]);

  for (const auto& [stratum, psus] : strata) {
    if (psus.size() < 2)
      throw DataError("inference", "stratum '" + stratum +
                                       "' has a single PSU; survey resampling variance is "
                                       "undefined");
    std::vector<const std::vector<std::size_t>*> blocks;
    blocks.reserve(psus.size());
    for (const auto& [psu, rows] : psus) blocks.push_back(&rows);
    // Draw as many PSUs as the stratum holds, with replacement; a drawn PSU
    // enters whole, survey weights unchanged.
    for (std::size_t d = 0; d < blocks.size(); ++d) {
      const auto& rows = *blocks[rng.uniform_int(blocks.size())];
      for (std::size_t i : rows) out.records.push_back(dataset.records[i]);
    }
  }
  return out;
}

}  // namespace

Dataset resample(const Dataset& dataset, ResampleMode mode, Rng& rng) {
  return mode == ResampleMode::stratified_by_source ? resample_by_source(dataset, rng)
                                                    : resample_survey(dataset, rng);
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw NumericError("inference", "quantile of empty sample");
  std::sort(values.begin(), values.end());
  double rank = std::ceil(p * static_cast<double>(values.size()));
  std::size_t idx = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  idx = std::min(idx, values.size() - 1);
  return values[idx];
}

IntervalEstimate bootstrap(const Dataset& dataset, const EstimatorConfig& config,
                           const BootstrapPlan& plan, unsigned n_threads) {
  if (plan.replicates < 2) throw ConfigError("inference", "bootstrap needs at least 2 replicates");
  if (plan.mode == ResampleMode::survey_design) {
    for (const Record& r : dataset.records)
      if (r.is_target() && (!r.stratum_id.has_value() || !r.psu_id.has_value()))
        throw DataError("inference",
                        "survey-design bootstrap requires stratum and psu on every target record");
  }

  IntervalEstimate interval;
  interval.point = run_estimator(dataset, config).value;

  std::size_t B = static_cast<std::size_t>(plan.replicates);
  std::vector<double> values(B, 0.0);
  std::vector<char> succeeded(B, 0);

  parallel_for(B, n_threads, [&](std::size_t r) {
    Rng rng(plan.seed, streams::bootstrap, r);
    Dataset replicate = resample(dataset, plan.mode, rng);
    EstimatorConfig rep_config = config;
    // Sample-split folds inside a replicate get their own substream.
    rep_config.seed = splitmix64(plan.seed ^ splitmix64(streams::sample_split + r));
    try {
      values[r] = run_estimator(replicate, rep_config).value;
      succeeded[r] = 1;
    } catch (const Error&) {
      succeeded[r] = 0;
    }
  });

  for (std::size_t r = 0; r < B; ++r)
    if (succeeded[r]) interval.replicate_values.push_back(values[r]);
  interval.B_effective = static_cast<int>(interval.replicate_values.size());

  double failure_share =
      1.0 - static_cast<double>(interval.B_effective) / static_cast<double>(B);
  if (failure_share > plan.max_failure_share)
    throw NumericError("inference",
                       "bootstrap failed in " + fmt_double(100.0 * failure_share) +
                           "% of replicates (limit " +
                           fmt_double(100.0 * plan.max_failure_share) + "%)");

  interval.se = sd(interval.replicate_values);
  double alpha = 1.0 - plan.level;
  if (plan.interval == IntervalKind::percentile) {
    interval.lower = empirical_quantile(interval.replicate_values, alpha / 2.0);
    interval.upper = empirical_quantile(interval.replicate_values, 1.0 - alpha / 2.0);
  } else {
    double z = normal_quantile(1.0 - alpha / 2.0);
    interval.lower = interval.point - z * interval.se;
    interval.upper = interval.point + z * interval.se;
  }
  return interval;
}

}  // namespace tmeta
