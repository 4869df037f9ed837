#include "tmeta/data.hpp"

#include <algorithm>
#include <sstream>

namespace tmeta {

std::size_t Dataset::n_target() const {
  std::size_t n0 = 0;
  for (const auto& r : records)
    if (r.is_target()) ++n0;
  return n0;
}

std::vector<int> Dataset::trial_ids() const {
  std::set<int> ids;
  for (const auto& r : records)
    if (!r.is_target()) ids.insert(r.source_id);
  return {ids.begin(), ids.end()};
}

int Dataset::treatment_index(const std::string& label) const {
  for (std::size_t i = 0; i < treatment_levels.size(); ++i)
    if (treatment_levels[i] == label) return static_cast<int>(i);
  throw DataError("data-model", "unknown treatment level '" + label + "'");
}

bool MissingnessPattern::observes(int covariate) const {
  return std::binary_search(observed_covariates.begin(), observed_covariates.end(), covariate);
}

const MissingnessPattern& PatternIndex::pattern(int k) const {
  if (k < 1 || k > K()) throw DataError("data-model", "unknown pattern_id " + std::to_string(k));
  return patterns[static_cast<std::size_t>(k - 1)];
}

bool ValidationReport::ok() const {
  for (const auto& v : violations)
    if (v.severity == Violation::Severity::error) return false;
  return true;
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const auto& v : violations) {
    out << (v.severity == Violation::Severity::error ? "error" : "warning");
    out << " [" << v.rule << "] " << v.message;
    if (!v.record_indices.empty()) {
      out << " (records:";
      std::size_t shown = std::min<std::size_t>(v.record_indices.size(), 10);
      for (std::size_t i = 0; i < shown; ++i) out << " " << v.record_indices[i];
      if (v.record_indices.size() > shown) out << " ...";
      out << ")";
    }
    out << "\n";
  }
  return out.str();
}

namespace {

std::set<int> present_covariates(const Record& r) {
  std::set<int> s;
  for (std::size_t j = 0; j < r.covariates.size(); ++j)
    if (r.covariates[j].has_value()) s.insert(static_cast<int>(j));
  return s;
}

}  // namespace

ValidationReport validate(const Dataset& dataset) {
  ValidationReport report;
  auto add = [&](Violation::Severity sev, const std::string& rule, const std::string& msg,
                 std::vector<std::size_t> idx = {}) {
    report.violations.push_back({sev, rule, msg, std::move(idx)});
  };
  const auto err = Violation::Severity::error;

  if (dataset.n_target() == 0) add(err, "dataset", "no target records (source 0)");
  if (dataset.trial_ids().empty()) add(err, "dataset", "no trial records");

  std::size_t p = dataset.covariate_names.size();
  std::map<int, std::set<int>> pattern_by_source;
  std::map<int, std::vector<std::size_t>> inconsistent;
  std::vector<bool> level_seen(dataset.treatment_levels.size(), false);

  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const Record& r = dataset.records[i];
    if (r.source_id < 0) add(err, "record", "negative source_id", {i});
    if (r.covariates.size() != p)
      add(err, "record", "covariate vector length mismatch", {i});
    if (!(r.survey_weight > 0.0)) add(err, "record", "survey_weight must be positive", {i});

    if (r.is_target()) {
      if (r.treatment.has_value()) add(err, "target", "target records have no treatment", {i});
      if (r.outcome.has_value()) add(err, "target", "target records have no outcome", {i});
      for (std::size_t j = 0; j < r.covariates.size(); ++j)
        if (!r.covariates[j].has_value()) {
          add(err, "target", "target must observe all covariates (missing '" +
                                 dataset.covariate_names[j] + "')", {i});
          break;
        }
    } else {
      if (!r.treatment.has_value()) add(err, "trial", "trial records have a treatment", {i});
      if (!r.outcome.has_value()) add(err, "trial", "trial records have an outcome", {i});
      if (r.survey_weight != 1.0)
        add(err, "trial", "trial records have survey_weight = 1", {i});
      if (r.treatment.has_value()) {
        int a = *r.treatment;
        if (a < 0 || a >= static_cast<int>(dataset.treatment_levels.size()))
          add(err, "trial", "treatment index out of range", {i});
        else
          level_seen[static_cast<std::size_t>(a)] = true;
      }
      auto obs = present_covariates(r);
      auto it = pattern_by_source.find(r.source_id);
      if (it == pattern_by_source.end()) {
        pattern_by_source.emplace(r.source_id, std::move(obs));
      } else if (it->second != obs) {
        inconsistent[r.source_id].push_back(i);
      }
    }
  }

  for (const auto& [source, idx] : inconsistent)
    add(err, "systematic-missingness",
        "non-systematic missingness: records of trial " + std::to_string(source) +
            " disagree on which covariates are present",
        idx);

  for (std::size_t a = 0; a < level_seen.size(); ++a)
    if (!level_seen[a])
      add(Violation::Severity::warning, "treatment-levels",
          "treatment level '" + dataset.treatment_levels[a] + "' appears in no trial record");

  return report;
}

std::vector<MissingnessPattern> group_patterns(const std::map<int, std::set<int>>& observed_by_trial) {
  // Group trials by identical observed sets.
  std::map<std::set<int>, std::vector<int>> groups;
  for (const auto& [trial, obs] : observed_by_trial) groups[obs].push_back(trial);

  std::vector<MissingnessPattern> patterns;
  for (auto& [obs, trials] : groups) {
    MissingnessPattern pat;
    std::sort(trials.begin(), trials.end());
    pat.trial_ids = trials;
    pat.observed_covariates.assign(obs.begin(), obs.end());
    patterns.push_back(std::move(pat));
  }
  std::sort(patterns.begin(), patterns.end(),
            [](const MissingnessPattern& a, const MissingnessPattern& b) {
              return a.trial_ids < b.trial_ids;
            });
  for (std::size_t k = 0; k < patterns.size(); ++k)
    patterns[k].pattern_id = static_cast<int>(k + 1);
  return patterns;
}

PatternIndex derive_patterns(const Dataset& dataset) {
  ValidationReport report = validate(dataset);
  if (!report.ok())
    throw DataError("data-model", "dataset failed validation:\n" + report.to_string());

  std::map<int, std::set<int>> observed_by_trial;
  std::map<int, int> counts;
  for (const auto& r : dataset.records) {
    if (r.is_target()) continue;
    if (observed_by_trial.find(r.source_id) == observed_by_trial.end())
      observed_by_trial[r.source_id] = present_covariates(r);
    counts[r.source_id] += 1;
  }

  PatternIndex index;
  index.patterns = group_patterns(observed_by_trial);
  for (auto& pat : index.patterns) {
    for (int trial : pat.trial_ids) {
      pat.n_k_star += counts[trial];
      index.by_source[trial] = pat.pattern_id;
    }
  }
  return index;
}

std::vector<std::size_t> pattern_subsample(const Dataset& dataset, const PatternIndex& index, int k) {
  const MissingnessPattern& pat = index.pattern(k);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const Record& r = dataset.records[i];
    if (r.is_target() ||
        std::binary_search(pat.trial_ids.begin(), pat.trial_ids.end(), r.source_id))
      out.push_back(i);
  }
  return out;
}

std::vector<std::string> small_pattern_warnings(const PatternIndex& index, double min_share) {
  long total = 0;
  for (const auto& pat : index.patterns) total += pat.n_k_star;
  std::vector<std::string> warnings;
  if (total == 0) return warnings;
  for (const auto& pat : index.patterns) {
    double share = static_cast<double>(pat.n_k_star) / static_cast<double>(total);
    if (share < min_share) {
      std::ostringstream msg;
      msg << "pattern " << pat.pattern_id << " holds " << pat.n_k_star << " of " << total
          << " trial records (" << fmt_double(100.0 * share)
          << "%); estimates for this pattern may be unstable";
      warnings.push_back(msg.str());
    }
  }
  return warnings;
}

}  // namespace tmeta
