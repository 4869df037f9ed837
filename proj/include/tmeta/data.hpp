#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tmeta/common.hpp"

namespace tmeta {

// One row of the composite dataset. source_id 0 is the target population
// sample (covariates only); source_id >= 1 is a trial. Covariates are
// optional reals: a covariate that a trial did not collect is absent for
// every record of that trial (systematic missingness). Categorical
// covariates are pre-encoded as indicator columns upstream.
struct Record {
  int source_id = 0;
  std::optional<int> treatment;  // index into Dataset::treatment_levels
  std::optional<double> outcome;
  std::vector<std::optional<double>> covariates;
  double survey_weight = 1.0;
  std::optional<std::string> stratum_id;
  std::optional<std::string> psu_id;

  bool is_target() const { return source_id == 0; }
};

struct Dataset {
  std::vector<Record> records;
  std::vector<std::string> covariate_names;
  std::vector<std::string> treatment_levels;

  std::size_t n_total() const { return records.size(); }
  std::size_t n_target() const;
  std::size_t n_trial() const { return records.size() - n_target(); }
  std::vector<int> trial_ids() const;  // sorted, distinct
  int treatment_index(const std::string& label) const;
};

// A maximal group of trials sharing the same observed covariate subset.
struct MissingnessPattern {
  int pattern_id = 0;                    // 1..K
  std::vector<int> trial_ids;            // sorted
  std::vector<int> observed_covariates;  // sorted indices into covariate_names
  int n_k_star = 0;                      // trial records carrying this pattern

  bool observes(int covariate) const;
};

struct PatternIndex {
  std::vector<MissingnessPattern> patterns;
  std::map<int, int> by_source;  // trial source_id -> pattern_id

  int K() const { return static_cast<int>(patterns.size()); }
  const MissingnessPattern& pattern(int k) const;  // 1-based
};

struct Violation {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  std::string rule;
  std::string message;
  std::vector<std::size_t> record_indices;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const;  // no error-severity violations
  std::string to_string() const;
};

// Checks every Record/Dataset invariant; violations are data, not failures.
ValidationReport validate(const Dataset& dataset);

// Groups trials by identical observed-covariate sets. Pattern ids follow the
// lexicographic order of the sorted trial-id lists. Throws DataError when the
// dataset does not validate.
PatternIndex derive_patterns(const Dataset& dataset);

// Record indices with source in the pattern's trial set or the target,
// original order preserved.
std::vector<std::size_t> pattern_subsample(const Dataset& dataset, const PatternIndex& index, int k);

// Warnings for patterns holding under min_share of all trial records (the
// asymptotic n_k*/n -> p_k > 0 condition cannot be tested; this flags the
// finite-sample analogue).
std::vector<std::string> small_pattern_warnings(const PatternIndex& index, double min_share = 0.02);

// Shared with the discrete oracle: group (trial id, observed covariate set)
// pairs into maximal patterns with the deterministic ordering above.
std::vector<MissingnessPattern> group_patterns(const std::map<int, std::set<int>>& observed_by_trial);

}  // namespace tmeta
