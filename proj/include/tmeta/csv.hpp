#pragma once

#include <string>
#include <vector>

#include "tmeta/data.hpp"

namespace tmeta {

struct CovariateSchema {
  std::string name;
  bool is_continuous = true;  // indicator columns never get quadratic terms
};

struct CsvSchema {
  std::vector<CovariateSchema> covariates;
  // Optional declared treatment order; otherwise levels are collected from
  // the file and sorted.
  std::vector<std::string> treatment_levels;
};

// Columns: source, treatment, outcome, one per covariate, and optional
// survey_weight, stratum, psu. Empty covariate cell = systematically missing;
// empty survey_weight defaults to 1; UTF-8, comma-separated, '.' decimal.
// Unknown columns are rejected.
Dataset ingest_csv(const std::string& path, const CsvSchema& schema);
Dataset parse_csv(const std::string& content, const CsvSchema& schema, const std::string& origin);

std::string dataset_to_csv(const Dataset& dataset);

// Write-to-temp then atomic rename; no partial files on error.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace tmeta
