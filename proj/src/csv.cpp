#include "tmeta/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tmeta {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

double parse_number(const std::string& cell, const std::string& column, std::size_t row,
                    const std::string& origin) {
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("cli", origin + ": row " + std::to_string(row) + ", column '" + column +
                               "': expected a number, got '" + cell + "'");
  }
}

long parse_integer(const std::string& cell, const std::string& column, std::size_t row,
                   const std::string& origin) {
  try {
    std::size_t used = 0;
    long v = std::stol(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("cli", origin + ": row " + std::to_string(row) + ", column '" + column +
                               "': expected an integer, got '" + cell + "'");
  }
}

}  // namespace

Dataset parse_csv(const std::string& content, const CsvSchema& schema, const std::string& origin) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw DataError("cli", origin + ": missing header line");
  std::vector<std::string> header = split_line(line);

  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (col.count(header[j]))
      throw DataError("cli", origin + ": duplicate column '" + header[j] + "'");
    col[header[j]] = j;
  }

  std::set<std::string> known = {"source", "treatment", "outcome", "survey_weight", "stratum",
                                 "psu"};
  for (const auto& cov : schema.covariates) known.insert(cov.name);
  for (const auto& [name, j] : col)
    if (!known.count(name))
      throw DataError("cli", origin + ": unknown column '" + name + "'");
  for (const char* required : {"source", "treatment", "outcome"})
    if (!col.count(required))
      throw DataError("cli", origin + ": missing required column '" + std::string(required) + "'");
  std::vector<std::size_t> cov_col;
  for (const auto& cov : schema.covariates) {
    if (!col.count(cov.name))
      throw DataError("cli", origin + ": missing covariate column '" + cov.name + "'");
    cov_col.push_back(col[cov.name]);
  }

  Dataset data;
  for (const auto& cov : schema.covariates) data.covariate_names.push_back(cov.name);

  // Two passes when treatment levels are not declared: collect labels first.
  struct RawRow {
    std::vector<std::string> fields;
    std::size_t row_number;
  };
  std::vector<RawRow> rows;
  std::set<std::string> labels_seen;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty()) continue;
    RawRow raw{split_line(line), row_number};
    if (raw.fields.size() != header.size())
      throw DataError("cli", origin + ": row " + std::to_string(row_number) + " has " +
                                 std::to_string(raw.fields.size()) + " fields, header has " +
                                 std::to_string(header.size()));
    const std::string& label = raw.fields[col["treatment"]];
    if (!label.empty()) labels_seen.insert(label);
    rows.push_back(std::move(raw));
  }

  data.treatment_levels = schema.treatment_levels.empty()
                              ? std::vector<std::string>(labels_seen.begin(), labels_seen.end())
                              : schema.treatment_levels;

  for (const RawRow& raw : rows) {
    const auto& f = raw.fields;
    Record r;
    r.source_id = static_cast<int>(parse_integer(f[col["source"]], "source", raw.row_number, origin));

    const std::string& label = f[col["treatment"]];
    const std::string& outcome_cell = f[col["outcome"]];
    if (r.source_id == 0) {
      if (!label.empty())
        throw DataError("cli", origin + ": row " + std::to_string(raw.row_number) +
                                   ": target records have no treatment");
      if (!outcome_cell.empty())
        throw DataError("cli", origin + ": row " + std::to_string(raw.row_number) +
                                   ": target records have no outcome");
    } else {
      if (label.empty())
        throw DataError("cli", origin + ": row " + std::to_string(raw.row_number) +
                                   ": trial records need a treatment label");
      auto it = std::find(data.treatment_levels.begin(), data.treatment_levels.end(), label);
      if (it == data.treatment_levels.end())
        throw DataError("cli", origin + ": row " + std::to_string(raw.row_number) +
                                   ": treatment label '" + label + "' not in declared levels");
      r.treatment = static_cast<int>(it - data.treatment_levels.begin());
      if (outcome_cell.empty())
        throw DataError("cli", origin + ": row " + std::to_string(raw.row_number) +
                                   ": trial records need an outcome");
      r.outcome = parse_number(outcome_cell, "outcome", raw.row_number, origin);
    }

    for (std::size_t jc = 0; jc < cov_col.size(); ++jc) {
      const std::string& cell = f[cov_col[jc]];
      if (!cell.empty())
        r.covariates.push_back(
            parse_number(cell, schema.covariates[jc].name, raw.row_number, origin));
      else
        r.covariates.push_back(std::nullopt);
    }

    if (col.count("survey_weight")) {
      const std::string& cell = f[col["survey_weight"]];
      r.survey_weight = cell.empty() ? 1.0 : parse_number(cell, "survey_weight", raw.row_number, origin);
    }
    if (col.count("stratum")) {
      const std::string& cell = f[col["stratum"]];
      if (!cell.empty()) r.stratum_id = cell;
    }
    if (col.count("psu")) {
      const std::string& cell = f[col["psu"]];
      if (!cell.empty()) r.psu_id = cell;
    }
    data.records.push_back(std::move(r));
  }

  ValidationReport report = validate(data);
  if (!report.ok())
    throw DataError("cli", origin + ": dataset failed validation:\n" + report.to_string());
  return data;
}

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cli", "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), schema, path);
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::ostringstream out;
  out << "source,treatment,outcome";
  for (const auto& name : dataset.covariate_names) out << ',' << name;
  out << ",survey_weight,stratum,psu\n";
  for (const Record& r : dataset.records) {
    out << r.source_id << ',';
    if (r.treatment.has_value()) out << dataset.treatment_levels[static_cast<std::size_t>(*r.treatment)];
    out << ',';
    if (r.outcome.has_value()) out << fmt_double(*r.outcome);
    for (const auto& c : r.covariates) {
      out << ',';
      if (c.has_value()) out << fmt_double(*c);
    }
    out << ',' << fmt_double(r.survey_weight) << ',' << (r.stratum_id ? *r.stratum_id : "") << ','
        << (r.psu_id ? *r.psu_id : "") << '\n';
  }
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cli", "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw DataError("cli", "failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace tmeta
