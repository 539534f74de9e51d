// Input documents: the self-describing study document (cohort and/or
// benchmark sections, schema evaudit.study/v1), the simulation config
// (evaudit.sim/v1), and delimiter-separated individual-level data.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evaudit/domain.hpp"
#include "evaudit/errors.hpp"
#include "evaudit/psm.hpp"
#include "evaudit/simulate.hpp"

namespace evaudit {

inline constexpr const char* kStudySchema = "evaudit.study/v1";
inline constexpr const char* kSimConfigSchema = "evaudit.sim/v1";

struct StudyDocument {
  std::optional<CohortSummary> cohort;
  std::optional<BenchmarkBaseline> benchmark;
};

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::ParseError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// A stratum accepts "proportion" (percent scale auto-detected upstream when
// any value exceeds 1) or an explicit "percent", plus an optional "count".
inline Stratum stratum_from_json(const nlohmann::json& j) {
  Stratum s;
  s.label = j.at("label").get<std::string>();
  if (j.contains("percent"))
    s.proportion = j.at("percent").get<double>() / 100.0;
  else
    s.proportion = j.at("proportion").get<double>();
  if (j.contains("count") && !j.at("count").is_null())
    s.count = j.at("count").get<std::int64_t>();
  return s;
}

inline CohortSummary cohort_from_json(const nlohmann::json& j) {
  CohortSummary c;
  for (const auto& g : j.at("groups"))
    c.groups.push_back(GroupCount{g.at("name").get<std::string>(),
                                  g.at("population").get<std::int64_t>(),
                                  g.at("cases").get<std::int64_t>()});
  if (j.contains("declared_total") && !j.at("declared_total").is_null()) {
    const auto& t = j.at("declared_total");
    c.declared_total = GroupCount{"total", t.at("population").get<std::int64_t>(),
                                  t.at("cases").get<std::int64_t>()};
  }
  if (j.contains("strata")) {
    for (const auto& [name, spec] : j.at("strata").items()) {
      StratumSet set;
      if (spec.contains("declared_population") &&
          !spec.at("declared_population").is_null())
        set.declared_population = spec.at("declared_population").get<std::int64_t>();
      for (const auto& s : spec.at("strata")) set.strata.push_back(stratum_from_json(s));
      c.strata_by_group.emplace(name, std::move(set));
    }
  }
  if (j.contains("notes")) c.notes = j.at("notes").get<std::vector<std::string>>();
  return c;
}

inline BenchmarkBaseline benchmark_from_json(const nlohmann::json& j) {
  BenchmarkBaseline b;
  if (j.contains("annual_rates")) {
    for (const auto& a : j.at("annual_rates")) {
      AnnualRate r;
      r.year = a.at("year").get<int>();
      r.rate.value = a.at("rate").get<double>();
      r.rate.scale = a.contains("scale") ? a.at("scale").get<double>() : 100'000.0;
      b.annual.push_back(r);
    }
  }
  if (j.contains("demographic"))
    for (const auto& s : j.at("demographic"))
      b.demographic.push_back(stratum_from_json(s));
  if (j.contains("reference_population"))
    b.reference_population = j.at("reference_population").get<std::int64_t>();
  if (j.contains("reported_projections") && !j.at("reported_projections").is_null()) {
    const auto& p = j.at("reported_projections");
    b.reported_projections =
        ReportedProjections{p.at("at_cohort_rate").get<double>(),
                            p.at("at_baseline_rate").get<double>()};
  }
  if (j.contains("notes")) b.notes = j.at("notes").get<std::vector<std::string>>();
  return b;
}

}  // namespace detail

// Parses and validates one study document. Parse errors carry the file and
// position; validation errors carry the file and the offending field path.
inline StudyDocument load_study_document(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  try {
    if (j.contains("schema") && j.at("schema").get<std::string>() != kStudySchema)
      throw Error(ErrorCode::ParseError,
                  path.string() + ": unsupported schema '" +
                      j.at("schema").get<std::string>() + "'");
    StudyDocument doc;
    if (j.contains("cohort") && !j.at("cohort").is_null())
      doc.cohort = validate_cohort(detail::cohort_from_json(j.at("cohort")));
    if (j.contains("benchmark") && !j.at("benchmark").is_null())
      doc.benchmark = validate_benchmark(detail::benchmark_from_json(j.at("benchmark")));
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw Error(ErrorCode::ValidationFailed, path.string() + ": " + e.what());
  }
}

// The audit's two inputs; either path may point at the same self-describing
// document carrying both sections.
inline std::pair<CohortSummary, BenchmarkBaseline> load_inputs(
    const std::filesystem::path& cohort_path,
    const std::filesystem::path& benchmark_path) {
  const StudyDocument cohort_doc = load_study_document(cohort_path);
  if (!cohort_doc.cohort)
    throw Error(ErrorCode::ValidationFailed,
                cohort_path.string() + ": no 'cohort' section");
  const StudyDocument benchmark_doc = load_study_document(benchmark_path);
  if (!benchmark_doc.benchmark)
    throw Error(ErrorCode::ValidationFailed,
                benchmark_path.string() + ": no 'benchmark' section");
  return {*cohort_doc.cohort, *benchmark_doc.benchmark};
}

inline SimConfig load_sim_config(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  try {
    if (j.contains("schema") && j.at("schema").get<std::string>() != kSimConfigSchema)
      throw Error(ErrorCode::ParseError,
                  path.string() + ": unsupported schema '" +
                      j.at("schema").get<std::string>() + "'");
    SimConfig cfg;
    cfg.population_size = j.at("population_size").get<std::int64_t>();
    for (const auto& s : j.at("age_strata"))
      cfg.age_strata.push_back(StratumSpec{s.at("label").get<std::string>(),
                                           s.at("proportion").get<double>()});
    cfg.incidence_per_10k = j.at("incidence_per_10k").get<std::vector<double>>();
    cfg.vaccination_uptake = j.at("vaccination_uptake").get<std::vector<double>>();
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("base_group"))
      cfg.base_group = j.at("base_group").get<std::string>() == "treated"
                           ? BaseGroup::treated
                           : BaseGroup::untreated;
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    return validate_config(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

// --- delimiter-separated individual-level data ---

struct IndividualTable {
  std::vector<IndividualRecord> records;
  std::vector<std::string> covariate_names;
  bool has_outcome = false;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == delimiter) {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(field);
  return fields;
}

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, context + ": not a number: '" + s + "'");
  }
}

inline bool parse_binary(const std::string& s, const std::string& context) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw Error(ErrorCode::ParseError, context + ": expected 0 or 1, got '" + s + "'");
}

}  // namespace detail

// Header row required. Columns `id` and `treated` (0/1) are mandatory,
// `outcome` (0/1) is optional, every other column is a numeric covariate.
inline IndividualTable read_individuals(const std::filesystem::path& path,
                                        char delimiter = ',') {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::ParseError, "cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::ParseError, path.string() + ": empty file");
  const std::vector<std::string> header = detail::split_line(line, delimiter);

  std::ptrdiff_t id_col = -1, treated_col = -1, outcome_col = -1;
  std::vector<std::size_t> covariate_cols;
  IndividualTable table;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "id") id_col = static_cast<std::ptrdiff_t>(i);
    else if (header[i] == "treated") treated_col = static_cast<std::ptrdiff_t>(i);
    else if (header[i] == "outcome") outcome_col = static_cast<std::ptrdiff_t>(i);
    else {
      covariate_cols.push_back(i);
      table.covariate_names.push_back(header[i]);
    }
  }
  if (id_col < 0 || treated_col < 0)
    throw Error(ErrorCode::ParseError,
                path.string() + ": header must contain 'id' and 'treated'");
  table.has_outcome = outcome_col >= 0;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = detail::split_line(line, delimiter);
    const std::string context = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != header.size())
      throw Error(ErrorCode::ParseError,
                  context + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    IndividualRecord rec;
    rec.id = fields[static_cast<std::size_t>(id_col)];
    if (rec.id.empty()) throw Error(ErrorCode::ParseError, context + ": empty id");
    rec.treated = detail::parse_binary(fields[static_cast<std::size_t>(treated_col)],
                                       context + " treated");
    for (std::size_t c : covariate_cols)
      rec.covariates.push_back(detail::parse_double(fields[c], context));
    if (table.has_outcome) {
      const std::string& o = fields[static_cast<std::size_t>(outcome_col)];
      if (!o.empty())
        rec.outcome = detail::parse_binary(o, context + " outcome");
    }
    table.records.push_back(std::move(rec));
  }
  return table;
}

namespace detail {

// Shortest decimal text that parses back to the same double; integral
// values stay bare.
inline std::string covariate_text(double v) {
  if (std::floor(v) == v && std::fabs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  return nlohmann::json(v).dump();
}

}  // namespace detail

// Matched cohort in the input format plus `match_group` (one index per base
// individual, in processing order) and `role` (base/partner). Partners keep
// their selection order, nearest first.
inline void write_matched(std::ostream& out, const IndividualTable& table,
                          const MatchedCohort& cohort, char delimiter = ',') {
  std::unordered_map<std::string, const IndividualRecord*> by_id;
  by_id.reserve(table.records.size());
  for (const auto& r : table.records) by_id.emplace(r.id, &r);

  out << "id" << delimiter << "treated";
  for (const auto& name : table.covariate_names) out << delimiter << name;
  if (table.has_outcome) out << delimiter << "outcome";
  out << delimiter << "match_group" << delimiter << "role\n";

  const auto write_row = [&](const std::string& id, std::size_t group,
                             const char* role) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw Error(ErrorCode::UnknownId, "matched id '" + id + "' not in data");
    const IndividualRecord& r = *it->second;
    out << r.id << delimiter << (r.treated ? 1 : 0);
    for (double v : r.covariates) out << delimiter << detail::covariate_text(v);
    if (table.has_outcome) {
      out << delimiter;
      if (r.outcome) out << (*r.outcome ? 1 : 0);
    }
    out << delimiter << group << delimiter << role << "\n";
  };

  for (std::size_t g = 0; g < cohort.pairs.size(); ++g) {
    write_row(cohort.pairs[g].base_id, g + 1, "base");
    for (const auto& id : cohort.pairs[g].partner_ids) write_row(id, g + 1, "partner");
  }
}

inline void write_matched_file(const std::filesystem::path& path,
                               const IndividualTable& table,
                               const MatchedCohort& cohort, char delimiter = ',') {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::ParseError, "cannot write '" + path.string() + "'");
  write_matched(out, table, cohort, delimiter);
}

}  // namespace evaudit
