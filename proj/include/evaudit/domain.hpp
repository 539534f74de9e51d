// Shared data vocabulary: cohort summaries, strata, national benchmarks and
// individual-level records, with construction-time validation.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evaudit/errors.hpp"
#include "evaudit/rates.hpp"

namespace evaudit {

struct GroupCount {
  std::string name;
  std::int64_t population = 0;
  std::int64_t cases = 0;

  friend bool operator==(const GroupCount&, const GroupCount&) = default;
};

struct Stratum {
  std::string label;
  double proportion = 0.0;  // fraction in [0,1] once validated
  std::optional<std::int64_t> count;

  friend bool operator==(const Stratum&, const Stratum&) = default;
};

// One stratification of one group, as stated by a source table. The source
// may restate the group population; a restatement that disagrees with the
// group's own count is a conflict, never a silent overwrite.
struct StratumSet {
  std::vector<Stratum> strata;
  std::optional<std::int64_t> declared_population;

  friend bool operator==(const StratumSet&, const StratumSet&) = default;
};

struct CohortSummary {
  std::vector<GroupCount> groups;
  std::map<std::string, StratumSet> strata_by_group;  // keys: group names or "total"
  std::optional<GroupCount> declared_total;           // as restated by a source table
  GroupCount total;                                   // derived by validate_cohort
  std::vector<std::string> notes;

  friend bool operator==(const CohortSummary&, const CohortSummary&) = default;
};

struct ReportedProjections {
  double at_cohort_rate = 0.0;    // published absolute annual cases at the cohort rate
  double at_baseline_rate = 0.0;  // and at the national baseline rate

  friend bool operator==(const ReportedProjections&, const ReportedProjections&) = default;
};

struct BenchmarkBaseline {
  std::vector<AnnualRate> annual;
  std::vector<Stratum> demographic;  // national proportions
  std::int64_t reference_population = 0;
  std::optional<ReportedProjections> reported_projections;
  std::vector<std::string> notes;

  friend bool operator==(const BenchmarkBaseline&, const BenchmarkBaseline&) = default;
};

struct IndividualRecord {
  std::string id;
  bool treated = false;
  std::vector<double> covariates;
  std::optional<bool> outcome;

  friend bool operator==(const IndividualRecord&, const IndividualRecord&) = default;
};

namespace detail {

// Proportions given as percentages (any value > 1) are rescaled to fractions.
// A raw sum off unity by more than 1e-6 relative is a violation; smaller
// drift is renormalized away, and an already-normalized set passes through
// bit-identical so validation is idempotent.
inline bool normalize_proportions(std::vector<double>& proportions,
                                  const std::string& path,
                                  std::vector<Violation>& violations) {
  if (proportions.empty()) {
    violations.push_back({ErrorCode::StrataSumMismatch, path, "no strata given"});
    return false;
  }
  bool percent = false;
  for (double p : proportions) {
    if (p < 0.0) {
      violations.push_back({ErrorCode::NegativeCount, path,
                            "negative proportion " + std::to_string(p)});
      return false;
    }
    if (p > 1.0) percent = true;
  }
  if (percent)
    for (double& p : proportions) p /= 100.0;
  double sum = 0.0;
  for (double p : proportions) sum += p;
  if (std::fabs(sum - 1.0) > 1e-6) {
    violations.push_back({ErrorCode::StrataSumMismatch, path,
                          "proportions sum to " + std::to_string(sum) + ", not 1"});
    return false;
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    for (double& p : proportions) p /= sum;
  return true;
}

inline void validate_stratum_set(StratumSet& set, const std::string& group_name,
                                 std::int64_t group_population,
                                 const std::string& path,
                                 std::vector<Violation>& violations) {
  if (set.declared_population && *set.declared_population != group_population) {
    violations.push_back(
        {ErrorCode::ConflictingDeclaration, path + ".declared_population",
         "strata table states population " + std::to_string(*set.declared_population) +
             " for group '" + group_name + "' but the group count table states " +
             std::to_string(group_population)});
  }
  std::vector<double> props;
  props.reserve(set.strata.size());
  for (const auto& s : set.strata) props.push_back(s.proportion);
  if (normalize_proportions(props, path + ".strata", violations))
    for (std::size_t i = 0; i < props.size(); ++i) set.strata[i].proportion = props[i];

  bool all_counts = !set.strata.empty();
  for (const auto& s : set.strata) {
    if (s.count && *s.count < 0)
      violations.push_back({ErrorCode::NegativeCount, path + ".strata",
                            "negative stratum count in '" + s.label + "'"});
    if (!s.count) all_counts = false;
  }
  if (all_counts) {
    std::int64_t sum = 0;
    for (const auto& s : set.strata) sum += *s.count;
    if (sum != group_population)
      violations.push_back(
          {ErrorCode::StrataSumMismatch, path + ".strata",
           "stratum counts sum to " + std::to_string(sum) + " but group '" +
               group_name + "' has population " + std::to_string(group_population)});
  }
}

}  // namespace detail

// Returns a normalized summary with derived totals, or throws a
// ValidationError naming every violated invariant. Idempotent: validating
// a validated summary returns an equal value.
inline CohortSummary validate_cohort(const CohortSummary& raw) {
  std::vector<Violation> violations;
  CohortSummary out = raw;

  if (out.groups.empty())
    violations.push_back({ErrorCode::EmptyCohort, "cohort.groups", "no groups given"});

  std::map<std::string, std::int64_t> population_by_name;
  std::int64_t total_population = 0;
  std::int64_t total_cases = 0;
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    const auto& g = out.groups[i];
    const std::string path = "cohort.groups[" + std::to_string(i) + "]";
    if (g.name == "total")
      violations.push_back({ErrorCode::DuplicateGroupName, path + ".name",
                            "'total' is reserved for the derived aggregate"});
    if (!population_by_name.emplace(g.name, g.population).second)
      violations.push_back({ErrorCode::DuplicateGroupName, path + ".name",
                            "duplicate group name '" + g.name + "'"});
    if (g.population < 0)
      violations.push_back({ErrorCode::NegativeCount, path + ".population",
                            "population " + std::to_string(g.population)});
    if (g.cases < 0)
      violations.push_back({ErrorCode::NegativeCount, path + ".cases",
                            "cases " + std::to_string(g.cases)});
    if (g.cases > g.population)
      violations.push_back(
          {ErrorCode::CasesExceedPopulation, path,
           std::to_string(g.cases) + " cases in a population of " +
               std::to_string(g.population)});
    total_population += g.population;
    total_cases += g.cases;
  }

  out.total = GroupCount{"total", total_population, total_cases};
  if (out.declared_total) {
    if (out.declared_total->population != total_population ||
        out.declared_total->cases != total_cases)
      violations.push_back(
          {ErrorCode::ConflictingDeclaration, "cohort.declared_total",
           "declared total " + std::to_string(out.declared_total->population) + "/" +
               std::to_string(out.declared_total->cases) +
               " disagrees with derived total " + std::to_string(total_population) +
               "/" + std::to_string(total_cases)});
    out.declared_total->name = "total";
  }

  for (auto& [name, set] : out.strata_by_group) {
    const std::string path = "cohort.strata['" + name + "']";
    std::int64_t group_population = 0;
    if (name == "total") {
      group_population = total_population;
    } else {
      auto it = population_by_name.find(name);
      if (it == population_by_name.end()) {
        violations.push_back({ErrorCode::UnknownGroup, path,
                              "strata reference unknown group '" + name + "'"});
        continue;
      }
      group_population = it->second;
    }
    detail::validate_stratum_set(set, name, group_population, path, violations);
  }

  if (!violations.empty()) throw ValidationError(std::move(violations));
  return out;
}

// Benchmark invariants: demographic proportions normalized like cohort
// strata; the annual series may be empty here (baseline_stats rejects an
// empty series at the point of use).
inline BenchmarkBaseline validate_benchmark(const BenchmarkBaseline& raw) {
  std::vector<Violation> violations;
  BenchmarkBaseline out = raw;

  for (std::size_t i = 0; i < out.annual.size(); ++i) {
    if (out.annual[i].rate.value < 0.0)
      violations.push_back({ErrorCode::NegativeCount,
                            "benchmark.annual_rates[" + std::to_string(i) + "]",
                            "negative rate"});
    if (!(out.annual[i].rate.scale > 0.0))
      violations.push_back({ErrorCode::InvalidScale,
                            "benchmark.annual_rates[" + std::to_string(i) + "]",
                            "scale must be > 0"});
  }
  if (!out.demographic.empty()) {
    std::vector<double> props;
    props.reserve(out.demographic.size());
    for (const auto& s : out.demographic) props.push_back(s.proportion);
    if (detail::normalize_proportions(props, "benchmark.demographic", violations))
      for (std::size_t i = 0; i < props.size(); ++i)
        out.demographic[i].proportion = props[i];
  }
  if (out.reference_population < 0)
    violations.push_back({ErrorCode::NegativeCount, "benchmark.reference_population",
                          "negative reference population"});

  if (!violations.empty()) throw ValidationError(std::move(violations));
  return out;
}

}  // namespace evaudit
