// The audit engine: composes rates, deviation, goodness-of-fit and the ratio
// signature into a report with violation flags and a pass/violations verdict.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evaudit/domain.hpp"
#include "evaudit/errors.hpp"
#include "evaudit/gof.hpp"
#include "evaudit/psm.hpp"
#include "evaudit/rates.hpp"
#include "evaudit/simulate.hpp"

namespace evaudit {

struct AuditConfig {
  double cr_deviation_sd_threshold = 2.0;   // flag when |deviation| > this many SDs
  double cr_deviation_pct_threshold = 0.10; // or when |deviation| > this fraction
  double gof_alpha = 0.001;
  double rate_scale = 10'000.0;

  friend bool operator==(const AuditConfig&, const AuditConfig&) = default;
};

inline AuditConfig validate_audit_config(const AuditConfig& cfg) {
  if (!(cfg.cr_deviation_sd_threshold > 0.0) || !(cfg.cr_deviation_pct_threshold > 0.0))
    throw Error(ErrorCode::InvalidConfig, "deviation thresholds must be > 0");
  if (!(cfg.gof_alpha > 0.0) || !(cfg.gof_alpha < 0.5))
    throw Error(ErrorCode::InvalidConfig, "gof_alpha must lie in (0, 0.5)");
  if (!(cfg.rate_scale > 0.0))
    throw Error(ErrorCode::InvalidConfig, "rate_scale must be > 0");
  return cfg;
}

enum class Severity { info, violation };

inline const char* severity_name(Severity s) {
  return s == Severity::violation ? "violation" : "info";
}

// Every flag cites the computed value and the threshold it crossed.
struct Flag {
  std::string code;
  Severity severity = Severity::info;
  std::string message;

  friend bool operator==(const Flag&, const Flag&) = default;
};

inline constexpr const char* kFlagExternalValidity = "STROBE21_EXTERNAL_VALIDITY";
inline constexpr const char* kFlagStructuralBias = "STROBE12_STRUCTURAL_BIAS";
inline constexpr const char* kFlagRatioSignature = "PSM_RATIO_SIGNATURE";
inline constexpr const char* kFlagProjectionInconsistent =
    "PROJECTION_POPULATION_INCONSISTENT";

struct GroupRateEntry {
  std::string name;
  std::int64_t population = 0;
  std::int64_t cases = 0;
  double rate = 0.0;  // per report scale

  friend bool operator==(const GroupRateEntry&, const GroupRateEntry&) = default;
};

struct DeviationSection {
  double absolute = 0.0;       // per report scale
  double percent_points = 0.0; // signed percentage points, Table-style
  double sd_multiples = 0.0;
  bool sd_defined = false;

  friend bool operator==(const DeviationSection&, const DeviationSection&) = default;
};

struct ProjectionSection {
  std::int64_t reference_population = 0;
  double cases_at_cohort_rate = 0.0;
  double cases_at_baseline_rate = 0.0;
  std::optional<ReportedProjections> reported;
  // populations implied by the reported projections, when present
  double implied_population_at_cohort_rate = 0.0;
  double implied_population_at_baseline_rate = 0.0;

  friend bool operator==(const ProjectionSection&, const ProjectionSection&) = default;
};

struct GofSection {
  std::vector<std::string> labels;
  std::vector<std::int64_t> observed;
  std::vector<double> observed_proportions;
  std::vector<double> expected_proportions;
  std::vector<double> expected_counts;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool p_floor_hit = false;

  friend bool operator==(const GofSection&, const GofSection&) = default;
};

struct SignatureSection {
  std::int64_t total = 0;
  std::int64_t base = 0;
  std::string base_group_name;  // name of the smallest group
  bool exact = false;
  int k = 0;

  friend bool operator==(const SignatureSection&, const SignatureSection&) = default;
};

enum class Verdict { pass, violations };

inline const char* verdict_name(Verdict v) {
  return v == Verdict::violations ? "violations" : "pass";
}

struct AuditReport {
  AuditConfig config;
  std::vector<GroupRateEntry> group_rates;
  GroupRateEntry total_rate;
  double baseline_mean = 0.0;
  double baseline_sd = 0.0;
  int baseline_years = 0;
  DeviationSection deviation;
  std::optional<ProjectionSection> projections;
  std::optional<GofSection> gof;
  std::optional<SignatureSection> signature;
  std::vector<Flag> flags;
  std::vector<std::string> notes;
  Verdict verdict = Verdict::pass;

  friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

namespace detail {

// Fixed-point rendering with half-away-from-zero rounding, display only.
inline std::string format_fixed(double value, int decimals) {
  double scale = 1.0;
  for (int i = 0; i < decimals; ++i) scale *= 10.0;
  long long units = std::llround(value * scale);
  std::string sign = units < 0 ? "-" : "";
  if (units < 0) units = -units;
  const long long whole = units / static_cast<long long>(scale);
  long long frac = units % static_cast<long long>(scale);
  if (decimals == 0) return sign + std::to_string(whole);
  std::string f = std::to_string(frac);
  return sign + std::to_string(whole) + "." +
         std::string(static_cast<std::size_t>(decimals) - f.size(), '0') + f;
}

inline std::string format_p_value(double p, bool floor_hit) {
  if (floor_hit || p < 0.00001) return "< 0.00001";
  return format_fixed(p, 5);
}

inline Verdict verdict_from_flags(const std::vector<Flag>& flags) {
  for (const auto& f : flags)
    if (f.severity == Severity::violation) return Verdict::violations;
  return Verdict::pass;
}

}  // namespace detail

// Runs the full audit on validated inputs. The cohort's age structure is
// taken from its "total" strata when present, otherwise aggregated from
// per-group stratum counts; the GOF section is omitted when neither exists
// or the benchmark carries no demographic.
inline AuditReport run_audit(const CohortSummary& cohort,
                             const BenchmarkBaseline& benchmark,
                             const AuditConfig& config = {}) {
  const AuditConfig cfg = validate_audit_config(config);
  AuditReport report;
  report.config = cfg;
  report.notes = cohort.notes;
  report.notes.insert(report.notes.end(), benchmark.notes.begin(),
                      benchmark.notes.end());

  for (const auto& g : cohort.groups)
    report.group_rates.push_back(
        {g.name, g.population, g.cases,
         crude_rate(g.cases, g.population, cfg.rate_scale).value});
  const Rate total_cr = crude_rate(cohort.total.cases, cohort.total.population,
                                   cfg.rate_scale);
  report.total_rate = {"total", cohort.total.population, cohort.total.cases,
                       total_cr.value};

  const BaselineStats baseline = baseline_stats(benchmark.annual, cfg.rate_scale);
  report.baseline_mean = baseline.mean.value;
  report.baseline_sd = baseline.sd.value;
  report.baseline_years = baseline.n_years;

  const DeviationResult dev = deviation(total_cr, baseline);
  report.deviation = {dev.absolute, dev.percent * 100.0, dev.sd_multiples,
                      dev.sd_defined};

  if (benchmark.reference_population > 0) {
    ProjectionSection proj;
    proj.reference_population = benchmark.reference_population;
    proj.cases_at_cohort_rate = project_cases(total_cr, benchmark.reference_population);
    proj.cases_at_baseline_rate =
        project_cases(baseline.mean, benchmark.reference_population);
    if (benchmark.reported_projections) {
      proj.reported = benchmark.reported_projections;
      proj.implied_population_at_cohort_rate =
          proj.reported->at_cohort_rate * cfg.rate_scale / total_cr.value;
      proj.implied_population_at_baseline_rate =
          proj.reported->at_baseline_rate * cfg.rate_scale / baseline.mean.value;
    }
    report.projections = proj;
  }

  if (!benchmark.demographic.empty()) {
    const StratumSet* total_strata = nullptr;
    if (auto it = cohort.strata_by_group.find("total");
        it != cohort.strata_by_group.end())
      total_strata = &it->second;

    std::vector<std::int64_t> observed;
    std::vector<double> expected;
    std::vector<std::string> labels;
    bool have_observed = false;

    if (total_strata != nullptr) {
      have_observed = true;
      for (const auto& nat : benchmark.demographic) {
        auto match = std::find_if(
            total_strata->strata.begin(), total_strata->strata.end(),
            [&nat](const Stratum& s) { return s.label == nat.label; });
        if (match == total_strata->strata.end())
          throw Error(ErrorCode::StrataLabelMismatch,
                      "cohort strata have no category labelled '" + nat.label + "'");
        labels.push_back(nat.label);
        expected.push_back(nat.proportion);
        observed.push_back(match->count
                               ? *match->count
                               : round_count(match->proportion,
                                             cohort.total.population));
      }
    } else {
      // aggregate per-group stratum counts when every group carries them
      std::vector<std::int64_t> sums(benchmark.demographic.size(), 0);
      bool complete = !cohort.groups.empty();
      for (const auto& g : cohort.groups) {
        auto it = cohort.strata_by_group.find(g.name);
        if (it == cohort.strata_by_group.end()) { complete = false; break; }
        for (std::size_t i = 0; i < benchmark.demographic.size(); ++i) {
          const auto& nat = benchmark.demographic[i];
          auto match = std::find_if(
              it->second.strata.begin(), it->second.strata.end(),
              [&nat](const Stratum& s) { return s.label == nat.label; });
          if (match == it->second.strata.end() || !match->count) {
            complete = false;
            break;
          }
          sums[i] += *match->count;
        }
        if (!complete) break;
      }
      if (complete) {
        have_observed = true;
        observed = sums;
        for (const auto& nat : benchmark.demographic) {
          labels.push_back(nat.label);
          expected.push_back(nat.proportion);
        }
      }
    }

    if (have_observed) {
      GofInput input{observed, expected, labels};
      const GofResult result = chi_squared_gof(input);
      GofSection section;
      section.labels = labels;
      section.observed = observed;
      section.expected_proportions = expected;
      const auto total = static_cast<double>(input.total());
      for (std::size_t i = 0; i < observed.size(); ++i) {
        section.observed_proportions.push_back(static_cast<double>(observed[i]) /
                                               total);
        section.expected_counts.push_back(expected[i] * total);
      }
      section.statistic = result.statistic;
      section.df = result.df;
      section.p_value = result.p_value;
      section.p_floor_hit = result.p_floor_hit;
      report.gof = section;
    }
  }

  if (!cohort.groups.empty()) {
    const auto smallest = std::min_element(
        cohort.groups.begin(), cohort.groups.end(),
        [](const GroupCount& a, const GroupCount& b) {
          return a.population != b.population ? a.population < b.population
                                              : a.name < b.name;
        });
    if (smallest->population >= 1 && cohort.total.population >= smallest->population) {
      const RatioSignature sig =
          detect_ratio_signature(cohort.total.population, smallest->population);
      report.signature = SignatureSection{sig.total, sig.base, smallest->name,
                                          sig.exact, sig.k.value_or(0)};
    }
  }

  // flags
  using detail::format_fixed;
  const bool pct_hit =
      std::fabs(dev.percent) > cfg.cr_deviation_pct_threshold;
  const bool sd_hit = dev.sd_defined &&
                      std::fabs(dev.sd_multiples) > cfg.cr_deviation_sd_threshold;
  if (pct_hit || sd_hit) {
    std::ostringstream msg;
    msg << "cohort CR " << format_fixed(total_cr.value, 2) << " vs baseline "
        << format_fixed(baseline.mean.value, 2) << ": deviation "
        << format_fixed(report.deviation.percent_points, 2) << "% (threshold "
        << format_fixed(cfg.cr_deviation_pct_threshold * 100.0, 2) << "%)";
    if (dev.sd_defined)
      msg << ", " << format_fixed(dev.sd_multiples, 2) << " SD (threshold "
          << format_fixed(cfg.cr_deviation_sd_threshold, 2) << ")";
    report.flags.push_back({kFlagExternalValidity, Severity::violation, msg.str()});
  }
  if (report.gof && report.gof->p_value < cfg.gof_alpha) {
    std::ostringstream msg;
    msg << "age-structure chi-squared " << format_fixed(report.gof->statistic, 2)
        << " (df " << report.gof->df << "), p "
        << detail::format_p_value(report.gof->p_value, report.gof->p_floor_hit)
        << " below alpha " << cfg.gof_alpha;
    report.flags.push_back({kFlagStructuralBias, Severity::violation, msg.str()});
  }
  if (report.signature && report.signature->exact) {
    std::ostringstream msg;
    msg << "total cohort " << report.signature->total << " = "
        << (report.signature->k + 1) << " x " << report.signature->base
        << " (group '" << report.signature->base_group_name
        << "'): exact 1:" << report.signature->k << " matching signature";
    report.flags.push_back({kFlagRatioSignature, Severity::info, msg.str()});
  }
  if (report.projections && report.projections->reported) {
    const double a = report.projections->implied_population_at_cohort_rate;
    const double b = report.projections->implied_population_at_baseline_rate;
    const double ref = static_cast<double>(report.projections->reference_population);
    if (std::fabs(a - b) / ref > 0.002) {
      std::ostringstream msg;
      msg << "reported projections imply different populations: "
          << format_fixed(report.projections->reported->at_cohort_rate, 0)
          << " cases at the cohort rate implies " << format_fixed(a, 0)
          << " persons while "
          << format_fixed(report.projections->reported->at_baseline_rate, 0)
          << " cases at the baseline rate implies " << format_fixed(b, 0)
          << " (reference population " << report.projections->reference_population
          << ")";
      report.flags.push_back({kFlagProjectionInconsistent, Severity::info, msg.str()});
    }
  }
  report.verdict = detail::verdict_from_flags(report.flags);
  return report;
}

// Simulation results go through the same screening thresholds. The (k+1)x
// size identity is reported as data, not flagged: the simulator constructs
// it by design.
struct SimAuditReport {
  AuditConfig config;
  SimResult result;
  std::vector<Flag> flags;
  Verdict verdict = Verdict::pass;

  friend bool operator==(const SimAuditReport&, const SimAuditReport&) = default;
};

inline SimAuditReport evaluate_simulation(const SimResult& result,
                                          const AuditConfig& config = {}) {
  const AuditConfig cfg = validate_audit_config(config);
  SimAuditReport report;
  report.config = cfg;
  report.result = result;

  const DeviationResult& dev = result.deviation_vs_population;
  const bool pct_hit = std::fabs(dev.percent) > cfg.cr_deviation_pct_threshold;
  const bool sd_hit = dev.sd_defined &&
                      std::fabs(dev.sd_multiples) > cfg.cr_deviation_sd_threshold;
  if (pct_hit || sd_hit) {
    std::ostringstream msg;
    msg << "matched CR " << detail::format_fixed(result.matched_cr.value, 2)
        << " vs population CR " << detail::format_fixed(result.population_cr.value, 2)
        << ": deviation " << detail::format_fixed(dev.percent * 100.0, 2)
        << "% (threshold "
        << detail::format_fixed(cfg.cr_deviation_pct_threshold * 100.0, 2) << "%)";
    report.flags.push_back({kFlagExternalValidity, Severity::violation, msg.str()});
  }
  if (result.gof_vs_national.p_value < cfg.gof_alpha) {
    std::ostringstream msg;
    msg << "matched-cohort age-structure chi-squared "
        << detail::format_fixed(result.gof_vs_national.statistic, 2) << " (df "
        << result.gof_vs_national.df << "), p "
        << detail::format_p_value(result.gof_vs_national.p_value,
                                  result.gof_vs_national.p_floor_hit)
        << " below alpha " << cfg.gof_alpha;
    report.flags.push_back({kFlagStructuralBias, Severity::violation, msg.str()});
  }
  report.verdict = detail::verdict_from_flags(report.flags);
  return report;
}

}  // namespace evaudit
