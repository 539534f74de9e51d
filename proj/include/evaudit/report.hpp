// Report rendering: a versioned machine format (JSON, schema names frozen in
// docs/report_schema.md) that parses back to an equal report, and a human
// format laid out as observed / expected / inconsistency with every computed
// number shown next to its formula inputs.
#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evaudit/audit.hpp"
#include "evaudit/errors.hpp"

namespace evaudit {

inline constexpr const char* kReportSchema = "evaudit.report/v1";
inline constexpr const char* kSimReportSchema = "evaudit.simreport/v1";

namespace detail {

using nlohmann::json;

inline json to_json(const AuditConfig& c) {
  return json{{"cr_deviation_sd_threshold", c.cr_deviation_sd_threshold},
              {"cr_deviation_pct_threshold", c.cr_deviation_pct_threshold},
              {"gof_alpha", c.gof_alpha},
              {"rate_scale", c.rate_scale}};
}

inline AuditConfig audit_config_from_json(const json& j) {
  AuditConfig c;
  c.cr_deviation_sd_threshold = j.at("cr_deviation_sd_threshold").get<double>();
  c.cr_deviation_pct_threshold = j.at("cr_deviation_pct_threshold").get<double>();
  c.gof_alpha = j.at("gof_alpha").get<double>();
  c.rate_scale = j.at("rate_scale").get<double>();
  return c;
}

inline json to_json(const GroupRateEntry& g) {
  return json{{"name", g.name},
              {"population", g.population},
              {"cases", g.cases},
              {"rate", g.rate}};
}

inline GroupRateEntry group_rate_from_json(const json& j) {
  return GroupRateEntry{j.at("name").get<std::string>(),
                        j.at("population").get<std::int64_t>(),
                        j.at("cases").get<std::int64_t>(),
                        j.at("rate").get<double>()};
}

inline json to_json(const Flag& f) {
  return json{{"code", f.code},
              {"severity", severity_name(f.severity)},
              {"message", f.message}};
}

inline Flag flag_from_json(const json& j) {
  Flag f;
  f.code = j.at("code").get<std::string>();
  f.severity = j.at("severity").get<std::string>() == "violation"
                   ? Severity::violation
                   : Severity::info;
  f.message = j.at("message").get<std::string>();
  return f;
}

}  // namespace detail

inline std::string render_machine(const AuditReport& r) {
  using nlohmann::json;
  json j;
  j["schema"] = kReportSchema;
  j["config"] = detail::to_json(r.config);

  json groups = json::array();
  for (const auto& g : r.group_rates) groups.push_back(detail::to_json(g));
  j["rates"] = json{{"groups", groups}, {"total", detail::to_json(r.total_rate)}};

  j["baseline"] = json{{"mean", r.baseline_mean},
                       {"sd", r.baseline_sd},
                       {"n_years", r.baseline_years},
                       {"sd_convention", "population"}};

  j["deviation"] = json{{"absolute", r.deviation.absolute},
                        {"percent", r.deviation.percent_points},
                        {"sd_multiples", r.deviation.sd_multiples},
                        {"sd_defined", r.deviation.sd_defined}};

  if (r.projections) {
    json p{{"reference_population", r.projections->reference_population},
           {"cases_at_cohort_rate", r.projections->cases_at_cohort_rate},
           {"cases_at_baseline_rate", r.projections->cases_at_baseline_rate}};
    if (r.projections->reported) {
      p["reported"] =
          json{{"at_cohort_rate", r.projections->reported->at_cohort_rate},
               {"at_baseline_rate", r.projections->reported->at_baseline_rate}};
      p["implied_population_at_cohort_rate"] =
          r.projections->implied_population_at_cohort_rate;
      p["implied_population_at_baseline_rate"] =
          r.projections->implied_population_at_baseline_rate;
    } else {
      p["reported"] = nullptr;
    }
    j["projections"] = p;
  } else {
    j["projections"] = nullptr;
  }

  if (r.gof) {
    j["gof"] = nlohmann::json{{"labels", r.gof->labels},
                              {"observed", r.gof->observed},
                              {"observed_proportions", r.gof->observed_proportions},
                              {"expected_proportions", r.gof->expected_proportions},
                              {"expected_counts", r.gof->expected_counts},
                              {"statistic", r.gof->statistic},
                              {"df", r.gof->df},
                              {"p_value", r.gof->p_value},
                              {"p_floor_hit", r.gof->p_floor_hit}};
  } else {
    j["gof"] = nullptr;
  }

  if (r.signature) {
    j["ratio_signature"] = json{{"total", r.signature->total},
                                {"base", r.signature->base},
                                {"base_group_name", r.signature->base_group_name},
                                {"exact", r.signature->exact},
                                {"k", r.signature->k}};
  } else {
    j["ratio_signature"] = nullptr;
  }

  json flags = json::array();
  for (const auto& f : r.flags) flags.push_back(detail::to_json(f));
  j["flags"] = flags;
  j["notes"] = r.notes;
  j["verdict"] = verdict_name(r.verdict);
  return j.dump(2) + "\n";
}

inline AuditReport parse_report(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != kReportSchema)
      throw Error(ErrorCode::ParseError,
                  "unsupported schema '" + j.at("schema").get<std::string>() + "'");
    AuditReport r;
    r.config = detail::audit_config_from_json(j.at("config"));
    for (const auto& g : j.at("rates").at("groups"))
      r.group_rates.push_back(detail::group_rate_from_json(g));
    r.total_rate = detail::group_rate_from_json(j.at("rates").at("total"));
    r.baseline_mean = j.at("baseline").at("mean").get<double>();
    r.baseline_sd = j.at("baseline").at("sd").get<double>();
    r.baseline_years = j.at("baseline").at("n_years").get<int>();
    const auto& d = j.at("deviation");
    r.deviation = {d.at("absolute").get<double>(), d.at("percent").get<double>(),
                   d.at("sd_multiples").get<double>(), d.at("sd_defined").get<bool>()};
    if (!j.at("projections").is_null()) {
      const auto& p = j.at("projections");
      ProjectionSection proj;
      proj.reference_population = p.at("reference_population").get<std::int64_t>();
      proj.cases_at_cohort_rate = p.at("cases_at_cohort_rate").get<double>();
      proj.cases_at_baseline_rate = p.at("cases_at_baseline_rate").get<double>();
      if (!p.at("reported").is_null()) {
        proj.reported = ReportedProjections{
            p.at("reported").at("at_cohort_rate").get<double>(),
            p.at("reported").at("at_baseline_rate").get<double>()};
        proj.implied_population_at_cohort_rate =
            p.at("implied_population_at_cohort_rate").get<double>();
        proj.implied_population_at_baseline_rate =
            p.at("implied_population_at_baseline_rate").get<double>();
      }
      r.projections = proj;
    }
    if (!j.at("gof").is_null()) {
      const auto& g = j.at("gof");
      GofSection s;
      s.labels = g.at("labels").get<std::vector<std::string>>();
      s.observed = g.at("observed").get<std::vector<std::int64_t>>();
      s.observed_proportions =
          g.at("observed_proportions").get<std::vector<double>>();
      s.expected_proportions =
          g.at("expected_proportions").get<std::vector<double>>();
      s.expected_counts = g.at("expected_counts").get<std::vector<double>>();
      s.statistic = g.at("statistic").get<double>();
      s.df = g.at("df").get<int>();
      s.p_value = g.at("p_value").get<double>();
      s.p_floor_hit = g.at("p_floor_hit").get<bool>();
      r.gof = s;
    }
    if (!j.at("ratio_signature").is_null()) {
      const auto& s = j.at("ratio_signature");
      r.signature = SignatureSection{s.at("total").get<std::int64_t>(),
                                     s.at("base").get<std::int64_t>(),
                                     s.at("base_group_name").get<std::string>(),
                                     s.at("exact").get<bool>(), s.at("k").get<int>()};
    }
    for (const auto& f : j.at("flags")) r.flags.push_back(detail::flag_from_json(f));
    r.notes = j.at("notes").get<std::vector<std::string>>();
    r.verdict = j.at("verdict").get<std::string>() == "violations"
                    ? Verdict::violations
                    : Verdict::pass;
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
}

namespace detail {

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string signed_fixed(double value, int decimals) {
  std::string s = format_fixed(value, decimals);
  return !s.empty() && s[0] == '-' ? s : "+" + s;
}

}  // namespace detail

inline std::string render_human(const AuditReport& r) {
  using detail::format_fixed;
  using detail::pad_left;
  using detail::pad_right;
  std::ostringstream out;
  const int scale = static_cast<int>(r.config.rate_scale);

  out << "EXTERNAL VALIDITY AUDIT\n";
  out << "=======================\n\n";

  out << "Crude incidence rates (per " << scale << " persons)\n";
  out << "  " << pad_right("group", 18) << pad_left("population", 12)
      << pad_left("cases", 10) << pad_left("CR", 10) << "\n";
  std::vector<GroupRateEntry> rows = r.group_rates;
  rows.push_back(r.total_rate);
  for (const auto& g : rows) {
    out << "  " << pad_right(g.name, 18) << pad_left(std::to_string(g.population), 12)
        << pad_left(std::to_string(g.cases), 10)
        << pad_left(format_fixed(g.rate, 2), 10) << "   [= " << g.cases << " / "
        << g.population << " x " << scale << "]\n";
  }
  out << "\n";

  out << "National baseline\n";
  out << "  mean CR " << format_fixed(r.baseline_mean, 2) << " per " << scale
      << ", SD " << format_fixed(r.baseline_sd, 2)
      << " (population convention, N = " << r.baseline_years << " years)\n\n";

  out << "Structural consistency (observed vs expected)\n";
  out << "  " << pad_right("metric", 30) << pad_left("observed", 14)
      << pad_left("expected", 14) << "   inconsistency\n";
  out << "  " << pad_right("crude incidence rate", 30)
      << pad_left(format_fixed(r.total_rate.rate, 2), 14)
      << pad_left(format_fixed(r.baseline_mean, 2), 14) << "   "
      << format_fixed(r.deviation.percent_points, 2) << "% deviation [= "
      << format_fixed(r.deviation.absolute, 2) << " / "
      << format_fixed(r.baseline_mean, 2);
  if (r.deviation.sd_defined)
    out << "; " << format_fixed(r.deviation.sd_multiples, 2) << " SD";
  out << "]\n";
  if (r.gof) {
    for (std::size_t i = 0; i < r.gof->labels.size(); ++i) {
      const double obs = r.gof->observed_proportions[i] * 100.0;
      const double exp = r.gof->expected_proportions[i] * 100.0;
      out << "  " << pad_right("age share '" + r.gof->labels[i] + "'", 30)
          << pad_left(format_fixed(obs, 2) + "%", 14)
          << pad_left(format_fixed(exp, 2) + "%", 14) << "   "
          << detail::signed_fixed(obs - exp, 2) << " pp [= " << r.gof->observed[i]
          << " / " << r.total_rate.population << "]\n";
    }
    out << "  " << pad_right("age-structure chi-squared", 30)
        << pad_left(format_fixed(r.gof->statistic, 2), 14) << pad_left("--", 14)
        << "   p " << detail::format_p_value(r.gof->p_value, r.gof->p_floor_hit)
        << " (df " << r.gof->df << ") [= sum (O-E)^2/E; O =";
    for (auto o : r.gof->observed) out << " " << o;
    out << "; E =";
    for (auto e : r.gof->expected_counts) out << " " << format_fixed(e, 2);
    out << "]\n";
  }
  out << "\n";

  if (r.projections) {
    out << "Projections (reference population " << r.projections->reference_population
        << ")\n";
    out << "  at cohort CR " << format_fixed(r.total_rate.rate, 2) << ": "
        << format_fixed(r.projections->cases_at_cohort_rate, 1)
        << " expected annual cases [= " << format_fixed(r.total_rate.rate, 2) << " x "
        << r.projections->reference_population << " / " << scale << "]\n";
    out << "  at baseline CR " << format_fixed(r.baseline_mean, 2) << ": "
        << format_fixed(r.projections->cases_at_baseline_rate, 1)
        << " expected annual cases [= " << format_fixed(r.baseline_mean, 2) << " x "
        << r.projections->reference_population << " / " << scale << "]\n";
    if (r.projections->reported) {
      out << "  reported: " << format_fixed(r.projections->reported->at_cohort_rate, 0)
          << " cases at the cohort rate (implies population "
          << format_fixed(r.projections->implied_population_at_cohort_rate, 0)
          << "), " << format_fixed(r.projections->reported->at_baseline_rate, 0)
          << " at the baseline rate (implies population "
          << format_fixed(r.projections->implied_population_at_baseline_rate, 0)
          << ")\n";
    }
    out << "\n";
  }

  if (r.signature) {
    out << "Ratio signature\n";
    if (r.signature->exact) {
      out << "  total " << r.signature->total << " = " << (r.signature->k + 1)
          << " x " << r.signature->base << " (group '"
          << r.signature->base_group_name << "'): exact 1:" << r.signature->k
          << " matching signature\n\n";
    } else {
      out << "  total " << r.signature->total
          << " is not an integer multiple of the smallest group "
          << r.signature->base << " ('" << r.signature->base_group_name
          << "'): no signature\n\n";
    }
  }

  if (!r.notes.empty()) {
    out << "Notes\n";
    for (const auto& n : r.notes) out << "  - " << n << "\n";
    out << "\n";
  }

  if (!r.flags.empty()) {
    out << "Flags\n";
    for (const auto& f : r.flags)
      out << "  [" << (f.severity == Severity::violation ? "VIOLATION" : "INFO")
          << "] " << f.code << ": " << f.message << "\n";
    out << "\n";
  }

  out << "VERDICT: " << (r.verdict == Verdict::violations ? "VIOLATIONS" : "PASS")
      << "\n";
  return out.str();
}

inline std::string render_machine(const SimAuditReport& r) {
  using nlohmann::json;
  json j;
  j["schema"] = kSimReportSchema;
  j["config"] = detail::to_json(r.config);

  const SimResult& s = r.result;
  json res;
  res["stratum_labels"] = s.stratum_labels;
  res["population"] = json{{"size", s.population_size},
                           {"cases", s.population_cases},
                           {"cr", s.population_cr.value},
                           {"cr_scale", s.population_cr.scale},
                           {"stratum_counts", s.population_stratum_counts},
                           {"stratum_shares", s.population_stratum_shares}};
  res["matched"] = json{{"total", s.matched_total},
                        {"cases", s.matched_cases},
                        {"cr", s.matched_cr.value},
                        {"cr_scale", s.matched_cr.scale},
                        {"stratum_counts", s.matched_stratum_counts},
                        {"stratum_shares", s.matched_stratum_shares},
                        {"base_matched", s.matched_base},
                        {"base_unmatched", s.unmatched_base}};
  res["base_group"] = json{{"name", base_group_name(s.base_group)},
                           {"size", s.base_group_size},
                           {"stratum_shares", s.base_group_stratum_shares}};
  res["k"] = s.k;
  res["seed"] = s.seed;
  res["propensity"] = json{{"converged", s.propensity_converged},
                           {"iterations", s.propensity_iterations}};
  res["gof_vs_national"] = json{{"statistic", s.gof_vs_national.statistic},
                                {"df", s.gof_vs_national.df},
                                {"p_value", s.gof_vs_national.p_value},
                                {"p_floor_hit", s.gof_vs_national.p_floor_hit}};
  res["deviation_vs_population"] =
      json{{"absolute", s.deviation_vs_population.absolute},
           {"percent", s.deviation_vs_population.percent},
           {"sd_multiples", s.deviation_vs_population.sd_multiples},
           {"sd_defined", s.deviation_vs_population.sd_defined},
           {"scale", s.deviation_vs_population.scale}};
  j["result"] = res;

  json flags = json::array();
  for (const auto& f : r.flags) flags.push_back(detail::to_json(f));
  j["flags"] = flags;
  j["verdict"] = verdict_name(r.verdict);
  return j.dump(2) + "\n";
}

inline SimAuditReport parse_sim_report(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("sim report: ") + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != kSimReportSchema)
      throw Error(ErrorCode::ParseError,
                  "unsupported schema '" + j.at("schema").get<std::string>() + "'");
    SimAuditReport r;
    r.config = detail::audit_config_from_json(j.at("config"));
    const auto& res = j.at("result");
    SimResult& s = r.result;
    s.stratum_labels = res.at("stratum_labels").get<std::vector<std::string>>();
    const auto& pop = res.at("population");
    s.population_size = pop.at("size").get<std::int64_t>();
    s.population_cases = pop.at("cases").get<std::int64_t>();
    s.population_cr = Rate{pop.at("cr").get<double>(), pop.at("cr_scale").get<double>()};
    s.population_stratum_counts =
        pop.at("stratum_counts").get<std::vector<std::int64_t>>();
    s.population_stratum_shares =
        pop.at("stratum_shares").get<std::vector<double>>();
    const auto& m = res.at("matched");
    s.matched_total = m.at("total").get<std::int64_t>();
    s.matched_cases = m.at("cases").get<std::int64_t>();
    s.matched_cr = Rate{m.at("cr").get<double>(), m.at("cr_scale").get<double>()};
    s.matched_stratum_counts = m.at("stratum_counts").get<std::vector<std::int64_t>>();
    s.matched_stratum_shares = m.at("stratum_shares").get<std::vector<double>>();
    s.matched_base = m.at("base_matched").get<std::int64_t>();
    s.unmatched_base = m.at("base_unmatched").get<std::int64_t>();
    const auto& b = res.at("base_group");
    s.base_group = b.at("name").get<std::string>() == "treated" ? BaseGroup::treated
                                                                : BaseGroup::untreated;
    s.base_group_size = b.at("size").get<std::int64_t>();
    s.base_group_stratum_shares = b.at("stratum_shares").get<std::vector<double>>();
    s.k = res.at("k").get<int>();
    s.seed = res.at("seed").get<std::uint64_t>();
    s.propensity_converged = res.at("propensity").at("converged").get<bool>();
    s.propensity_iterations = res.at("propensity").at("iterations").get<int>();
    const auto& g = res.at("gof_vs_national");
    s.gof_vs_national = GofResult{g.at("statistic").get<double>(), g.at("df").get<int>(),
                                  g.at("p_value").get<double>(),
                                  g.at("p_floor_hit").get<bool>()};
    const auto& d = res.at("deviation_vs_population");
    s.deviation_vs_population =
        DeviationResult{d.at("absolute").get<double>(), d.at("percent").get<double>(),
                        d.at("sd_multiples").get<double>(),
                        d.at("sd_defined").get<bool>(), d.at("scale").get<double>()};
    for (const auto& f : j.at("flags")) r.flags.push_back(detail::flag_from_json(f));
    r.verdict = j.at("verdict").get<std::string>() == "violations"
                    ? Verdict::violations
                    : Verdict::pass;
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("sim report: ") + e.what());
  }
}

inline std::string render_human(const SimAuditReport& r) {
  using detail::format_fixed;
  using detail::pad_left;
  using detail::pad_right;
  const SimResult& s = r.result;
  std::ostringstream out;
  out << "MATCHING PARADOX SIMULATION\n";
  out << "===========================\n\n";
  out << "Run: n = " << s.population_size << ", base group = "
      << base_group_name(s.base_group) << ", k = " << s.k << ", seed = " << s.seed
      << " (SplitMix64)\n";
  out << "Propensity model: " << (s.propensity_converged ? "converged" : "not converged")
      << " in " << s.propensity_iterations << " iterations\n\n";

  out << "Cohort sizes\n";
  out << "  base group " << s.base_group_size << ", matched base " << s.matched_base
      << ", unmatched " << s.unmatched_base << ", matched cohort " << s.matched_total
      << " [= (" << s.k << "+1) x " << s.matched_base << "]\n\n";

  out << "Stratum structure (population vs matched cohort)\n";
  out << "  " << pad_right("stratum", 12) << pad_left("population", 14)
      << pad_left("base group", 14) << pad_left("matched", 14) << "\n";
  for (std::size_t i = 0; i < s.stratum_labels.size(); ++i) {
    out << "  " << pad_right(s.stratum_labels[i], 12)
        << pad_left(format_fixed(s.population_stratum_shares[i] * 100.0, 2) + "%", 14)
        << pad_left(format_fixed(s.base_group_stratum_shares[i] * 100.0, 2) + "%", 14)
        << pad_left(format_fixed(s.matched_stratum_shares[i] * 100.0, 2) + "%", 14)
        << "   [matched " << s.matched_stratum_counts[i] << " / " << s.matched_total
        << "]\n";
  }
  out << "\n";

  out << "Crude incidence rates\n";
  out << "  population CR " << format_fixed(s.population_cr.value, 2) << " per "
      << static_cast<int>(s.population_cr.scale) << " [= " << s.population_cases
      << " / " << s.population_size << " x " << static_cast<int>(s.population_cr.scale)
      << "]\n";
  out << "  matched CR    " << format_fixed(s.matched_cr.value, 2) << " per "
      << static_cast<int>(s.matched_cr.scale) << " [= " << s.matched_cases << " / "
      << s.matched_total << " x " << static_cast<int>(s.matched_cr.scale) << "]\n";
  out << "  deviation     " << format_fixed(s.deviation_vs_population.percent * 100.0, 2)
      << "% [= " << format_fixed(s.deviation_vs_population.absolute, 2) << " / "
      << format_fixed(s.population_cr.value, 2) << "]\n\n";

  out << "Age-structure GOF vs national proportions\n";
  out << "  chi-squared " << format_fixed(s.gof_vs_national.statistic, 2) << " (df "
      << s.gof_vs_national.df << "), p "
      << detail::format_p_value(s.gof_vs_national.p_value,
                                s.gof_vs_national.p_floor_hit)
      << "\n\n";

  if (!r.flags.empty()) {
    out << "Flags\n";
    for (const auto& f : r.flags)
      out << "  [" << (f.severity == Severity::violation ? "VIOLATION" : "INFO")
          << "] " << f.code << ": " << f.message << "\n";
    out << "\n";
  }
  out << "VERDICT: " << (r.verdict == Verdict::violations ? "VIOLATIONS" : "PASS")
      << "\n";
  return out.str();
}

}  // namespace evaudit
