// evaudit: external-validity audit toolkit for population cohort studies.
// Subcommands: audit, rates, gof, match, simulate.
// Exit codes: 0 pass, 1 violations found, 2 usage or input error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evaudit/audit.hpp"
#include "evaudit/io.hpp"
#include "evaudit/report.hpp"

namespace {

using namespace evaudit;

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::ParseError, "cannot write '" + out_path + "'");
  out << text;
}

std::vector<double> parse_number_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError,
                  std::string(what) + ": not a number: '" + item + "'");
    }
  }
  if (values.empty())
    throw Error(ErrorCode::ParseError, std::string(what) + ": empty list");
  return values;
}

std::vector<std::string> parse_label_list(const std::string& text) {
  std::vector<std::string> labels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) labels.push_back(item);
  return labels;
}

// percent-scale inputs (any value > 1) are normalized like document strata
std::vector<double> as_proportions(std::vector<double> values, const char* what) {
  std::vector<Violation> violations;
  if (!detail::normalize_proportions(values, what, violations))
    throw ValidationError(std::move(violations));
  return values;
}

struct AuditArgs {
  std::string cohort_path;
  std::string benchmark_path;
  std::string format = "human";
  std::string out_path;
  AuditConfig config;
};

int run_audit_cmd(const AuditArgs& args) {
  const auto [cohort, benchmark] = load_inputs(args.cohort_path, args.benchmark_path);
  const AuditReport report = run_audit(cohort, benchmark, args.config);
  emit(args.format == "json" ? render_machine(report) : render_human(report),
       args.out_path);
  return report.verdict == Verdict::violations ? 1 : 0;
}

struct RatesArgs {
  std::int64_t cases = 0;
  std::int64_t population = 0;
  double scale = 10'000.0;
  bool json = false;
};

int run_rates_cmd(const RatesArgs& args) {
  const Rate rate = crude_rate(args.cases, args.population, args.scale);
  if (args.json) {
    nlohmann::json j{{"schema", "evaudit.rates/v1"},
                     {"cases", args.cases},
                     {"population", args.population},
                     {"scale", args.scale},
                     {"rate", rate.value}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "crude rate = " << detail::format_fixed(rate.value, 2) << " per "
              << static_cast<std::int64_t>(args.scale) << "  [= " << args.cases
              << " / " << args.population << " x "
              << static_cast<std::int64_t>(args.scale) << "]\n";
  }
  return 0;
}

struct GofArgs {
  std::string observed;
  std::string proportions;
  std::int64_t total = 0;
  std::string expected;
  std::string labels;
  bool json = false;
};

int run_gof_cmd(const GofArgs& args) {
  const std::vector<double> expected =
      as_proportions(parse_number_list(args.expected, "--expected"), "--expected");
  GofInput input;
  input.expected_proportions = expected;
  if (!args.labels.empty()) input.labels = parse_label_list(args.labels);
  if (!args.observed.empty()) {
    for (double v : parse_number_list(args.observed, "--observed")) {
      if (v < 0.0 || v != std::floor(v))
        throw Error(ErrorCode::ParseError,
                    "--observed: counts must be whole and >= 0");
      input.observed.push_back(static_cast<std::int64_t>(v));
    }
  } else if (!args.proportions.empty()) {
    if (args.total <= 0)
      throw Error(ErrorCode::ParseError, "--proportions requires --total > 0");
    const std::vector<double> props = as_proportions(
        parse_number_list(args.proportions, "--proportions"), "--proportions");
    input = gof_from_proportions(props, args.total, expected, input.labels);
  } else {
    throw Error(ErrorCode::ParseError, "give either --observed or --proportions");
  }

  const GofResult result = chi_squared_gof(input);
  if (args.json) {
    std::vector<double> expected_counts;
    const auto total = static_cast<double>(input.total());
    for (double p : expected) expected_counts.push_back(p * total);
    nlohmann::json j{{"schema", "evaudit.gof/v1"},
                     {"observed", input.observed},
                     {"expected_proportions", expected},
                     {"expected_counts", expected_counts},
                     {"statistic", result.statistic},
                     {"df", result.df},
                     {"p_value", result.p_value},
                     {"p_floor_hit", result.p_floor_hit}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "chi-squared = " << detail::format_fixed(result.statistic, 2)
              << " (df " << result.df << "), p "
              << detail::format_p_value(result.p_value, result.p_floor_hit)
              << "  [= sum (O-E)^2/E; O =";
    for (auto o : input.observed) std::cout << " " << o;
    std::cout << "; E =";
    const auto total = static_cast<double>(input.total());
    for (double p : expected)
      std::cout << " " << detail::format_fixed(p * total, 2);
    std::cout << "]\n";
  }
  return 0;
}

struct MatchArgs {
  std::string input_path;
  std::string output_path;
  int k = 1;
  std::string base = "treated";
  std::optional<double> caliper;
  bool with_replacement = false;
  std::string delimiter = ",";
  std::string report_path;
  bool json = false;
};

int run_match_cmd(const MatchArgs& args) {
  if (args.delimiter.size() != 1)
    throw Error(ErrorCode::ParseError, "--delimiter must be a single character");
  const char delim = args.delimiter[0];
  const IndividualTable table = read_individuals(args.input_path, delim);
  const BaseGroup base =
      args.base == "treated" ? BaseGroup::treated : BaseGroup::untreated;

  const PropensityModel model = fit_propensity(table.records);
  const MatchedCohort cohort = match_cohort(
      table.records, model, base, args.k, args.caliper,
      args.with_replacement ? MatchMode::with_replacement
                            : MatchMode::without_replacement);
  write_matched_file(args.output_path, table, cohort, delim);
  const BalanceReport bal = balance(table.records, &model, cohort,
                                    table.covariate_names);

  nlohmann::json j{{"schema", "evaudit.match/v1"},
                   {"records", table.records.size()},
                   {"base_group", base_group_name(base)},
                   {"with_replacement", args.with_replacement},
                   {"k", cohort.k},
                   {"base_matched", cohort.matched_base_count()},
                   {"base_unmatched", cohort.unmatched_base.size()},
                   {"cohort_size", cohort.size()},
                   {"model",
                    {{"coefficients", model.coefficients},
                     {"converged", model.converged},
                     {"iterations", model.iterations},
                     {"log_likelihood", model.log_likelihood}}}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : bal.rows)
    rows.push_back({{"name", r.name},
                    {"smd_before", r.smd_before},
                    {"smd_after", r.smd_after},
                    {"degenerate_before", r.degenerate_before},
                    {"degenerate_after", r.degenerate_after}});
  j["balance"] = rows;
  if (!args.report_path.empty()) emit(j.dump(2) + "\n", args.report_path);

  if (args.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "read " << table.records.size() << " individuals ("
              << table.covariate_names.size() << " covariates)\n";
    std::cout << "propensity model "
              << (model.converged ? "converged" : "did not converge") << " in "
              << model.iterations << " iterations\n";
    std::cout << "matched " << cohort.matched_base_count() << " "
              << base_group_name(base) << " base individuals 1:" << cohort.k
              << " (cohort size " << cohort.size() << "), unmatched "
              << cohort.unmatched_base.size() << "\n";
    std::cout << "balance (standardized mean difference)\n";
    std::cout << "  " << detail::pad_right("covariate", 20)
              << detail::pad_left("before", 10) << detail::pad_left("after", 10)
              << "\n";
    for (const auto& r : bal.rows) {
      std::cout << "  " << detail::pad_right(r.name, 20)
                << detail::pad_left(detail::format_fixed(r.smd_before, 4), 10)
                << detail::pad_left(detail::format_fixed(r.smd_after, 4), 10);
      if (r.degenerate_before || r.degenerate_after)
        std::cout << "   (zero variance with unequal means)";
      std::cout << "\n";
    }
    std::cout << "wrote " << args.output_path << "\n";
  }
  return 0;
}

struct SimulateArgs {
  std::string config_path;
  std::string format = "human";
  std::string out_path;
  AuditConfig config;
};

int run_simulate_cmd(const SimulateArgs& args) {
  const SimConfig config = load_sim_config(args.config_path);
  const SimResult result = run_paradox_experiment(config);
  const SimAuditReport report = evaluate_simulation(result, args.config);
  emit(args.format == "json" ? render_machine(report) : render_human(report),
       args.out_path);
  return report.verdict == Verdict::violations ? 1 : 0;
}

void add_threshold_options(CLI::App* cmd, AuditConfig& config) {
  cmd->add_option("--sd-threshold", config.cr_deviation_sd_threshold,
                  "flag CR deviations beyond this many baseline SDs")
      ->capture_default_str();
  cmd->add_option("--pct-threshold", config.cr_deviation_pct_threshold,
                  "flag CR deviations beyond this fraction of the baseline")
      ->capture_default_str();
  cmd->add_option("--gof-alpha", config.gof_alpha,
                  "flag age-structure GOF below this p-value")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"external-validity audit toolkit for population cohort studies"};
  app.require_subcommand(1);
  int exit_code = 0;

  AuditArgs audit_args;
  auto* audit_cmd = app.add_subcommand(
      "audit", "audit a cohort summary against a national benchmark");
  audit_cmd->add_option("--cohort", audit_args.cohort_path, "study document (cohort section)")
      ->required();
  audit_cmd
      ->add_option("--benchmark", audit_args.benchmark_path,
                   "study document (benchmark section)")
      ->required();
  audit_cmd->add_option("--format", audit_args.format, "report format")
      ->check(CLI::IsMember({"human", "json"}))
      ->capture_default_str();
  audit_cmd->add_option("--out", audit_args.out_path, "write the report here");
  audit_cmd->add_option("--scale", audit_args.config.rate_scale, "persons per rate unit")
      ->capture_default_str();
  add_threshold_options(audit_cmd, audit_args.config);
  audit_cmd->callback([&]() { exit_code = run_audit_cmd(audit_args); });

  RatesArgs rates_args;
  auto* rates_cmd = app.add_subcommand("rates", "ad-hoc crude incidence rate");
  rates_cmd->add_option("--cases", rates_args.cases, "new cases in the period")
      ->required();
  rates_cmd->add_option("--population", rates_args.population, "population at risk")
      ->required();
  rates_cmd->add_option("--scale", rates_args.scale, "persons per rate unit")
      ->capture_default_str();
  rates_cmd->add_flag("--json", rates_args.json, "machine output");
  rates_cmd->callback([&]() { exit_code = run_rates_cmd(rates_args); });

  GofArgs gof_args;
  auto* gof_cmd =
      app.add_subcommand("gof", "ad-hoc chi-squared goodness-of-fit test");
  gof_cmd->add_option("--observed", gof_args.observed,
                      "observed counts, comma-separated");
  gof_cmd->add_option("--proportions", gof_args.proportions,
                      "observed proportions (with --total), comma-separated");
  gof_cmd->add_option("--total", gof_args.total, "total count behind --proportions");
  gof_cmd->add_option("--expected", gof_args.expected,
                      "expected proportions, comma-separated")
      ->required();
  gof_cmd->add_option("--labels", gof_args.labels, "category labels, comma-separated");
  gof_cmd->add_flag("--json", gof_args.json, "machine output");
  gof_cmd->callback([&]() { exit_code = run_gof_cmd(gof_args); });

  MatchArgs match_args;
  auto* match_cmd = app.add_subcommand(
      "match", "propensity-score 1:k matching on individual-level data");
  match_cmd->add_option("--input", match_args.input_path, "delimited input file")
      ->required();
  match_cmd->add_option("--output", match_args.output_path, "matched cohort file")
      ->required();
  match_cmd->add_option("--k", match_args.k, "partners per base individual")
      ->required();
  match_cmd->add_option("--base", match_args.base, "base group")
      ->check(CLI::IsMember({"treated", "untreated"}))
      ->capture_default_str();
  match_cmd->add_option("--caliper", match_args.caliper,
                        "max score distance for a partner");
  match_cmd->add_flag("--with-replacement", match_args.with_replacement,
                      "let pool individuals match more than one base");
  match_cmd->add_option("--delimiter", match_args.delimiter, "field delimiter")
      ->capture_default_str();
  match_cmd->add_option("--report", match_args.report_path,
                        "write the balance report (JSON) here");
  match_cmd->add_flag("--json", match_args.json, "machine output");
  match_cmd->callback([&]() { exit_code = run_match_cmd(match_args); });

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand(
      "simulate", "run the matching selection-bias experiment from a config");
  sim_cmd->add_option("--config", sim_args.config_path, "simulation config (JSON)")
      ->required();
  sim_cmd->add_option("--format", sim_args.format, "report format")
      ->check(CLI::IsMember({"human", "json"}))
      ->capture_default_str();
  sim_cmd->add_option("--out", sim_args.out_path, "write the report here");
  add_threshold_options(sim_cmd, sim_args.config);
  sim_cmd->callback([&]() { exit_code = run_simulate_cmd(sim_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const evaudit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
