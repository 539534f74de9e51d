// Acceptance suite: exercises every shipped guarantee end to end and prints
// one PASS/FAIL line per criterion. Exits nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evaudit/audit.hpp"
#include "evaudit/io.hpp"
#include "evaudit/report.hpp"
#include "oracles.hpp"

using namespace evaudit;

namespace {

std::string g_fixtures = EVAUDIT_FIXTURES_DIR;
std::string g_cli = EVAUDIT_CLI_PATH;

std::string fixture(const char* name) {
  return (std::filesystem::path(g_fixtures) / name).string();
}

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  CliResult result;
  if (pipe == nullptr) return result;
  char buffer[4096];
  std::size_t n = 0;
  while ((n = fread(buffer, 1, sizeof buffer, pipe)) > 0)
    result.output.append(buffer, n);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct Criterion {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool condition, const std::string& what) {
    if (!condition) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
  void expect_near(double actual, double target, double tol, const std::string& what) {
    if (!(std::fabs(actual - target) <= tol)) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what << " = " << actual
             << ", want " << target << " +- " << tol;
    }
  }
};

bool has_flag(const std::vector<Flag>& flags, const char* code) {
  for (const auto& f : flags)
    if (f.code == code) return true;
  return false;
}

bool has_violation(const std::vector<Flag>& flags) {
  for (const auto& f : flags)
    if (f.severity == Severity::violation) return true;
  return false;
}

// C1: crude rates from raw counts match the published per-10k values
void c1(Criterion& c) {
  const struct {
    const char* args;
    double want;
  } cases[] = {
      {"rates --json --cases 12133 --population 2975035", 40.78},
      {"rates --json --cases 10144 --population 2380028", 42.63},
      {"rates --json --cases 1989 --population 595007", 33.43},
  };
  for (const auto& tc : cases) {
    const CliResult r = run_cli(tc.args);
    c.expect(r.exit_code == 0, std::string("exit code for ") + tc.args);
    if (r.exit_code != 0) continue;
    const double rate = nlohmann::json::parse(r.output).at("rate").get<double>();
    c.expect_near(rate, tc.want, 0.01, tc.args);
  }
}

// C2: baseline mean and population SD
void c2(Criterion& c) {
  const BaselineStats b = baseline_stats({{2020, {48.29, 10'000.0}},
                                          {2021, {54.06, 10'000.0}},
                                          {2022, {55.02, 10'000.0}}});
  c.expect_near(b.mean.value, 52.46, 0.005, "baseline mean");
  c.expect_near(b.sd.value, 2.97, 0.005, "baseline population SD");
}

// C3: deviation triple from raw counts against the annual series
void c3(Criterion& c) {
  const BaselineStats b = baseline_stats({{2020, {48.29, 10'000.0}},
                                          {2021, {54.06, 10'000.0}},
                                          {2022, {55.02, 10'000.0}}});
  const DeviationResult d = deviation(crude_rate(12133, 2975035), b);
  c.expect_near(d.absolute, -11.68, 0.01, "absolute deviation");
  c.expect_near(d.percent * 100.0, -22.26, 0.05, "percent deviation");
  c.expect_near(d.sd_multiples, -3.93, 0.02, "sd multiples");
}

// C4: projections reproduce the published absolute counts from their implied
// populations, and the audit surfaces the internal inconsistency as a note
void c4(Criterion& c) {
  const auto implied_cohort = static_cast<std::int64_t>(
      std::llround(210'873.0 * 10'000.0 / 40.78));
  const auto implied_baseline = static_cast<std::int64_t>(
      std::llround(271'957.0 * 10'000.0 / 52.46));
  const double p1 = project_cases({40.78, 10'000.0}, implied_cohort);
  const double p2 = project_cases({52.46, 10'000.0}, implied_baseline);
  c.expect_near(p1 / 210'873.0, 1.0, 0.002, "projection at the cohort rate");
  c.expect_near(p2 / 271'957.0, 1.0, 0.002, "projection at the baseline rate");

  const auto [cohort, benchmark] =
      load_inputs(fixture("cohort_matched_study.json"),
                  fixture("benchmark_kr_cancer_2020_2022.json"));
  const AuditReport report = run_audit(cohort, benchmark);
  c.expect(has_flag(report.flags, kFlagProjectionInconsistent),
           "PROJECTION_POPULATION_INCONSISTENT note missing");
}

// C5: GOF statistic from the published age split
void c5(Criterion& c) {
  const GofInput in =
      gof_from_proportions({0.8785, 0.1215}, 2975035, {0.82, 0.18});
  const GofResult r = chi_squared_gof(in);
  c.expect(r.statistic >= 67'500.0 && r.statistic <= 70'500.0,
           "statistic " + std::to_string(r.statistic) + " outside [67500, 70500]");
  c.expect(r.df == 1, "df != 1");
  c.expect(r.p_value < 0.00001, "p not below 0.00001");
  c.expect(r.p_floor_hit, "p floor not reported");
}

// C6: exact 5x signature plus a 1,000-case random property sweep
void c6(Criterion& c) {
  const RatioSignature sig = detect_ratio_signature(2'975'035, 595'007);
  c.expect(sig.exact && sig.k == 4, "bundled counts do not give k = 4");
  SplitMix64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    const auto a = static_cast<std::int64_t>(rng.next() % 2'000'000 + 1);
    const int k = static_cast<int>(rng.next() % 15 + 1);
    const RatioSignature s = detect_ratio_signature(a * (k + 1), a);
    if (!(s.exact && s.k == k)) {
      c.expect(false, "property failed at a=" + std::to_string(a) +
                          " k=" + std::to_string(k));
      return;
    }
  }
}

// C7: tail probabilities against the quadrature oracle
void c7(Criterion& c) {
  const double q1 = upper_tail_p(3.841, 1).value;
  const double q2 = upper_tail_p(6.635, 1).value;
  c.expect_near(q1, 0.0500, 0.0005, "upper_tail_p(3.841, 1)");
  c.expect_near(q2, 0.0100, 0.0005, "upper_tail_p(6.635, 1)");
  c.expect_near(q1, oracles::chi2_upper_tail(3.841, 1), 0.0005, "oracle at 3.841");
  c.expect_near(q2, oracles::chi2_upper_tail(6.635, 1), 0.0005, "oracle at 6.635");
}

// C8: propensity fits — intercept-only, Newton oracle, separation
void c8(Criterion& c) {
  std::vector<IndividualRecord> three;
  for (int i = 0; i < 4; ++i) {
    IndividualRecord r;
    r.id = "r" + std::to_string(i);
    r.treated = i < 3;
    r.covariates = {2.5};
    three.push_back(r);
  }
  const PropensityModel m = fit_propensity(three);
  for (const auto& r : three)
    c.expect_near(m.score(r.covariates), 0.75, 1e-6, "intercept-only score");

  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<int> y = {0, 0, 1, 0, 1, 1, 0, 1};
  std::vector<IndividualRecord> data;
  std::vector<std::vector<double>> ox;
  for (std::size_t i = 0; i < x.size(); ++i) {
    IndividualRecord r;
    r.id = "n" + std::to_string(i);
    r.treated = y[i] == 1;
    r.covariates = {x[i]};
    data.push_back(r);
    ox.push_back({x[i]});
  }
  const PropensityModel fitted = fit_propensity(data);
  const std::vector<double> oracle = oracles::newton_logistic(ox, y);
  c.expect_near(fitted.coefficients[0], oracle[0], 1e-6, "intercept vs Newton oracle");
  c.expect_near(fitted.coefficients[1], oracle[1], 1e-6, "slope vs Newton oracle");

  std::vector<IndividualRecord> separable;
  for (int i = 0; i < 6; ++i) {
    IndividualRecord r;
    r.id = "s" + std::to_string(i);
    r.treated = i >= 3;
    r.covariates = {static_cast<double>(i) - 2.5};
    separable.push_back(r);
  }
  bool threw = false;
  try {
    fit_propensity(separable);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::SeparationDetected;
  }
  c.expect(threw, "separation not detected");
}

// C9: matching invariants as property tests at n <= 10,000
void c9(Criterion& c) {
  SplitMix64 rng(7777);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1'000 + rng.next() % 9'000;
    std::unordered_map<std::string, double> scores;
    std::vector<std::string> base, pool;
    for (std::size_t i = 0; i < n; ++i) {
      std::string id = "p" + std::to_string(100'000 + i);
      const double s = trial % 2 == 0 ? static_cast<double>(rng.next() % 16) / 16.0
                                      : rng.next_unit();
      scores[id] = s;
      if (rng.next() % 5 == 0) base.push_back(id);
      else pool.push_back(id);
    }
    if (base.empty() || pool.empty()) continue;
    const int k = 1 + static_cast<int>(rng.next() % 5);

    const MatchedCohort a = match_one_to_k(scores, base, pool, k);
    const MatchedCohort b = match_one_to_k(scores, base, pool, k);
    c.expect(a == b, "determinism failed");

    std::set<std::string> used;
    bool reuse = false, arity = true;
    for (const auto& p : a.pairs) {
      arity = arity && p.partner_ids.size() == static_cast<std::size_t>(k);
      for (const auto& id : p.partner_ids) reuse = reuse || !used.insert(id).second;
    }
    c.expect(!reuse, "pool id assigned twice");
    c.expect(arity, "matched set missing partners");
    c.expect(a.size() == static_cast<std::int64_t>(a.pairs.size()) * (k + 1),
             "(k+1)x identity failed");
    c.expect(a.pairs.size() * (k + 1) + a.unmatched_base.size() +
                 (pool.size() - used.size()) ==
                 base.size() + pool.size(),
             "conservation of individuals failed");
  }
}

// C10: calibrated paradox simulation and the null configuration
void c10(Criterion& c) {
  const SimConfig cfg = load_sim_config(fixture("sim_default.json"));
  const SimResult res = run_paradox_experiment(cfg);
  c.expect_near(res.matched_stratum_shares[1] * 100.0, 12.15, 0.5,
                "matched >=65 share (pp)");
  c.expect_near(res.matched_cr.value, 40.78, 1.0, "matched CR");
  c.expect_near(res.deviation_vs_population.percent * 100.0, -22.3, 2.0,
                "deviation vs population (pp)");
  const SimAuditReport report = evaluate_simulation(res);
  c.expect(has_flag(report.flags, kFlagStructuralBias), "GOF flag not raised");

  const SimConfig null_cfg = load_sim_config(fixture("sim_null.json"));
  const SimAuditReport null_report =
      evaluate_simulation(run_paradox_experiment(null_cfg));
  c.expect(null_report.flags.empty(), "null config raised flags");
  c.expect(!has_violation(null_report.flags), "null config raised violations");
}

// C11: end-to-end CLI audit exit codes and flags
void c11(Criterion& c) {
  const CliResult bad = run_cli("audit --cohort " + fixture("cohort_matched_study.json") +
                                " --benchmark " +
                                fixture("benchmark_kr_cancer_2020_2022.json") +
                                " --format json");
  c.expect(bad.exit_code == 1, "fixture audit exit code " +
                                   std::to_string(bad.exit_code) + ", want 1");
  if (bad.exit_code == 1) {
    const auto j = nlohmann::json::parse(bad.output);
    bool strobe21 = false, strobe12 = false;
    for (const auto& f : j.at("flags")) {
      if (f.at("code") == "STROBE21_EXTERNAL_VALIDITY") strobe21 = true;
      if (f.at("code") == "STROBE12_STRUCTURAL_BIAS") strobe12 = true;
    }
    c.expect(strobe21, "STROBE21 flag missing");
    c.expect(strobe12, "STROBE12 flag missing");
    c.expect(j.at("verdict") == "violations", "verdict not 'violations'");
  }

  const CliResult good = run_cli("audit --cohort " + fixture("consistent_study.json") +
                                 " --benchmark " + fixture("consistent_study.json"));
  c.expect(good.exit_code == 0, "self-consistent audit exit code " +
                                    std::to_string(good.exit_code) + ", want 0");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_fixtures = argv[1];
  if (argc > 2) g_cli = argv[2];

  const struct {
    const char* name;
    const char* text;
    std::function<void(Criterion&)> run;
  } criteria[] = {
      {"C1", "crude-rate reproduction (40.78 / 42.63 / 33.43 per 10k, +-0.01)", c1},
      {"C2", "baseline mean 52.46 +-0.005 and population SD 2.97 +-0.005", c2},
      {"C3", "deviation -11.68 +-0.01, -22.26% +-0.05pp, -3.93 SD +-0.02", c3},
      {"C4", "projections 210,873 / 271,957 +-0.2% and inconsistency note", c4},
      {"C5", "GOF statistic in [67500, 70500], df 1, p below 0.00001", c5},
      {"C6", "ratio signature k=4 plus 1,000-case random property", c6},
      {"C7", "tail probabilities match the quadrature oracle +-0.0005", c7},
      {"C8", "propensity: intercept-only, Newton oracle +-1e-6, separation", c8},
      {"C9", "matching invariants at n <= 10,000", c9},
      {"C10", "calibrated paradox simulation and null config", c10},
      {"C11", "end-to-end CLI audit exit codes and flags", c11},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    Criterion c;
    try {
      criterion.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    if (c.ok) {
      std::printf("PASS  %-4s %s\n", criterion.name, criterion.text);
    } else {
      ++failures;
      std::printf("FAIL  %-4s %s  (%s)\n", criterion.name, criterion.text,
                  c.detail.str().c_str());
    }
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
