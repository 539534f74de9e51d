#include <catch2/catch_amalgamated.hpp>

#include "evaudit/domain.hpp"

using namespace evaudit;
using Catch::Approx;

namespace {

CohortSummary bundled_cohort() {
  CohortSummary c;
  c.groups = {{"unvaccinated", 595007, 1989}, {"vaccinated", 2380028, 10144}};
  StratumSet split;
  split.strata = {{"<65", 87.85, {}}, {">=65", 12.15, {}}};
  c.strata_by_group["total"] = split;
  return c;
}

bool fails_with(const CohortSummary& raw, ErrorCode code) {
  try {
    validate_cohort(raw);
  } catch (const ValidationError& e) {
    return e.has(code);
  }
  return false;
}

}  // namespace

TEST_CASE("derived totals from group counts") {
  const CohortSummary v = validate_cohort(bundled_cohort());
  CHECK(v.total.population == 2975035);
  CHECK(v.total.cases == 12133);

  CohortSummary single;
  single.groups = {{"n", 100, 0}};
  const CohortSummary sv = validate_cohort(single);
  CHECK(sv.total.population == 100);
  CHECK(sv.total.cases == 0);
}

TEST_CASE("validation is idempotent and permutation invariant") {
  const CohortSummary once = validate_cohort(bundled_cohort());
  const CohortSummary twice = validate_cohort(once);
  CHECK(once == twice);

  CohortSummary reordered = bundled_cohort();
  std::swap(reordered.groups[0], reordered.groups[1]);
  const CohortSummary rv = validate_cohort(reordered);
  CHECK(rv.total == once.total);
}

TEST_CASE("percent-scale strata are normalized to fractions") {
  const CohortSummary v = validate_cohort(bundled_cohort());
  const auto& strata = v.strata_by_group.at("total").strata;
  CHECK(strata[0].proportion == Approx(0.8785).epsilon(1e-12));
  CHECK(strata[1].proportion == Approx(0.1215).epsilon(1e-12));

  // fraction-scale input passes through untouched
  CohortSummary frac;
  frac.groups = {{"g", 100, 0}};
  StratumSet set;
  set.strata = {{"a", 0.82, {}}, {"b", 0.18, {}}};
  frac.strata_by_group["g"] = set;
  const CohortSummary fv = validate_cohort(frac);
  CHECK(fv.strata_by_group.at("g").strata[0].proportion == 0.82);
}

TEST_CASE("invariant violations are reported with codes and paths") {
  CohortSummary bad_cases;
  bad_cases.groups = {{"g", 10, 11}};
  CHECK(fails_with(bad_cases, ErrorCode::CasesExceedPopulation));

  CohortSummary negative;
  negative.groups = {{"g", -5, 0}};
  CHECK(fails_with(negative, ErrorCode::NegativeCount));

  CohortSummary empty;
  CHECK(fails_with(empty, ErrorCode::EmptyCohort));

  CohortSummary dup;
  dup.groups = {{"g", 10, 1}, {"g", 20, 2}};
  CHECK(fails_with(dup, ErrorCode::DuplicateGroupName));

  CohortSummary reserved;
  reserved.groups = {{"total", 10, 1}};
  CHECK(fails_with(reserved, ErrorCode::DuplicateGroupName));

  CohortSummary unknown;
  unknown.groups = {{"g", 10, 1}};
  unknown.strata_by_group["other"] = StratumSet{{{"a", 1.0, {}}}, {}};
  CHECK(fails_with(unknown, ErrorCode::UnknownGroup));
}

TEST_CASE("strata that do not sum to one are rejected") {
  CohortSummary c;
  c.groups = {{"g", 100, 0}};
  StratumSet set;
  set.strata = {{"a", 0.5, {}}, {"b", 0.4, {}}};
  c.strata_by_group["g"] = set;
  CHECK(fails_with(c, ErrorCode::StrataSumMismatch));
}

TEST_CASE("stratum counts must sum to the group population") {
  CohortSummary c;
  c.groups = {{"g", 100, 0}};
  StratumSet set;
  set.strata = {{"a", 0.82, 82}, {"b", 0.18, 18}};
  c.strata_by_group["g"] = set;
  CHECK_NOTHROW(validate_cohort(c));

  c.strata_by_group["g"].strata[1].count = 17;
  CHECK(fails_with(c, ErrorCode::StrataSumMismatch));
}

TEST_CASE("conflicting duplicate facts are an error, not an overwrite") {
  // a strata table restating a different group population must surface
  CohortSummary c = bundled_cohort();
  StratumSet restated;
  restated.declared_population = 595507;  // disagrees with the group's 595,007
  restated.strata = {{"<65", 87.85, {}}, {">=65", 12.15, {}}};
  c.strata_by_group["unvaccinated"] = restated;
  CHECK(fails_with(c, ErrorCode::ConflictingDeclaration));

  try {
    validate_cohort(c);
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("595507") != std::string::npos);
    CHECK(msg.find("595007") != std::string::npos);
  }

  // consistent restatement is fine
  c.strata_by_group["unvaccinated"].declared_population = 595007;
  CHECK_NOTHROW(validate_cohort(c));
}

TEST_CASE("declared totals must match derived totals") {
  CohortSummary c = bundled_cohort();
  c.declared_total = GroupCount{"total", 2975035, 12133};
  CHECK_NOTHROW(validate_cohort(c));

  c.declared_total = GroupCount{"total", 2975036, 12133};
  CHECK(fails_with(c, ErrorCode::ConflictingDeclaration));
}

TEST_CASE("every violation is reported, not just the first") {
  CohortSummary c;
  c.groups = {{"a", 10, 11}, {"b", -1, 0}};
  try {
    validate_cohort(c);
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() >= 2);
    CHECK(e.has(ErrorCode::CasesExceedPopulation));
    CHECK(e.has(ErrorCode::NegativeCount));
  }
}

TEST_CASE("benchmark validation") {
  BenchmarkBaseline b;
  b.annual = {{2020, {482.9, 100'000.0}}};
  b.demographic = {{"<65", 82.0, {}}, {">=65", 18.0, {}}};
  b.reference_population = 51'770'000;
  const BenchmarkBaseline v = validate_benchmark(b);
  CHECK(v.demographic[0].proportion == Approx(0.82).epsilon(1e-12));
  CHECK(v.demographic[1].proportion == Approx(0.18).epsilon(1e-12));

  b.annual[0].rate.value = -1.0;
  CHECK_THROWS_AS(validate_benchmark(b), ValidationError);
}
