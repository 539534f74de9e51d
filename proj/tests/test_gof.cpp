#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "evaudit/gof.hpp"
#include "evaudit/rng.hpp"
#include "oracles.hpp"

using namespace evaudit;
using Catch::Approx;

namespace {

bool throws_code(const std::function<void()>& f, ErrorCode code) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

// direct long-double summation, written apart from the library path
long double direct_statistic(const std::vector<std::int64_t>& observed,
                             const std::vector<double>& expected) {
  long double total = 0.0L;
  for (auto o : observed) total += static_cast<long double>(o);
  long double stat = 0.0L;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const long double e = static_cast<long double>(expected[i]) * total;
    const long double d = static_cast<long double>(observed[i]) - e;
    stat += d * d / e;
  }
  return stat;
}

}  // namespace

TEST_CASE("upper tail probability matches the quadrature oracle") {
  CHECK(upper_tail_p(3.841, 1).value == Approx(0.0500).margin(0.0005));
  CHECK(upper_tail_p(6.635, 1).value == Approx(0.0100).margin(0.0005));
  CHECK(upper_tail_p(3.841, 1).value ==
        Approx(oracles::chi2_upper_tail(3.841, 1)).margin(1e-9));
  CHECK(upper_tail_p(6.635, 1).value ==
        Approx(oracles::chi2_upper_tail(6.635, 1)).margin(1e-9));

  for (const int df : {1, 2, 3, 5, 10}) {
    for (const double stat : {0.5, 1.0, 2.5, 7.0, 20.0, 45.0}) {
      CAPTURE(df, stat);
      CHECK(upper_tail_p(stat, df).value ==
            Approx(oracles::chi2_upper_tail(stat, df)).margin(1e-9));
    }
  }
}

TEST_CASE("upper tail probability endpoints and floor") {
  const TailProbability one = upper_tail_p(0.0, 1);
  CHECK(one.value == 1.0);
  CHECK_FALSE(one.floor_hit);

  const TailProbability floored = upper_tail_p(69'370.0, 1);
  CHECK(floored.floor_hit);
  CHECK(floored.value == std::numeric_limits<double>::min());
  CHECK(floored.value > 0.0);

  CHECK(throws_code([] { upper_tail_p(-1.0, 1); }, ErrorCode::InvalidArgument));
  CHECK(throws_code([] { upper_tail_p(1.0, 0); }, ErrorCode::InvalidArgument));
}

TEST_CASE("upper tail probability is strictly decreasing in the statistic") {
  for (const int df : {1, 2, 5}) {
    double prev = upper_tail_p(0.0, df).value;
    for (double stat = 0.25; stat <= 60.0; stat += 0.25) {
      const double p = upper_tail_p(stat, df).value;
      CAPTURE(df, stat);
      CHECK(p < prev);
      prev = p;
    }
  }
}

TEST_CASE("chi-squared GOF on the bundled age split") {
  // counts derived from the published 87.85 / 12.15 split of 2,975,035
  const GofInput in =
      gof_from_proportions({0.8785, 0.1215}, 2975035, {0.82, 0.18}, {"<65", ">=65"});
  CHECK(in.observed == std::vector<std::int64_t>{2613568, 361467});
  CHECK(in.total() == 2975035);

  const GofResult r = chi_squared_gof(in);
  CHECK(r.statistic == Approx(68978.9).margin(1.0));
  CHECK(r.statistic > 67'500.0);
  CHECK(r.statistic < 70'500.0);
  CHECK(r.df == 1);
  CHECK(r.p_floor_hit);
  CHECK(r.p_value < 0.00001);
}

TEST_CASE("chi-squared GOF basics") {
  const GofResult exact = chi_squared_gof({{82, 18}, {0.82, 0.18}, {}});
  CHECK(exact.statistic == 0.0);
  CHECK(exact.p_value == 1.0);

  const GofResult simple = chi_squared_gof({{60, 40}, {0.5, 0.5}, {}});
  CHECK(simple.statistic == Approx(4.0).epsilon(1e-14));
  CHECK(simple.df == 1);
  CHECK(simple.p_value == Approx(oracles::chi2_upper_tail(4.0, 1)).margin(1e-9));
}

TEST_CASE("chi-squared GOF input errors") {
  CHECK(throws_code([] { chi_squared_gof({{1, 2, 3}, {0.5, 0.5}, {}}); },
                    ErrorCode::LengthMismatch));
  CHECK(throws_code([] { chi_squared_gof({{5}, {1.0}, {}}); },
                    ErrorCode::LengthMismatch));
  CHECK(throws_code([] { chi_squared_gof({{1, 2}, {0.5, 0.5}, {"only-one"}}); },
                    ErrorCode::LengthMismatch));
  CHECK(throws_code([] { chi_squared_gof({{1, 2}, {1.0, 0.0}, {}}); },
                    ErrorCode::ZeroExpectedCell));
  CHECK(throws_code([] { chi_squared_gof({{0, 0}, {0.5, 0.5}, {}}); },
                    ErrorCode::ZeroExpectedCell));
  CHECK(throws_code([] { chi_squared_gof({{1, 2}, {0.5, 0.4}, {}}); },
                    ErrorCode::StrataSumMismatch));
  CHECK(throws_code([] { chi_squared_gof({{-1, 2}, {0.5, 0.5}, {}}); },
                    ErrorCode::NegativeCount));
}

TEST_CASE("statistic scales exactly with a common count multiplier") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t o1 = static_cast<std::int64_t>(rng.next() % 200 + 1);
    const std::int64_t o2 = static_cast<std::int64_t>(rng.next() % 200 + 1);
    const double p = 0.05 + 0.9 * rng.next_unit();
    const std::int64_t a = static_cast<std::int64_t>(rng.next() % 7 + 2);
    const double base = chi_squared_gof({{o1, o2}, {p, 1.0 - p}, {}}).statistic;
    const double scaled =
        chi_squared_gof({{a * o1, a * o2}, {p, 1.0 - p}, {}}).statistic;
    CHECK(scaled == Approx(static_cast<double>(a) * base).epsilon(1e-10));
  }
}

TEST_CASE("statistic is invariant under category permutation") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int64_t> observed;
    std::vector<double> expected;
    double left = 1.0;
    const std::size_t k = 3 + rng.next() % 4;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      observed.push_back(static_cast<std::int64_t>(rng.next() % 500));
      const double p = left * (0.2 + 0.5 * rng.next_unit());
      expected.push_back(p);
      left -= p;
    }
    observed.push_back(static_cast<std::int64_t>(rng.next() % 500 + 1));
    expected.push_back(left);

    const double before = chi_squared_gof({observed, expected, {}}).statistic;
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    for (std::size_t i = k; i-- > 1;)
      std::swap(perm[i], perm[rng.next() % (i + 1)]);
    std::vector<std::int64_t> obs2(k);
    std::vector<double> exp2(k);
    for (std::size_t i = 0; i < k; ++i) {
      obs2[i] = observed[perm[i]];
      exp2[i] = expected[perm[i]];
    }
    CHECK(chi_squared_gof({obs2, exp2, {}}).statistic ==
          Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("statistic agrees with a direct summation reference") {
  SplitMix64 rng(9);
  for (const std::int64_t total : {10, 97, 500, 1000}) {
    for (int step = 0; step <= 20; ++step) {
      const std::int64_t o1 = total * step / 20;
      const double p = 0.1 + 0.8 * rng.next_unit();
      const std::vector<std::int64_t> observed{o1, total - o1};
      const std::vector<double> expected{p, 1.0 - p};
      const double impl = chi_squared_gof({observed, expected, {}}).statistic;
      const double ref = static_cast<double>(direct_statistic(observed, expected));
      CAPTURE(total, o1, p);
      if (ref == 0.0)
        CHECK(impl == 0.0);
      else
        CHECK(impl == Approx(ref).epsilon(1e-10));
    }
  }
}
