// Chi-squared goodness-of-fit test against fixed category proportions,
// with the regularized upper incomplete gamma for tail probabilities.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "evaudit/errors.hpp"

namespace evaudit {

struct GofInput {
  std::vector<std::int64_t> observed;
  std::vector<double> expected_proportions;  // each > 0, sum to 1
  std::vector<std::string> labels;           // optional, empty or one per category

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto o : observed) t += o;
    return t;
  }
};

struct GofResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool p_floor_hit = false;

  friend bool operator==(const GofResult&, const GofResult&) = default;
};

struct TailProbability {
  double value = 1.0;
  bool floor_hit = false;
};

namespace detail {

// Regularized lower incomplete gamma P(a,x) by power series; valid for x < a+1.
inline double lower_gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int i = 0; i < 10'000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x) by modified Lentz continued
// fraction; valid for x >= a+1.
inline double upper_gamma_cf(double a, double x) {
  const double floor = std::numeric_limits<double>::min() /
                       std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - a;
  double c = 1.0 / floor;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 10'000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < floor) d = floor;
    c = b + an / c;
    if (std::fabs(c) < floor) c = floor;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= 1e-14) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Upper-tail probability of the chi-squared distribution: Q(df/2, statistic/2).
// A true value below the smallest positive normal double is reported as that
// floor with floor_hit set, never as zero.
inline TailProbability upper_tail_p(double statistic, int df) {
  if (!(statistic >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "statistic must be >= 0");
  if (df < 1)
    throw Error(ErrorCode::InvalidArgument, "df must be >= 1");
  if (statistic == 0.0) return TailProbability{1.0, false};

  const double a = 0.5 * static_cast<double>(df);
  const double x = 0.5 * statistic;
  double q = x < a + 1.0 ? 1.0 - detail::lower_gamma_series(a, x)
                         : detail::upper_gamma_cf(a, x);
  if (q > 1.0) q = 1.0;
  if (q < std::numeric_limits<double>::min())
    return TailProbability{std::numeric_limits<double>::min(), true};
  return TailProbability{q, false};
}

// Half-away-from-zero rounding of a proportion of `total` to a whole count.
inline std::int64_t round_count(double proportion, std::int64_t total) {
  return std::llround(proportion * static_cast<double>(total));
}

// Observed counts from published proportions: each category is rounded
// half-away-from-zero.
inline GofInput gof_from_proportions(const std::vector<double>& observed_proportions,
                                     std::int64_t total,
                                     const std::vector<double>& expected_proportions,
                                     std::vector<std::string> labels = {}) {
  GofInput in;
  in.observed.reserve(observed_proportions.size());
  for (double p : observed_proportions) in.observed.push_back(round_count(p, total));
  in.expected_proportions = expected_proportions;
  in.labels = std::move(labels);
  return in;
}

inline GofResult chi_squared_gof(const GofInput& in) {
  const std::size_t k = in.observed.size();
  if (k != in.expected_proportions.size())
    throw Error(ErrorCode::LengthMismatch,
                "observed has " + std::to_string(k) + " categories, expected has " +
                    std::to_string(in.expected_proportions.size()));
  if (k < 2)
    throw Error(ErrorCode::LengthMismatch, "need at least 2 categories");
  if (!in.labels.empty() && in.labels.size() != k)
    throw Error(ErrorCode::LengthMismatch, "labels must be empty or one per category");

  double psum = 0.0;
  for (double p : in.expected_proportions) {
    if (!(p > 0.0))
      throw Error(ErrorCode::ZeroExpectedCell, "expected proportions must be > 0");
    psum += p;
  }
  if (std::fabs(psum - 1.0) > 1e-9)
    throw Error(ErrorCode::StrataSumMismatch,
                "expected proportions sum to " + std::to_string(psum) + ", not 1");

  const std::int64_t total = in.total();
  double statistic = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (in.observed[i] < 0)
      throw Error(ErrorCode::NegativeCount, "observed counts must be >= 0");
    const double e = in.expected_proportions[i] * static_cast<double>(total);
    if (!(e > 0.0))
      throw Error(ErrorCode::ZeroExpectedCell,
                  "expected count is 0 in category " + std::to_string(i));
    const double d = static_cast<double>(in.observed[i]) - e;
    statistic += d * d / e;
  }

  GofResult out;
  out.statistic = statistic;
  out.df = static_cast<int>(k) - 1;
  const TailProbability p = upper_tail_p(statistic, out.df);
  out.p_value = p.value;
  out.p_floor_hit = p.floor_hit;
  return out;
}

}  // namespace evaudit
