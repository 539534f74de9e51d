// Crude incidence rate arithmetic: rates, baseline aggregation, deviation
// metrics and absolute case projections.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evaudit/errors.hpp"

namespace evaudit {

// A rate expressed as events per `scale` persons (default per 10,000).
struct Rate {
  double value = 0.0;
  double scale = 10'000.0;

  friend bool operator==(const Rate&, const Rate&) = default;
};

// One calendar year of a national rate series.
struct AnnualRate {
  int year = 0;
  Rate rate;

  friend bool operator==(const AnnualRate&, const AnnualRate&) = default;
};

enum class SdConvention {
  population,  // denominator N
  sample,      // denominator N-1
};

struct BaselineStats {
  Rate mean;
  Rate sd;  // same scale as mean; 0 when n_years == 1
  int n_years = 0;

  friend bool operator==(const BaselineStats&, const BaselineStats&) = default;
};

struct DeviationResult {
  double absolute = 0.0;      // observed - baseline mean, in baseline scale units
  double percent = 0.0;       // absolute / baseline mean, signed fraction
  double sd_multiples = 0.0;  // absolute / baseline sd; 0 with sd_defined=false when sd == 0
  bool sd_defined = false;
  double scale = 10'000.0;

  friend bool operator==(const DeviationResult&, const DeviationResult&) = default;
};

inline Rate crude_rate(std::int64_t cases, std::int64_t population,
                       double scale = 10'000.0) {
  if (cases < 0)
    throw Error(ErrorCode::NegativeCount,
                "cases must be >= 0 (got " + std::to_string(cases) + ")");
  if (population <= 0)
    throw Error(ErrorCode::ZeroPopulation,
                "population must be > 0 (got " + std::to_string(population) + ")");
  if (!(scale > 0.0))
    throw Error(ErrorCode::InvalidScale, "scale must be > 0");
  return Rate{static_cast<double>(cases) / static_cast<double>(population) * scale,
              scale};
}

inline Rate rescale(const Rate& rate, double new_scale) {
  if (!(new_scale > 0.0))
    throw Error(ErrorCode::InvalidScale, "scale must be > 0");
  return Rate{rate.value * new_scale / rate.scale, new_scale};
}

inline BaselineStats baseline_stats(const std::vector<AnnualRate>& annual,
                                    double scale = 10'000.0,
                                    SdConvention convention = SdConvention::population) {
  if (annual.empty())
    throw Error(ErrorCode::EmptySeries, "baseline needs at least one annual rate");
  const auto n = static_cast<double>(annual.size());
  double sum = 0.0;
  for (const auto& a : annual) sum += rescale(a.rate, scale).value;
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& a : annual) {
    const double d = rescale(a.rate, scale).value - mean;
    ss += d * d;
  }
  double sd = 0.0;
  if (annual.size() > 1 || convention == SdConvention::population) {
    const double denom = convention == SdConvention::population ? n : n - 1.0;
    sd = std::sqrt(ss / denom);
  }
  return BaselineStats{Rate{mean, scale}, Rate{sd, scale},
                       static_cast<int>(annual.size())};
}

// Observed is rescaled onto the baseline scale before differencing.
inline DeviationResult deviation(const Rate& observed, const BaselineStats& baseline) {
  if (!(baseline.mean.value > 0.0))
    throw Error(ErrorCode::ZeroBaseline, "baseline mean must be > 0");
  const double obs = rescale(observed, baseline.mean.scale).value;
  DeviationResult out;
  out.scale = baseline.mean.scale;
  out.absolute = obs - baseline.mean.value;
  out.percent = out.absolute / baseline.mean.value;
  if (baseline.sd.value > 0.0) {
    out.sd_multiples = out.absolute / baseline.sd.value;
    out.sd_defined = true;
  }
  return out;
}

// Expected annual event count when `rate` is applied to `population` persons.
inline double project_cases(const Rate& rate, std::int64_t population) {
  if (population < 0)
    throw Error(ErrorCode::NegativeCount, "population must be >= 0");
  return rate.value * static_cast<double>(population) / rate.scale;
}

}  // namespace evaudit
