// Synthetic age-structured populations with age-dependent vaccination uptake
// and disease incidence, and the experiment showing how 1:k matching from a
// non-representative base group reshapes the matched cohort.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "evaudit/domain.hpp"
#include "evaudit/errors.hpp"
#include "evaudit/gof.hpp"
#include "evaudit/psm.hpp"
#include "evaudit/rates.hpp"
#include "evaudit/rng.hpp"

namespace evaudit {

struct StratumSpec {
  std::string label;
  double proportion = 0.0;

  friend bool operator==(const StratumSpec&, const StratumSpec&) = default;
};

struct SimConfig {
  std::int64_t population_size = 0;
  std::vector<StratumSpec> age_strata;
  std::vector<double> incidence_per_10k;   // by stratum
  std::vector<double> vaccination_uptake;  // by stratum, fractions in [0,1]
  int k = 4;
  BaseGroup base_group = BaseGroup::untreated;
  std::uint64_t seed = 0;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

// Normalizes stratum proportions (percent inputs auto-detected) and checks
// every config invariant.
inline SimConfig validate_config(const SimConfig& raw) {
  SimConfig cfg = raw;
  std::vector<Violation> violations;
  if (cfg.population_size <= 0)
    violations.push_back({ErrorCode::InvalidConfig, "population_size", "must be > 0"});
  if (cfg.age_strata.empty())
    violations.push_back({ErrorCode::InvalidConfig, "age_strata", "must be non-empty"});
  if (cfg.incidence_per_10k.size() != cfg.age_strata.size())
    violations.push_back(
        {ErrorCode::InvalidConfig, "incidence_per_10k", "one rate per stratum"});
  if (cfg.vaccination_uptake.size() != cfg.age_strata.size())
    violations.push_back(
        {ErrorCode::InvalidConfig, "vaccination_uptake", "one uptake per stratum"});
  for (double r : cfg.incidence_per_10k)
    if (r < 0.0 || r > 10'000.0)
      violations.push_back({ErrorCode::InvalidConfig, "incidence_per_10k",
                            "rates must lie in [0, 10000] per 10k"});
  for (double u : cfg.vaccination_uptake)
    if (u < 0.0 || u > 1.0)
      violations.push_back(
          {ErrorCode::InvalidConfig, "vaccination_uptake", "uptake must lie in [0,1]"});
  if (cfg.k < 1)
    violations.push_back({ErrorCode::InvalidConfig, "k", "must be >= 1"});
  if (!cfg.age_strata.empty()) {
    std::vector<double> props;
    props.reserve(cfg.age_strata.size());
    for (const auto& s : cfg.age_strata) props.push_back(s.proportion);
    if (detail::normalize_proportions(props, "age_strata", violations))
      for (std::size_t i = 0; i < props.size(); ++i)
        cfg.age_strata[i].proportion = props[i];
  }
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) msg += v.path + ": " + v.message + "; ";
    throw Error(ErrorCode::InvalidConfig, msg);
  }
  return cfg;
}

// Largest-remainder apportionment of `total` over `proportions`; remainder
// units go to the largest fractional parts, ties to the lower index.
inline std::vector<std::int64_t> apportion(const std::vector<double>& proportions,
                                           std::int64_t total) {
  const std::size_t n = proportions.size();
  std::vector<std::int64_t> counts(n);
  std::vector<std::pair<double, std::size_t>> remainders(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = proportions[i] * static_cast<double>(total);
    counts[i] = static_cast<std::int64_t>(std::floor(exact));
    remainders[i] = {-(exact - std::floor(exact)), i};  // negated: sort ascending
    assigned += counts[i];
  }
  std::sort(remainders.begin(), remainders.end());
  const std::int64_t leftover = total - assigned;
  for (std::int64_t i = 0; i < leftover; ++i)
    ++counts[remainders[static_cast<std::size_t>(i)].second];
  return counts;
}

// Deterministic given (config, seed): stratum sizes are apportioned, not
// sampled; treatment and outcome are per-individual Bernoulli draws from one
// SplitMix64 stream consumed in id order (treatment draw, then outcome draw).
// Age enters as indicator covariates, one per stratum beyond the first.
// Ids are zero-padded so lexicographic order equals generation order.
inline std::vector<IndividualRecord> generate_population(const SimConfig& raw) {
  const SimConfig cfg = validate_config(raw);
  std::vector<double> props;
  props.reserve(cfg.age_strata.size());
  for (const auto& s : cfg.age_strata) props.push_back(s.proportion);
  const std::vector<std::int64_t> counts = apportion(props, cfg.population_size);

  int width = 1;
  for (std::int64_t v = cfg.population_size; v >= 10; v /= 10) ++width;

  SplitMix64 rng(cfg.seed);
  std::vector<IndividualRecord> population;
  population.reserve(static_cast<std::size_t>(cfg.population_size));
  std::int64_t serial = 0;
  const std::size_t n_strata = cfg.age_strata.size();
  for (std::size_t s = 0; s < n_strata; ++s) {
    for (std::int64_t i = 0; i < counts[s]; ++i) {
      ++serial;
      std::string digits = std::to_string(serial);
      IndividualRecord rec;
      rec.id = "i" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') +
               digits;
      rec.covariates.assign(n_strata - 1, 0.0);
      if (s > 0) rec.covariates[s - 1] = 1.0;
      rec.treated = rng.bernoulli(cfg.vaccination_uptake[s]);
      rec.outcome = rng.bernoulli(cfg.incidence_per_10k[s] / 10'000.0);
      population.push_back(std::move(rec));
    }
  }
  return population;
}

// Solves { sum p_i r_i = population CR, sum q_i r_i = matched CR } for the
// two stratum rates (two strata).
inline std::vector<double> calibrate_rates(double population_cr,
                                           const std::vector<double>& population_shares,
                                           double matched_cr,
                                           const std::vector<double>& matched_shares) {
  if (population_shares.size() != 2 || matched_shares.size() != 2)
    throw Error(ErrorCode::InvalidArgument, "calibration expects exactly two strata");
  const double p1 = population_shares[0], p2 = population_shares[1];
  const double q1 = matched_shares[0], q2 = matched_shares[1];
  const double det = p1 * q2 - p2 * q1;
  if (std::fabs(det) < 1e-12)
    throw Error(ErrorCode::SingularSystem,
                "population and matched shares are identical; system is singular");
  return {(population_cr * q2 - matched_cr * p2) / det,
          (p1 * matched_cr - q1 * population_cr) / det};
}

// One-equation variant: with one stratum rate fixed, the other follows from
// the population mixture alone.
inline double complete_rate(double population_cr, const std::vector<double>& shares,
                            std::size_t fixed_index, double fixed_rate) {
  if (shares.size() != 2 || fixed_index > 1)
    throw Error(ErrorCode::InvalidArgument, "completion expects exactly two strata");
  const std::size_t other = 1 - fixed_index;
  if (std::fabs(shares[other]) < 1e-12)
    throw Error(ErrorCode::SingularSystem, "free stratum has zero share");
  return (population_cr - shares[fixed_index] * fixed_rate) / shares[other];
}

struct SimResult {
  // rates
  Rate population_cr;
  Rate matched_cr;
  std::int64_t population_cases = 0;
  std::int64_t matched_cases = 0;
  // structure
  std::vector<std::string> stratum_labels;
  std::vector<std::int64_t> population_stratum_counts;
  std::vector<std::int64_t> matched_stratum_counts;
  std::vector<double> population_stratum_shares;
  std::vector<double> matched_stratum_shares;
  std::vector<double> base_group_stratum_shares;
  // sizes
  std::int64_t population_size = 0;
  std::int64_t base_group_size = 0;
  std::int64_t matched_base = 0;
  std::int64_t unmatched_base = 0;
  std::int64_t matched_total = 0;
  // verdict ingredients
  GofResult gof_vs_national;
  DeviationResult deviation_vs_population;
  // provenance
  int k = 0;
  BaseGroup base_group = BaseGroup::untreated;
  std::uint64_t seed = 0;
  bool propensity_converged = false;
  int propensity_iterations = 0;

  friend bool operator==(const SimResult&, const SimResult&) = default;
};

// Generates a population, fits the propensity model on the age covariate,
// matches 1:k from the configured base group, and measures what the matched
// cohort looks like against the population it came from.
inline SimResult run_paradox_experiment(const SimConfig& raw) {
  const SimConfig cfg = validate_config(raw);
  const std::vector<IndividualRecord> population = generate_population(cfg);
  const std::size_t n_strata = cfg.age_strata.size();

  const auto stratum_of = [n_strata](const IndividualRecord& r) {
    for (std::size_t j = 0; j + 1 < n_strata; ++j)
      if (r.covariates[j] == 1.0) return j + 1;
    return std::size_t{0};
  };

  SimResult res;
  res.population_size = static_cast<std::int64_t>(population.size());
  res.k = cfg.k;
  res.base_group = cfg.base_group;
  res.seed = cfg.seed;
  for (const auto& s : cfg.age_strata) res.stratum_labels.push_back(s.label);

  res.population_stratum_counts.assign(n_strata, 0);
  std::vector<std::int64_t> base_stratum_counts(n_strata, 0);
  const bool base_treated = cfg.base_group == BaseGroup::treated;
  for (const auto& r : population) {
    const std::size_t s = stratum_of(r);
    ++res.population_stratum_counts[s];
    if (r.outcome && *r.outcome) ++res.population_cases;
    if (r.treated == base_treated) {
      ++base_stratum_counts[s];
      ++res.base_group_size;
    }
  }
  res.population_cr = crude_rate(res.population_cases, res.population_size);

  const PropensityModel model = fit_propensity(population);
  res.propensity_converged = model.converged;
  res.propensity_iterations = model.iterations;

  const MatchedCohort cohort = match_cohort(population, model, cfg.base_group, cfg.k);
  res.matched_base = cohort.matched_base_count();
  res.unmatched_base = static_cast<std::int64_t>(cohort.unmatched_base.size());
  res.matched_total = cohort.size();

  std::unordered_map<std::string, const IndividualRecord*> by_id;
  by_id.reserve(population.size());
  for (const auto& r : population) by_id.emplace(r.id, &r);

  res.matched_stratum_counts.assign(n_strata, 0);
  for (const auto& id : cohort.matched_ids()) {
    const IndividualRecord& r = *by_id.at(id);
    ++res.matched_stratum_counts[stratum_of(r)];
    if (r.outcome && *r.outcome) ++res.matched_cases;
  }
  res.matched_cr = crude_rate(res.matched_cases, res.matched_total);

  const auto shares = [](const std::vector<std::int64_t>& counts) {
    std::int64_t sum = 0;
    for (auto c : counts) sum += c;
    std::vector<double> out(counts.size(), 0.0);
    if (sum > 0)
      for (std::size_t i = 0; i < counts.size(); ++i)
        out[i] = static_cast<double>(counts[i]) / static_cast<double>(sum);
    return out;
  };
  res.population_stratum_shares = shares(res.population_stratum_counts);
  res.matched_stratum_shares = shares(res.matched_stratum_counts);
  res.base_group_stratum_shares = shares(base_stratum_counts);

  GofInput gof;
  gof.observed = res.matched_stratum_counts;
  for (const auto& s : cfg.age_strata) gof.expected_proportions.push_back(s.proportion);
  gof.labels = res.stratum_labels;
  res.gof_vs_national = chi_squared_gof(gof);

  res.deviation_vs_population =
      deviation(res.matched_cr, BaselineStats{res.population_cr, Rate{0.0, 10'000.0}, 1});
  return res;
}

}  // namespace evaudit
