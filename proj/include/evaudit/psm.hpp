// Propensity score stack: logistic regression by IRLS, greedy 1:k
// nearest-neighbor matching without replacement, covariate balance
// diagnostics, and the (k+1)x cohort-size signature detector.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evaudit/domain.hpp"
#include "evaudit/errors.hpp"

namespace evaudit {

enum class BaseGroup { treated, untreated };

inline const char* base_group_name(BaseGroup g) {
  return g == BaseGroup::treated ? "treated" : "untreated";
}

// Without replacement (the default) every pool individual is used at most
// once, which is what produces the (k+1)x cohort-size identity. With
// replacement, partners stay in the pool and the identity over distinct
// individuals no longer holds.
enum class MatchMode { without_replacement, with_replacement };

struct PropensityModel {
  std::vector<double> coefficients;  // intercept first
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;

  double score(std::span<const double> covariates) const {
    double eta = coefficients.empty() ? 0.0 : coefficients[0];
    for (std::size_t j = 0; j < covariates.size(); ++j)
      eta += coefficients[j + 1] * covariates[j];
    // logistic function, saturating smoothly at the tails
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
  }
};

struct MatchedSet {
  std::string base_id;
  std::vector<std::string> partner_ids;  // in selection order, nearest first

  friend bool operator==(const MatchedSet&, const MatchedSet&) = default;
};

struct MatchedCohort {
  std::vector<MatchedSet> pairs;           // in base processing order
  std::vector<std::string> unmatched_base;
  int k = 1;
  bool base_is_treated = false;

  std::int64_t matched_base_count() const {
    return static_cast<std::int64_t>(pairs.size());
  }
  std::int64_t size() const {
    return static_cast<std::int64_t>(pairs.size()) * (k + 1);
  }
  std::vector<std::string> matched_ids() const {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(size()));
    for (const auto& p : pairs) {
      ids.push_back(p.base_id);
      ids.insert(ids.end(), p.partner_ids.begin(), p.partner_ids.end());
    }
    return ids;
  }

  friend bool operator==(const MatchedCohort&, const MatchedCohort&) = default;
};

struct BalanceRow {
  std::string name;
  double smd_before = 0.0;
  double smd_after = 0.0;
  bool degenerate_before = false;  // zero variance in both groups with unequal means
  bool degenerate_after = false;

  friend bool operator==(const BalanceRow&, const BalanceRow&) = default;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;

  friend bool operator==(const BalanceReport&, const BalanceReport&) = default;
};

struct RatioSignature {
  std::int64_t total = 0;
  std::int64_t base = 0;
  std::optional<int> k;
  bool exact = false;

  friend bool operator==(const RatioSignature&, const RatioSignature&) = default;
};

namespace detail {

// Solves A x = b for a symmetric positive definite A (row-major, destroyed).
// Returns false when a pivot collapses.
inline bool cholesky_solve(std::vector<double>& a, std::vector<double>& b,
                           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double sum = a[i * n + j];
      for (std::size_t m = 0; m < i; ++m) sum -= a[i * n + m] * a[j * n + m];
      if (i == j) {
        if (!(sum > 1e-12)) return false;
        a[i * n + i] = std::sqrt(sum);
      } else {
        a[j * n + i] = sum / a[i * n + i];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t m = 0; m < i; ++m) sum -= a[i * n + m] * b[m];
    b[i] = sum / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double sum = b[i];
    for (std::size_t m = i + 1; m < n; ++m) sum -= a[m * n + i] * b[m];
    b[i] = sum / a[i * n + i];
  }
  return true;
}

constexpr double kBoundaryEta = 27.631021115928547;  // -ln(1e-12)

}  // namespace detail

// Maximum-likelihood logistic fit of treatment on covariates by iteratively
// reweighted least squares. Converged when the largest coefficient change
// drops below 1e-8, capped at 100 iterations. Near-singular normal equations
// fall back to a 1e-8 ridge on the diagonal. Fitted scores within 1e-12 of
// 0 or 1 alongside diverging coefficients raise SeparationDetected.
inline PropensityModel fit_propensity(const std::vector<IndividualRecord>& data) {
  const std::size_t n = data.size();
  if (n < 2)
    throw Error(ErrorCode::SingleClass, "need at least 2 records");
  const std::size_t d = data[0].covariates.size();
  std::size_t n_treated = 0;
  for (const auto& r : data) {
    if (r.covariates.size() != d)
      throw Error(ErrorCode::LengthMismatch,
                  "record '" + r.id + "' has " + std::to_string(r.covariates.size()) +
                      " covariates, expected " + std::to_string(d));
    if (r.treated) ++n_treated;
  }
  if (n_treated == 0 || n_treated == n)
    throw Error(ErrorCode::SingleClass,
                "all records are " + std::string(n_treated ? "treated" : "untreated"));

  const std::size_t p = d + 1;  // intercept first
  std::vector<double> beta(p, 0.0);
  std::vector<double> eta(n, 0.0);
  std::vector<double> mu(n, 0.5);
  std::vector<double> hessian(p * p);
  std::vector<double> step(p);

  bool converged = false;
  bool boundary = false;
  int iter = 0;
  while (iter < 100) {
    ++iter;
    std::fill(hessian.begin(), hessian.end(), 0.0);
    std::fill(step.begin(), step.end(), 0.0);
    boundary = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& x = data[i].covariates;
      double e = beta[0];
      for (std::size_t j = 0; j < d; ++j) e += beta[j + 1] * x[j];
      eta[i] = e;
      const double pi = e >= 0.0 ? 1.0 / (1.0 + std::exp(-e))
                                 : std::exp(e) / (1.0 + std::exp(e));
      mu[i] = pi;
      if (std::fabs(e) > detail::kBoundaryEta) boundary = true;
      const double w = pi * (1.0 - pi);
      const double r = (data[i].treated ? 1.0 : 0.0) - pi;
      // gradient and lower triangle of X'WX with the implicit leading 1
      step[0] += r;
      hessian[0] += w;
      for (std::size_t j = 0; j < d; ++j) {
        step[j + 1] += r * x[j];
        hessian[(j + 1) * p] += w * x[j];
        for (std::size_t m = 0; m <= j; ++m)
          hessian[(j + 1) * p + (m + 1)] += w * x[j] * x[m];
      }
    }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) hessian[i * p + j] = hessian[j * p + i];

    std::vector<double> h = hessian;
    std::vector<double> delta = step;
    if (!detail::cholesky_solve(h, delta, p)) {
      h = hessian;
      for (std::size_t i = 0; i < p; ++i) h[i * p + i] += 1e-8;
      delta = step;
      if (!detail::cholesky_solve(h, delta, p))
        throw Error(ErrorCode::SingularDesign,
                    "normal equations are singular even with ridge fallback");
    }

    double max_change = 0.0;
    double max_beta = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      beta[j] += delta[j];
      max_change = std::max(max_change, std::fabs(delta[j]));
      max_beta = std::max(max_beta, std::fabs(beta[j]));
    }
    if (boundary && max_beta > 1e4)
      throw Error(ErrorCode::SeparationDetected,
                  "fitted scores pinned at 0/1 with runaway coefficients");
    if (max_change < 1e-8) {
      converged = true;
      break;
    }
  }

  double max_beta = 0.0;
  for (double b : beta) max_beta = std::max(max_beta, std::fabs(b));
  if (boundary && (!converged || max_beta > 10.0))
    throw Error(ErrorCode::SeparationDetected,
                "fitted scores within 1e-12 of 0/1 alongside diverging coefficients");

  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = eta[i];
    const double y = data[i].treated ? 1.0 : 0.0;
    ll += y * e - (e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
  }

  PropensityModel model;
  model.coefficients = std::move(beta);
  model.converged = converged;
  model.iterations = iter;
  model.log_likelihood = ll;
  return model;
}

namespace detail {

struct ScoreBlock {
  double score = 0.0;
  std::vector<std::string> ids;  // ascending; [head, end) still available
  std::size_t head = 0;

  bool empty() const { return head >= ids.size(); }
  const std::string& front() const { return ids[head]; }
};

}  // namespace detail

// Greedy 1:k nearest-neighbor matching, without replacement by default.
// Base individuals are processed in ascending (score, id) order; each takes
// its k nearest available pool scores within the caliper, distance ties
// resolved toward the smaller id (lexicographic). A base individual that
// cannot obtain k partners consumes nothing and is reported in
// unmatched_base.
inline MatchedCohort match_one_to_k(
    const std::unordered_map<std::string, double>& scores,
    const std::vector<std::string>& base_ids,
    const std::vector<std::string>& pool_ids, int k,
    std::optional<double> caliper = std::nullopt,
    MatchMode mode = MatchMode::without_replacement) {
  if (k < 1)
    throw Error(ErrorCode::InvalidK, "k must be >= 1 (got " + std::to_string(k) + ")");
  if (pool_ids.empty()) throw Error(ErrorCode::EmptyPool, "pool is empty");
  if (caliper && !(*caliper >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "caliper must be >= 0");

  const auto score_of = [&scores](const std::string& id) {
    auto it = scores.find(id);
    if (it == scores.end())
      throw Error(ErrorCode::UnknownId, "no score for id '" + id + "'");
    return it->second;
  };

  std::set<std::string> seen;
  for (const auto& id : base_ids)
    if (!seen.insert(id).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate base id '" + id + "'");
  for (const auto& id : pool_ids)
    if (!seen.insert(id).second)
      throw Error(ErrorCode::InvalidArgument,
                  "id '" + id + "' appears twice across base and pool");

  // Pool as blocks of identical score, each block's ids ascending; within a
  // block every candidate is equidistant from any base, so consumption is
  // always from the front (the smallest available id).
  std::vector<std::pair<double, std::string>> pool;
  pool.reserve(pool_ids.size());
  for (const auto& id : pool_ids) pool.emplace_back(score_of(id), id);
  std::sort(pool.begin(), pool.end());

  std::vector<detail::ScoreBlock> blocks;
  for (auto& [s, id] : pool) {
    if (blocks.empty() || blocks.back().score != s)
      blocks.push_back(detail::ScoreBlock{s, {}, 0});
    blocks.back().ids.push_back(std::move(id));
  }
  std::set<std::size_t> alive;  // indices of blocks with candidates left
  for (std::size_t i = 0; i < blocks.size(); ++i) alive.insert(i);

  std::vector<std::pair<double, std::string>> base;
  base.reserve(base_ids.size());
  for (const auto& id : base_ids) base.emplace_back(score_of(id), id);
  std::sort(base.begin(), base.end());

  MatchedCohort out;
  out.k = k;
  const double inf = std::numeric_limits<double>::infinity();

  for (const auto& [bs, bid] : base) {
    // first block with score >= bs; its alive predecessor has score < bs
    const std::size_t lo = static_cast<std::size_t>(
        std::lower_bound(blocks.begin(), blocks.end(), bs,
                         [](const detail::ScoreBlock& blk, double s) {
                           return blk.score < s;
                         }) -
        blocks.begin());
    auto right_it = alive.lower_bound(lo);
    auto left_it = right_it;
    bool has_left = left_it != alive.begin();
    if (has_left) --left_it;
    bool has_right = right_it != alive.end();

    std::vector<std::pair<std::size_t, std::size_t>> taken;  // block, count
    std::vector<std::string> partners;
    partners.reserve(static_cast<std::size_t>(k));

    const auto take_from = [&](std::size_t b) {
      partners.push_back(blocks[b].front());
      ++blocks[b].head;
      if (!taken.empty() && taken.back().first == b)
        ++taken.back().second;
      else
        taken.emplace_back(b, 1);
    };

    while (partners.size() < static_cast<std::size_t>(k)) {
      // step past blocks drained during this base's collection
      while (has_left && blocks[*left_it].empty()) {
        if (left_it == alive.begin()) has_left = false;
        else --left_it;
      }
      while (has_right && blocks[*right_it].empty()) {
        ++right_it;
        has_right = right_it != alive.end();
      }
      double dl = has_left ? bs - blocks[*left_it].score : inf;
      double dr = has_right ? blocks[*right_it].score - bs : inf;
      if (caliper) {
        // beyond the caliper on one side, every further block is too
        if (dl > *caliper) { dl = inf; has_left = false; }
        if (dr > *caliper) { dr = inf; has_right = false; }
      }
      if (dl == inf && dr == inf) break;
      if (dl < dr)
        take_from(*left_it);
      else if (dr < dl)
        take_from(*right_it);
      else  // equal distance: the smaller id wins
        take_from(blocks[*left_it].front() < blocks[*right_it].front() ? *left_it
                                                                       : *right_it);
    }

    if (partners.size() == static_cast<std::size_t>(k)) {
      if (mode == MatchMode::without_replacement) {
        for (const auto& [b, cnt] : taken)
          if (blocks[b].empty()) alive.erase(b);
      } else {
        // partners stay available to later base individuals
        for (const auto& [b, cnt] : taken) blocks[b].head -= cnt;
      }
      out.pairs.push_back(MatchedSet{bid, std::move(partners)});
    } else {
      // cannot obtain k partners: hand everything back
      for (const auto& [b, cnt] : taken) blocks[b].head -= cnt;
      out.unmatched_base.push_back(bid);
    }
  }
  return out;
}

// Scores a dataset with the model and matches from the configured base group.
inline MatchedCohort match_cohort(const std::vector<IndividualRecord>& data,
                                  const PropensityModel& model, BaseGroup base_group,
                                  int k, std::optional<double> caliper = std::nullopt,
                                  MatchMode mode = MatchMode::without_replacement) {
  std::unordered_map<std::string, double> scores;
  scores.reserve(data.size());
  std::vector<std::string> base_ids;
  std::vector<std::string> pool_ids;
  const bool base_treated = base_group == BaseGroup::treated;
  for (const auto& r : data) {
    if (!scores.emplace(r.id, model.score(r.covariates)).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate id '" + r.id + "'");
    (r.treated == base_treated ? base_ids : pool_ids).push_back(r.id);
  }
  MatchedCohort cohort = match_one_to_k(scores, base_ids, pool_ids, k, caliper, mode);
  cohort.base_is_treated = base_treated;
  return cohort;
}

namespace detail {

struct GroupMoments {
  double mean0 = 0.0, mean1 = 0.0, var0 = 0.0, var1 = 0.0;
  std::size_t n0 = 0, n1 = 0;
};

// Sample means/variances (denominator n-1) per treatment arm.
inline GroupMoments moments(const std::vector<const IndividualRecord*>& rows,
                            std::size_t covariate,
                            const PropensityModel* model) {
  GroupMoments m;
  double s0 = 0.0, s1 = 0.0;
  for (const auto* r : rows) {
    const double v = model ? model->score(r->covariates) : r->covariates[covariate];
    if (r->treated) { s1 += v; ++m.n1; } else { s0 += v; ++m.n0; }
  }
  if (m.n0) m.mean0 = s0 / static_cast<double>(m.n0);
  if (m.n1) m.mean1 = s1 / static_cast<double>(m.n1);
  double q0 = 0.0, q1 = 0.0;
  for (const auto* r : rows) {
    const double v = model ? model->score(r->covariates) : r->covariates[covariate];
    if (r->treated) q1 += (v - m.mean1) * (v - m.mean1);
    else q0 += (v - m.mean0) * (v - m.mean0);
  }
  if (m.n0 > 1) m.var0 = q0 / static_cast<double>(m.n0 - 1);
  if (m.n1 > 1) m.var1 = q1 / static_cast<double>(m.n1 - 1);
  return m;
}

inline double smd(const GroupMoments& m, bool& degenerate) {
  const double pooled = (m.var0 + m.var1) / 2.0;
  if (pooled > 0.0) {
    degenerate = false;
    return (m.mean1 - m.mean0) / std::sqrt(pooled);
  }
  degenerate = m.mean1 != m.mean0;
  return 0.0;
}

}  // namespace detail

// Standardized mean differences per covariate (and for the propensity score
// itself when a model is given), before matching over the full data and
// after over the matched ids only.
inline BalanceReport balance(const std::vector<IndividualRecord>& data,
                             const PropensityModel* model,
                             const MatchedCohort& cohort,
                             std::vector<std::string> covariate_names = {}) {
  std::unordered_map<std::string, const IndividualRecord*> by_id;
  by_id.reserve(data.size());
  for (const auto& r : data) by_id.emplace(r.id, &r);

  std::vector<const IndividualRecord*> all;
  all.reserve(data.size());
  for (const auto& r : data) all.push_back(&r);

  std::vector<const IndividualRecord*> matched;
  for (const auto& id : cohort.matched_ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw Error(ErrorCode::UnknownId, "matched id '" + id + "' not in data");
    matched.push_back(it->second);
  }

  const std::size_t d = data.empty() ? 0 : data[0].covariates.size();
  if (covariate_names.empty())
    for (std::size_t j = 0; j < d; ++j)
      covariate_names.push_back("x" + std::to_string(j + 1));
  if (covariate_names.size() != d)
    throw Error(ErrorCode::LengthMismatch, "one covariate name per covariate");

  BalanceReport report;
  for (std::size_t j = 0; j <= d; ++j) {
    const bool is_score = j == d;
    if (is_score && model == nullptr) break;
    BalanceRow row;
    row.name = is_score ? "propensity_score" : covariate_names[j];
    row.smd_before = detail::smd(detail::moments(all, j, is_score ? model : nullptr),
                                 row.degenerate_before);
    row.smd_after = detail::smd(detail::moments(matched, j, is_score ? model : nullptr),
                                row.degenerate_after);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// The arithmetic identity total = (k+1) x base that reveals which group
// served as the matching base.
inline RatioSignature detect_ratio_signature(std::int64_t total, std::int64_t base) {
  if (base < 1 || total < base)
    throw Error(ErrorCode::InvalidArgument, "need total >= base >= 1");
  RatioSignature sig;
  sig.total = total;
  sig.base = base;
  if (total % base == 0 && total / base >= 2) {
    sig.exact = true;
    sig.k = static_cast<int>(total / base - 1);
  }
  return sig;
}

}  // namespace evaudit
