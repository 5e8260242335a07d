#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "distributions.hpp"
#include "error.hpp"
#include "gof.hpp"
#include "scoring.hpp"

namespace taxoscore {

inline constexpr double kCritical05 = 1.64;
inline constexpr double kCritical01 = 2.32;

/// One-sided comparison of mean scores. With lower-is-better scores, a large
/// positive statistic means model 2 scores better than model 1.
struct TestResult {
  double statistic = 0.0;
  double mean_diff = 0.0;
  double sigma = 0.0;
  std::size_t n = 0;
  double p_value = 0.5;
  bool reject_05 = false;
  bool reject_01 = false;
};

inline void to_json(nlohmann::json& j, const TestResult& r) {
  auto num = [](double v) {
    if (std::isfinite(v)) return nlohmann::json(v);
    return nlohmann::json(v > 0 ? "Inf" : "-Inf");
  };
  j = nlohmann::json{{"statistic", num(r.statistic)}, {"mean_diff", r.mean_diff}, {"sigma", r.sigma},
                     {"n", r.n},                      {"p_value", r.p_value},   {"reject_05", r.reject_05},
                     {"reject_01", r.reject_01}};
}

/// Statistic sqrt(n) * mean(d) / sigma with d = s1 - s2 and sigma^2 = mean(d^2).
/// Degenerate sigma: +-Inf by the sign of mean(d), or 0 when mean(d) = 0.
inline TestResult forecast_comparison_test(const std::vector<double>& s1, const std::vector<double>& s2) {
  if (s1.size() != s2.size()) throw AlignmentError("forecast comparison: series lengths differ");
  if (s1.size() < 2) throw DomainError("forecast comparison needs n >= 2");
  TestResult r;
  r.n = s1.size();
  const double n = static_cast<double>(r.n);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const double d = s1[i] - s2[i];
    sum += d;
    sq += d * d;
  }
  r.mean_diff = sum / n;
  r.sigma = std::sqrt(sq / n);
  if (!std::isfinite(r.mean_diff) || !std::isfinite(r.sigma)) {
    throw DomainError("forecast comparison: non-finite scores");
  }
  if (r.sigma > 0.0) {
    r.statistic = std::sqrt(n) * r.mean_diff / r.sigma;
  } else {
    r.statistic = r.mean_diff > 0.0   ? std::numeric_limits<double>::infinity()
                  : r.mean_diff < 0.0 ? -std::numeric_limits<double>::infinity()
                                      : 0.0;
  }
  const double p = 0.5 * std::erfc(r.statistic / std::sqrt(2.0));
  r.p_value = std::clamp(p, std::numeric_limits<double>::min(), 1.0 - std::numeric_limits<double>::epsilon());
  r.reject_05 = r.statistic > kCritical05;
  r.reject_01 = r.statistic > kCritical01;
  return r;
}

/// Series must cover the same events in the same order and share kind,
/// weight, beta and reference.
inline TestResult forecast_comparison_test(const ScoreSeries& s1, const ScoreSeries& s2) {
  if (s1.ids != s2.ids) throw AlignmentError("forecast comparison: event ids differ");
  if (s1.kind != s2.kind || s1.weight != s2.weight || s1.ref != s2.ref || s1.beta != s2.beta) {
    throw AlignmentError("forecast comparison: score metadata differ");
  }
  return forecast_comparison_test(s1.values, s2.values);
}

struct RejectionProportion {
  std::size_t rejections = 0;
  std::size_t count = 0;
  double proportion() const { return count ? static_cast<double>(rejections) / static_cast<double>(count) : 0.0; }
};

inline RejectionProportion yearly_rejection_proportions(const std::vector<TestResult>& results) {
  if (results.empty()) throw DomainError("rejection proportion of no results");
  RejectionProportion p;
  p.count = results.size();
  for (const auto& r : results) p.rejections += r.reject_05 ? 1 : 0;
  return p;
}

struct TrimmedResult {
  double q = 1.0;
  std::size_t retained = 0;
  TestResult test;
};

inline std::vector<double> default_trim_quantiles() { return {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}; }

/// For each q keeps the floor(n q) smallest realizations (ties by input order,
/// so the boundary value itself is kept) and tests the retained scores.
inline std::vector<TrimmedResult> trimmed_test(const std::vector<double>& realizations, const std::vector<double>& s1,
                                               const std::vector<double>& s2,
                                               const std::vector<double>& trim_quantiles = default_trim_quantiles()) {
  if (realizations.empty()) throw DomainError("trimmed test: no realizations");
  if (realizations.size() != s1.size() || s1.size() != s2.size()) throw AlignmentError("trimmed test: lengths differ");
  std::vector<std::size_t> order(realizations.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return realizations[a] < realizations[b]; });
  std::vector<TrimmedResult> out;
  for (double q : trim_quantiles) {
    if (!(q > 0.0 && q <= 1.0)) throw DomainError("trim quantiles must lie in (0, 1]");
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(order.size()) * q + 1e-9));
    std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(keep.begin(), keep.end());
    std::vector<double> a, b;
    for (auto i : keep) {
      a.push_back(s1[i]);
      b.push_back(s2[i]);
    }
    TrimmedResult t;
    t.q = q;
    t.retained = k;
    if (k >= 2) t.test = forecast_comparison_test(a, b);
    out.push_back(t);
  }
  return out;
}

using gof::normality_gof;
using gof::two_sample_distance_test;

struct ChiSquaredResult {
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
};

/// Two-sample chi-squared test on the 2 x K table of counts; categories with
/// both counts zero are dropped.
inline ChiSquaredResult frequency_chi2(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw AlignmentError("frequency_chi2: vocabularies differ");
  std::vector<std::pair<double, double>> cells;
  double ta = 0.0, tb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] < 0.0 || b[k] < 0.0) throw DomainError("frequency_chi2: negative count");
    if (a[k] == 0.0 && b[k] == 0.0) continue;
    cells.emplace_back(a[k], b[k]);
    ta += a[k];
    tb += b[k];
  }
  if (cells.empty()) throw UndefinedTestError("frequency_chi2: all-zero table");
  if (ta == 0.0 || tb == 0.0) throw UndefinedTestError("frequency_chi2: a sample has no events");
  ChiSquaredResult r;
  r.df = cells.size() - 1;
  const double total = ta + tb;
  for (const auto& [x, y] : cells) {
    const double col = x + y;
    const double ea = ta * col / total, eb = tb * col / total;
    r.statistic += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
  }
  if (r.df == 0) {
    r.p_value = 1.0;
  } else {
    const boost::math::chi_squared_distribution<double, QuietPolicy> chi(static_cast<double>(r.df));
    r.p_value = boost::math::cdf(boost::math::complement(chi, r.statistic));
  }
  return r;
}

inline void to_json(nlohmann::json& j, const ChiSquaredResult& r) {
  j = nlohmann::json{{"statistic", r.statistic}, {"df", r.df}, {"p_value", r.p_value}};
}

}  // namespace taxoscore
