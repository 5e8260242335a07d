#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>
#include <vector>

#include "distributions.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace taxoscore::gof {

enum class Statistic { KS, CvM, AD };

inline const char* name(Statistic s) {
  switch (s) {
    case Statistic::KS: return "KS";
    case Statistic::CvM: return "CvM";
    case Statistic::AD: return "AD";
  }
  return "?";
}

/// EDF statistic of probability-integral values u_i = F(x_i). Sorts `u`.
inline double edf_statistic(std::vector<double> u, Statistic s) {
  const std::size_t n = u.size();
  if (n == 0) throw DomainError("edf statistic of an empty sample");
  std::sort(u.begin(), u.end());
  const double nn = static_cast<double>(n);
  switch (s) {
    case Statistic::KS: {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d = std::max({d, (i + 1) / nn - u[i], u[i] - i / nn});
      }
      return d;
    }
    case Statistic::CvM: {
      double w = 1.0 / (12.0 * nn);
      for (std::size_t i = 0; i < n; ++i) {
        const double c = u[i] - (2.0 * i + 1.0) / (2.0 * nn);
        w += c * c;
      }
      return w;
    }
    case Statistic::AD: {
      constexpr double eps = 1e-300;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double lo = std::max(u[i], eps);
        const double hi = std::max(1.0 - u[n - 1 - i], eps);
        acc += (2.0 * i + 1.0) * (std::log(lo) + std::log(hi));
      }
      return -nn - acc / nn;
    }
  }
  return 0.0;
}

/// Kolmogorov limiting survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic KS p-value with Stephens' small-sample correction; `ne` is the
/// effective sample size (n, or nm/(n+m) for two samples).
inline double ks_pvalue(double d, double ne) {
  if (d <= 0.0) return 1.0;
  const double s = std::sqrt(ne);
  return kolmogorov_sf((s + 0.12 + 0.11 / s) * d);
}

/// One-sample KS test against a continuous cdf.
template <typename Cdf>
std::pair<double, double> ks_test(const std::vector<double>& x, Cdf&& cdf) {
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = cdf(x[i]);
  const double d = edf_statistic(std::move(u), Statistic::KS);
  return {d, ks_pvalue(d, static_cast<double>(x.size()))};
}

// Two-sample tests -------------------------------------------------------------

enum class TwoSampleKind { KS, CvM };

struct DistanceResult {
  double distance = 0.0;
  double p_value = 1.0;
};

namespace detail {
/// Sup and squared-sum of ECDF differences over the pooled sorted sample.
inline std::pair<double, double> ecdf_gaps(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double sup = 0.0, sq = 0.0;
  while (i < a.size() || j < b.size()) {
    double z;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      z = a[i];
    } else {
      z = b[j];
    }
    std::size_t ties = 0;
    while (i < a.size() && a[i] == z) ++i, ++ties;
    while (j < b.size() && b[j] == z) ++j, ++ties;
    const double g = i / na - j / nb;
    sup = std::max(sup, std::abs(g));
    sq += static_cast<double>(ties) * g * g;
  }
  return {sup, sq};
}

inline double cvm2_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  return na * nb / ((na + nb) * (na + nb)) * ecdf_gaps(a, b).second;
}
}  // namespace detail

/// Two-sample KS distance with asymptotic p, or Cramer-von Mises distance with
/// a pooled bootstrap p. Equal multisets give distance 0 and p = 1.
inline DistanceResult two_sample_distance_test(std::vector<double> a, std::vector<double> b,
                                               TwoSampleKind kind, std::size_t n_boot = 2000,
                                               std::uint64_t seed = 0x5eed) {
  if (std::min(a.size(), b.size()) < 5) throw DomainError("two-sample test needs at least 5 values per sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (kind == TwoSampleKind::KS) {
    const double d = detail::ecdf_gaps(a, b).first;
    const double ne = static_cast<double>(a.size()) * b.size() / static_cast<double>(a.size() + b.size());
    return {d, ks_pvalue(d, ne)};
  }
  const double t = detail::cvm2_statistic(a, b);
  if (t <= 0.0) return {0.0, 1.0};
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<char> exceed(n_boot, 0);
  parallel_for(n_boot, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::vector<double> ra(a.size()), rb(b.size());
    for (auto& v : ra) v = pooled[rng.below(pooled.size())];
    for (auto& v : rb) v = pooled[rng.below(pooled.size())];
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    exceed[r] = detail::cvm2_statistic(ra, rb) >= t;
  });
  const auto k = static_cast<double>(std::count(exceed.begin(), exceed.end(), 1));
  return {t, (1.0 + k) / (static_cast<double>(n_boot) + 1.0)};
}

// Monte-Carlo normality tests -------------------------------------------------------

namespace detail {
inline std::shared_ptr<const std::vector<double>> normal_null(Statistic s, std::size_t n, std::size_t n_mc,
                                                              std::uint64_t seed) {
  using Key = std::tuple<int, std::size_t, std::size_t, std::uint64_t>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const std::vector<double>>> cache;
  const Key key{static_cast<int>(s), n, n_mc, seed};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto sims = std::make_shared<std::vector<double>>(n_mc);
  parallel_for(n_mc, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::vector<double> u(n);
    for (auto& v : u) v = std_normal_cdf(rng.normal());
    (*sims)[r] = edf_statistic(std::move(u), s);
  });
  std::sort(sims->begin(), sims->end());
  std::lock_guard lock(mutex);
  if (cache.size() > 64) cache.clear();
  return cache.emplace(key, std::move(sims)).first->second;
}
}  // namespace detail

/// Monte-Carlo p-value of a standard-normal GoF test:
/// (1 + #{simulated >= observed}) / (n_mc + 1).
inline double normality_gof(const std::vector<double>& residuals, Statistic s, std::size_t n_mc = 10000,
                            std::uint64_t seed = 1) {
  if (residuals.size() < 8) throw DomainError("normality test needs n >= 8");
  if (n_mc < 1000) throw DomainError("normality test needs n_mc >= 1000");
  std::vector<double> u(residuals.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std_normal_cdf(residuals[i]);
  const double obs = edf_statistic(std::move(u), s);
  const auto null = detail::normal_null(s, residuals.size(), n_mc, seed);
  const auto k = static_cast<double>(null->end() - std::lower_bound(null->begin(), null->end(), obs));
  return (1.0 + k) / (static_cast<double>(n_mc) + 1.0);
}

}  // namespace taxoscore::gof
