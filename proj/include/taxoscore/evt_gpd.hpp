#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distributions.hpp"
#include "error.hpp"
#include "gof.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace taxoscore {

struct GpdFit {
  GpdParams params;
  double se_mu = 0.0;
  double se_tau = 0.0;
  double loglik = 0.0;
  double grad_norm = 0.0;  // max |gradient| / n in (log mu, log tau)
  int iterations = 0;
};

namespace detail {

struct GpdLik {
  double value = 0.0;
  std::array<double, 2> grad{};     // d/d(log mu), d/d(log tau)
  std::array<double, 3> hess{};     // aa, ab, bb
};

inline GpdLik gpd_loglik_log(const std::vector<double>& y, double a, double b, bool derivs) {
  const double mu = std::exp(a), tau = std::exp(b);
  GpdLik out;
  double s_l = 0.0, s_r = 0.0, s_r2 = 0.0;
  for (double v : y) {
    const double z = v / mu;
    const double l = std::log1p(z);
    s_l += l;
    if (derivs) {
      const double r = z / (1.0 + z);
      s_r += r;
      s_r2 += r / (1.0 + z);
    }
  }
  const double n = static_cast<double>(y.size());
  out.value = n * (b - a) - (1.0 + tau) * s_l;
  if (derivs) {
    out.grad = {-n + (1.0 + tau) * s_r, n - tau * s_l};
    out.hess = {-(1.0 + tau) * s_r2, tau * s_r, -tau * s_l};
  }
  return out;
}

inline constexpr double kLogTauMin = -6.9;  // tau >= ~1e-3
inline constexpr double kLogTauMax = 9.2;   // tau <= ~1e4

/// Damped Newton ascent with a Fisher-scoring fallback whenever the observed
/// Hessian is not negative definite. Returns nullopt on failure.
inline std::optional<GpdFit> gpd_newton(const std::vector<double>& y, double a, double b, int max_iter,
                                        std::vector<double>* trace) {
  const double n = static_cast<double>(y.size());
  GpdLik cur = gpd_loglik_log(y, a, b, true);
  for (int it = 0; it < max_iter; ++it) {
    if (trace) trace->push_back(cur.value);
    const double gn = std::max(std::abs(cur.grad[0]), std::abs(cur.grad[1])) / n;
    if (gn < 1e-9) {
      GpdFit f;
      f.params = {std::exp(a), std::exp(b)};
      f.loglik = cur.value;
      f.grad_norm = gn;
      f.iterations = it;
      const double det = cur.hess[0] * cur.hess[2] - cur.hess[1] * cur.hess[1];
      if (det > 0.0 && cur.hess[0] < 0.0) {
        const double caa = -cur.hess[2] / det, cbb = -cur.hess[0] / det;
        f.se_mu = f.params.mu * std::sqrt(caa);
        f.se_tau = f.params.tau * std::sqrt(cbb);
      } else {
        f.se_mu = f.se_tau = std::numeric_limits<double>::quiet_NaN();
      }
      return f;
    }
    // Newton system on -H; fall back to expected information.
    double haa = -cur.hess[0], hab = -cur.hess[1], hbb = -cur.hess[2];
    double det = haa * hbb - hab * hab;
    if (!(haa > 0.0 && det > 1e-12 * (haa * hbb + 1e-300))) {
      const double tau = std::exp(b);
      haa = n * tau / (tau + 2.0);
      hab = -n * tau / (tau + 1.0);
      hbb = n;
      det = haa * hbb - hab * hab;
    }
    double da = (hbb * cur.grad[0] - hab * cur.grad[1]) / det;
    double db = (haa * cur.grad[1] - hab * cur.grad[0]) / det;
    const double len = std::max(std::abs(da), std::abs(db));
    if (len > 2.0) {
      da *= 2.0 / len;
      db *= 2.0 / len;
    }
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k) {
      const double na = a + step * da;
      const double nb = std::clamp(b + step * db, kLogTauMin, kLogTauMax);
      const GpdLik trial = gpd_loglik_log(y, na, nb, false);
      if (std::isfinite(trial.value) && trial.value >= cur.value - 1e-12 * std::abs(cur.value)) {
        a = na;
        b = nb;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    cur = gpd_loglik_log(y, a, b, true);
    if (b <= kLogTauMin || b >= kLogTauMax) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

/// Maximum-likelihood fit of GPD(mu, tau) to positive exceedances, optimizing in
/// (log mu, log tau) from several starting points. `start` seeds an extra start.
inline GpdFit gpd_fit_mle(const std::vector<double>& y, std::optional<GpdParams> start = std::nullopt,
                          int max_iter = 200) {
  if (y.size() < 10) throw DomainError("gpd_fit_mle needs at least 10 observations");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : y) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("gpd_fit_mle: exceedances must be positive and finite");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo <= 1e-12 * hi) throw FitError("gpd_fit_mle: degenerate (constant) sample");

  std::vector<double> sorted(y);
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  std::vector<std::pair<double, double>> starts;
  if (start) starts.emplace_back(std::log(start->mu), std::log(start->tau));
  for (double tau0 : {0.5, 1.0, 2.0, 5.0}) {
    // median = mu (2^(1/tau) - 1)
    starts.emplace_back(std::log(median / std::expm1(std::log(2.0) / tau0)), std::log(tau0));
  }
  std::optional<GpdFit> best;
  std::vector<double> trace;
  for (const auto& [a0, b0] : starts) {
    std::vector<double> local;
    auto f = detail::gpd_newton(y, a0, b0, max_iter, &local);
    if (f && (!best || f->loglik > best->loglik + 1e-9 * std::abs(best->loglik))) best = f;
    if (!best && local.size() > trace.size()) trace = std::move(local);
    if (start && best && &a0 == &starts.front().first) break;  // warm start converged
  }
  if (!best) throw FitError("gpd_fit_mle: no start converged", trace);
  return *best;
}

/// Anderson-Darling statistic of exceedances against a fitted GPD.
inline double gpd_ad_statistic(const std::vector<double>& y, const GpdParams& p) {
  std::vector<double> u(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) u[i] = gpd_cdf(y[i], p);
  return gof::edf_statistic(std::move(u), gof::Statistic::AD);
}

struct GpdGofResult {
  GpdFit fit;
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Parametric-bootstrap AD goodness of fit (fit, resample, refit).
inline GpdGofResult gpd_ad_bootstrap(const std::vector<double>& y, std::size_t n_boot, std::uint64_t seed) {
  GpdGofResult out;
  out.fit = gpd_fit_mle(y);
  out.statistic = gpd_ad_statistic(y, out.fit.params);
  std::vector<char> exceed(n_boot, 0);
  parallel_for(n_boot, [&](std::size_t r) {
    const auto sim = gpd_sample(out.fit.params, y.size(), derive_seed(seed, r));
    try {
      const auto f = gpd_fit_mle(sim, out.fit.params);
      exceed[r] = gpd_ad_statistic(sim, f.params) >= out.statistic;
    } catch (const Error&) {
      exceed[r] = 1;  // failed refit counts against rejection
    }
  });
  const auto k = static_cast<double>(std::count(exceed.begin(), exceed.end(), 1));
  out.p_value = (1.0 + k) / (static_cast<double>(n_boot) + 1.0);
  return out;
}

struct ThresholdCandidate {
  double q = 0.0;
  double u = 0.0;
  std::size_t n_exceed = 0;
  double p_value = std::numeric_limits<double>::quiet_NaN();
};

struct ThresholdResult {
  bool valid = false;  // false: no candidate accepted ("no-valid-threshold")
  double u = std::numeric_limits<double>::quiet_NaN();
  double quantile = std::numeric_limits<double>::quiet_NaN();
  GpdParams params;  // constant fit of the accepted exceedances
  std::vector<ThresholdCandidate> path;
};

inline void to_json(nlohmann::json& j, const ThresholdResult& r) {
  j = nlohmann::json{{"valid", r.valid}};
  j["u"] = r.valid ? nlohmann::json(r.u) : nlohmann::json(nullptr);
  j["quantile"] = r.valid ? nlohmann::json(r.quantile) : nlohmann::json(nullptr);
  if (r.valid) j["params"] = {{"mu", r.params.mu}, {"tau", r.params.tau}};
  auto arr = nlohmann::json::array();
  for (const auto& c : r.path) {
    nlohmann::json e{{"q", c.q}, {"u", c.u}, {"n_exceed", c.n_exceed}};
    e["p"] = std::isnan(c.p_value) ? nlohmann::json(nullptr) : nlohmann::json(c.p_value);
    arr.push_back(e);
  }
  j["pvalues"] = arr;
}

inline void from_json(const nlohmann::json& j, ThresholdResult& r) {
  r.valid = j.at("valid").get<bool>();
  if (r.valid) {
    r.u = j.at("u").get<double>();
    r.quantile = j.at("quantile").get<double>();
    r.params = {j.at("params").at("mu").get<double>(), j.at("params").at("tau").get<double>()};
  }
  r.path.clear();
  for (const auto& e : j.at("pvalues")) {
    ThresholdCandidate c;
    c.q = e.at("q").get<double>();
    c.u = e.at("u").get<double>();
    c.n_exceed = e.at("n_exceed").get<std::size_t>();
    c.p_value = e.at("p").is_null() ? std::nan("") : e.at("p").get<double>();
    r.path.push_back(c);
  }
}

/// Empirical quantile x_(ceil(q n)) of a sorted sample (inverse ECDF).
inline double empirical_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DomainError("empirical quantile of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

inline std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int k = 40; k <= 95; ++k) g.push_back(k / 100.0);
  return g;
}

struct ThresholdOptions {
  double p_cutoff = 0.05;
  bool full_path = false;  // keep scanning after the first acceptance
  std::size_t min_exceedances = 10;
};

/// Lowest grid quantile whose exceedances pass the bootstrap AD test.
inline ThresholdResult select_threshold(const std::vector<double>& sample, const std::vector<double>& grid,
                                        std::size_t n_boot, std::uint64_t seed,
                                        const ThresholdOptions& opt = {}) {
  if (grid.empty()) throw DomainError("select_threshold: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw DomainError("select_threshold: grid must lie in (0,1)");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw DomainError("select_threshold: grid must be ascending");
  }
  if (n_boot < 200) throw DomainError("select_threshold: n_boot must be >= 200");
  std::vector<double> sorted(sample);
  std::sort(sorted.begin(), sorted.end());
  ThresholdResult out;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    ThresholdCandidate cand;
    cand.q = grid[c];
    cand.u = empirical_quantile(sorted, cand.q);
    const auto first = std::upper_bound(sorted.begin(), sorted.end(), cand.u);
    std::vector<double> exc;
    for (auto it = first; it != sorted.end(); ++it) exc.push_back(*it - cand.u);
    cand.n_exceed = exc.size();
    if (exc.size() >= opt.min_exceedances) {
      try {
        const auto g = gpd_ad_bootstrap(exc, n_boot, derive_seed(seed, c));
        cand.p_value = g.p_value;
        if (!out.valid && g.p_value >= opt.p_cutoff) {
          out.valid = true;
          out.u = cand.u;
          out.quantile = cand.q;
          out.params = g.fit.params;
        }
      } catch (const FitError&) {
        // p stays NaN: candidate not accepted
      }
    }
    out.path.push_back(cand);
    if (out.valid && !opt.full_path) break;
  }
  return out;
}

}  // namespace taxoscore
