#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <nlohmann/json.hpp>

#include "distributions.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace taxoscore {

// Lower-is-better throughout: a perfect point forecast scores 0.

enum class WeightKind { Equal, Center, LeftTail, RightTail };
enum class ScoreKind { CRPS, twCRPS, ES, rCRPS, rES };
enum class RefKind { StandardNormal, Lognormal, SkewNormal };

inline const char* weight_name(WeightKind w) {
  switch (w) {
    case WeightKind::Equal: return "Equal";
    case WeightKind::Center: return "Center";
    case WeightKind::LeftTail: return "Left";
    case WeightKind::RightTail: return "Right";
  }
  return "?";
}

inline WeightKind weight_from_name(const std::string& s) {
  if (s == "Equal") return WeightKind::Equal;
  if (s == "Center") return WeightKind::Center;
  if (s == "Left" || s == "LeftTail") return WeightKind::LeftTail;
  if (s == "Right" || s == "RightTail") return WeightKind::RightTail;
  throw ConfigError("unknown weight '" + s + "'");
}

inline const char* kind_name(ScoreKind k) {
  switch (k) {
    case ScoreKind::CRPS: return "CRPS";
    case ScoreKind::twCRPS: return "twCRPS";
    case ScoreKind::ES: return "ES";
    case ScoreKind::rCRPS: return "rCRPS";
    case ScoreKind::rES: return "rES";
  }
  return "?";
}

inline ScoreKind kind_from_name(const std::string& s) {
  for (auto k : {ScoreKind::CRPS, ScoreKind::twCRPS, ScoreKind::ES, ScoreKind::rCRPS, ScoreKind::rES}) {
    if (s == kind_name(k)) return k;
  }
  throw ConfigError("unknown score kind '" + s + "'");
}

inline const char* ref_name(RefKind r) {
  switch (r) {
    case RefKind::StandardNormal: return "StandardNormal";
    case RefKind::Lognormal: return "Lognormal";
    case RefKind::SkewNormal: return "SkewNormal";
  }
  return "?";
}

inline RefKind ref_from_name(const std::string& s) {
  for (auto r : {RefKind::StandardNormal, RefKind::Lognormal, RefKind::SkewNormal}) {
    if (s == ref_name(r)) return r;
  }
  throw ConfigError("unknown reference distribution '" + s + "'");
}

inline constexpr double kPi = 3.14159265358979323846;

/// Weight u(z) built from the Student-t(1) density t and cdf T.
inline double weight(WeightKind w, double z) {
  switch (w) {
    case WeightKind::Equal: return 1.0;
    case WeightKind::Center: return 1.0 / (kPi * (1.0 + z * z));
    case WeightKind::LeftTail: return 0.5 - std::atan(z) / kPi;
    case WeightKind::RightTail: return 0.5 + std::atan(z) / kPi;
  }
  return 1.0;
}

/// Chaining function v with v' = u; used for weighted energy scores and for
/// forecast mass outside a distribution's support.
inline double chain(WeightKind w, double z) {
  auto right = [](double x) {
    return 0.5 * x + (x * std::atan(x) - 0.5 * std::log1p(x * x)) / kPi;
  };
  switch (w) {
    case WeightKind::Equal: return z;
    case WeightKind::Center: return std::atan(z) / kPi;
    case WeightKind::RightTail: return right(z);
    case WeightKind::LeftTail: return z - right(z);
  }
  return z;
}

/// Whether E|v(X)|^beta needs the forecast's own beta-th moment.
inline bool chain_is_unbounded_right(WeightKind w) {
  return w == WeightKind::Equal || w == WeightKind::RightTail;
}

namespace detail {

inline double tanh_sinh(const std::function<double(double)>& f, double a, double b, double tol = 1e-11) {
  if (!(b > a)) return 0.0;
  if (b - a < 1e-200) {
    const double v = f(0.5 * (a + b));
    return std::isfinite(v) ? v * (b - a) : 0.0;
  }
  if (b - a < 1e-8 * std::max(std::abs(a), std::abs(b))) {
    // tanh-sinh nodes collapse onto the endpoints of a relatively tiny interval
    return boost::math::quadrature::gauss<double, 15>::integrate(
        [&](double x) {
          const double v = f(x);
          return std::isfinite(v) ? v : 0.0;
        },
        a, b);
  }
  static thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
  // Two-argument form: the one-argument wrapper in Boost 1.74 can place a node exactly on a.
  auto safe = [&](double x, double) {
    if (!(x > a && x < b)) return 0.0;
    const double v = f(x);
    return std::isfinite(v) ? v : 0.0;
  };
  double err = 0.0;
  return integrator.integrate(safe, a, b, tol, &err);
}

/// dQ/dp below the median, from the lower quantile.
template <typename Dist>
double q_density_lower(const Dist& d, double p) {
  if constexpr (std::is_same_v<Dist, GpdDist>) {
    return d.quantile_density_upper(1.0 - p);
  } else {
    return 1.0 / d.pdf(d.quantile(p));
  }
}

/// s^2 * dQ/ds in the upper tail, written to avoid overflow for the GPD.
template <typename Dist>
double sq_density_upper(const Dist& d, double s) {
  if constexpr (std::is_same_v<Dist, GpdDist>) {
    const auto& p = d.params();
    return (p.mu / p.tau) * std::exp((1.0 - 1.0 / p.tau) * std::log(s));
  } else {
    return s * s * d.quantile_density_upper(s);
  }
}

// Each side of y is integrated in whichever of p = F(z) or s = 1 - F(z) is
// small, so levels near 1 never have to be represented in double.
// F(z)^2 u(z) dz with p <= 1/2:
template <typename Dist>
double lower_by_p(const Dist& d, WeightKind w, double p) {
  return p * p * weight(w, d.quantile(p)) * q_density_lower(d, p);
}

// F(z)^2 u(z) dz with s <= 1/2:
template <typename Dist>
double lower_by_s(const Dist& d, WeightKind w, double s) {
  return (1.0 - s) * (1.0 - s) * weight(w, d.quantile_upper(s)) * d.quantile_density_upper(s);
}

// S(z)^2 u(z) dz with s <= 1/2:
template <typename Dist>
double upper_by_s(const Dist& d, WeightKind w, double s) {
  return weight(w, d.quantile_upper(s)) * sq_density_upper(d, s);
}

// S(z)^2 u(z) dz with p <= 1/2:
template <typename Dist>
double upper_by_p(const Dist& d, WeightKind w, double p) {
  return (1.0 - p) * (1.0 - p) * weight(w, d.quantile(p)) * q_density_lower(d, p);
}

}  // namespace detail

template <typename Dist>
std::vector<double> tw_crps_batch(const Dist& f, const std::vector<double>& ys, WeightKind w);

/// Threshold-weighted CRPS: integral of (F(z) - 1{y <= z})^2 u(z) dz, by
/// quantile substitution on each side of y. Infinite when the integral
/// diverges (e.g. GPD with tau <= 1/2 under Equal or Right weights).
template <typename Dist>
double tw_crps(const Dist& f, double y, WeightKind w) {
  return tw_crps_batch(f, std::vector<double>{y}, w)[0];
}

enum class CrpsForm { ClosedForm, Integral };

/// Closed-form CRPS for GPD with tau > 1:
/// y - M + 2M(1 + y/mu)^(1 - tau) - (M - mu/(2 tau - 1)), M = mu/(tau - 1).
inline double gpd_crps_closed(const GpdParams& p, double y) {
  const double m = p.mu / (p.tau - 1.0);
  const double yy = std::max(y, 0.0);
  const double below = y < 0.0 ? -y : 0.0;  // point-mass-free region below support
  return yy - m + 2.0 * m * std::exp((1.0 - p.tau) * std::log1p(yy / p.mu)) - (m - p.mu / (2.0 * p.tau - 1.0)) +
         below;
}

inline double normal_crps_closed(double mean, double sd, double y) {
  const double z = (y - mean) / sd;
  return sd * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / std::sqrt(kPi));
}

template <typename Dist>
CrpsForm crps_form(const Dist& f) {
  if constexpr (std::is_same_v<Dist, GpdDist>) {
    return f.params().tau > 1.0 ? CrpsForm::ClosedForm : CrpsForm::Integral;
  } else if constexpr (std::is_same_v<Dist, NormalDist> || std::is_same_v<Dist, PointMass>) {
    return CrpsForm::ClosedForm;
  } else {
    return CrpsForm::Integral;
  }
}

/// CRPS: closed form when the forecast has one (GPD needs tau > 1), otherwise
/// the Brier-integral form.
template <typename Dist>
double crps(const Dist& f, double y) {
  if constexpr (std::is_same_v<Dist, GpdDist>) {
    if (f.params().tau > 1.0) return gpd_crps_closed(f.params(), y);
  } else if constexpr (std::is_same_v<Dist, NormalDist>) {
    return normal_crps_closed(f.mean(), f.sd(), y);
  }
  return tw_crps(f, y, WeightKind::Equal);
}

/// tw_crps for many realizations of one forecast: realizations are sorted and
/// the integrals accumulated between consecutive levels.
template <typename Dist>
std::vector<double> tw_crps_batch(const Dist& f, const std::vector<double>& ys, WeightKind w) {
  const std::size_t n = ys.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  if constexpr (std::is_same_v<Dist, PointMass>) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(chain(w, ys[i]) - chain(w, f.x));
    return out;
  } else {
    if (std::is_same_v<Dist, GpdDist> && chain_is_unbounded_right(w) && f.moment_order() <= 0.5) {
      std::fill(out.begin(), out.end(), std::numeric_limits<double>::infinity());
      return out;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });
    // Gaps between consecutive levels can be wide and end next to the
    // singular endpoint, so each gap gets its own tanh-sinh rule.
    auto gap = [](auto&& g, double a, double b) { return b > a ? detail::tanh_sinh(g, a, b, 1e-10) : 0.0; };
    auto lo_p = [&](double p) { return detail::lower_by_p(f, w, p); };
    auto lo_s = [&](double s) { return detail::lower_by_s(f, w, s); };
    auto up_s = [&](double s) { return detail::upper_by_s(f, w, s); };
    auto up_p = [&](double p) { return detail::upper_by_p(f, w, p); };
    std::vector<double> p(n), s(n), a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = std::clamp(f.cdf(ys[idx[k]]), 0.0, 1.0);
      s[k] = std::clamp(f.sf(ys[idx[k]]), 0.0, 1.0);
    }
    // Lower integral, increasing y: in p up to the median, then in s.
    std::size_t m = 0;
    while (m < n && p[m] <= 0.5) ++m;
    for (std::size_t k = 0; k < m; ++k) a[k] = k == 0 ? detail::tanh_sinh(lo_p, 0.0, p[0]) : a[k - 1] + gap(lo_p, p[k - 1], p[k]);
    if (m < n) {
      const double half = detail::tanh_sinh(lo_p, 0.0, 0.5);
      double c = detail::tanh_sinh(lo_s, s[m], 0.5);
      a[m] = half + c;
      for (std::size_t k = m + 1; k < n; ++k) {
        c += gap(lo_s, s[k], s[k - 1]);
        a[k] = half + c;
      }
    }
    // Upper integral, decreasing y: in s up to the median, then in p.
    std::size_t j = n;  // first index with s <= 1/2
    while (j > 0 && s[j - 1] <= 0.5) --j;
    for (std::size_t k = n; k-- > j;) b[k] = k == n - 1 ? detail::tanh_sinh(up_s, 0.0, s[k]) : b[k + 1] + gap(up_s, s[k + 1], s[k]);
    if (j > 0) {
      const double half = detail::tanh_sinh(up_s, 0.0, 0.5);
      double c = detail::tanh_sinh(up_p, p[j - 1], 0.5);
      b[j - 1] = half + c;
      for (std::size_t k = j - 1; k-- > 0;) {
        c += gap(up_p, p[k], p[k + 1]);
        b[k] = half + c;
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double y = ys[idx[k]];
      double extra = 0.0;
      if (y < f.lower()) extra += chain(w, f.lower()) - chain(w, y);
      if (y > f.upper()) extra += chain(w, y) - chain(w, f.upper());
      out[idx[k]] = a[k] + b[k] + extra;
    }
    return out;
  }
}

// Energy scores ----------------------------------------------------------------------

inline void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 2.0)) throw DomainError("energy score needs beta in (0, 2)");
}

template <typename Dist>
void check_moment(const Dist& f, double beta, WeightKind w) {
  if (chain_is_unbounded_right(w) && !(beta < f.moment_order())) {
    throw MomentConditionError("energy score with beta=" + std::to_string(beta) +
                               " needs a finite moment of that order; forecast " + f.describe() +
                               " has moments only below " + std::to_string(f.moment_order()));
  }
}

/// E|v(X) - c|^beta by quantile substitution, split at F(v^-1(c)).
template <typename Dist>
double expected_abs_power(const Dist& f, double c_loss, double beta, WeightKind w) {
  const double vc = chain(w, c_loss);
  const double py = std::clamp(f.cdf(c_loss), 0.0, 1.0);
  const double sy = std::clamp(f.sf(c_loss), 0.0, 1.0);
  const double lo = detail::tanh_sinh(
      [&](double p) { return std::pow(std::abs(chain(w, f.quantile(p)) - vc), beta); }, 0.0, py, 1e-10);
  const double hi = detail::tanh_sinh(
      [&](double s) { return std::pow(std::abs(chain(w, f.quantile_upper(s)) - vc), beta); }, 0.0, sy, 1e-10);
  return lo + hi;
}

/// E|v(X) - v(X')|^beta = 2 * integral over s < s' of (v(Q+(s)) - v(Q+(s')))^beta,
/// with Q+ the upper quantile function.
template <typename Dist>
double expected_pair_power(const Dist& f, double beta, WeightKind w) {
  // 1e-6 per level keeps the relative error below 1e-8 on GPD forecasts.
  const double tol = 1e-6;
  const double outer = detail::tanh_sinh(
      [&](double s) {
        const double vs = chain(w, f.quantile_upper(s));
        return detail::tanh_sinh(
            [&](double t) { return std::pow(std::abs(vs - chain(w, f.quantile_upper(t))), beta); }, s, 1.0, tol);
      },
      0.0, 1.0, tol);
  return 2.0 * outer;
}

/// Energy score E|v(X) - v(y)|^beta - 1/2 E|v(X) - v(X')|^beta by quadrature;
/// v is the chaining function of the weight (identity for Equal).
template <typename Dist>
double energy_score(const Dist& f, double y, double beta, WeightKind w = WeightKind::Equal) {
  check_beta(beta);
  if constexpr (std::is_same_v<Dist, PointMass>) {
    return std::pow(std::abs(chain(w, f.x) - chain(w, y)), beta);
  } else {
    check_moment(f, beta, w);
    return expected_abs_power(f, y, beta, w) - 0.5 * expected_pair_power(f, beta, w);
  }
}

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// Monte-Carlo energy score from paired draws (X_i, X'_i); passing the same
/// rng seed across forecasts gives common random numbers.
template <typename Dist>
McEstimate energy_score_mc(const Dist& f, double y, double beta, std::size_t n, std::uint64_t seed,
                           WeightKind w = WeightKind::Equal) {
  check_beta(beta);
  check_moment(f, beta, w);
  Rng rng(seed);
  const double vy = chain(w, y);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = chain(w, f.quantile_upper(rng.uniform()));
    const double x2 = chain(w, f.quantile_upper(rng.uniform()));
    const double t = std::pow(std::abs(x - vy), beta) - 0.5 * std::pow(std::abs(x - x2), beta);
    sum += t;
    sq += t * t;
  }
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  return {mean, std::sqrt(std::max(sq / nn - mean * mean, 0.0) / nn)};
}

// Residual scores -------------------------------------------------------------------------

using RefDistribution = std::variant<NormalDist, LognormalDist, SkewNormalDist>;

/// Reference laws: N(0,1); lognormal with log-location 0 and log-scale 1;
/// skew normal (0, 1, 5).
inline RefDistribution make_ref(RefKind r) {
  switch (r) {
    case RefKind::StandardNormal: return NormalDist(0.0, 1.0);
    case RefKind::Lognormal: return LognormalDist(0.0, 1.0);
    case RefKind::SkewNormal: return SkewNormalDist(0.0, 1.0, 5.0);
  }
  return NormalDist(0.0, 1.0);
}

inline constexpr double kProbClamp = 1e-12;

/// Residual on the reference scale: Q_ref(F(y)), F(y) clamped into [1e-12, 1 - 1e-12].
inline double ref_residual(RefKind r, double prob) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return std::visit([&](const auto& d) { return p <= 0.5 ? d.quantile(p) : d.quantile_upper(1.0 - p); },
                    make_ref(r));
}

/// Residual CRPS: the weighted CRPS of the reference law at its residual.
inline double r_crps(double prob, WeightKind w = WeightKind::Equal, RefKind ref = RefKind::StandardNormal) {
  const double r = ref_residual(ref, prob);
  if (ref == RefKind::StandardNormal && w == WeightKind::Equal) {
    return 2.0 * std_normal_pdf(r) + r * (2.0 * std_normal_cdf(r) - 1.0) - 1.0 / std::sqrt(kPi);
  }
  return std::visit([&](const auto& d) { return tw_crps(d, r, w); }, make_ref(ref));
}

namespace detail {
inline double ref_pair_term(RefKind ref, WeightKind w, double beta) {
  using Key = std::tuple<int, int, double>;
  static std::mutex mutex;
  static std::map<Key, double> cache;
  const Key key{static_cast<int>(ref), static_cast<int>(w), beta};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const double v = std::visit([&](const auto& d) { return expected_pair_power(d, beta, w); }, make_ref(ref));
  std::lock_guard lock(mutex);
  cache[key] = v;
  return v;
}
}  // namespace detail

/// Residual energy score; finite for every forecast because it only sees F(y).
inline double r_es(double prob, double beta, WeightKind w = WeightKind::Equal,
                   RefKind ref = RefKind::StandardNormal) {
  check_beta(beta);
  const double r = ref_residual(ref, prob);
  const double cross = std::visit([&](const auto& d) { return expected_abs_power(d, r, beta, w); }, make_ref(ref));
  return cross - 0.5 * detail::ref_pair_term(ref, w, beta);
}

/// Batch residual scoring for one (weight, reference, beta) triple.
struct ResidualScorer {
  RefKind ref = RefKind::StandardNormal;
  WeightKind weight = WeightKind::Equal;
  double beta = 1.0;

  std::vector<double> crps(const std::vector<double>& probs) const {
    std::vector<double> r(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) r[i] = ref_residual(ref, probs[i]);
    if (ref == RefKind::StandardNormal && weight == WeightKind::Equal) {
      for (auto& v : r) v = 2.0 * std_normal_pdf(v) + v * (2.0 * std_normal_cdf(v) - 1.0) - 1.0 / std::sqrt(kPi);
      return r;
    }
    return std::visit([&](const auto& d) { return tw_crps_batch(d, r, weight); }, make_ref(ref));
  }

  std::vector<double> es(const std::vector<double>& probs) const {
    check_beta(beta);
    const double pair = detail::ref_pair_term(ref, weight, beta);
    const auto dist = make_ref(ref);
    std::vector<double> out(probs.size());
    parallel_for(probs.size(), [&](std::size_t i) {
      const double r = ref_residual(ref, probs[i]);
      out[i] = std::visit([&](const auto& d) { return expected_abs_power(d, r, beta, weight); }, dist) - 0.5 * pair;
    });
    return out;
  }
};

// Score series ----------------------------------------------------------------------------

struct ScoreSeries {
  std::string scheme;
  ScoreKind kind = ScoreKind::CRPS;
  WeightKind weight = WeightKind::Equal;
  double beta = 1.0;
  RefKind ref = RefKind::StandardNormal;
  std::vector<std::string> ids;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double mean() const {
    return values.empty() ? std::nan("")
                          : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
  nlohmann::json metadata() const {
    return {{"scheme", scheme}, {"kind", kind_name(kind)}, {"weight", weight_name(weight)},
            {"beta", beta},     {"ref", ref_name(ref)},    {"orientation", "lower-is-better"}};
  }
};

}  // namespace taxoscore
