#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/complement.hpp>
#include <boost/math/policies/policy.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/skew_normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace taxoscore {

/// Boost policy: infinities at the ends of the support instead of exceptions.
using QuietPolicy = boost::math::policies::policy<boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
                                                  boost::math::policies::domain_error<boost::math::policies::ignore_error>,
                                                  boost::math::policies::evaluation_error<boost::math::policies::ignore_error>>;

/// Generalized Pareto parameters in the (scale, tail index) form:
/// G(y) = 1 - (1 + y/mu)^(-tau), y >= 0. Moments exist below order tau.
struct GpdParams {
  double mu = 1.0;
  double tau = 1.0;
};

inline void validate(const GpdParams& p) {
  if (!(p.mu > 0.0) || !(p.tau > 0.0) || !std::isfinite(p.mu) || !std::isfinite(p.tau)) {
    throw DomainError("GPD parameters must be positive and finite (mu=" + std::to_string(p.mu) +
                      ", tau=" + std::to_string(p.tau) + ")");
  }
}

inline double gpd_pdf(double y, const GpdParams& p) {
  validate(p);
  if (!(y >= 0.0)) throw DomainError("gpd_pdf: y must be >= 0");
  return (p.tau / p.mu) * std::exp(-(1.0 + p.tau) * std::log1p(y / p.mu));
}

inline double gpd_logpdf(double y, const GpdParams& p) {
  return std::log(p.tau / p.mu) - (1.0 + p.tau) * std::log1p(y / p.mu);
}

/// Survival function 1 - G(y).
inline double gpd_sf(double y, const GpdParams& p) {
  validate(p);
  if (y <= 0.0) return 1.0;
  return std::exp(-p.tau * std::log1p(y / p.mu));
}

inline double gpd_cdf(double y, const GpdParams& p) {
  validate(p);
  if (y <= 0.0) return 0.0;
  return -std::expm1(-p.tau * std::log1p(y / p.mu));
}

inline double gpd_quantile(double q, const GpdParams& p) {
  validate(p);
  if (!(q > 0.0 && q < 1.0)) throw DomainError("gpd_quantile: q must lie in (0, 1)");
  return p.mu * std::expm1(-std::log1p(-q) / p.tau);
}

/// Upper quantile: the y with survival probability s.
inline double gpd_quantile_upper(double s, const GpdParams& p) {
  return p.mu * std::expm1(-std::log(s) / p.tau);
}

inline double gpd_draw(const GpdParams& p, Rng& rng) {
  return gpd_quantile_upper(rng.uniform(), p);
}

inline std::vector<double> gpd_sample(const GpdParams& p, std::size_t n, std::uint64_t seed) {
  validate(p);
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = gpd_draw(p, rng);
  return out;
}

// Forecast distributions. Each exposes cdf, sf, pdf, quantile, quantile_upper,
// support bounds and moment_order (sup of finite absolute moment orders).

class GpdDist {
 public:
  explicit GpdDist(GpdParams p) : p_(p) { validate(p_); }
  GpdDist(double mu, double tau) : GpdDist(GpdParams{mu, tau}) {}

  const GpdParams& params() const noexcept { return p_; }
  double cdf(double y) const { return y <= 0.0 ? 0.0 : -std::expm1(-p_.tau * std::log1p(y / p_.mu)); }
  double sf(double y) const { return y <= 0.0 ? 1.0 : std::exp(-p_.tau * std::log1p(y / p_.mu)); }
  double pdf(double y) const {
    return y < 0.0 ? 0.0 : (p_.tau / p_.mu) * std::exp(-(1.0 + p_.tau) * std::log1p(y / p_.mu));
  }
  double quantile(double q) const { return p_.mu * std::expm1(-std::log1p(-q) / p_.tau); }
  double quantile_upper(double s) const { return gpd_quantile_upper(s, p_); }
  /// dQ/dp written in terms of the survival probability s = 1 - p.
  double quantile_density_upper(double s) const {
    return (p_.mu / p_.tau) * std::exp((-1.0 / p_.tau - 1.0) * std::log(s));
  }
  double lower() const noexcept { return 0.0; }
  double upper() const noexcept { return std::numeric_limits<double>::infinity(); }
  double moment_order() const noexcept { return p_.tau; }
  double draw(Rng& rng) const { return quantile_upper(rng.uniform()); }
  std::string describe() const {
    return "GPD(mu=" + std::to_string(p_.mu) + ", tau=" + std::to_string(p_.tau) + ")";
  }

 private:
  GpdParams p_;
};

class NormalDist {
 public:
  NormalDist(double mean = 0.0, double sd = 1.0) : d_(mean, sd), mean_(mean), sd_(sd) {
    if (!(sd > 0.0)) throw DomainError("normal: sd must be positive");
  }
  double mean() const noexcept { return mean_; }
  double sd() const noexcept { return sd_; }
  double cdf(double z) const { return boost::math::cdf(d_, z); }
  double sf(double z) const { return boost::math::cdf(boost::math::complement(d_, z)); }
  double pdf(double z) const { return boost::math::pdf(d_, z); }
  double quantile(double q) const { return boost::math::quantile(d_, q); }
  double quantile_upper(double s) const {
    return boost::math::quantile(boost::math::complement(d_, s));
  }
  double quantile_density_upper(double s) const { return 1.0 / pdf(quantile_upper(s)); }
  double lower() const noexcept { return -std::numeric_limits<double>::infinity(); }
  double upper() const noexcept { return std::numeric_limits<double>::infinity(); }
  double moment_order() const noexcept { return std::numeric_limits<double>::infinity(); }
  double draw(Rng& rng) const { return mean_ + sd_ * rng.normal(); }
  std::string describe() const {
    return "Normal(" + std::to_string(mean_) + ", " + std::to_string(sd_) + ")";
  }

 private:
  boost::math::normal_distribution<double, QuietPolicy> d_;
  double mean_;
  double sd_;
};

class LognormalDist {
 public:
  LognormalDist(double meanlog = 0.0, double sdlog = 1.0)
      : d_(meanlog, sdlog), meanlog_(meanlog), sdlog_(sdlog) {
    if (!(sdlog > 0.0)) throw DomainError("lognormal: sdlog must be positive");
  }
  double meanlog() const noexcept { return meanlog_; }
  double sdlog() const noexcept { return sdlog_; }
  double cdf(double z) const { return z <= 0.0 ? 0.0 : boost::math::cdf(d_, z); }
  double sf(double z) const {
    return z <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(d_, z));
  }
  double pdf(double z) const { return z <= 0.0 ? 0.0 : boost::math::pdf(d_, z); }
  double quantile(double q) const { return boost::math::quantile(d_, q); }
  double quantile_upper(double s) const {
    return boost::math::quantile(boost::math::complement(d_, s));
  }
  double quantile_density_upper(double s) const { return 1.0 / pdf(quantile_upper(s)); }
  double lower() const noexcept { return 0.0; }
  double upper() const noexcept { return std::numeric_limits<double>::infinity(); }
  double moment_order() const noexcept { return std::numeric_limits<double>::infinity(); }
  double draw(Rng& rng) const { return std::exp(meanlog_ + sdlog_ * rng.normal()); }
  std::string describe() const {
    return "Lognormal(" + std::to_string(meanlog_) + ", " + std::to_string(sdlog_) + ")";
  }

 private:
  boost::math::lognormal_distribution<double, QuietPolicy> d_;
  double meanlog_;
  double sdlog_;
};

namespace detail {

inline double log_std_normal_cdf(double x) {
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::sqrt(2.0)));
  const double x2 = x * x;
  return -0.5 * x2 - 0.9189385332046727 - std::log(-x) + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

inline double skew_normal_logpdf_std(double z, double a) {
  return 0.6931471805599453 - 0.5 * z * z - 0.9189385332046727 + log_std_normal_cdf(a * z);
}

/// log P(Z > z) for a standard skew normal with shape a, integrating the
/// density relative to its value at z; accurate far into either tail.
inline double skew_normal_log_tail(double z, double a) {
  static thread_local boost::math::quadrature::exp_sinh<double> integrator;
  const double l0 = skew_normal_logpdf_std(z, a);
  const double ratio =
      integrator.integrate([&](double t) { return std::exp(skew_normal_logpdf_std(z + t, a) - l0); });
  return l0 + std::log(ratio);
}

/// Solves log P(Z > x) = log_s for x, bracketing from the guess x0.
inline double skew_normal_tail_quantile(double log_s, double a, double x0) {
  auto f = [&](double x) { return skew_normal_log_tail(x, a) - log_s; };
  double lo = x0 - 1.0, hi = x0 + 1.0;
  while (f(lo) < 0.0) lo -= 2.0 * (hi - lo);
  while (f(hi) > 0.0) {
    lo = hi;
    hi = 2.0 * hi + 1.0;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(x)); ++i) {
    const double lt = skew_normal_log_tail(x, a);
    const double fx = lt - log_s;
    if (fx > 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    // Newton step on the log tail: d/dx log P(Z > x) = -pdf / tail.
    const double nx = x + fx / std::exp(skew_normal_logpdf_std(x, a) - lt);
    x = (nx > lo && nx < hi) ? nx : 0.5 * (lo + hi);
  }
  return x;
}

}  // namespace detail

class SkewNormalDist {
 public:
  SkewNormalDist(double location = 0.0, double scale = 1.0, double shape = 0.0)
      : d_(location, scale, shape), location_(location), scale_(scale), shape_(shape) {
    if (!(scale > 0.0)) throw DomainError("skew normal: scale must be positive");
  }
  // Boost's cdf carries ~1e-15 absolute error (Owen's T), so tail
  // probabilities below kTailSwitch and their quantiles use the log-scale
  // quadrature in detail.
  double cdf(double z) const {
    const double c = boost::math::cdf(d_, z);
    if (c < kTailSwitch) return std::exp(detail::skew_normal_log_tail((location_ - z) / scale_, -shape_));
    return c;
  }
  double sf(double z) const {
    const double c = boost::math::cdf(boost::math::complement(d_, z));
    if (c < kTailSwitch) return std::exp(detail::skew_normal_log_tail((z - location_) / scale_, shape_));
    return c;
  }
  double pdf(double z) const { return boost::math::pdf(d_, z); }
  double quantile(double q) const {
    if (q > 0.5) return quantile_upper(1.0 - q);
    if (q <= 0.0) return lower();
    if (q < kTailSwitch) {
      const double x0 = (location_ - boost::math::quantile(d_, kTailSwitch)) / scale_;
      return location_ - scale_ * detail::skew_normal_tail_quantile(std::log(q), -shape_, x0);
    }
    return boost::math::quantile(d_, q);
  }
  double quantile_upper(double s) const {
    if (s > 0.5) return quantile(1.0 - s);
    if (s <= 0.0) return upper();
    if (s < kTailSwitch) {
      const double x0 = (boost::math::quantile(boost::math::complement(d_, kTailSwitch)) - location_) / scale_;
      return location_ + scale_ * detail::skew_normal_tail_quantile(std::log(s), shape_, x0);
    }
    return boost::math::quantile(boost::math::complement(d_, s));
  }
  double quantile_density_upper(double s) const { return 1.0 / pdf(quantile_upper(s)); }
  double lower() const noexcept { return -std::numeric_limits<double>::infinity(); }
  double upper() const noexcept { return std::numeric_limits<double>::infinity(); }
  double moment_order() const noexcept { return std::numeric_limits<double>::infinity(); }
  double draw(Rng& rng) const {
    // Azzalini's representation: delta*|U0| + sqrt(1-delta^2)*U1.
    const double delta = shape_ / std::sqrt(1.0 + shape_ * shape_);
    const double u0 = std::abs(rng.normal());
    const double u1 = rng.normal();
    return location_ + scale_ * (delta * u0 + std::sqrt(1.0 - delta * delta) * u1);
  }
  std::string describe() const {
    return "SkewNormal(" + std::to_string(location_) + ", " + std::to_string(scale_) + ", " +
           std::to_string(shape_) + ")";
  }

 private:
  static constexpr double kTailSwitch = 1e-10;
  boost::math::skew_normal_distribution<double, QuietPolicy> d_;
  double location_;
  double scale_;
  double shape_;
};

/// Degenerate forecast concentrated at x.
struct PointMass {
  double x = 0.0;
  double cdf(double z) const { return z >= x ? 1.0 : 0.0; }
  double sf(double z) const { return z >= x ? 0.0 : 1.0; }
  double quantile(double) const { return x; }
  double quantile_upper(double) const { return x; }
  double lower() const noexcept { return x; }
  double upper() const noexcept { return x; }
  double moment_order() const noexcept { return std::numeric_limits<double>::infinity(); }
  double draw(Rng&) const { return x; }
  std::string describe() const { return "PointMass(" + std::to_string(x) + ")"; }
};

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}
inline double std_normal_quantile(double q) {
  static const boost::math::normal_distribution<double, QuietPolicy> n01;
  return boost::math::quantile(n01, q);
}

}  // namespace taxoscore
