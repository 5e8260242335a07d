#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace taxoscore {

/// Natural cubic spline in a rescaled time s = (t - t_min) / t_span, without the
/// constant term: columns are s and the K-2 truncated-power natural basis
/// functions. The spline is linear beyond the boundary knots, which is also
/// how it extrapolates to forecast years.
class NaturalSpline {
 public:
  NaturalSpline() = default;

  /// Knots at equally spaced quantiles of `t` (boundary knots at the range
  /// ends), deduplicated. Fewer than 3 distinct knots leaves only the linear
  /// column; n_knots == 0 or a constant `t` gives an empty basis.
  static NaturalSpline from_data(const std::vector<double>& t, int n_knots) {
    NaturalSpline sp;
    if (n_knots <= 0 || t.empty()) return sp;
    const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
    if (!(*hi > *lo)) return sp;
    sp.t_min_ = *lo;
    sp.t_span_ = *hi - *lo;
    sp.linear_ = true;
    if (n_knots >= 3) {
      std::vector<double> s(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) s[i] = sp.scale(t[i]);
      std::sort(s.begin(), s.end());
      for (int k = 0; k < n_knots; ++k) {
        const double pos = static_cast<double>(k) / (n_knots - 1) * static_cast<double>(s.size() - 1);
        const auto i0 = static_cast<std::size_t>(std::floor(pos));
        const std::size_t i1 = std::min(i0 + 1, s.size() - 1);
        const double v = s[i0] + (pos - static_cast<double>(i0)) * (s[i1] - s[i0]);
        if (sp.knots_.empty() || v > sp.knots_.back() + 1e-9) sp.knots_.push_back(v);
      }
      if (sp.knots_.size() < 3) sp.knots_.clear();
    }
    return sp;
  }

  static NaturalSpline from_knots(double t_min, double t_span, std::vector<double> knots, bool linear) {
    NaturalSpline sp;
    sp.t_min_ = t_min;
    sp.t_span_ = t_span;
    sp.knots_ = std::move(knots);
    sp.linear_ = linear;
    return sp;
  }

  std::size_t size() const noexcept {
    if (!linear_) return 0;
    return knots_.size() >= 3 ? knots_.size() - 1 : 1;
  }
  bool empty() const noexcept { return size() == 0; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  double t_min() const noexcept { return t_min_; }
  double t_span() const noexcept { return t_span_; }
  bool linear() const noexcept { return linear_; }
  double scale(double t) const { return (t - t_min_) / t_span_; }

  Eigen::VectorXd basis(double t) const {
    Eigen::VectorXd b(size());
    if (empty()) return b;
    const double s = scale(t);
    b[0] = s;
    const std::size_t K = knots_.size();
    if (K < 3) return b;
    const double dlast = d(K - 2, s);
    for (std::size_t k = 0; k + 2 < K; ++k) b[k + 1] = d(k, s) - dlast;
    return b;
  }

  /// Second derivatives of the basis columns with respect to s.
  Eigen::VectorXd basis_d2(double t) const { return basis_d2_s(scale(t)); }

  /// Exact penalty matrix: c' Omega c = integral of h''(s)^2 ds. h'' is
  /// piecewise linear, so Simpson's rule on each knot interval is exact.
  Eigen::MatrixXd penalty() const {
    const std::size_t q = size();
    Eigen::MatrixXd om = Eigen::MatrixXd::Zero(q, q);
    if (knots_.size() < 3) return om;
    for (std::size_t j = 0; j + 1 < knots_.size(); ++j) {
      const double a = knots_[j], b = knots_[j + 1], h = b - a;
      const Eigen::VectorXd fa = basis_d2_s(a), fb = basis_d2_s(b), fm = basis_d2_s(0.5 * (a + b));
      om += (h / 6.0) * (fa * fa.transpose() + 4.0 * fm * fm.transpose() + fb * fb.transpose());
    }
    return om;
  }

 private:
  double d(std::size_t k, double s) const {
    const double kk = knots_[k], kl = knots_.back();
    auto cube = [](double x) { return x > 0.0 ? x * x * x : 0.0; };
    return (cube(s - kk) - cube(s - kl)) / (kl - kk);
  }
  double d2(std::size_t k, double s) const {
    const double kk = knots_[k], kl = knots_.back();
    auto pos = [](double x) { return x > 0.0 ? x : 0.0; };
    return 6.0 * (pos(s - kk) - pos(s - kl)) / (kl - kk);
  }
  Eigen::VectorXd basis_d2_s(double s) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(size());
    const std::size_t K = knots_.size();
    if (K < 3) return b;
    const double dlast = d2(K - 2, s);
    for (std::size_t k = 0; k + 2 < K; ++k) b[k + 1] = d2(k, s) - dlast;
    return b;
  }

  double t_min_ = 0.0;
  double t_span_ = 1.0;
  std::vector<double> knots_;
  bool linear_ = false;
};

}  // namespace taxoscore
