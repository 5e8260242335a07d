#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "data_model.hpp"
#include "distributions.hpp"
#include "error.hpp"
#include "evt_gpd.hpp"
#include "log.hpp"
#include "spline.hpp"

namespace taxoscore {

/// GPD: (log mu, log tau) links on exceedances. Lognormal: identity link for
/// the log-location and log link for the log-scale, on losses.
enum class Family { GPD, Lognormal };

inline const char* family_name(Family f) { return f == Family::GPD ? "GPD" : "Lognormal"; }

inline Family family_from_name(const std::string& s) {
  if (s == "GPD") return Family::GPD;
  if (s == "Lognormal") return Family::Lognormal;
  throw ConfigError("unknown family '" + s + "'");
}

struct TimeSplineSpec {
  int n_knots = 0;
  std::vector<double> penalty_grid{0.1, 10.0, 1000.0};
};

struct CovariateSpec {
  bool scheme = true;
  bool sector = true;
  bool employees_band = true;
  bool revenue_band = true;
  bool us_flag = true;
  bool contagion = true;
  TimeSplineSpec time_spline;
  std::vector<int> knot_grid{0, 3, 4, 5};

  /// Risk-type dummies only, no time term.
  static CovariateSpec scheme_only() {
    CovariateSpec s;
    s.sector = s.employees_band = s.revenue_band = s.us_flag = s.contagion = false;
    s.knot_grid = {0};
    return s;
  }
};

struct Factor {
  std::string name;
  std::vector<std::string> levels;  // levels[0] is the reference
};

/// Maps an event (and its scheme label) to a design row.
class DesignEncoder {
 public:
  std::vector<Factor> factors;
  std::vector<std::string> columns;  // candidate columns, intercept first
  std::vector<char> keep;

  static std::string value(const std::string& factor, const LossEvent& e, const std::string& label) {
    if (factor == "scheme") return label;
    if (factor == "sector") return e.sector;
    if (factor == "emp_band") return std::to_string(e.employees_band);
    if (factor == "rev_band") return std::to_string(e.revenue_band);
    if (factor == "us_flag") return e.us_flag ? "1" : "0";
    if (factor == "contagion") return std::to_string(static_cast<int>(e.contagion));
    throw ConfigError("unknown factor '" + factor + "'");
  }

  std::size_t n_kept() const {
    return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
  }

  std::vector<std::string> kept_names() const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (keep[j]) out.push_back(columns[j]);
    }
    return out;
  }

  /// Unseen levels fall back to the reference level and are reported in `warnings`.
  Eigen::RowVectorXd encode(const LossEvent& e, const std::string& label,
                            std::vector<std::string>* warnings = nullptr) const {
    Eigen::RowVectorXd full = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(columns.size()));
    full[0] = 1.0;
    std::size_t col = 1;
    for (const auto& f : factors) {
      const std::string v = value(f.name, e, label);
      const auto it = std::find(f.levels.begin(), f.levels.end(), v);
      if (it == f.levels.end()) {
        if (warnings) warnings->push_back("unseen level '" + v + "' of " + f.name + " mapped to reference");
      } else if (it != f.levels.begin()) {
        full[static_cast<Eigen::Index>(col + static_cast<std::size_t>(it - f.levels.begin()) - 1)] = 1.0;
      }
      col += f.levels.size() - 1;
    }
    Eigen::RowVectorXd out(static_cast<Eigen::Index>(n_kept()));
    Eigen::Index k = 0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (keep[j]) out[k++] = full[static_cast<Eigen::Index>(j)];
    }
    return out;
  }
};

struct Design {
  DesignEncoder encoder;
  Eigen::MatrixXd X;  // kept columns
  std::vector<double> time;
  std::vector<std::size_t> ridge_columns;  // kept-column indices with < 5 nonzero rows
  std::vector<std::string> warnings;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
};

namespace detail {
inline bool numeric_less(const std::string& a, const std::string& b) {
  const auto ia = csv::parse_int(a), ib = csv::parse_int(b);
  if (ia && ib) return *ia < *ib;
  return a < b;
}
}  // namespace detail

/// Builds the reference-level dummy design for `events`. `labels[i]` is the
/// scheme category of events[i] (ignored when empty); `vocabulary` fixes the
/// scheme level order. Categories without events and collinear columns are
/// dropped (first-kept order) with a warning.
inline Design build_design(const std::vector<LossEvent>& events, const std::vector<std::string>& labels,
                           const std::vector<std::string>& vocabulary, const CovariateSpec& spec) {
  const bool use_scheme = spec.scheme && !labels.empty();
  if (use_scheme && labels.size() != events.size()) {
    throw AlignmentError("build_design: labels and events differ in length");
  }
  Design d;
  auto& enc = d.encoder;
  std::vector<std::string> names;
  if (use_scheme) names.push_back("scheme");
  if (spec.sector) names.push_back("sector");
  if (spec.employees_band) names.push_back("emp_band");
  if (spec.revenue_band) names.push_back("rev_band");
  if (spec.us_flag) names.push_back("us_flag");
  if (spec.contagion) names.push_back("contagion");
  const std::string none;
  for (const auto& name : names) {
    std::vector<std::string> present;
    for (std::size_t i = 0; i < events.size(); ++i) {
      present.push_back(DesignEncoder::value(name, events[i], use_scheme ? labels[i] : none));
    }
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    Factor f{name, {}};
    if (name == "scheme") {
      for (const auto& c : vocabulary) {
        if (std::binary_search(present.begin(), present.end(), c)) {
          f.levels.push_back(c);
        } else {
          d.warnings.push_back("category '" + c + "' has no events; column dropped");
        }
      }
      for (const auto& p : present) {
        if (std::find(vocabulary.begin(), vocabulary.end(), p) == vocabulary.end()) {
          throw VocabularyError("label '" + p + "' not in scheme vocabulary");
        }
      }
    } else {
      std::sort(present.begin(), present.end(), detail::numeric_less);
      f.levels = present;
    }
    if (f.levels.empty()) continue;
    enc.factors.push_back(std::move(f));
  }
  enc.columns = {"(Intercept)"};
  for (const auto& f : enc.factors) {
    for (std::size_t l = 1; l < f.levels.size(); ++l) enc.columns.push_back(f.name + "[" + f.levels[l] + "]");
  }
  enc.keep.assign(enc.columns.size(), 1);

  const auto n = static_cast<Eigen::Index>(events.size());
  const auto p = static_cast<Eigen::Index>(enc.columns.size());
  Eigen::MatrixXd full(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    full.row(i) = enc.encode(events[static_cast<std::size_t>(i)], use_scheme ? labels[static_cast<std::size_t>(i)] : none);
  }
  // Greedy Gram-Schmidt rank check in column order.
  std::vector<Eigen::VectorXd> basis;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd v = full.col(j);
    const double norm0 = v.squaredNorm();
    for (const auto& q : basis) v -= q.dot(v) * q;
    for (const auto& q : basis) v -= q.dot(v) * q;
    if (norm0 == 0.0 || v.squaredNorm() < 1e-10 * norm0) {
      enc.keep[static_cast<std::size_t>(j)] = 0;
      d.warnings.push_back("column '" + enc.columns[static_cast<std::size_t>(j)] + "' is collinear; dropped");
      continue;
    }
    basis.push_back(v.normalized());
  }
  d.X.resize(n, static_cast<Eigen::Index>(enc.n_kept()));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!enc.keep[static_cast<std::size_t>(j)]) continue;
    d.X.col(k) = full.col(j);
    if (k > 0 && (full.col(j).array() != 0.0).count() < 5) {
      d.ridge_columns.push_back(static_cast<std::size_t>(k));
      d.warnings.push_back("column '" + enc.columns[static_cast<std::size_t>(j)] +
                           "' has fewer than 5 observations; ridge applied");
    }
    ++k;
  }
  d.time.reserve(events.size());
  for (const auto& e : events) d.time.push_back(static_cast<double>(e.year));
  for (const auto& w : d.warnings) log::debug(w);
  return d;
}

struct FittedSeverityModel {
  Family family = Family::GPD;
  double threshold = 0.0;
  DesignEncoder encoder;
  NaturalSpline spline;
  int n_knots = 0;
  Eigen::VectorXd beta_mu, beta_tau;      // covariate coefficients per link
  Eigen::VectorXd spline_mu, spline_tau;  // spline coefficients per link
  double gamma_mu = 0.0, gamma_tau = 0.0;
  double loglik = 0.0;
  double penalized_loglik = 0.0;
  double initial_penalized_loglik = 0.0;
  double edf = 0.0;
  double aic = 0.0;
  double grad_norm = 0.0;
  std::size_t n_obs = 0;
  int iterations = 0;
  std::vector<double> trace;
  std::vector<std::string> warnings;
};

namespace detail {

struct ObsDerivs {
  double ll, g1, g2, h11, h12, h22, f11, f12, f22;
};

inline ObsDerivs family_derivs(Family fam, double y, double e1, double e2) {
  if (fam == Family::GPD) {
    const double mu = std::exp(e1), tau = std::exp(e2);
    const double z = y / mu, l = std::log1p(z), r = z / (1.0 + z);
    return {e2 - e1 - (1.0 + tau) * l,
            -1.0 + (1.0 + tau) * r,
            1.0 - tau * l,
            -(1.0 + tau) * r / (1.0 + z),
            tau * r,
            -tau * l,
            tau / (tau + 2.0),
            -tau / (tau + 1.0),
            1.0};
  }
  const double sigma = std::exp(e2), ly = std::log(y), dd = (ly - e1) / sigma;
  return {-ly - e2 - 0.5 * dd * dd - 0.9189385332046727,
          dd / sigma,
          -1.0 + dd * dd,
          -1.0 / (sigma * sigma),
          -2.0 * dd / sigma,
          -2.0 * dd * dd,
          1.0 / (sigma * sigma),
          0.0,
          2.0};
}

/// Penalized likelihood on theta = (theta_1, theta_2), each over Z = [X | B].
struct Objective {
  Family fam;
  const std::vector<double>& y;
  const Eigen::MatrixXd& Z;
  Eigen::MatrixXd P1, P2;  // quadratic penalties: theta_k' P_k theta_k

  std::size_t dim() const { return static_cast<std::size_t>(Z.cols()); }

  double loglik(const Eigen::VectorXd& th) const {
    const Eigen::Index P = Z.cols();
    const Eigen::VectorXd e1 = Z * th.head(P), e2 = Z * th.tail(P);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      ll += family_derivs(fam, y[static_cast<std::size_t>(i)], e1[i], e2[i]).ll;
    }
    return ll;
  }

  double penalty(const Eigen::VectorXd& th) const {
    const Eigen::Index P = Z.cols();
    return th.head(P).dot(P1 * th.head(P)) + th.tail(P).dot(P2 * th.tail(P));
  }

  double value(const Eigen::VectorXd& th) const { return loglik(th) - penalty(th); }

  /// Gradient plus expected (fisher) and observed negative Hessians of the
  /// penalized objective; unpenalized fisher returned for edf.
  void derivatives(const Eigen::VectorXd& th, Eigen::VectorXd& grad, Eigen::MatrixXd& fisher,
                   Eigen::MatrixXd& observed, Eigen::MatrixXd* fisher_unpen = nullptr) const {
    const Eigen::Index P = Z.cols(), n = Z.rows();
    const Eigen::VectorXd e1 = Z * th.head(P), e2 = Z * th.tail(P);
    Eigen::VectorXd g1(n), g2(n), w11(n), w12(n), w22(n), o11(n), o12(n), o22(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto d = family_derivs(fam, y[static_cast<std::size_t>(i)], e1[i], e2[i]);
      g1[i] = d.g1;
      g2[i] = d.g2;
      w11[i] = d.f11;
      w12[i] = d.f12;
      w22[i] = d.f22;
      o11[i] = -d.h11;
      o12[i] = -d.h12;
      o22[i] = -d.h22;
    }
    grad.resize(2 * P);
    grad.head(P) = Z.transpose() * g1 - 2.0 * P1 * th.head(P);
    grad.tail(P) = Z.transpose() * g2 - 2.0 * P2 * th.tail(P);
    auto weighted = [&](const Eigen::VectorXd& w) -> Eigen::MatrixXd {
      return Z.transpose() * (Z.array().colwise() * w.array()).matrix();
    };
    fisher.resize(2 * P, 2 * P);
    fisher.topLeftCorner(P, P) = weighted(w11);
    fisher.topRightCorner(P, P) = weighted(w12);
    fisher.bottomLeftCorner(P, P) = fisher.topRightCorner(P, P).transpose();
    fisher.bottomRightCorner(P, P) = weighted(w22);
    if (fisher_unpen) *fisher_unpen = fisher;
    fisher.topLeftCorner(P, P) += 2.0 * P1;
    fisher.bottomRightCorner(P, P) += 2.0 * P2;
    observed.resize(2 * P, 2 * P);
    observed.topLeftCorner(P, P) = weighted(o11) + 2.0 * P1;
    observed.topRightCorner(P, P) = weighted(o12);
    observed.bottomLeftCorner(P, P) = observed.topRightCorner(P, P).transpose();
    observed.bottomRightCorner(P, P) = weighted(o22) + 2.0 * P2;
  }
};

}  // namespace detail

namespace detail {

struct Problem {
  Eigen::MatrixXd Z;       // [X | spline basis]
  Eigen::MatrixXd P1, P2;  // ridge on sparse columns plus gamma * spline penalty
};

inline Problem make_problem(const Design& design, const NaturalSpline& spline, double gamma_mu, double gamma_tau,
                            double ridge) {
  const Eigen::Index p = design.X.cols();
  const auto q = static_cast<Eigen::Index>(spline.size());
  const Eigen::Index P = p + q;
  Problem out;
  out.Z.resize(design.X.rows(), P);
  out.Z.leftCols(p) = design.X;
  for (Eigen::Index i = 0; i < design.X.rows() && q > 0; ++i) {
    out.Z.block(i, p, 1, q) = spline.basis(design.time[static_cast<std::size_t>(i)]).transpose();
  }
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(P, P);
  for (auto c : design.ridge_columns) base(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = ridge;
  out.P1 = base;
  out.P2 = base;
  if (q > 0) {
    const Eigen::MatrixXd om = spline.penalty();
    out.P1.bottomRightCorner(q, q) += gamma_mu * om;
    out.P2.bottomRightCorner(q, q) += gamma_tau * om;
  }
  return out;
}

}  // namespace detail

struct FitOptions {
  int max_outer = 200;
  double rel_tol = 1e-6;    // relative penalized-loglik change ending the scoring phase
  double grad_tol = 1e-5;   // max |gradient| / n required at convergence
  double ridge = 1e-4;
  /// Factors entering the log-tau link (intercept and time spline always do);
  /// unset means the full covariate set, as in the log-mu link.
  std::optional<std::vector<std::string>> tau_factors;
};

/// Penalized ML fit for a fixed spline configuration. Fisher scoring with step
/// halving (monotone in the penalized log-likelihood), then Newton polishing.
inline FittedSeverityModel fit_fixed(const std::vector<double>& y, const Design& design, Family family,
                                     int n_knots, double gamma_mu, double gamma_tau,
                                     const FitOptions& opt = {}) {
  const std::size_t n = y.size();
  if (n != design.rows()) throw AlignmentError("fit: response and design rows differ");
  if (n < 10) throw FitError("fit: fewer than 10 observations");
  for (double v : y) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("fit: responses must be positive and finite");
  }
  FittedSeverityModel m;
  m.family = family;
  m.encoder = design.encoder;
  m.n_knots = n_knots;
  m.gamma_mu = gamma_mu;
  m.gamma_tau = gamma_tau;
  m.n_obs = n;
  m.warnings = design.warnings;
  m.spline = NaturalSpline::from_data(design.time, n_knots);

  auto prob = detail::make_problem(design, m.spline, gamma_mu, gamma_tau, opt.ridge);
  const Eigen::MatrixXd& Z = prob.Z;
  const Eigen::Index p = design.X.cols();
  const Eigen::Index P = Z.cols();
  const auto q = P - p;
  detail::Objective obj{family, y, Z, prob.P1, prob.P2};

  Eigen::VectorXd th = Eigen::VectorXd::Zero(2 * P);
  if (family == Family::GPD) {
    try {
      const auto f0 = gpd_fit_mle(y);
      th[0] = std::log(f0.params.mu);
      th[P] = std::log(f0.params.tau);
    } catch (const Error&) {
      std::vector<double> s(y);
      std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n / 2), s.end());
      th[0] = std::log(s[n / 2]);
    }
  } else {
    double mean = 0.0, sq = 0.0;
    for (double v : y) mean += std::log(v);
    mean /= static_cast<double>(n);
    for (double v : y) sq += (std::log(v) - mean) * (std::log(v) - mean);
    th[0] = mean;
    th[P] = 0.5 * std::log(std::max(sq / static_cast<double>(n), 1e-300));
  }

  // Coordinates held at zero: tau-link columns of excluded factors.
  std::vector<Eigen::Index> fixed;
  if (opt.tau_factors) {
    const auto names = design.encoder.kept_names();
    for (std::size_t j = 1; j < names.size(); ++j) {
      const std::string factor = names[j].substr(0, names[j].find('['));
      if (std::find(opt.tau_factors->begin(), opt.tau_factors->end(), factor) == opt.tau_factors->end()) {
        fixed.push_back(P + static_cast<Eigen::Index>(j));
      }
    }
  }
  auto derivatives = [&](const Eigen::VectorXd& at, Eigen::VectorXd& g, Eigen::MatrixXd& f, Eigen::MatrixXd& o,
                         Eigen::MatrixXd* fu) {
    obj.derivatives(at, g, f, o, fu);
    for (auto c : fixed) {
      g[c] = 0.0;
      for (Eigen::MatrixXd* mat : {&f, &o, fu}) {
        if (!mat) continue;
        mat->row(c).setZero();
        mat->col(c).setZero();
      }
      f(c, c) = o(c, c) = 1.0;
    }
  };

  double cur = obj.value(th);
  m.initial_penalized_loglik = cur;
  m.trace.push_back(cur);
  Eigen::VectorXd grad;
  Eigen::MatrixXd fisher, observed, fisher_unpen;
  bool polishing = false;
  int polish_steps = 0;
  const double nn = static_cast<double>(n);
  int it = 0;
  for (; it < opt.max_outer + 50; ++it) {
    derivatives(th, grad, fisher, observed, nullptr);
    const double gn = grad.cwiseAbs().maxCoeff() / nn;
    if (polishing && gn < 1e-10) break;
    Eigen::VectorXd step;
    if (polishing) {
      Eigen::LLT<Eigen::MatrixXd> llt(observed);
      if (llt.info() == Eigen::Success) step = llt.solve(grad);
    }
    if (step.size() == 0) step = fisher.ldlt().solve(grad);
    if (!step.allFinite()) break;
    const double len = step.cwiseAbs().maxCoeff();
    if (len > 3.0) step *= 3.0 / len;
    double t = 1.0, next = cur;
    bool moved = false;
    for (int k = 0; k < 50; ++k) {
      const Eigen::VectorXd cand = th + t * step;
      next = obj.value(cand);
      if (std::isfinite(next) && next >= cur) {
        th = cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      if (polishing) break;
      polishing = true;
      continue;
    }
    const double change = std::abs(next - cur) / (std::abs(cur) + 1.0);
    cur = next;
    m.trace.push_back(cur);
    if (!polishing && (change < opt.rel_tol || it + 1 >= opt.max_outer)) polishing = true;
    if (polishing && ++polish_steps > 50) break;
  }
  m.iterations = it;
  derivatives(th, grad, fisher, observed, &fisher_unpen);
  m.grad_norm = grad.cwiseAbs().maxCoeff() / nn;
  if (!(m.grad_norm < opt.grad_tol) || !th.allFinite()) {
    throw FitError("fit: no convergence (scaled gradient " + std::to_string(m.grad_norm) + ")", m.trace);
  }
  m.beta_mu = th.head(p);
  m.spline_mu = th.segment(p, q);
  m.beta_tau = th.segment(P, p);
  m.spline_tau = th.tail(q);
  m.penalized_loglik = cur;
  m.loglik = obj.loglik(th);
  m.edf = fisher.ldlt().solve(fisher_unpen).trace();
  m.aic = -2.0 * m.loglik + 2.0 * m.edf;
  return m;
}

struct KnotCandidate {
  int n_knots = 0;
  double gamma_mu = 0.0;
  double gamma_tau = 0.0;
  double aic = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct KnotSelection {
  FittedSeverityModel model;
  std::vector<KnotCandidate> path;
};

/// Fits every (knots, gamma_mu, gamma_tau) configuration and keeps the lowest
/// AIC; ties go to the earlier candidate. Configurations whose spline reduces
/// to one already tried are skipped.
inline KnotSelection select_knots_aic(const std::vector<double>& y, const Design& design, Family family,
                                      const std::vector<int>& knot_grid,
                                      const std::vector<double>& penalty_grid, const FitOptions& opt = {}) {
  if (knot_grid.empty()) throw DomainError("select_knots_aic: empty knot grid");
  KnotSelection sel;
  std::optional<FittedSeverityModel> best;
  std::vector<std::vector<double>> seen;
  std::string last_error;
  std::vector<double> last_trace;
  for (int k : knot_grid) {
    const auto sp = NaturalSpline::from_data(design.time, k);
    std::vector<double> sig = sp.knots();
    sig.push_back(static_cast<double>(sp.size()));
    if (std::find(seen.begin(), seen.end(), sig) != seen.end()) continue;
    seen.push_back(sig);
    std::vector<std::pair<double, double>> gammas;
    if (sp.size() >= 2 && !penalty_grid.empty()) {
      for (double gm : penalty_grid) {
        for (double gt : penalty_grid) gammas.emplace_back(gm, gt);
      }
    } else {
      gammas.emplace_back(0.0, 0.0);
    }
    for (const auto& [gm, gt] : gammas) {
      KnotCandidate c{k, gm, gt, std::numeric_limits<double>::quiet_NaN(), {}};
      try {
        auto m = fit_fixed(y, design, family, k, gm, gt, opt);
        c.aic = m.aic;
        if (!best || m.aic < best->aic) best = std::move(m);
      } catch (const FitError& e) {
        c.error = e.what();
        last_error = e.what();
        last_trace = e.trace();
      }
      sel.path.push_back(c);
    }
  }
  if (!best) throw FitError("select_knots_aic: every configuration failed: " + last_error, last_trace);
  sel.model = std::move(*best);
  return sel;
}

/// GPD-GAMLSS on exceedances with knots and penalties chosen by AIC.
inline FittedSeverityModel fit(const std::vector<double>& exceedances, const Design& design,
                               const CovariateSpec& spec, double threshold = 0.0, const FitOptions& opt = {}) {
  auto m = select_knots_aic(exceedances, design, Family::GPD, spec.knot_grid, spec.time_spline.penalty_grid, opt)
               .model;
  m.threshold = threshold;
  return m;
}

/// Lognormal location/scale regression of the losses themselves.
inline FittedSeverityModel fit_lognormal(const std::vector<double>& losses, const Design& design,
                                         const CovariateSpec& spec, const FitOptions& opt = {}) {
  return select_knots_aic(losses, design, Family::Lognormal, spec.knot_grid, spec.time_spline.penalty_grid, opt)
      .model;
}

struct PredictedParams {
  double p1 = 0.0;  // GPD: mu. Lognormal: meanlog
  double p2 = 0.0;  // GPD: tau. Lognormal: sdlog
  bool fallback = false;  // an unseen level was mapped to the reference
};

inline PredictedParams predict_params(const FittedSeverityModel& m, const LossEvent& e, const std::string& label,
                                      std::vector<std::string>* warnings = nullptr) {
  std::vector<std::string> local;
  const Eigen::RowVectorXd x = m.encoder.encode(e, label, &local);
  double e1 = x.dot(m.beta_mu), e2 = x.dot(m.beta_tau);
  if (!m.spline.empty()) {
    const Eigen::VectorXd b = m.spline.basis(static_cast<double>(e.year));
    e1 += b.dot(m.spline_mu);
    e2 += b.dot(m.spline_tau);
  }
  PredictedParams out;
  out.p1 = m.family == Family::GPD ? std::exp(e1) : e1;
  out.p2 = std::exp(e2);
  out.fallback = !local.empty();
  if (warnings) warnings->insert(warnings->end(), local.begin(), local.end());
  return out;
}

/// Fitted cdf of `y` (an exceedance for GPD, a loss for lognormal).
inline double model_cdf(const FittedSeverityModel& m, const PredictedParams& p, double y) {
  if (m.family == Family::GPD) return GpdDist(p.p1, p.p2).cdf(y);
  return LognormalDist(p.p1, p.p2).cdf(y);
}

inline constexpr double kResidualClamp = 1e-12;

/// Normalized residual Phi^-1(G(y)), with G clamped into [1e-12, 1 - 1e-12].
inline double normalized_residual(double g) {
  return std_normal_quantile(std::clamp(g, kResidualClamp, 1.0 - kResidualClamp));
}

inline std::vector<double> residuals(const FittedSeverityModel& m, const std::vector<LossEvent>& events,
                                     const std::vector<std::string>& labels, const std::vector<double>& y) {
  if (events.size() != y.size() || (!labels.empty() && labels.size() != y.size())) {
    throw AlignmentError("residuals: inputs differ in length");
  }
  static const std::string none;
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto p = predict_params(m, events[i], labels.empty() ? none : labels[i]);
    r[i] = normalized_residual(model_cdf(m, p, y[i]));
  }
  return r;
}

// JSON ---------------------------------------------------------------------------

inline nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}
inline Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void to_json(nlohmann::json& j, const FittedSeverityModel& m) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : m.encoder.factors) factors.push_back({{"name", f.name}, {"levels", f.levels}});
  std::vector<int> keep(m.encoder.keep.begin(), m.encoder.keep.end());
  j = nlohmann::json{
      {"family", family_name(m.family)},
      {"threshold", m.threshold},
      {"design", {{"factors", factors}, {"columns", m.encoder.columns}, {"keep", keep}}},
      {"spline",
       {{"n_knots", m.n_knots},
        {"t_min", m.spline.t_min()},
        {"t_span", m.spline.t_span()},
        {"knots", m.spline.knots()},
        {"linear", m.spline.linear()}}},
      {"beta_mu", vec_json(m.beta_mu)},
      {"beta_tau", vec_json(m.beta_tau)},
      {"spline_mu", vec_json(m.spline_mu)},
      {"spline_tau", vec_json(m.spline_tau)},
      {"gamma_mu", m.gamma_mu},
      {"gamma_tau", m.gamma_tau},
      {"loglik", m.loglik},
      {"penalized_loglik", m.penalized_loglik},
      {"edf", m.edf},
      {"aic", m.aic},
      {"n_obs", m.n_obs},
      {"warnings", m.warnings},
  };
}

inline void from_json(const nlohmann::json& j, FittedSeverityModel& m) {
  m.family = family_from_name(j.at("family").get<std::string>());
  m.threshold = j.at("threshold").get<double>();
  m.encoder = {};
  for (const auto& f : j.at("design").at("factors")) {
    m.encoder.factors.push_back({f.at("name").get<std::string>(), f.at("levels").get<std::vector<std::string>>()});
  }
  m.encoder.columns = j.at("design").at("columns").get<std::vector<std::string>>();
  for (int k : j.at("design").at("keep").get<std::vector<int>>()) m.encoder.keep.push_back(static_cast<char>(k));
  const auto& s = j.at("spline");
  m.n_knots = s.at("n_knots").get<int>();
  m.spline = NaturalSpline::from_knots(s.at("t_min").get<double>(), s.at("t_span").get<double>(),
                                       s.at("knots").get<std::vector<double>>(), s.at("linear").get<bool>());
  m.beta_mu = json_vec(j.at("beta_mu"));
  m.beta_tau = json_vec(j.at("beta_tau"));
  m.spline_mu = json_vec(j.at("spline_mu"));
  m.spline_tau = json_vec(j.at("spline_tau"));
  m.gamma_mu = j.at("gamma_mu").get<double>();
  m.gamma_tau = j.at("gamma_tau").get<double>();
  m.loglik = j.at("loglik").get<double>();
  m.penalized_loglik = j.at("penalized_loglik").get<double>();
  m.edf = j.at("edf").get<double>();
  m.aic = j.at("aic").get<double>();
  m.n_obs = j.at("n_obs").get<std::size_t>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
}

}  // namespace taxoscore
