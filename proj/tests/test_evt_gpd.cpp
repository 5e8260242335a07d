#include <gtest/gtest.h>

#include <cmath>

#include "taxoscore/data_model.hpp"
#include "taxoscore/evt_gpd.hpp"

using namespace taxoscore;

TEST(GpdMle, RecoversUnitTail) {
  const auto y = gpd_sample({1.0, 1.0}, 50000, 101);
  const auto f = gpd_fit_mle(y);
  EXPECT_GE(f.params.tau, 0.95);
  EXPECT_LE(f.params.tau, 1.05);
  EXPECT_NEAR(f.params.mu, 1.0, 0.06);
  EXPECT_GT(f.se_tau, 0.0);
}

TEST(GpdMle, RecoversLightTail) {
  const auto y = gpd_sample({3.0, 0.6}, 50000, 202);
  const auto f = gpd_fit_mle(y);
  EXPECT_GE(f.params.tau, 0.55);
  EXPECT_LE(f.params.tau, 0.65);
}

TEST(GpdMle, StandardErrorsMatchSpread) {
  // sd of tau-hat over replicates against the reported asymptotic se
  std::vector<double> taus;
  double se = 0.0;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const auto f = gpd_fit_mle(gpd_sample({1.0, 2.0}, 2000, derive_seed(7, s)));
    taus.push_back(f.params.tau);
    se += f.se_tau / 60.0;
  }
  double m = 0.0, v = 0.0;
  for (double t : taus) m += t / 60.0;
  for (double t : taus) v += (t - m) * (t - m) / 59.0;
  EXPECT_NEAR(std::sqrt(v) / se, 1.0, 0.3);
}

TEST(GpdMle, ConstantSampleIsDegenerate) {
  EXPECT_THROW(gpd_fit_mle(std::vector<double>(100, 2.5)), FitError);
  EXPECT_THROW(gpd_fit_mle({1.0, 2.0}), DomainError);
}

TEST(GpdMle, GradientMatchesFiniteDifferences) {
  const auto y = gpd_sample({2.0, 1.5}, 500, 9);
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{0.3, 0.1}, {1.0, 0.8}, {-0.5, -0.3}}) {
    const auto g = detail::gpd_loglik_log(y, a, b, true);
    const double h = 1e-6;
    const double da = (detail::gpd_loglik_log(y, a + h, b, false).value -
                       detail::gpd_loglik_log(y, a - h, b, false).value) / (2 * h);
    const double db = (detail::gpd_loglik_log(y, a, b + h, false).value -
                       detail::gpd_loglik_log(y, a, b - h, false).value) / (2 * h);
    EXPECT_NEAR(g.grad[0], da, 1e-5 * std::max(1.0, std::abs(da)));
    EXPECT_NEAR(g.grad[1], db, 1e-5 * std::max(1.0, std::abs(db)));
  }
}

TEST(GpdDensity, CdfDerivativeMatchesPdf) {
  const GpdParams p{2.0, 0.7};
  for (double y = 1e-3; y < 1e4; y *= 3.0) {
    const double h = y * 1e-5;
    const double d = (gpd_cdf(y + h, p) - gpd_cdf(y - h, p)) / (2 * h);
    EXPECT_NEAR(d / gpd_pdf(y, p), 1.0, 1e-6) << y;
  }
}

TEST(GpdSampling, TruncatedMeanForInfiniteMeanTail) {
  // E[min(X, M)] = int_0^M S(y) dy with S(y) = (1 + y/mu)^-tau
  for (const GpdParams p : {GpdParams{1.0, 0.7}, GpdParams{1.0, 2.5}}) {
    const double M = 1000.0;
    const double exact = p.mu / (1.0 - p.tau) * (std::pow(1.0 + M / p.mu, 1.0 - p.tau) - 1.0);
    const auto x = gpd_sample(p, 400000, 31);
    double m = 0.0, m2 = 0.0;
    for (double v : x) {
      const double c = std::min(v, M);
      m += c;
      m2 += c * c;
    }
    const double n = static_cast<double>(x.size());
    m /= n;
    const double se = std::sqrt((m2 / n - m * m) / n);
    EXPECT_NEAR(m, exact, 4.0 * se) << p.tau;
  }
}

TEST(Threshold, PureGpdPicksLowestQuantile) {
  int lowest = 0;
  const std::vector<double> grid{0.40, 0.50, 0.60, 0.70};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto y = gpd_sample({1.0, 1.5}, 800, derive_seed(55, s));
    const auto r = select_threshold(y, grid, 200, s);
    lowest += r.valid && r.quantile == 0.40;
  }
  EXPECT_GE(lowest, 8);
}

TEST(Threshold, MonotoneInCutoff) {
  SynthConfig cfg;
  cfg.n_per_year = 1500;
  cfg.first_year = cfg.last_year = 2010;
  cfg.tail_fraction = 0.4;
  cfg.default_tail = {2.0, 0.5};
  std::vector<double> x;
  for (const auto& e : synth_generate(cfg).events) x.push_back(e.loss);
  const auto grid = default_threshold_grid();
  double prev = 0.0;
  for (double cut : {0.01, 0.05, 0.2, 0.5}) {
    ThresholdOptions opt;
    opt.p_cutoff = cut;
    const auto r = select_threshold(x, grid, 200, 4, opt);
    if (!r.valid) break;
    EXPECT_GE(r.quantile, prev) << cut;
    prev = r.quantile;
  }
}

TEST(Threshold, NoValidThresholdKeepsPath) {
  // uniform exceedances have a bounded tail the GPD cannot match at n = 4000
  Rng rng(3);
  std::vector<double> x(4000);
  for (auto& v : x) v = 1.0 + rng.uniform();
  const auto r = select_threshold(x, {0.4, 0.5}, 200, 1);
  EXPECT_FALSE(r.valid);
  ASSERT_EQ(r.path.size(), 2u);
  EXPECT_EQ(r.path[0].n_exceed, 2400u);
}

TEST(Threshold, InputValidation) {
  const auto y = gpd_sample({1, 1}, 100, 1);
  EXPECT_THROW(select_threshold(y, {}, 200, 1), DomainError);
  EXPECT_THROW(select_threshold(y, {0.5, 0.4}, 200, 1), DomainError);
  EXPECT_THROW(select_threshold(y, {0.5}, 100, 1), DomainError);
}

TEST(Threshold, JsonRoundTrip) {
  const auto y = gpd_sample({1.0, 1.0}, 300, 8);
  ThresholdOptions opt;
  opt.full_path = true;
  const auto r = select_threshold(y, {0.4, 0.6}, 200, 2, opt);
  const nlohmann::json j = r;
  const auto back = j.get<ThresholdResult>();
  EXPECT_EQ(back.valid, r.valid);
  EXPECT_EQ(back.u, r.u);
  EXPECT_EQ(back.params.tau, r.params.tau);
  ASSERT_EQ(back.path.size(), r.path.size());
  EXPECT_EQ(back.path[1].p_value, r.path[1].p_value);
}

TEST(EmpiricalQuantile, InverseEcdf) {
  const std::vector<double> s{1, 2, 3, 4, 5};
  EXPECT_EQ(empirical_quantile(s, 0.2), 1.0);
  EXPECT_EQ(empirical_quantile(s, 0.21), 2.0);
  EXPECT_EQ(empirical_quantile(s, 0.6), 3.0);
}
