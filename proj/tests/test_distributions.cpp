#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>

#include "taxoscore/distributions.hpp"

using namespace taxoscore;

TEST(Gpd, DensityValues) {
  EXPECT_DOUBLE_EQ(gpd_pdf(0.0, {1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(gpd_pdf(1.0, {1.0, 1.0}), 0.25);
  EXPECT_NEAR(std::exp(gpd_logpdf(2.0, {1.5, 0.7})), gpd_pdf(2.0, {1.5, 0.7}), 1e-15);
  EXPECT_THROW(gpd_pdf(-1.0, {1.0, 1.0}), DomainError);
}

TEST(Gpd, DensityIntegratesToOne) {
  const GpdParams p{2.0, 0.7};
  boost::math::quadrature::tanh_sinh<double> ts;
  // Heavy tail: integrate in the survival variable instead.
  const double body = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double y) { return gpd_pdf(y, p); }, 0.0, 10.0);
  EXPECT_NEAR(body + gpd_sf(10.0, p), 1.0, 1e-6);
  const double tail = ts.integrate([&](double t) { return gpd_pdf(10.0 + t / (1.0 - t), p) / ((1 - t) * (1 - t)); },
                                   0.0, 1.0);
  EXPECT_NEAR(body + tail, 1.0, 1e-6);
}

TEST(Gpd, CdfQuantileValues) {
  EXPECT_DOUBLE_EQ(gpd_cdf(1.0, {1.0, 1.0}), 0.5);
  EXPECT_DOUBLE_EQ(gpd_quantile(0.5, {1.0, 1.0}), 1.0);
  EXPECT_EQ(gpd_cdf(-3.0, {1.0, 1.0}), 0.0);
}

TEST(Gpd, QuantileRoundTrip) {
  Rng r(11);
  for (int i = 0; i < 100; ++i) {
    const GpdParams p{0.05 + 5.0 * r.uniform(), 0.2 + 4.0 * r.uniform()};
    EXPECT_NEAR(gpd_cdf(gpd_quantile(0.99, p), p), 0.99, 1e-10);
    const double s = 1e-12 * (1.0 + r.uniform());
    EXPECT_NEAR(gpd_sf(gpd_quantile_upper(s, p), p) / s, 1.0, 1e-9);
  }
}

TEST(Gpd, InvalidParametersRejected) {
  EXPECT_THROW(GpdDist(0.0, 1.0), DomainError);
  EXPECT_THROW(GpdDist(1.0, -1.0), DomainError);
  EXPECT_THROW(gpd_cdf(1.0, {1.0, std::nan("")}), DomainError);
}

TEST(Gpd, SampleMeanMatchesLomaxMean) {
  const GpdParams p{2.0, 4.0};
  const auto x = gpd_sample(p, 200000, 5);
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  EXPECT_NEAR(m, p.mu / (p.tau - 1.0), 0.01);
}

TEST(Gpd, SampleIsDeterministic) { EXPECT_EQ(gpd_sample({1, 1}, 10, 3), gpd_sample({1, 1}, 10, 3)); }

TEST(Reference, NormalQuantileTails) {
  const NormalDist n;
  EXPECT_NEAR(n.quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(n.quantile_upper(1e-20), -n.quantile(1e-20), 1e-9);
  EXPECT_TRUE(std::isinf(n.quantile(0.0)));
  EXPECT_NEAR(std_normal_quantile(std_normal_cdf(-3.2)), -3.2, 1e-10);
}

TEST(Reference, LognormalMedian) {
  const LognormalDist l(0.0, 1.0);
  EXPECT_NEAR(l.quantile(0.5), 1.0, 1e-14);
  EXPECT_NEAR(l.cdf(l.quantile_upper(1e-30)), 1.0, 1e-15);
  EXPECT_EQ(l.cdf(-1.0), 0.0);
}

TEST(Reference, SkewNormalQuantilesMonotoneInTails) {
  for (double shape : {-3.0, 0.0, 4.0}) {
    const SkewNormalDist d(0.0, 1.0, shape);
    double prev = -INFINITY;
    for (double q = 1e-14; q < 0.5; q *= 10.0) {
      const double x = d.quantile(q);
      EXPECT_TRUE(std::isfinite(x));
      EXPECT_GT(x, prev);
      prev = x;
    }
    prev = INFINITY;
    for (double s = 1e-120; s < 0.5; s *= 1e6) {
      const double x = d.quantile_upper(s);
      ASSERT_TRUE(std::isfinite(x)) << shape << " " << s;
      EXPECT_LT(x, prev) << shape << " " << s;
      prev = x;
    }
    EXPECT_NEAR(d.cdf(d.quantile(0.3)), 0.3, 1e-9);
    EXPECT_NEAR(d.sf(d.quantile_upper(1e-6)), 1e-6, 1e-12);
  }
}

TEST(PointMassDist, StepCdf) {
  const PointMass p{2.0};
  EXPECT_EQ(p.cdf(1.999), 0.0);
  EXPECT_EQ(p.cdf(2.0), 1.0);
  EXPECT_EQ(p.quantile(0.3), 2.0);
}
