#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "taxoscore/classifications.hpp"
#include "taxoscore/data_model.hpp"

using namespace taxoscore;
namespace fs = std::filesystem;

namespace {

std::string write_tmp(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("taxoscore_dm_" + name);
  std::ofstream(p) << text;
  return p.string();
}

const char* kHeader = "event_id,loss_amount,accident_year,case_type,naics_sector,emp_band,rev_band,us_hq,contagion\n";

Dataset losses(std::vector<double> v) {
  Dataset d;
  for (std::size_t i = 0; i < v.size(); ++i) {
    LossEvent e;
    e.id = "e" + std::to_string(i);
    e.loss = v[i];
    e.year = 2010;
    e.risk_type = "Cyber Extortion";
    d.events.push_back(e);
  }
  return d;
}

}  // namespace

TEST(Load, WellFormedRows) {
  const auto p = write_tmp("ok.csv", std::string(kHeader) +
                                         "a,1.5,2010,Cyber Extortion,Finance,1,2,1,0\n"
                                         "b,2.5,2009,IT - Processing Errors,Retail,0,0,0,2\n"
                                         "c,-5.0,2011,Data - Malicious Breach,Health,2,1,1,1\n");
  const auto r = load_events(p);
  ASSERT_EQ(r.dataset.size(), 3u);
  EXPECT_TRUE(r.rejections.empty());
  // sorted by year, input order kept within a year
  EXPECT_EQ(r.dataset.events[0].id, "b");
  EXPECT_EQ(r.dataset.events[1].id, "a");
  EXPECT_EQ(r.dataset.events[1].employees_band, 1);
  EXPECT_TRUE(r.dataset.events[1].us_flag);
  EXPECT_EQ(r.dataset.events[1].contagion, Contagion::RelatedSameCompany);
  // the negative loss survives loading and is removed by the filter
  EXPECT_EQ(r.dataset.events[2].loss, -5.0);
  EXPECT_EQ(filter_positive_losses(r.dataset).size(), 2u);
}

TEST(Load, RowRejections) {
  const auto p = write_tmp("bad.csv", std::string(kHeader) +
                                          "a,xx,2010,Cyber Extortion,Finance,1,2,1,0\n"
                                          "b,1.0,20x0,Cyber Extortion,Finance,1,2,1,0\n"
                                          "c,1.0,2010,Alien Invasion,Finance,1,2,1,0\n"
                                          "d,1.0,2010,Cyber Extortion,Finance,1,2,7,0\n"
                                          "e,1.0,2010,Cyber Extortion\n"
                                          "f,1.0,2010,Cyber Extortion,Finance,1,2,1,0\n");
  const auto r = load_events(p);
  ASSERT_EQ(r.dataset.size(), 1u);
  ASSERT_EQ(r.rejections.size(), 5u);
  EXPECT_EQ(r.rejections[0].row, 1u);
  EXPECT_EQ(r.rejections[0].reason, "unparseable loss");
  EXPECT_EQ(r.rejections[1].reason, "unparseable year");
  EXPECT_EQ(r.rejections[2].reason, "unknown category");
  EXPECT_EQ(r.rejections[3].reason, "invalid us flag");
  EXPECT_EQ(r.rejections[4].row, 5u);
  std::ostringstream log;
  write_rejections(log, r.rejections);
  EXPECT_EQ(log.str().substr(0, 11), "row,reason\n");
}

TEST(Load, MissingMandatoryColumnThrows) {
  const auto p = write_tmp("nocol.csv", "event_id,loss_amount,case_type\na,1.0,Cyber Extortion\n");
  EXPECT_THROW(load_events(p), SchemaError);
}

TEST(Load, OptionalColumnsDefault) {
  const auto p = write_tmp("min.csv", "loss_amount;accident_year;case_type\n3.0;2012;Cyber Extortion\n");
  const auto r = load_events(p, {}, ';');
  ASSERT_EQ(r.dataset.size(), 1u);
  const auto& e = r.dataset.events[0];
  EXPECT_EQ(e.id, "row1");
  EXPECT_EQ(e.sector, "Unknown");
  EXPECT_EQ(e.employees_band, 0);
  EXPECT_FALSE(e.us_flag);
  EXPECT_EQ(e.contagion, Contagion::OneShot);
}

TEST(Load, SpanRejectsOtherYears) {
  const auto p = write_tmp("span.csv", std::string(kHeader) +
                                           "a,1,2007,Cyber Extortion,F,0,0,0,0\n"
                                           "b,1,2008,Cyber Extortion,F,0,0,0,0\n");
  const auto r = load_events(p, {}, ',', std::make_pair(2008, 2021));
  EXPECT_EQ(r.dataset.size(), 1u);
  EXPECT_EQ(r.rejections.at(0).reason, "year outside span");
}

TEST(Load, WriteReadRoundTrip) {
  SynthConfig cfg;
  cfg.n_per_year = 20;
  cfg.first_year = 2010;
  cfg.last_year = 2012;
  const Dataset d = synth_generate(cfg);
  std::ostringstream os;
  write_events(os, d);
  const auto r = load_events(write_tmp("rt.csv", os.str()));
  ASSERT_EQ(r.dataset.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(r.dataset.events[i].id, d.events[i].id);
    EXPECT_EQ(r.dataset.events[i].loss, d.events[i].loss);
    EXPECT_EQ(r.dataset.events[i].sector, d.events[i].sector);
    EXPECT_EQ(r.dataset.events[i].contagion, d.events[i].contagion);
  }
}

TEST(Filter, Examples) {
  const auto f = filter_positive_losses(losses({1.0, 0.0, -2.0, 3.5}));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f.events[0].loss, 1.0);
  EXPECT_EQ(f.events[1].loss, 3.5);
  EXPECT_EQ(filter_positive_losses(losses({1, 2, 3})).size(), 3u);
  EXPECT_TRUE(filter_positive_losses(Dataset{}).empty());
}

TEST(Filter, Idempotent) {
  const auto once = filter_positive_losses(losses({4, -1, 0, 2, 0.5, -3}));
  const auto twice = filter_positive_losses(once);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.events[i].id, twice.events[i].id);
}

TEST(Synth, DeterministicInSeed) {
  SynthConfig cfg;
  cfg.n_per_year = 50;
  std::ostringstream a, b;
  write_events(a, synth_generate(cfg));
  write_events(b, synth_generate(cfg));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Synth, DistinctSeedsDiffer) {
  SynthConfig cfg;
  cfg.n_per_year = 5;
  cfg.first_year = cfg.last_year = 2010;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    cfg.seed = s;
    const auto x = synth_generate(cfg);
    cfg.seed = s + 1000;
    const auto y = synth_generate(cfg);
    bool differ = false;
    for (std::size_t i = 0; i < x.size(); ++i) differ = differ || x.events[i].loss != y.events[i].loss;
    EXPECT_TRUE(differ) << "seed " << s;
  }
}

TEST(Synth, CountsAndPositivity) {
  SynthConfig cfg;
  cfg.n_per_year = 300;
  cfg.first_year = 2008;
  cfg.last_year = 2012;
  const auto d = synth_generate(cfg);
  for (const auto& [y, n] : d.counts_per_year()) EXPECT_EQ(n, 300u) << y;
  for (const auto& e : d.events) EXPECT_GT(e.loss, 0.0);
}

TEST(Synth, TailFractionAboveImpliedThreshold) {
  SynthConfig cfg;
  cfg.n_per_year = 10000;
  cfg.first_year = cfg.last_year = 2015;
  cfg.tail_fraction = 0.5;
  const auto d = synth_generate(cfg);
  const double u = cfg.implied_threshold();
  std::size_t above = 0;
  for (const auto& e : d.events) above += e.loss > u;
  EXPECT_NEAR(static_cast<double>(above) / 10000.0, 0.5, 0.02);
}

TEST(Synth, HillEstimateOfTailIndex) {
  SynthConfig cfg;
  cfg.n_per_year = 50000;
  cfg.first_year = cfg.last_year = 2015;
  cfg.tail_fraction = 0.5;
  cfg.default_tail = {1.0, 0.8};
  const auto d = synth_generate(cfg);
  const double u = cfg.implied_threshold();
  // u + Lomax(mu, tau) shifted by mu - u is exactly Pareto(mu, tau) above mu
  std::vector<double> x;
  for (const auto& e : d.events) {
    if (e.loss > u) x.push_back(e.loss - u + cfg.default_tail.mu);
  }
  std::sort(x.begin(), x.end(), std::greater<>());
  const std::size_t k = d.size() / 10;
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(x[i] / x[k]);
  EXPECT_NEAR(static_cast<double>(k) / s, 0.8, 0.15);
}

TEST(Synth, InvalidConfigRejected) {
  SynthConfig cfg;
  cfg.tail_fraction = 1.0;
  EXPECT_THROW(synth_generate(cfg), ConfigError);
  cfg = {};
  cfg.tail_params["Cyber Extortion"] = {1.0, -1.0};
  EXPECT_THROW(synth_generate(cfg), ConfigError);
  cfg = {};
  cfg.tail_params["Nope"] = {1.0, 1.0};
  EXPECT_THROW(synth_generate(cfg), ConfigError);
}

TEST(Stats, Examples) {
  const auto one = summarize("g", {2.0});
  EXPECT_EQ(one.n, 1u);
  EXPECT_EQ(one.mean, 2.0);
  EXPECT_EQ(one.median, 2.0);
  EXPECT_FALSE(one.st_dev);
  EXPECT_FALSE(one.skew);
  EXPECT_FALSE(one.kurt);
  const auto sym = summarize("g", {1.0, 2.0, 3.0});
  EXPECT_NEAR(*sym.skew, 0.0, 1e-15);
  EXPECT_NEAR(*sym.st_dev, 1.0, 1e-15);
}

TEST(Stats, BruteForceMoments) {
  const std::vector<double> x{0.3, 1.7, 2.2, 9.0, 4.4, 0.1};
  const double n = 6;
  double m = 0;
  for (double v : x) m += v / n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) m2 += std::pow(v - m, 2), m3 += std::pow(v - m, 3), m4 += std::pow(v - m, 4);
  const double s = std::sqrt(m2 / (n - 1));
  const auto r = summarize("g", x);
  EXPECT_NEAR(r.mean, m, 1e-14);
  EXPECT_NEAR(r.median, 0.5 * (1.7 + 2.2), 1e-14);
  EXPECT_NEAR(*r.st_dev, s, 1e-13);
  EXPECT_NEAR(*r.skew, m3 / n / (s * s * s), 1e-12);
  EXPECT_NEAR(*r.kurt, m4 / n / std::pow(s, 4) - 3.0, 1e-12);
}

TEST(Stats, LognormalMedian) {
  Rng rng(77);
  std::vector<double> x(100000);
  for (auto& v : x) v = std::exp(rng.normal());
  EXPECT_NEAR(summarize("g", x).median, 1.0, 0.01);
}

TEST(Stats, GroupSizesSumToDataset) {
  SynthConfig cfg;
  cfg.n_per_year = 200;
  cfg.first_year = cfg.last_year = 2010;
  const auto d = synth_generate(cfg);
  const auto rows = descriptive_stats(d, static_classifier(SchemeKind::Advisen).apply(d));
  std::size_t total = 0;
  for (const auto& r : rows) total += r.n;
  EXPECT_EQ(total, d.size());
  EXPECT_EQ(rows.size(), advisen_types().size());
}
