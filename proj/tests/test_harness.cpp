#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "taxoscore/harness.hpp"

using namespace taxoscore;

namespace {

SynthConfig small_synth(std::uint64_t seed = 3) {
  SynthConfig s;
  s.n_per_year = 150;
  s.first_year = 2008;
  s.last_year = 2014;
  s.default_tail = {1.0, 1.5};
  s.tail_params["Cyber Extortion"] = {0.5, 2.5};
  s.seed = seed;
  return s;
}

PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.schemes = {SchemeKind::Advisen, SchemeKind::Random, SchemeKind::None};
  c.score_kinds = {ScoreKind::CRPS, ScoreKind::rCRPS};
  c.weights = {WeightKind::Equal, WeightKind::RightTail};
  c.n_boot = 200;
  c.threshold_grid = {0.4, 0.5, 0.6, 0.7};
  c.covariates = CovariateSpec::scheme_only();
  c.seed = 17;
  return c;
}

const PipelineResult& shared_run() {
  static const PipelineResult res = run_pipeline(synth_generate(small_synth()), small_pipeline());
  return res;
}

std::map<std::string, double> by_id(const SchemeWindowResult& r, SeriesKey key) {
  std::map<std::string, double> m;
  const auto& s = r.scores.at(key);
  for (std::size_t i = 0; i < r.ids.size(); ++i) m[r.ids[i]] = s[i];
  return m;
}

}  // namespace

TEST(WindowPlan, RollingFiveYearWindows) {
  const auto p = make_window_plan(2008, 2021);
  ASSERT_EQ(p.windows.size(), 9u);
  EXPECT_EQ(p.windows.front().train_first, 2008);
  EXPECT_EQ(p.windows.front().train_last, 2012);
  EXPECT_EQ(p.windows.front().test_year, 2013);
  EXPECT_EQ(p.windows.back().test_year, 2021);
  for (const auto& w : p.windows) EXPECT_LT(w.train_last, w.test_year);
  EXPECT_EQ(make_window_plan(2008, 2013).windows.size(), 1u);
  EXPECT_EQ(make_window_plan(2008, 2021, 5, 2).windows.size(), 5u);
  EXPECT_THROW(make_window_plan(2008, 2012), ConfigError);
  EXPECT_THROW(make_window_plan(2008, 2021, 0), ConfigError);
}

TEST(Pipeline, RunsEveryWindowAndScheme) {
  const auto& res = shared_run();
  ASSERT_EQ(res.windows.size(), 2u);
  for (const auto& wr : res.windows) {
    ASSERT_TRUE(wr.ok) << wr.error;
    EXPECT_GT(wr.n_train_exceed, 50u);
    for (const auto* name : {"Advisen", "Random", "None"}) {
      const auto& s = wr.schemes.at(name);
      ASSERT_TRUE(s.ok) << s.error;
      EXPECT_EQ(s.ids.size(), wr.n_test - wr.n_test_below);
      for (const auto& [key, v] : s.scores) {
        EXPECT_EQ(v.size(), s.ids.size());
        for (double x : v) EXPECT_TRUE(std::isfinite(x) && x >= 0.0);
      }
      for (double p : s.probs) EXPECT_TRUE(p >= 0.0 && p <= 1.0);
    }
  }
}

TEST(Pipeline, EverySchemeScoresTheSameEvents) {
  for (const auto& wr : shared_run().windows) {
    const auto& ids = wr.schemes.at("None").ids;
    for (const auto& [name, s] : wr.schemes) EXPECT_EQ(s.ids, ids) << name;
  }
}

TEST(Pipeline, Deterministic) {
  const auto again = run_pipeline(synth_generate(small_synth()), small_pipeline());
  for (std::size_t w = 0; w < again.windows.size(); ++w) {
    for (const auto& [name, s] : again.windows[w].schemes) {
      EXPECT_EQ(s.scores, shared_run().windows[w].schemes.at(name).scores) << name;
    }
  }
}

TEST(Pipeline, RandomWithOneCategoryEqualsNone) {
  auto cfg = small_pipeline();
  cfg.random_k = 1;
  cfg.schemes = {SchemeKind::Random, SchemeKind::None};
  const auto res = run_pipeline(synth_generate(small_synth()), cfg);
  for (const auto& wr : res.windows) {
    const auto& r = wr.schemes.at("Random");
    const auto& n = wr.schemes.at("None");
    ASSERT_TRUE(r.ok && n.ok);
    for (const auto& [key, v] : n.scores) {
      const auto& rv = r.scores.at(key);
      for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(rv[i], v[i], 1e-10);
    }
  }
  const auto t = compare_schemes(res, "None");
  for (const auto& [key, cell] : t.cells.at("Random")) {
    ASSERT_TRUE(cell.overall);
    EXPECT_NEAR(cell.overall->statistic, 0.0, 1e-6);
    EXPECT_FALSE(cell.overall->reject_05);
  }
}

TEST(Pipeline, NoLookAhead) {
  // Rewriting every loss from the first test year on leaves that window's
  // threshold and fitted models unchanged.
  auto data = synth_generate(small_synth());
  const auto cfg = small_pipeline();
  const auto base = run_pipeline(data, cfg);
  const int test_year = base.plan.windows.front().test_year;
  for (auto& e : data.events) {
    if (e.year >= test_year) e.loss *= 3.0;
  }
  const auto moved = run_pipeline(data, cfg);
  const auto& a = base.windows.front();
  const auto& b = moved.windows.front();
  EXPECT_EQ(a.threshold.u, b.threshold.u);
  for (const auto& [name, s] : a.schemes) {
    nlohmann::json ja = s.model, jb = b.schemes.at(name).model;
    EXPECT_EQ(ja, jb) << name;
    EXPECT_NE(s.losses, b.schemes.at(name).losses);
  }
}

TEST(Pipeline, InputOrderWithinYearDoesNotMatter) {
  auto data = synth_generate(small_synth());
  const auto cfg = small_pipeline();
  const auto base = run_pipeline(data, cfg);
  std::reverse(data.events.begin(), data.events.end());
  std::stable_sort(data.events.begin(), data.events.end(),
                   [](const LossEvent& x, const LossEvent& y) { return x.year < y.year; });
  const auto rev = run_pipeline(data, cfg);
  for (std::size_t w = 0; w < base.windows.size(); ++w) {
    EXPECT_EQ(base.windows[w].threshold.u, rev.windows[w].threshold.u);
    for (const auto& [name, s] : base.windows[w].schemes) {
      for (const auto& key : series_keys(cfg)) {
        const auto x = by_id(s, key), y = by_id(rev.windows[w].schemes.at(name), key);
        ASSERT_EQ(x.size(), y.size());
        for (const auto& [id, v] : x) EXPECT_NEAR(y.at(id), v, 1e-6 * std::max(1.0, v)) << name << " " << id;
      }
    }
  }
}

TEST(Compare, SchemeAgainstItselfIsZero) {
  auto all = collect_scores(shared_run());
  std::vector<SchemeScores> pair;
  for (const auto& s : all) {
    if (s.scheme != "Advisen") continue;
    pair.push_back(s);
    pair.push_back(s);
    pair.back().scheme = "Copy";
  }
  const auto t = compare_series(pair, "Advisen", series_keys(small_pipeline()));
  ASSERT_EQ(t.schemes, std::vector<std::string>{"Copy"});
  for (const auto& [key, cell] : t.cells.at("Copy")) {
    ASSERT_TRUE(cell.overall);
    EXPECT_EQ(cell.overall->statistic, 0.0);
    EXPECT_EQ(cell.proportion->proportion(), 0.0);
    EXPECT_EQ(cell.yearly.size(), 2u);
    EXPECT_EQ(cell.trimmed.size(), default_trim_quantiles().size());
  }
}

TEST(Compare, MisalignedUniversesThrow) {
  auto all = collect_scores(shared_run());
  for (auto& s : all) {
    if (s.scheme == "Advisen") s.ids.back() += "-x";
  }
  EXPECT_THROW(compare_series(all, "None", series_keys(small_pipeline())), AlignmentError);
  EXPECT_THROW(compare_series(all, "Missing", series_keys(small_pipeline())), AlignmentError);
}

TEST(Compare, SignFavoursTheScheme) {
  // Scheme scores lower than the baseline everywhere -> positive statistic.
  SchemeScores b{"Base", 2013, {"a", "b", "c", "d"}, {1, 2, 3, 4}, {}};
  SchemeScores s = b;
  s.scheme = "S";
  const SeriesKey key{ScoreKind::rCRPS, WeightKind::Equal};
  b.scores[key] = {1.0, 1.2, 0.9, 1.1};
  s.scores[key] = {0.8, 1.0, 0.8, 0.7};
  const auto t = compare_series({b, s}, "Base", {key});
  EXPECT_GT(t.cells.at("S").at(key).overall->statistic, 0.0);
}

TEST(Frequency, TablesForBothBaselines) {
  for (const auto* baseline : {"None", "Random"}) {
    const auto rows = frequency_tables(shared_run(), baseline);
    // Advisen only: two yearly rows and a pooled row.
    ASSERT_EQ(rows.size(), 3u) << baseline;
    for (const auto& r : rows) {
      EXPECT_EQ(r.scheme, "Advisen");
      EXPECT_TRUE(r.defined) << r.note;
      EXPECT_TRUE(r.result.p_value >= 0.0 && r.result.p_value <= 1.0);
    }
    EXPECT_EQ(rows.back().test_year, 0);
  }
}

TEST(Power, IdenticalModelsNeverReject) {
  const std::vector<GpdParams> f(20, GpdParams{1.0, 1.5});
  const auto t = power_study(f, f, {20, 100}, 1000, 20, 5);
  for (const auto& row : t.power)
    for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(Power, PlantedDifferenceGrowsWithSize) {
  std::vector<GpdParams> truth, base;
  for (int i = 0; i < 20; ++i) {
    truth.push_back({1.0, i % 2 ? 0.8 : 2.5});
    base.push_back({1.0, 1.4});
  }
  PowerOptions opt;
  opt.weights = {WeightKind::Equal, WeightKind::RightTail};
  const auto t = power_study(truth, base, {20, 100, 500}, 1000, 50, 9, opt);
  EXPECT_EQ(t.universe, 1000u);
  for (std::size_t w = 0; w < opt.weights.size(); ++w) {
    EXPECT_LE(t.power[0][w], t.power[1][w] + 0.02);
    EXPECT_LE(t.power[1][w], t.power[2][w] + 0.02);
  }
  EXPECT_GT(t.power[2][1], 0.8);
  EXPECT_THROW(power_study(truth, base, {20}, 10, 5, 1), DomainError);
  EXPECT_THROW(power_study(truth, {base[0]}, {20}, 1000, 5, 1), AlignmentError);
}
