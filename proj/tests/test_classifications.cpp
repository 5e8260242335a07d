#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "taxoscore/classifications.hpp"

using namespace taxoscore;

namespace {

LossEvent ev(std::string id, double loss, std::string type, std::string sector = "Finance") {
  LossEvent e;
  e.id = std::move(id);
  e.loss = loss;
  e.year = 2010;
  e.risk_type = std::move(type);
  e.sector = std::move(sector);
  return e;
}

Dataset synth(std::size_t n, std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.n_per_year = n;
  cfg.first_year = 2010;
  cfg.last_year = 2011;
  cfg.seed = seed;
  cfg.sector_effects = {{"Finance", 1.0}, {"Tech", -0.5}};
  return synth_generate(cfg);
}

}  // namespace

TEST(Mapping, TableRows) {
  EXPECT_EQ(map_advisen(MappingTarget::Romanosky, "Cyber Extortion"), "Security Incident");
  EXPECT_EQ(map_advisen(MappingTarget::Eling, "Data - Malicious Breach"), "Actions by People");
  EXPECT_EQ(map_advisen(MappingTarget::TypeImportanceEventClass, "Network/Website Disruption"), "Disruption");
  EXPECT_EQ(map_advisen(MappingTarget::Romanosky, kOtherType), "Other");
  EXPECT_EQ(map_advisen(MappingTarget::Eling, kOtherType), "Other");
  EXPECT_FALSE(map_advisen(MappingTarget::TypeImportanceEventClass, kOtherType));
  EXPECT_THROW(map_advisen(MappingTarget::Eling, "Alien Invasion"), VocabularyError);
}

TEST(Mapping, EveryTypeMapsIntoVocabulary) {
  for (const auto& t : advisen_types()) {
    const auto r = *map_advisen(MappingTarget::Romanosky, t);
    const auto e = *map_advisen(MappingTarget::Eling, t);
    EXPECT_NE(std::find(romanosky_categories().begin(), romanosky_categories().end(), r),
              romanosky_categories().end());
    EXPECT_NE(std::find(eling_categories().begin(), eling_categories().end(), e), eling_categories().end());
    if (auto c = map_advisen(MappingTarget::TypeImportanceEventClass, t)) {
      EXPECT_NE(std::find(event_classes().begin(), event_classes().end(), *c), event_classes().end());
    }
  }
}

TEST(RankBands, BoundaryBelongsToUpperBand) {
  std::map<std::string, double> v;
  for (int i = 0; i < 100; ++i) {
    char k[8];
    std::snprintf(k, sizeof k, "k%03d", i);
    v[k] = i;
  }
  const auto b = rank_bands(v, {});
  EXPECT_EQ(b.at("k032"), 0u);
  EXPECT_EQ(b.at("k033"), 1u);  // position exactly 0.33
  EXPECT_EQ(b.at("k065"), 1u);
  EXPECT_EQ(b.at("k066"), 2u);
}

TEST(RankBands, TieRules) {
  const std::map<std::string, double> v{{"a", 1.0}, {"b", 1.0}, {"c", 1.0}};
  const auto by_key = rank_bands(v, {});
  EXPECT_EQ(by_key.at("a"), 0u);
  EXPECT_EQ(by_key.at("b"), 1u);
  EXPECT_EQ(by_key.at("c"), 2u);
  const auto shared = rank_bands(v, {}, TieRule::SharedRank);
  for (const auto& [_, band] : shared) EXPECT_EQ(band, 0u);
}

TEST(RankBands, InvalidBreaks) {
  RiskMatrixSpec s;
  s.breaks = {0.66, 0.33};
  EXPECT_THROW(s.validate(), ConfigError);
  s.breaks = {0.0, 0.5};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(FrequencySeverity, CountTercilesWithEqualMedians) {
  Dataset d;
  const std::vector<std::pair<std::string, int>> types{
      {"Cyber Extortion", 10}, {"IT - Processing Errors", 20}, {"Data - Malicious Breach", 30}};
  int id = 0;
  for (const auto& [t, n] : types) {
    for (int i = 0; i < n; ++i) d.events.push_back(ev("e" + std::to_string(id++), 5.0, t));
  }
  const auto c = frequency_severity_classifier(d);
  EXPECT_EQ(c.table.at("Cyber Extortion"), "Rare-Low Severity");
  EXPECT_EQ(c.table.at("IT - Processing Errors"), "Unlikely-Low Severity");
  EXPECT_EQ(c.table.at("Data - Malicious Breach"), "Likely-Low Severity");
}

TEST(FrequencySeverity, TopTypeIsLikelyHigh) {
  Dataset d;
  int id = 0;
  const std::vector<std::tuple<std::string, int, double>> types{
      {"Cyber Extortion", 5, 1.0}, {"IT - Processing Errors", 8, 2.0}, {"Data - Malicious Breach", 12, 9.0}};
  for (const auto& [t, n, loss] : types) {
    for (int i = 0; i < n; ++i) d.events.push_back(ev("e" + std::to_string(id++), loss, t));
  }
  EXPECT_EQ(frequency_severity_classifier(d).table.at("Data - Malicious Breach"), "Likely-High Severity");
}

TEST(FrequencySeverity, DegenerateMatrix) {
  Dataset d;
  d.events = {ev("a", 1, "Cyber Extortion"), ev("b", 2, "IT - Processing Errors")};
  EXPECT_THROW(frequency_severity_classifier(d), DomainError);
}

TEST(TypeImportance, MaxMedianSectorIsHighImportance) {
  Dataset d;
  const std::vector<std::pair<std::string, double>> sectors{{"A", 1.0}, {"B", 2.0}, {"C", 3.0}};
  int id = 0;
  for (const auto& [s, loss] : sectors) {
    for (int i = 0; i < 4; ++i) d.events.push_back(ev("e" + std::to_string(id++), loss, "IT - Processing Errors", s));
  }
  d.events.push_back(ev("x", 3.0, "Cyber Extortion", "C"));
  const auto a = build_type_importance(d);
  EXPECT_EQ(a.label_of("x"), "Exfiltration-High Importance");
}

TEST(TypeImportance, TiesBrokenBySectorLabel) {
  Dataset d;
  int id = 0;
  for (const std::string s : {"Gamma", "Alpha", "Beta"}) {
    d.events.push_back(ev("e" + std::to_string(id++), 7.0, "Cyber Extortion", s));
  }
  const auto c = type_importance_classifier(d);
  EXPECT_EQ(c.table.at("Alpha"), "Low Importance");
  EXPECT_EQ(c.table.at("Beta"), "Medium Importance");
  EXPECT_EQ(c.table.at("Gamma"), "High Importance");
}

TEST(TypeImportance, OtherExcluded) {
  const auto d = synth(300);
  const auto a = build_type_importance(d);
  for (const auto& e : d.events) EXPECT_EQ(a.contains(e.id), e.risk_type != kOtherType);
}

TEST(Schemes, AssignmentsPartitionEvents) {
  const auto d = synth(300);
  std::vector<ClassificationAssignment> all{
      static_classifier(SchemeKind::Advisen).apply(d), static_classifier(SchemeKind::Romanosky).apply(d),
      static_classifier(SchemeKind::Eling).apply(d),   static_classifier(SchemeKind::None).apply(d),
      build_frequency_severity(d),                     random_classification(d)};
  for (const auto& a : all) {
    EXPECT_EQ(a.labels.size(), d.size()) << a.scheme_name;
    for (const auto& [_, k] : a.labels) EXPECT_LT(k, a.categories.size());
  }
  EXPECT_EQ(static_classifier(SchemeKind::None).categories.size(), 1u);
}

TEST(Schemes, PermutationInvariant) {
  auto d = synth(300);
  const auto fs1 = build_frequency_severity(d);
  const auto ti1 = build_type_importance(d);
  Rng rng(5);
  for (std::size_t i = d.events.size() - 1; i > 0; --i) std::swap(d.events[i], d.events[rng.below(i + 1)]);
  const auto fs2 = build_frequency_severity(d);
  const auto ti2 = build_type_importance(d);
  for (const auto& e : d.events) {
    EXPECT_EQ(fs1.label_of(e.id), fs2.label_of(e.id));
    if (ti1.contains(e.id)) {
      EXPECT_EQ(ti1.label_of(e.id), ti2.label_of(e.id));
    }
  }
}

TEST(Random, FrequenciesNearUniform) {
  Dataset d;
  for (int i = 0; i < 40000; ++i) d.events.push_back(ev("r" + std::to_string(i), 1.0, "Cyber Extortion"));
  const auto a = random_classification(d, 4, 11);
  std::vector<double> f(4, 0.0);
  for (const auto& [_, k] : a.labels) f[k] += 1.0 / 40000.0;
  for (double p : f) EXPECT_NEAR(p, 0.25, 0.01);
}

TEST(Random, DeterministicAndSingleCellEqualsNone) {
  const auto d = synth(100);
  const auto a = random_classification(d, 4, 9), b = random_classification(d, 4, 9);
  EXPECT_EQ(a.labels, b.labels);
  const auto one = random_classification(d, 1, 9);
  const auto none = static_classifier(SchemeKind::None).apply(d);
  EXPECT_EQ(one.labels, none.labels);
  EXPECT_THROW(random_classifier(0, 1), ConfigError);
}

TEST(Residual, IdenticalSetsAlwaysMerged) {
  Rng rng(1);
  std::vector<double> r(500);
  for (auto& v : r) v = rng.normal();
  auto shifted = r;
  for (auto& v : shifted) v += 3.0;
  const auto g = merge_residual_groups({{"A", r}, {"B", r}, {"C", shifted}}, {});
  EXPECT_EQ(g.at("A"), g.at("B"));
  EXPECT_NE(g.at("A"), g.at("C"));
}

TEST(Residual, SameGeneratorMergesUsually) {
  int merged = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    Rng rng(derive_seed(99, s));
    std::vector<double> a(2000), b(2000);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const auto g = merge_residual_groups({{"A", a}, {"B", b}}, {});
    merged += g.at("A") == g.at("B");
  }
  EXPECT_GE(merged, 36);
}

TEST(Residual, GroupCountMonotoneInAlpha) {
  Rng rng(4);
  std::map<std::string, std::vector<double>> r;
  const std::vector<double> shifts{0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    std::vector<double> v(400);
    for (auto& x : v) x = rng.normal() + shifts[i];
    r["T" + std::to_string(i)] = v;
  }
  std::size_t prev = 0;
  for (double alpha : {0.01, 0.05, 0.10}) {
    ResidualClassificationOptions opt;
    opt.alpha = alpha;
    std::set<std::string> groups;
    for (const auto& [_, g] : merge_residual_groups(r, opt)) groups.insert(g);
    EXPECT_GE(groups.size(), prev) << alpha;
    prev = groups.size();
  }
}

// A dummy per risk type on both parameters standardizes every type, so a
// correctly specified family leaves nothing to separate; a misspecified one
// (lognormal on GPD tails of differing index) does.
TEST(Residual, SeparatesOnlyUnderMisfit) {
  SynthConfig cfg;
  cfg.n_per_year = 3000;
  cfg.first_year = 2010;
  cfg.last_year = 2011;
  cfg.default_tail = {1.0, 3.0};
  for (const auto& t : advisen_types()) {
    if (t.rfind("Data", 0) == 0 || t.rfind("Privacy", 0) == 0) cfg.tail_params[t] = {5.0, 0.5};
  }
  const auto d = synth_generate(cfg);
  const auto tail = residual_classifier(d, Family::GPD, cfg.implied_threshold());
  EXPECT_EQ(tail.categories.size(), 1u);
  const auto body = residual_classifier(d, Family::Lognormal, 0.0);
  EXPECT_GE(body.categories.size(), 2u);
  EXPECT_EQ(body.table.at("Data - Malicious Breach"), body.table.at("Privacy - Unauthorized Data Collection"));
  EXPECT_NE(body.table.at("Data - Malicious Breach"), body.table.at("Cyber Extortion"));
}

TEST(Assignment, FileRoundTrip) {
  const auto d = synth(100);
  const auto rule = frequency_severity_classifier(d);
  const auto a = rule.apply(d);
  const auto path = (std::filesystem::temp_directory_path() / "taxoscore_assign.csv").string();
  write_assignment(path, d, a, rule);
  const auto back = read_assignment(path);
  EXPECT_EQ(back.assignment.scheme_name, "FrequencySeverity");
  EXPECT_EQ(back.assignment.categories, a.categories);
  EXPECT_EQ(back.assignment.labels, a.labels);
  EXPECT_EQ(back.rule.table, rule.table);
  EXPECT_EQ(back.rule.apply(d).labels, a.labels);
}
