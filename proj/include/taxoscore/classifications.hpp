#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "assignment.hpp"
#include "data_model.hpp"
#include "error.hpp"
#include "gamlss.hpp"
#include "gof.hpp"
#include "rng.hpp"

namespace taxoscore {

enum class SchemeKind { Advisen, Romanosky, Eling, Tail, Body, FrequencySeverity, TypeImportance, Random, None };

inline const std::vector<std::pair<SchemeKind, std::string>>& scheme_names() {
  static const std::vector<std::pair<SchemeKind, std::string>> names = {
      {SchemeKind::Advisen, "Advisen"},
      {SchemeKind::Romanosky, "Romanosky"},
      {SchemeKind::Eling, "Eling"},
      {SchemeKind::Tail, "Tail"},
      {SchemeKind::Body, "Body"},
      {SchemeKind::FrequencySeverity, "FrequencySeverity"},
      {SchemeKind::TypeImportance, "TypeImportance"},
      {SchemeKind::Random, "Random"},
      {SchemeKind::None, "None"},
  };
  return names;
}

inline const std::string& scheme_name(SchemeKind k) {
  for (const auto& [kind, name] : scheme_names()) {
    if (kind == k) return name;
  }
  throw ConfigError("unknown scheme kind");
}

inline SchemeKind scheme_from_name(const std::string& s) {
  for (const auto& [kind, name] : scheme_names()) {
    if (name == s) return kind;
  }
  throw ConfigError("unknown scheme '" + s + "'");
}

/// Schemes whose rules are re-derived from each training window.
inline bool is_dynamic(SchemeKind k) {
  return k == SchemeKind::Tail || k == SchemeKind::Body || k == SchemeKind::FrequencySeverity ||
         k == SchemeKind::TypeImportance || k == SchemeKind::Random;
}

enum class MappingTarget { Romanosky, Eling, TypeImportanceEventClass };

inline const std::string kOtherType = "Undetermined/Other";

/// Maps a native risk type onto a coarser vocabulary. Returns nullopt only for
/// "Undetermined/Other" under the event-class target, which is excluded there.
inline std::optional<std::string> map_advisen(MappingTarget target, const std::string& advisen_type) {
  static const std::map<std::string, std::array<const char*, 3>> table = {
      {"Privacy - Unauthorized Contact or Disclosure", {"Privacy Violation", "System and Technical Failure", "Low Level"}},
      {"Privacy - Unauthorized Data Collection", {"Privacy Violation", "System and Technical Failure", "Low Level"}},
      {"Data - Physically Lost or Stolen", {"Data Breach", "Actions by People", "Exfiltration"}},
      {"Identity - Fraudulent Use/Account Access", {"Data Breach", "System and Technical Failure", "Exfiltration"}},
      {"Data - Malicious Breach", {"Data Breach", "Actions by People", "Exfiltration"}},
      {"Phishing, Spoofing, Social Engineering", {"Phishing Skimming", "Actions by People", "Low Level"}},
      {"IT - Configuration/Implementation Errors", {"Security Incident", "Failed Internal Process", "Disruption"}},
      {"Data - Unintentional Disclosure", {"Data Breach", "Actions by People", "Low Level"}},
      {"Cyber Extortion", {"Security Incident", "Actions by People", "Exfiltration"}},
      {"Network/Website Disruption", {"Security Incident", "Failed Internal Process", "Disruption"}},
      {"Skimming, Physical Tampering", {"Phishing Skimming", "Actions by People", "Exfiltration"}},
      {"IT - Processing Errors", {"Security Incident", "Failed Internal Process", "Disruption"}},
      {"Industrial Controls & Operations", {"Security Incident", "System and Technical Failure", "Disruption"}},
      {"Undetermined/Other", {"Other", "Other", nullptr}},
  };
  const auto it = table.find(advisen_type);
  if (it == table.end()) throw VocabularyError("unknown risk type '" + advisen_type + "'");
  const char* v = it->second[static_cast<std::size_t>(target)];
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

inline const std::vector<std::string>& romanosky_categories() {
  static const std::vector<std::string> c = {"Privacy Violation", "Data Breach", "Phishing Skimming",
                                             "Security Incident", "Other"};
  return c;
}

inline const std::vector<std::string>& eling_categories() {
  static const std::vector<std::string> c = {"System and Technical Failure", "Actions by People",
                                             "Failed Internal Process", "External Event", "Other"};
  return c;
}

inline const std::vector<std::string>& event_classes() {
  static const std::vector<std::string> c = {"Low Level", "Exfiltration", "Disruption"};
  return c;
}

/// Tercile-style band boundaries on the rank position in [0, 1).
struct RiskMatrixSpec {
  std::vector<double> breaks{0.33, 0.66};

  void validate() const {
    for (std::size_t i = 0; i < breaks.size(); ++i) {
      if (!(breaks[i] > 0.0 && breaks[i] < 1.0)) throw ConfigError("risk matrix breaks must lie in (0,1)");
      if (i > 0 && !(breaks[i] > breaks[i - 1])) throw ConfigError("risk matrix breaks must increase");
    }
  }
};

/// How equal values are ranked: ByKey orders them by label, SharedRank gives
/// every tied item the rank of the first one.
enum class TieRule { ByKey, SharedRank };

/// Band index of each item: items are ordered by (value, key), position is
/// rank / m, and a position equal to a break belongs to the upper band.
inline std::map<std::string, std::size_t> rank_bands(const std::map<std::string, double>& values,
                                                     const RiskMatrixSpec& spec, TieRule ties = TieRule::ByKey) {
  spec.validate();
  std::vector<std::pair<double, std::string>> items;
  for (const auto& [k, v] : values) items.emplace_back(v, k);
  std::sort(items.begin(), items.end());
  std::map<std::string, std::size_t> out;
  const double m = static_cast<double>(items.size());
  std::size_t rank = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (ties == TieRule::ByKey || i == 0 || items[i].first != items[i - 1].first) rank = i;
    const double pos = static_cast<double>(rank) / m;
    std::size_t band = 0;
    while (band < spec.breaks.size() && pos >= spec.breaks[band]) ++band;
    out[items[i].second] = band;
  }
  return out;
}

inline const std::vector<std::string>& frequency_bands() {
  static const std::vector<std::string> b = {"Rare", "Unlikely", "Likely"};
  return b;
}
inline const std::vector<std::string>& severity_bands() {
  static const std::vector<std::string> b = {"Low Severity", "Medium Severity", "High Severity"};
  return b;
}
inline const std::vector<std::string>& importance_bands() {
  static const std::vector<std::string> b = {"Low Importance", "Medium Importance", "High Importance"};
  return b;
}

/// A rule labelling any event; built once per scheme (per window for dynamic
/// schemes) and applied to training and forecast events alike.
struct Classifier {
  SchemeKind kind = SchemeKind::None;
  std::vector<std::string> categories;
  /// Advisen-type -> category for table-driven schemes; sector -> importance
  /// band for Type & Importance.
  std::map<std::string, std::string> table;
  std::string fallback;  // label for keys missing from `table`
  std::uint64_t seed = 0;
  std::size_t k = 1;

  const std::string& name() const { return scheme_name(kind); }

  /// nullopt means the scheme excludes the event.
  std::optional<std::string> classify(const LossEvent& e) const {
    switch (kind) {
      case SchemeKind::Advisen:
        return e.risk_type;
      case SchemeKind::Romanosky:
        return map_advisen(MappingTarget::Romanosky, e.risk_type);
      case SchemeKind::Eling:
        return map_advisen(MappingTarget::Eling, e.risk_type);
      case SchemeKind::None:
        return categories.front();
      case SchemeKind::Random: {
        const std::uint64_t h = derive_seed(seed, std::stoull(csv::digest(e.id), nullptr, 16));
        return categories[h % k];
      }
      case SchemeKind::TypeImportance: {
        const auto cls = map_advisen(MappingTarget::TypeImportanceEventClass, e.risk_type);
        if (!cls) return std::nullopt;
        const auto it = table.find(e.sector);
        return *cls + "-" + (it == table.end() ? fallback : it->second);
      }
      case SchemeKind::FrequencySeverity:
      case SchemeKind::Tail:
      case SchemeKind::Body: {
        if (!is_advisen_type(e.risk_type)) throw VocabularyError("unknown risk type '" + e.risk_type + "'");
        const auto it = table.find(e.risk_type);
        return it == table.end() ? fallback : it->second;
      }
    }
    return std::nullopt;
  }

  ClassificationAssignment apply(const std::vector<LossEvent>& events) const {
    ClassificationAssignment a;
    a.scheme_name = name();
    a.categories = categories;
    for (const auto& e : events) {
      if (auto lab = classify(e)) a.labels[e.id] = a.category_index(*lab);
    }
    return a;
  }
  ClassificationAssignment apply(const Dataset& d) const { return apply(d.events); }
};

inline Classifier static_classifier(SchemeKind kind) {
  Classifier c;
  c.kind = kind;
  switch (kind) {
    case SchemeKind::Advisen:
      c.categories.assign(advisen_types().begin(), advisen_types().end());
      break;
    case SchemeKind::Romanosky:
      c.categories = romanosky_categories();
      break;
    case SchemeKind::Eling:
      c.categories = eling_categories();
      break;
    case SchemeKind::None:
      c.categories = {"All"};
      break;
    default:
      throw ConfigError("scheme " + scheme_name(kind) + " must be built from data");
  }
  return c;
}

/// Uniform i.i.d. label per event, derived from a hash of (seed, event id).
inline Classifier random_classifier(std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("random classification needs k >= 1");
  Classifier c;
  c.kind = SchemeKind::Random;
  c.k = k;
  c.seed = seed;
  for (std::size_t i = 1; i <= k; ++i) c.categories.push_back("Random " + std::to_string(i));
  return c;
}

inline ClassificationAssignment random_classification(const Dataset& d, std::size_t k = 4, std::uint64_t seed = 1) {
  return random_classifier(k, seed).apply(d);
}

/// Risk type x (count band, median-loss band) over the training events. Tied
/// counts or medians share a band.
inline Classifier frequency_severity_classifier(const Dataset& d, const RiskMatrixSpec& spec = {}) {
  std::map<std::string, std::vector<double>> by_type;
  for (const auto& e : d.events) by_type[e.risk_type].push_back(e.loss);
  if (by_type.size() < 3) throw DomainError("degenerate matrix: fewer than 3 distinct risk types");
  std::map<std::string, double> counts, medians;
  for (auto& [t, v] : by_type) {
    counts[t] = static_cast<double>(v.size());
    medians[t] = summarize(t, v).median;
  }
  const auto fb = rank_bands(counts, spec, TieRule::SharedRank);
  const auto sb = rank_bands(medians, spec, TieRule::SharedRank);
  Classifier c;
  c.kind = SchemeKind::FrequencySeverity;
  for (const auto& f : frequency_bands()) {
    for (const auto& s : severity_bands()) c.categories.push_back(f + "-" + s);
  }
  for (const auto& [t, _] : by_type) {
    c.table[t] = frequency_bands()[std::min<std::size_t>(fb.at(t), 2)] + "-" +
                 severity_bands()[std::min<std::size_t>(sb.at(t), 2)];
  }
  // Risk types absent from the window are rare; their severity is unknown, so middle band.
  c.fallback = frequency_bands()[0] + "-" + severity_bands()[1];
  return c;
}

inline ClassificationAssignment build_frequency_severity(const Dataset& d, const RiskMatrixSpec& spec = {}) {
  return frequency_severity_classifier(d, spec).apply(d);
}

/// Event class x sector-importance band. Sectors are ranked by median loss
/// over the events the scheme keeps; ties break on the sector label. Sectors
/// unseen at build time get the middle band.
inline Classifier type_importance_classifier(const Dataset& d, const RiskMatrixSpec& spec = {}) {
  std::map<std::string, std::vector<double>> by_sector;
  for (const auto& e : d.events) {
    if (map_advisen(MappingTarget::TypeImportanceEventClass, e.risk_type)) by_sector[e.sector].push_back(e.loss);
  }
  if (by_sector.size() < 3) throw DomainError("degenerate matrix: fewer than 3 distinct sectors");
  std::map<std::string, double> medians;
  for (auto& [s, v] : by_sector) medians[s] = summarize(s, v).median;
  const auto bands = rank_bands(medians, spec);
  Classifier c;
  c.kind = SchemeKind::TypeImportance;
  for (const auto& cls : event_classes()) {
    for (const auto& b : importance_bands()) c.categories.push_back(cls + "-" + b);
  }
  for (const auto& [s, b] : bands) c.table[s] = importance_bands()[std::min<std::size_t>(b, 2)];
  c.fallback = importance_bands()[1];
  return c;
}

inline ClassificationAssignment build_type_importance(const Dataset& d, const RiskMatrixSpec& spec = {}) {
  return type_importance_classifier(d, spec).apply(d);
}

struct ResidualClassificationOptions {
  double alpha = 0.05;
  gof::TwoSampleKind test = gof::TwoSampleKind::KS;
  std::size_t n_boot = 2000;  // CvM only
  std::uint64_t seed = 1;
  std::size_t min_group = 5;
};

/// Greedy agglomeration of risk types: repeatedly merges the closest pair
/// (smallest two-sample distance) among pairs the test does not reject at
/// alpha; stops when every pair is rejected. Groups with fewer than
/// `min_group` residuals first join the group with the nearest mean residual.
/// Returns risk type -> group label, labels "Type k" ordered by group size.
inline std::map<std::string, std::string> merge_residual_groups(
    const std::map<std::string, std::vector<double>>& residuals_by_type, const ResidualClassificationOptions& opt) {
  struct Group {
    std::vector<std::string> members;
    std::vector<double> r;
  };
  std::vector<Group> groups, small;
  for (const auto& [t, r] : residuals_by_type) {
    if (r.empty()) continue;
    (r.size() >= opt.min_group ? groups : small).push_back({{t}, r});
  }
  if (groups.empty()) {
    Group all;
    for (auto& g : small) {
      all.members.insert(all.members.end(), g.members.begin(), g.members.end());
      all.r.insert(all.r.end(), g.r.begin(), g.r.end());
    }
    small.clear();
    if (!all.members.empty()) groups.push_back(all);
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  for (auto& s : small) {
    std::size_t best = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const double g = std::abs(mean(groups[i].r) - mean(s.r));
      if (g < gap) gap = g, best = i;
    }
    groups[best].members.insert(groups[best].members.end(), s.members.begin(), s.members.end());
    groups[best].r.insert(groups[best].r.end(), s.r.begin(), s.r.end());
  }
  std::uint64_t round = 0;
  while (groups.size() > 1) {
    std::optional<std::pair<std::size_t, std::size_t>> pick;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        const auto res = gof::two_sample_distance_test(groups[i].r, groups[j].r, opt.test, opt.n_boot,
                                                       derive_seed(opt.seed, round * 1000 + i * 31 + j));
        if (res.p_value >= opt.alpha && res.distance < best) {
          best = res.distance;
          pick = std::make_pair(i, j);
        }
      }
    }
    if (!pick) break;
    auto& a = groups[pick->first];
    auto& b = groups[pick->second];
    a.members.insert(a.members.end(), b.members.begin(), b.members.end());
    a.r.insert(a.r.end(), b.r.begin(), b.r.end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(pick->second));
    ++round;
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& x, const Group& y) { return x.r.size() > y.r.size(); });
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (const auto& m : groups[i].members) out[m] = "Type " + std::to_string(i + 1);
  }
  return out;
}

/// Tail (GPD family, exceedances over `threshold`) or Body (lognormal family,
/// all losses) classification from normalized residuals of a fit with
/// risk-type dummies only. Risk types absent from the data join "Type 1".
inline Classifier residual_classifier(const Dataset& d, Family family, double threshold,
                                      const ResidualClassificationOptions& opt = {}) {
  std::vector<LossEvent> ev;
  std::vector<std::string> labels;
  std::vector<double> y;
  for (const auto& e : d.events) {
    if (family == Family::GPD) {
      if (!(e.loss > threshold)) continue;
      y.push_back(e.loss - threshold);
    } else {
      if (!(e.loss > 0.0)) continue;
      y.push_back(e.loss);
    }
    ev.push_back(e);
    labels.push_back(e.risk_type);
  }
  const std::vector<std::string> vocab(advisen_types().begin(), advisen_types().end());
  const auto design = build_design(ev, labels, vocab, CovariateSpec::scheme_only());
  const auto model = fit_fixed(y, design, family, 0, 0.0, 0.0);
  const auto r = residuals(model, ev, labels, y);
  std::map<std::string, std::vector<double>> by_type;
  for (std::size_t i = 0; i < ev.size(); ++i) by_type[ev[i].risk_type].push_back(r[i]);
  Classifier c;
  c.kind = family == Family::GPD ? SchemeKind::Tail : SchemeKind::Body;
  c.table = merge_residual_groups(by_type, opt);
  std::size_t n_groups = 0;
  for (const auto& [_, g] : c.table) n_groups = std::max<std::size_t>(n_groups, std::stoul(g.substr(5)));
  for (std::size_t i = 1; i <= std::max<std::size_t>(n_groups, 1); ++i) c.categories.push_back("Type " + std::to_string(i));
  c.fallback = "Type 1";
  return c;
}

inline ClassificationAssignment build_residual_classification(const Dataset& d, Family family, double alpha,
                                                              double threshold = 0.0) {
  ResidualClassificationOptions opt;
  opt.alpha = alpha;
  return residual_classifier(d, family, threshold, opt).apply(d);
}

// Serialization -------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Classifier& c) {
  j = nlohmann::json{{"scheme", c.name()}, {"categories", c.categories}, {"table", c.table},
                     {"fallback", c.fallback}, {"seed", c.seed}, {"k", c.k}};
}

inline void from_json(const nlohmann::json& j, Classifier& c) {
  c.kind = scheme_from_name(j.at("scheme").get<std::string>());
  c.categories = j.at("categories").get<std::vector<std::string>>();
  c.table = j.at("table").get<std::map<std::string, std::string>>();
  c.fallback = j.at("fallback").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.k = j.at("k").get<std::size_t>();
}

/// Writes `<path>` as event_id,label (dataset order) and `<path>.json` holding
/// the scheme, vocabulary and rule.
inline void write_assignment(const std::string& path, const Dataset& d, const ClassificationAssignment& a,
                             const Classifier& rule) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "event_id,label\n";
  for (const auto& e : d.events) {
    if (auto k = a.index_of(e.id)) csv::write_row(out, {e.id, a.categories[*k]});
  }
  std::ofstream side(path + ".json", std::ios::binary);
  nlohmann::json j{{"scheme", a.scheme_name}, {"vocabulary", a.categories}, {"rule", rule}};
  side << j.dump(2) << '\n';
}

struct LoadedAssignment {
  ClassificationAssignment assignment;
  Classifier rule;
};

inline LoadedAssignment read_assignment(const std::string& path) {
  const auto j = nlohmann::json::parse(csv::read_file(path + ".json"));
  LoadedAssignment out;
  out.rule = j.at("rule").get<Classifier>();
  out.assignment.scheme_name = j.at("scheme").get<std::string>();
  out.assignment.categories = j.at("vocabulary").get<std::vector<std::string>>();
  const auto t = csv::read(path);
  const auto ci = t.column("event_id"), cl = t.column("label");
  if (!ci || !cl) throw SchemaError("assignment file needs event_id,label columns: " + path);
  for (const auto& row : t.rows) {
    out.assignment.labels[row[*ci]] = out.assignment.category_index(row[*cl]);
  }
  return out;
}

}  // namespace taxoscore
