#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "assignment.hpp"
#include "csv.hpp"
#include "distributions.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace taxoscore {

/// The closed vocabulary of native risk types.
inline const std::array<std::string, 14>& advisen_types() {
  static const std::array<std::string, 14> types = {
      "Privacy - Unauthorized Contact or Disclosure",
      "Privacy - Unauthorized Data Collection",
      "Data - Physically Lost or Stolen",
      "Identity - Fraudulent Use/Account Access",
      "Data - Malicious Breach",
      "Phishing, Spoofing, Social Engineering",
      "IT - Configuration/Implementation Errors",
      "Data - Unintentional Disclosure",
      "Cyber Extortion",
      "Network/Website Disruption",
      "Skimming, Physical Tampering",
      "IT - Processing Errors",
      "Industrial Controls & Operations",
      "Undetermined/Other",
  };
  return types;
}

inline bool is_advisen_type(const std::string& label) {
  const auto& t = advisen_types();
  return std::find(t.begin(), t.end(), label) != t.end();
}

enum class Contagion : int { RelatedSameCompany = 0, RelatedOtherCompany = 1, OneShot = 2 };

struct LossEvent {
  std::string id;
  double loss = 0.0;  // million USD
  int year = 0;
  std::string risk_type;
  std::string sector;
  int employees_band = 0;
  int revenue_band = 0;
  bool us_flag = false;
  Contagion contagion = Contagion::OneShot;
};

struct Dataset {
  std::vector<LossEvent> events;
  int first_year = 0;
  int last_year = 0;
  std::string provenance;

  std::size_t size() const noexcept { return events.size(); }
  bool empty() const noexcept { return events.empty(); }

  /// Stable sort by year; within a year the input order is kept.
  void normalize() {
    std::stable_sort(events.begin(), events.end(),
                     [](const LossEvent& a, const LossEvent& b) { return a.year < b.year; });
    if (!events.empty() && first_year == 0 && last_year == 0) {
      first_year = events.front().year;
      last_year = events.back().year;
    }
  }

  std::map<int, std::size_t> counts_per_year() const {
    std::map<int, std::size_t> out;
    for (int y = first_year; y <= last_year; ++y) out[y] = 0;
    for (const auto& e : events) ++out[e.year];
    return out;
  }

  /// Events whose year lies in [from, to]; order preserved.
  Dataset slice_years(int from, int to) const {
    Dataset out;
    out.first_year = from;
    out.last_year = to;
    out.provenance = provenance;
    for (const auto& e : events) {
      if (e.year >= from && e.year <= to) out.events.push_back(e);
    }
    return out;
  }
};

/// Logical field -> column name. Mandatory fields: loss, year, risk_type.
struct ColumnSchema {
  std::string id = "event_id";
  std::string loss = "loss_amount";
  std::string year = "accident_year";
  std::string risk_type = "case_type";
  std::string sector = "naics_sector";
  std::string employees_band = "emp_band";
  std::string revenue_band = "rev_band";
  std::string us_flag = "us_hq";
  std::string contagion = "contagion";
};

struct Rejection {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string reason;
};

struct LoadResult {
  Dataset dataset;
  std::vector<Rejection> rejections;
};

/// Reads a delimited file. Unparseable or out-of-vocabulary rows are rejected
/// and logged; only structural problems (missing mandatory columns) throw.
/// Optional columns default to: id "row<k>", sector "Unknown", bands 0,
/// us_flag false, contagion one-shot. A non-empty `span` rejects other years.
inline LoadResult load_events(const std::string& path, const ColumnSchema& schema = {},
                              char delimiter = ',',
                              std::optional<std::pair<int, int>> span = std::nullopt) {
  const csv::Table table = csv::read(path, delimiter);
  auto required = [&](const std::string& name) {
    auto c = table.column(name);
    if (!c) throw SchemaError("missing mandatory column '" + name + "' in " + path);
    return *c;
  };
  const std::size_t c_loss = required(schema.loss);
  const std::size_t c_year = required(schema.year);
  const std::size_t c_type = required(schema.risk_type);
  const auto c_id = table.column(schema.id);
  const auto c_sector = table.column(schema.sector);
  const auto c_emp = table.column(schema.employees_band);
  const auto c_rev = table.column(schema.revenue_band);
  const auto c_us = table.column(schema.us_flag);
  const auto c_cont = table.column(schema.contagion);

  LoadResult out;
  out.dataset.provenance = "file:" + path;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t rownum = r + 1;
    auto reject = [&](std::string reason) { out.rejections.push_back({rownum, std::move(reason)}); };
    if (row.size() != table.header.size()) {
      reject("field count " + std::to_string(row.size()) + " != header " +
             std::to_string(table.header.size()));
      continue;
    }
    LossEvent e;
    e.id = c_id ? row[*c_id] : "row" + std::to_string(rownum);
    const auto loss = csv::parse_double(row[c_loss]);
    if (!loss || !std::isfinite(*loss)) {
      reject("unparseable loss");
      continue;
    }
    e.loss = *loss;
    const auto year = csv::parse_int(row[c_year]);
    if (!year) {
      reject("unparseable year");
      continue;
    }
    e.year = static_cast<int>(*year);
    if (span && (e.year < span->first || e.year > span->second)) {
      reject("year outside span");
      continue;
    }
    e.risk_type = row[c_type];
    if (!is_advisen_type(e.risk_type)) {
      reject("unknown category");
      continue;
    }
    e.sector = c_sector ? row[*c_sector] : "Unknown";
    auto int_field = [&](std::optional<std::size_t> c, const char* what, int fallback,
                         int lo, int hi) -> std::optional<int> {
      if (!c) return fallback;
      const auto v = csv::parse_int(row[*c]);
      if (!v || *v < lo || *v > hi) {
        reject(std::string("invalid ") + what);
        return std::nullopt;
      }
      return static_cast<int>(*v);
    };
    const auto emp = int_field(c_emp, "employees band", 0, 0, 1000);
    if (!emp) continue;
    const auto rev = int_field(c_rev, "revenue band", 0, 0, 1000);
    if (!rev) continue;
    const auto us = int_field(c_us, "us flag", 0, 0, 1);
    if (!us) continue;
    const auto cont = int_field(c_cont, "contagion", 2, 0, 2);
    if (!cont) continue;
    e.employees_band = *emp;
    e.revenue_band = *rev;
    e.us_flag = *us == 1;
    e.contagion = static_cast<Contagion>(*cont);
    out.dataset.events.push_back(std::move(e));
  }
  if (span) {
    out.dataset.first_year = span->first;
    out.dataset.last_year = span->second;
  }
  out.dataset.normalize();
  return out;
}

inline void write_rejections(std::ostream& out, const std::vector<Rejection>& rejections) {
  out << "row,reason\n";
  for (const auto& r : rejections) csv::write_row(out, {std::to_string(r.row), r.reason});
}

inline void write_events(std::ostream& out, const Dataset& d, const ColumnSchema& s = {}) {
  csv::write_row(out, {s.id, s.loss, s.year, s.risk_type, s.sector, s.employees_band,
                       s.revenue_band, s.us_flag, s.contagion});
  for (const auto& e : d.events) {
    csv::write_row(out, {e.id, csv::format(e.loss), std::to_string(e.year), e.risk_type, e.sector,
                         std::to_string(e.employees_band), std::to_string(e.revenue_band),
                         e.us_flag ? "1" : "0", std::to_string(static_cast<int>(e.contagion))});
  }
}

inline Dataset filter_positive_losses(const Dataset& d) {
  Dataset out = d;
  out.events.clear();
  std::copy_if(d.events.begin(), d.events.end(), std::back_inserter(out.events),
               [](const LossEvent& e) { return e.loss > 0.0; });
  return out;
}

// Synthetic panels ---------------------------------------------------------

struct SynthConfig {
  std::size_t n_per_year = 1000;
  int first_year = 2008;
  int last_year = 2021;
  double body_meanlog = -2.0;
  double body_sdlog = 2.0;
  /// Probability that an event is a tail draw above the implied threshold
  /// u = body quantile at 1 - tail_fraction.
  double tail_fraction = 0.5;
  /// Tail parameters per risk type; types not listed use default_tail.
  std::map<std::string, GpdParams> tail_params;
  GpdParams default_tail{1.0, 1.0};
  /// Relative frequency per risk type; types not listed get weight 1.
  std::map<std::string, double> risk_weights;
  /// Effects on log mu: per employees-band level, per revenue-band level,
  /// us_flag, per contagion level.
  std::vector<double> covariate_effect_sizes{0.0, 0.0, 0.0, 0.0};
  /// Additional log-mu shift per sector.
  std::map<std::string, double> sector_effects;
  std::vector<std::string> sectors{"Finance", "Health", "Retail", "Public", "Tech", "Manufacturing"};
  int employees_levels = 3;
  int revenue_levels = 3;
  /// log mu += trend_slope * (year - first_year) + trend_amplitude * sin(2 pi (year - first_year) / trend_period)
  double trend_slope = 0.0;
  double trend_amplitude = 0.0;
  double trend_period = 6.0;
  bool include_other = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) throw ConfigError("tail_fraction must lie in (0,1)");
    if (last_year < first_year) throw ConfigError("year span is empty");
    if (!(body_sdlog > 0.0)) throw ConfigError("body_sdlog must be positive");
    if (sectors.empty()) throw ConfigError("at least one sector is required");
    if (employees_levels < 1 || revenue_levels < 1) throw ConfigError("band level counts must be >= 1");
    if (covariate_effect_sizes.size() != 4) throw ConfigError("covariate_effect_sizes must have 4 entries");
    if (!(default_tail.mu > 0.0 && default_tail.tau > 0.0)) throw ConfigError("default tail must be positive");
    for (const auto& [k, p] : tail_params) {
      if (!is_advisen_type(k)) throw ConfigError("tail_params: unknown risk type '" + k + "'");
      if (!(p.mu > 0.0 && p.tau > 0.0)) throw ConfigError("tail_params for '" + k + "' must be positive");
    }
    for (const auto& [k, w] : risk_weights) {
      if (!is_advisen_type(k)) throw ConfigError("risk_weights: unknown risk type '" + k + "'");
      if (!(w >= 0.0)) throw ConfigError("risk_weights must be non-negative");
    }
  }

  double implied_threshold() const {
    return LognormalDist(body_meanlog, body_sdlog).quantile(1.0 - tail_fraction);
  }

  /// Tail parameters of the exceedance y - u for an event (the generator's truth).
  GpdParams tail_for(const LossEvent& e) const {
    auto it = tail_params.find(e.risk_type);
    GpdParams p = it == tail_params.end() ? default_tail : it->second;
    double shift = covariate_effect_sizes[0] * e.employees_band +
                   covariate_effect_sizes[1] * e.revenue_band +
                   covariate_effect_sizes[2] * (e.us_flag ? 1.0 : 0.0) +
                   covariate_effect_sizes[3] * static_cast<int>(e.contagion);
    if (auto s = sector_effects.find(e.sector); s != sector_effects.end()) shift += s->second;
    const double t = e.year - first_year;
    shift += trend_slope * t + trend_amplitude * std::sin(2.0 * 3.14159265358979323846 * t / trend_period);
    p.mu *= std::exp(shift);
    return p;
  }
};

/// Mixture of a lognormal body truncated to (0, u] and u + GPD tail draws.
/// Deterministic in cfg.seed.
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto& types = advisen_types();
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& t : types) {
    double w = 1.0;
    if (auto it = cfg.risk_weights.find(t); it != cfg.risk_weights.end()) w = it->second;
    if (!cfg.include_other && t == "Undetermined/Other") w = 0.0;
    total += w;
    cum.push_back(total);
  }
  if (!(total > 0.0)) throw ConfigError("risk_weights sum to zero");

  const LognormalDist body(cfg.body_meanlog, cfg.body_sdlog);
  const double u = cfg.implied_threshold();
  const double fu = 1.0 - cfg.tail_fraction;
  Rng rng(cfg.seed);
  Dataset d;
  d.first_year = cfg.first_year;
  d.last_year = cfg.last_year;
  d.provenance = "synthetic(" + std::to_string(cfg.seed) + ")";
  const std::size_t n_years = static_cast<std::size_t>(cfg.last_year - cfg.first_year + 1);
  d.events.reserve(n_years * cfg.n_per_year);
  std::size_t serial = 0;
  for (int year = cfg.first_year; year <= cfg.last_year; ++year) {
    for (std::size_t i = 0; i < cfg.n_per_year; ++i) {
      LossEvent e;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "E%09zu", serial++);
      e.id = buf;
      e.year = year;
      const double r = rng.uniform() * total;
      const auto k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), r) - cum.begin());
      e.risk_type = types[std::min(k, types.size() - 1)];
      e.sector = cfg.sectors[rng.below(cfg.sectors.size())];
      e.employees_band = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.employees_levels)));
      e.revenue_band = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.revenue_levels)));
      e.us_flag = rng.bernoulli(0.6);
      e.contagion = static_cast<Contagion>(rng.below(3));
      const bool tail = rng.uniform() < cfg.tail_fraction;
      const double v = rng.uniform();
      if (tail) {
        e.loss = u + gpd_quantile_upper(v, cfg.tail_for(e));
      } else {
        e.loss = body.quantile(v * fu);
      }
      d.events.push_back(std::move(e));
    }
  }
  return d;
}

// Descriptive statistics -----------------------------------------------------

struct StatsRow {
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  std::optional<double> st_dev;  // undefined for n < 2
  std::optional<double> skew;
  std::optional<double> kurt;  // excess kurtosis
};

/// Moments of `x`. st_dev uses the n-1 denominator; skew = m3/s^3 and
/// kurt = m4/s^4 - 3 with central moments m_k over n and s the n-1 sd.
inline StatsRow summarize(std::string group, std::vector<double> x) {
  StatsRow row;
  row.group = std::move(group);
  row.n = x.size();
  if (x.empty()) {
    row.mean = row.median = std::nan("");
    return row;
  }
  const double n = static_cast<double>(x.size());
  double sum = 0.0;
  for (double v : x) sum += v;
  row.mean = sum / n;
  std::sort(x.begin(), x.end());
  const std::size_t h = x.size() / 2;
  row.median = x.size() % 2 ? x[h] : 0.5 * (x[h - 1] + x[h]);
  if (x.size() < 2) return row;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double c = v - row.mean;
    m2 += c * c;
    m3 += c * c * c;
    m4 += c * c * c * c;
  }
  const double s = std::sqrt(m2 / (n - 1.0));
  row.st_dev = s;
  if (s > 0.0) {
    row.skew = (m3 / n) / (s * s * s);
    row.kurt = (m4 / n) / (s * s * s * s) - 3.0;
  }
  return row;
}

/// One row per category of `assignment`, in vocabulary order. Events without a
/// label are skipped.
inline std::vector<StatsRow> descriptive_stats(const Dataset& d, const ClassificationAssignment& assignment) {
  std::vector<std::vector<double>> groups(assignment.categories.size());
  for (const auto& e : d.events) {
    if (auto k = assignment.index_of(e.id)) groups[*k].push_back(e.loss);
  }
  std::vector<StatsRow> rows;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    rows.push_back(summarize(assignment.categories[k], std::move(groups[k])));
  }
  return rows;
}

inline void write_stats(std::ostream& out, const std::vector<StatsRow>& rows) {
  out << "group,n,mean,median,st_dev,skew,kurt\n";
  for (const auto& r : rows) {
    csv::write_row(out, {r.group, std::to_string(r.n), csv::format(r.mean), csv::format(r.median),
                         csv::format(r.st_dev), csv::format(r.skew), csv::format(r.kurt)});
  }
}

}  // namespace taxoscore
