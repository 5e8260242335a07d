#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "classifications.hpp"
#include "data_model.hpp"
#include "evt_gpd.hpp"
#include "gamlss.hpp"
#include "inference.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "scoring.hpp"

namespace taxoscore {

struct Window {
  int train_first = 0;
  int train_last = 0;
  int test_year = 0;
};

struct WindowPlan {
  std::vector<Window> windows;
};

/// Rolling windows of `length` training years, advancing by `step`; each
/// window forecasts the year after its last training year.
inline WindowPlan make_window_plan(int first_year, int last_year, int length = 5, int step = 1) {
  if (length < 1 || step < 1) throw ConfigError("window length and step must be positive");
  if (last_year - first_year + 1 < length + 1) {
    throw ConfigError("span " + std::to_string(first_year) + "-" + std::to_string(last_year) +
                      " too short for a " + std::to_string(length) + "-year window plus a test year");
  }
  WindowPlan plan;
  for (int start = first_year; start + length <= last_year; start += step) {
    plan.windows.push_back({start, start + length - 1, start + length});
  }
  return plan;
}

struct PipelineConfig {
  int window_length = 5;
  int step = 1;
  std::vector<SchemeKind> schemes{SchemeKind::Advisen, SchemeKind::Romanosky, SchemeKind::Eling,
                                  SchemeKind::Tail,    SchemeKind::Body,      SchemeKind::FrequencySeverity,
                                  SchemeKind::TypeImportance, SchemeKind::Random, SchemeKind::None};
  std::vector<ScoreKind> score_kinds{ScoreKind::CRPS, ScoreKind::twCRPS, ScoreKind::ES, ScoreKind::rCRPS,
                                     ScoreKind::rES};
  std::vector<WeightKind> weights{WeightKind::Equal, WeightKind::Center, WeightKind::LeftTail,
                                  WeightKind::RightTail};
  double beta = 0.5;
  RefKind ref = RefKind::StandardNormal;
  std::uint64_t seed = 1;
  std::size_t n_boot = 200;
  std::vector<double> threshold_grid = default_threshold_grid();
  std::size_t random_k = 4;
  double merge_alpha = 0.05;
  CovariateSpec covariates;
  RiskMatrixSpec matrix;
  std::vector<double> trim_quantiles = default_trim_quantiles();
};

using SeriesKey = std::pair<ScoreKind, WeightKind>;

inline std::vector<SeriesKey> series_keys(const PipelineConfig& cfg) {
  std::vector<SeriesKey> keys;
  for (auto k : cfg.score_kinds) {
    for (auto w : cfg.weights) {
      if (k == ScoreKind::CRPS && w != WeightKind::Equal) continue;
      keys.emplace_back(k, w);
    }
  }
  return keys;
}

struct SchemeWindowResult {
  std::string scheme;
  bool ok = false;
  std::string error;
  Classifier classifier;
  FittedSeverityModel model;
  std::vector<std::string> ids;       // scored test-year exceedances
  std::vector<double> losses;         // their losses
  std::vector<double> probs;          // forecast cdf at the exceedance
  std::vector<GpdParams> forecasts;   // forecast parameters
  std::map<SeriesKey, std::vector<double>> scores;  // finite series only
  std::vector<std::string> notes;
  std::vector<double> test_counts;    // test-year events per category
};

struct WindowResult {
  Window window;
  bool ok = false;
  std::string error;
  ThresholdResult threshold;
  std::size_t n_train = 0;
  std::size_t n_train_exceed = 0;
  std::size_t n_test = 0;
  std::size_t n_test_below = 0;  // test-year events at or below u, not scored
  std::map<std::string, SchemeWindowResult> schemes;
};

struct PipelineResult {
  PipelineConfig config;
  WindowPlan plan;
  std::vector<WindowResult> windows;
};

/// Events scored by every scheme: positive losses, "Undetermined/Other" removed.
inline Dataset pipeline_universe(const Dataset& d) {
  Dataset out = filter_positive_losses(d);
  out.events.erase(std::remove_if(out.events.begin(), out.events.end(),
                                  [](const LossEvent& e) { return e.risk_type == kOtherType; }),
                   out.events.end());
  return out;
}

inline Classifier build_classifier(SchemeKind kind, const Dataset& train, double threshold, const PipelineConfig& cfg,
                                   std::uint64_t window_seed) {
  switch (kind) {
    case SchemeKind::Advisen:
    case SchemeKind::Romanosky:
    case SchemeKind::Eling:
    case SchemeKind::None:
      return static_classifier(kind);
    case SchemeKind::Random:
      return random_classifier(cfg.random_k, derive_seed(window_seed, 1));
    case SchemeKind::FrequencySeverity:
      return frequency_severity_classifier(train, cfg.matrix);
    case SchemeKind::TypeImportance:
      return type_importance_classifier(train, cfg.matrix);
    case SchemeKind::Tail:
    case SchemeKind::Body: {
      ResidualClassificationOptions opt;
      opt.alpha = cfg.merge_alpha;
      opt.seed = derive_seed(window_seed, 2);
      return residual_classifier(train, kind == SchemeKind::Tail ? Family::GPD : Family::Lognormal, threshold, opt);
    }
  }
  throw ConfigError("unknown scheme");
}

namespace detail {
struct PairCacheKey {
  double mu, tau;
  bool operator<(const PairCacheKey& o) const { return std::tie(mu, tau) < std::tie(o.mu, o.tau); }
};
}  // namespace detail

/// Scores one fitted scheme on the test-year exceedances of a window.
inline void score_test_year(SchemeWindowResult& r, const std::vector<LossEvent>& test_exc, double u,
                            const PipelineConfig& cfg) {
  const std::size_t n = test_exc.size();
  r.ids.clear();
  r.losses.clear();
  r.probs.assign(n, 0.0);
  r.forecasts.assign(n, {});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = test_exc[i];
    r.ids.push_back(e.id);
    r.losses.push_back(e.loss);
    const auto label = r.classifier.classify(e).value_or("");
    std::vector<std::string> warn;
    const auto p = predict_params(r.model, e, label, &warn);
    if (!warn.empty()) r.notes.push_back(e.id + ": " + warn.front());
    r.forecasts[i] = {p.p1, p.p2};
    y[i] = e.loss - u;
    r.probs[i] = GpdDist(p.p1, p.p2).cdf(y[i]);
  }
  for (const auto& [kind, w] : series_keys(cfg)) {
    std::vector<double> s(n);
    try {
      switch (kind) {
        case ScoreKind::CRPS:
          for (std::size_t i = 0; i < n; ++i) s[i] = crps(GpdDist(r.forecasts[i]), y[i]);
          break;
        case ScoreKind::twCRPS:
          for (std::size_t i = 0; i < n; ++i) s[i] = tw_crps(GpdDist(r.forecasts[i]), y[i], w);
          break;
        case ScoreKind::ES: {
          std::map<detail::PairCacheKey, double> pair_cache;
          for (std::size_t i = 0; i < n; ++i) {
            const GpdDist f(r.forecasts[i]);
            check_moment(f, cfg.beta, w);
            const detail::PairCacheKey key{f.params().mu, f.params().tau};
            auto it = pair_cache.find(key);
            if (it == pair_cache.end()) it = pair_cache.emplace(key, expected_pair_power(f, cfg.beta, w)).first;
            s[i] = expected_abs_power(f, y[i], cfg.beta, w) - 0.5 * it->second;
          }
          break;
        }
        case ScoreKind::rCRPS:
          s = ResidualScorer{cfg.ref, w, 1.0}.crps(r.probs);
          break;
        case ScoreKind::rES:
          s = ResidualScorer{cfg.ref, w, cfg.beta}.es(r.probs);
          break;
      }
    } catch (const MomentConditionError& e) {
      r.notes.push_back(std::string(kind_name(kind)) + "/" + weight_name(w) + " dropped: " + e.what());
      continue;
    }
    if (!std::all_of(s.begin(), s.end(), [](double v) { return std::isfinite(v); })) {
      r.notes.push_back(std::string(kind_name(kind)) + "/" + weight_name(w) + " dropped: non-finite score");
      continue;
    }
    r.scores[{kind, w}] = std::move(s);
  }
}

/// Runs every window: bootstrap threshold on the training years, then for each
/// scheme the classifier, the GPD-GAMLSS fit on exceedances and the scores of
/// the test-year exceedances. Stage errors are stored on their window.
inline PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& cfg) {
  PipelineResult res;
  res.config = cfg;
  const Dataset d = pipeline_universe(data);
  res.plan = make_window_plan(data.first_year, data.last_year, cfg.window_length, cfg.step);
  res.windows.resize(res.plan.windows.size());
  parallel_for(res.plan.windows.size(), [&](std::size_t wi) {
    const Window win = res.plan.windows[wi];
    WindowResult& wr = res.windows[wi];
    wr.window = win;
    const std::uint64_t wseed = derive_seed(cfg.seed, static_cast<std::uint64_t>(win.test_year));
    try {
      const Dataset train = d.slice_years(win.train_first, win.train_last);
      const Dataset test = d.slice_years(win.test_year, win.test_year);
      wr.n_train = train.size();
      wr.n_test = test.size();
      std::vector<double> losses;
      for (const auto& e : train.events) losses.push_back(e.loss);
      wr.threshold = select_threshold(losses, cfg.threshold_grid, cfg.n_boot, derive_seed(wseed, 0));
      if (!wr.threshold.valid) throw FitError("no-valid-threshold: every candidate quantile was rejected");
      const double u = wr.threshold.u;
      std::vector<LossEvent> train_exc, test_exc;
      std::vector<double> y;
      for (const auto& e : train.events) {
        if (e.loss > u) {
          train_exc.push_back(e);
          y.push_back(e.loss - u);
        }
      }
      for (const auto& e : test.events) {
        if (e.loss > u) test_exc.push_back(e);
      }
      wr.n_train_exceed = train_exc.size();
      wr.n_test_below = test.size() - test_exc.size();
      for (auto kind : cfg.schemes) {
        SchemeWindowResult sr;
        sr.scheme = scheme_name(kind);
        try {
          sr.classifier = build_classifier(kind, train, u, cfg, wseed);
          std::vector<std::string> labels;
          for (const auto& e : train_exc) labels.push_back(sr.classifier.classify(e).value_or(""));
          const auto design = build_design(train_exc, labels, sr.classifier.categories, cfg.covariates);
          sr.model = fit(y, design, cfg.covariates, u);
          sr.test_counts.assign(sr.classifier.categories.size(), 0.0);
          for (const auto& e : test.events) {
            if (auto lab = sr.classifier.classify(e)) {
              const auto it = std::find(sr.classifier.categories.begin(), sr.classifier.categories.end(), *lab);
              sr.test_counts[static_cast<std::size_t>(it - sr.classifier.categories.begin())] += 1.0;
            }
          }
          score_test_year(sr, test_exc, u, cfg);
          sr.ok = true;
        } catch (const Error& e) {
          sr.error = std::string(e.kind()) + ": " + e.what();
          log::warn("window " + std::to_string(win.test_year) + " scheme " + sr.scheme + ": " + sr.error);
        }
        wr.schemes[sr.scheme] = std::move(sr);
      }
      wr.ok = true;
    } catch (const Error& e) {
      wr.error = std::string(e.kind()) + ": " + e.what();
      log::warn("window " + std::to_string(win.test_year) + ": " + wr.error);
    }
  });
  return res;
}

// Comparison tables ------------------------------------------------------------------------

/// Scores of one scheme in one test year, the unit compared by the tests.
struct SchemeScores {
  std::string scheme;
  int test_year = 0;
  std::vector<std::string> ids;
  std::vector<double> losses;
  std::map<SeriesKey, std::vector<double>> scores;
};

struct ComparisonCell {
  std::optional<TestResult> overall;          // pooled over test years
  std::vector<std::pair<int, TestResult>> yearly;
  std::optional<RejectionProportion> proportion;
  std::vector<TrimmedResult> trimmed;
};

struct ComparisonTables {
  std::string baseline;
  std::vector<std::string> schemes;
  std::vector<SeriesKey> keys;
  std::map<std::string, std::map<SeriesKey, ComparisonCell>> cells;
};

/// Tests every scheme against `baseline` for every key: the statistic takes
/// the baseline as model 1 and the scheme as model 2, so large values favour
/// the scheme. A year where either side lacks a series is skipped for that key.
inline ComparisonTables compare_series(const std::vector<SchemeScores>& all, const std::string& baseline,
                                       const std::vector<SeriesKey>& keys,
                                       const std::vector<double>& trim_quantiles = default_trim_quantiles()) {
  ComparisonTables t;
  t.baseline = baseline;
  t.keys = keys;
  std::map<int, const SchemeScores*> base;
  std::map<std::string, std::map<int, const SchemeScores*>> by_scheme;
  for (const auto& s : all) {
    if (s.scheme == baseline) {
      base[s.test_year] = &s;
    } else {
      if (!by_scheme.count(s.scheme)) t.schemes.push_back(s.scheme);
      by_scheme[s.scheme][s.test_year] = &s;
    }
  }
  if (base.empty()) throw AlignmentError("compare: no scores for baseline " + baseline);
  for (const auto& scheme : t.schemes) {
    const auto& years = by_scheme[scheme];
    for (const auto& [year, s] : years) {
      const auto it = base.find(year);
      if (it == base.end()) throw AlignmentError("compare: baseline has no scores for " + std::to_string(year));
      if (it->second->ids != s->ids) {
        throw AlignmentError("compare: event universes differ for " + scheme + " in " + std::to_string(year));
      }
    }
    for (const auto& key : keys) {
      ComparisonCell cell;
      std::vector<double> pooled_base, pooled_scheme, pooled_loss;
      for (const auto& [year, s] : years) {
        const auto& b = *base.at(year);
        const auto bs = b.scores.find(key);
        const auto ss = s->scores.find(key);
        if (bs == b.scores.end() || ss == s->scores.end() || bs->second.size() < 2) continue;
        cell.yearly.emplace_back(year, forecast_comparison_test(bs->second, ss->second));
        pooled_base.insert(pooled_base.end(), bs->second.begin(), bs->second.end());
        pooled_scheme.insert(pooled_scheme.end(), ss->second.begin(), ss->second.end());
        pooled_loss.insert(pooled_loss.end(), s->losses.begin(), s->losses.end());
      }
      if (pooled_base.size() >= 2) {
        cell.overall = forecast_comparison_test(pooled_base, pooled_scheme);
        cell.trimmed = trimmed_test(pooled_loss, pooled_base, pooled_scheme, trim_quantiles);
      }
      if (!cell.yearly.empty()) {
        std::vector<TestResult> rs;
        for (const auto& [_, r] : cell.yearly) rs.push_back(r);
        cell.proportion = yearly_rejection_proportions(rs);
      }
      t.cells[scheme][key] = std::move(cell);
    }
  }
  return t;
}

/// Successful (window, scheme) units of a pipeline run, in plan and config order.
inline std::vector<SchemeScores> collect_scores(const PipelineResult& res) {
  std::vector<SchemeScores> out;
  for (const auto& wr : res.windows) {
    if (!wr.ok) continue;
    for (auto kind : res.config.schemes) {
      const auto it = wr.schemes.find(scheme_name(kind));
      if (it == wr.schemes.end() || !it->second.ok) continue;
      const auto& s = it->second;
      out.push_back({s.scheme, wr.window.test_year, s.ids, s.losses, s.scores});
    }
  }
  return out;
}

/// Scheme comparison over a pipeline run. A window where the baseline or the
/// scheme failed is left out of that scheme's tables.
inline ComparisonTables compare_schemes(const PipelineResult& res, const std::string& baseline) {
  std::vector<SchemeScores> all;
  for (const auto& wr : res.windows) {
    if (!wr.ok) continue;
    const auto b = wr.schemes.find(baseline);
    if (b == wr.schemes.end()) throw AlignmentError("compare_schemes: baseline " + baseline + " was not run");
    if (!b->second.ok) continue;
    for (auto kind : res.config.schemes) {
      const auto it = wr.schemes.find(scheme_name(kind));
      if (it == wr.schemes.end() || !it->second.ok) continue;
      const auto& s = it->second;
      all.push_back({s.scheme, wr.window.test_year, s.ids, s.losses, s.scores});
    }
  }
  return compare_series(all, baseline, series_keys(res.config), res.config.trim_quantiles);
}

struct FrequencyRow {
  std::string scheme;
  int test_year = 0;  // 0 for the pooled row
  ChiSquaredResult result;
  bool defined = true;
  std::string note;
};

/// Chi-squared comparison of each scheme's test-year category counts with a
/// baseline over the same K categories: "None" expects N/K per category;
/// "Random" draws multinomial(N, 1/K) counts from the window seed.
inline std::vector<FrequencyRow> frequency_tables(const PipelineResult& res, const std::string& baseline) {
  std::vector<FrequencyRow> rows;
  for (auto kind : res.config.schemes) {
    const std::string scheme = scheme_name(kind);
    if (kind == SchemeKind::None || kind == SchemeKind::Random) continue;
    std::vector<double> pooled_a, pooled_b;
    bool poolable = true;  // dynamic schemes may change K between windows
    for (const auto& wr : res.windows) {
      if (!wr.ok) continue;
      const auto it = wr.schemes.find(scheme);
      if (it == wr.schemes.end() || !it->second.ok) continue;
      const auto& a = it->second.test_counts;
      double total = 0.0;
      for (double v : a) total += v;
      std::vector<double> b(a.size(), 0.0);
      if (baseline == "Random") {
        Rng rng(derive_seed(derive_seed(res.config.seed, static_cast<std::uint64_t>(wr.window.test_year)), 3));
        for (std::size_t i = 0; i < static_cast<std::size_t>(total); ++i) b[rng.below(b.size())] += 1.0;
      } else {
        for (auto& v : b) v = total / static_cast<double>(b.size());
      }
      if (pooled_a.empty()) {
        pooled_a.assign(a.size(), 0.0);
        pooled_b.assign(a.size(), 0.0);
      }
      if (pooled_a.size() != a.size()) {
        poolable = false;
      } else {
        for (std::size_t k = 0; k < a.size(); ++k) {
          pooled_a[k] += a[k];
          pooled_b[k] += b[k];
        }
      }
      FrequencyRow row{scheme, wr.window.test_year, {}, true, {}};
      try {
        row.result = frequency_chi2(a, b);
      } catch (const Error& e) {
        row.defined = false;
        row.note = e.what();
      }
      rows.push_back(row);
    }
    if (!pooled_a.empty()) {
      FrequencyRow row{scheme, 0, {}, true, {}};
      if (!poolable) {
        row.defined = false;
        row.note = "category count changes between windows";
        rows.push_back(row);
        continue;
      }
      try {
        row.result = frequency_chi2(pooled_a, pooled_b);
      } catch (const Error& e) {
        row.defined = false;
        row.note = e.what();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

// Power study ------------------------------------------------------------------------------

struct PowerTable {
  std::vector<std::size_t> sizes;
  std::vector<WeightKind> weights;
  std::vector<std::vector<double>> power;  // [size][weight]
  std::size_t n_rep = 0;
  std::size_t universe = 0;
  ScoreKind kind = ScoreKind::rCRPS;
};

struct PowerOptions {
  std::vector<WeightKind> weights{WeightKind::Equal, WeightKind::Center, WeightKind::LeftTail,
                                  WeightKind::RightTail};
  ScoreKind kind = ScoreKind::rCRPS;  // rCRPS or rES
  double beta = 0.5;
  RefKind ref = RefKind::StandardNormal;
};

/// Simulated universe: n_draws_per_event draws from each event's `truth`
/// forecast, each scored under `truth` and `baseline`. Subsets of every size
/// are resampled with replacement n_rep times and tested (baseline as model 1,
/// truth as model 2); cells are rejection fractions at the 5% level.
inline PowerTable power_study(const std::vector<GpdParams>& truth, const std::vector<GpdParams>& baseline,
                              const std::vector<std::size_t>& sizes, std::size_t n_rep,
                              std::size_t n_draws_per_event, std::uint64_t seed, const PowerOptions& opt = {}) {
  if (truth.size() != baseline.size() || truth.empty()) throw AlignmentError("power_study: forecast lists differ");
  if (sizes.empty()) throw DomainError("power_study: no sizes");
  if (n_rep < 1000) throw DomainError("power_study: n_rep must be >= 1000");
  if (opt.kind != ScoreKind::rCRPS && opt.kind != ScoreKind::rES) {
    throw ConfigError("power_study scores residual kinds only");
  }
  const std::size_t m = truth.size() * n_draws_per_event;
  std::vector<double> p_truth(m), p_base(m);
  Rng rng(seed);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const GpdDist t(truth[i]), b(baseline[i]);
    for (std::size_t j = 0; j < n_draws_per_event; ++j) {
      const double y = t.draw(rng);
      p_truth[i * n_draws_per_event + j] = t.cdf(y);
      p_base[i * n_draws_per_event + j] = b.cdf(y);
    }
  }
  PowerTable table;
  table.sizes = sizes;
  table.weights = opt.weights;
  table.n_rep = n_rep;
  table.universe = m;
  table.kind = opt.kind;
  table.power.assign(sizes.size(), std::vector<double>(opt.weights.size(), 0.0));
  for (std::size_t wi = 0; wi < opt.weights.size(); ++wi) {
    const ResidualScorer scorer{opt.ref, opt.weights[wi], opt.kind == ScoreKind::rES ? opt.beta : 1.0};
    const auto st = opt.kind == ScoreKind::rCRPS ? scorer.crps(p_truth) : scorer.es(p_truth);
    const auto sb = opt.kind == ScoreKind::rCRPS ? scorer.crps(p_base) : scorer.es(p_base);
    std::vector<double> diff(m);
    for (std::size_t k = 0; k < m; ++k) diff[k] = sb[k] - st[k];
    for (std::size_t si = 0; si < sizes.size(); ++si) {
      const std::size_t n = sizes[si];
      std::vector<char> rej(n_rep, 0);
      parallel_for(n_rep, [&](std::size_t r) {
        Rng local(derive_seed(seed, (si + 1) * 1000003ULL + r));
        std::vector<double> a(n), b(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) a[k] = diff[local.below(m)];
        rej[r] = forecast_comparison_test(a, b).reject_05;
      });
      table.power[si][wi] = static_cast<double>(std::count(rej.begin(), rej.end(), 1)) / static_cast<double>(n_rep);
    }
  }
  return table;
}

}  // namespace taxoscore
