#pragma once

// Subcommand bodies behind tools/taxoscore. Each writes its artifacts under an
// output directory and returns the manifest describing them.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "csv.hpp"
#include "harness.hpp"

namespace taxoscore::cli {

inline constexpr const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

/// Config hash, seed, tool version, input digests and output digests. Output
/// paths are relative to the output directory; nothing time-dependent is kept
/// so reruns produce identical manifests.
class Manifest {
 public:
  Manifest(std::string command, const fs::path& out_dir) : out_dir_(out_dir) {
    j_["tool"] = "taxoscore";
    j_["version"] = kToolVersion;
    j_["command"] = std::move(command);
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
  }

  void set_config(const json& config) {
    j_["config_hash"] = csv::digest(config.dump());
    j_["config"] = config;
  }
  void set_seed(std::uint64_t seed) { j_["seed"] = seed; }
  void add_input(const std::string& path) { j_["inputs"][path] = csv::digest(csv::read_file(path)); }
  void set(const std::string& key, json value) { j_[key] = std::move(value); }
  const json& data() const { return j_; }
  const fs::path& out_dir() const { return out_dir_; }

  /// Writes `text` to out_dir/rel and records its digest.
  void write(const std::string& rel, const std::string& text) {
    const fs::path p = out_dir_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
    j_["outputs"][rel] = csv::digest(text);
  }
  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  void save() const {
    fs::create_directories(out_dir_);
    std::ofstream out(out_dir_ / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in " + out_dir_.string());
    out << j_.dump(2) << '\n';
  }

 private:
  fs::path out_dir_;
  json j_;
};

inline json error_json(const std::string& kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

// Windows and thresholds -------------------------------------------------------------------

/// "2008-2012" -> training window testing 2013.
inline Window parse_window(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw ConfigError("window must look like FIRST-LAST, got '" + s + "'");
  const auto a = csv::parse_int(s.substr(0, dash));
  const auto b = csv::parse_int(s.substr(dash + 1));
  if (!a || !b || *b < *a) throw ConfigError("bad window '" + s + "'");
  return {static_cast<int>(*a), static_cast<int>(*b), static_cast<int>(*b) + 1};
}

inline json window_json(const Window& w) {
  return {{"train_first", w.train_first}, {"train_last", w.train_last}, {"test_year", w.test_year}};
}

inline Window window_from_json(const json& j) {
  return {j.at("train_first").get<int>(), j.at("train_last").get<int>(), j.at("test_year").get<int>()};
}

/// Seed of a window's random stages; shared by `run` and the single-step commands.
inline std::uint64_t window_seed(const PipelineConfig& cfg, const Window& w) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(w.test_year));
}

inline ThresholdResult window_threshold(const Dataset& universe, const Window& w, const PipelineConfig& cfg) {
  std::vector<double> losses;
  for (const auto& e : universe.slice_years(w.train_first, w.train_last).events) losses.push_back(e.loss);
  auto r = select_threshold(losses, cfg.threshold_grid, cfg.n_boot, derive_seed(window_seed(cfg, w), 0));
  if (!r.valid) throw FitError("no-valid-threshold: every candidate quantile was rejected");
  return r;
}

inline Dataset load_dataset(const std::string& path) {
  auto lr = load_events(path);
  if (!lr.rejections.empty()) {
    log::warn(path + ": " + std::to_string(lr.rejections.size()) + " rows rejected, first: row " +
              std::to_string(lr.rejections.front().row) + " " + lr.rejections.front().reason);
  }
  if (lr.dataset.events.empty()) throw SchemaError(path + ": no valid events");
  return lr.dataset;
}

// Score files ------------------------------------------------------------------------------

inline std::string series_column(const SeriesKey& k) {
  return std::string(kind_name(k.first)) + "_" + weight_name(k.second);
}

inline SeriesKey series_from_column(const std::string& c) {
  const auto us = c.find('_');
  if (us == std::string::npos) throw SchemaError("bad score column '" + c + "'");
  return {kind_from_name(c.substr(0, us)), weight_from_name(c.substr(us + 1))};
}

/// Wide CSV: event_id, loss, prob, mu, tau, then one column per scored series.
inline std::string score_csv(const SchemeWindowResult& r, const std::vector<SeriesKey>& keys) {
  std::ostringstream out;
  std::vector<std::string> header{"event_id", "loss", "prob", "mu", "tau"};
  std::vector<SeriesKey> present;
  for (const auto& k : keys) {
    if (r.scores.count(k)) {
      present.push_back(k);
      header.push_back(series_column(k));
    }
  }
  csv::write_row(out, header);
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    std::vector<std::string> row{r.ids[i], csv::format(r.losses[i]), csv::format(r.probs[i]),
                                 csv::format(r.forecasts[i].mu), csv::format(r.forecasts[i].tau)};
    for (const auto& k : present) row.push_back(csv::format(r.scores.at(k)[i]));
    csv::write_row(out, row);
  }
  return out.str();
}

inline json score_meta(const SchemeWindowResult& r, const Window& w, double u, const PipelineConfig& cfg) {
  json series = json::array();
  for (const auto& [k, _] : r.scores) {
    ScoreSeries s;
    s.scheme = r.scheme;
    s.kind = k.first;
    s.weight = k.second;
    s.beta = k.first == ScoreKind::ES || k.first == ScoreKind::rES ? cfg.beta : 1.0;
    s.ref = cfg.ref;
    json m = s.metadata();
    m["column"] = series_column(k);
    series.push_back(m);
  }
  return {{"scheme", r.scheme}, {"window", window_json(w)}, {"test_year", w.test_year}, {"threshold", u},
          {"n", r.ids.size()},  {"series", series},         {"notes", r.notes}};
}

struct ScoreFile {
  json meta;
  SchemeScores scores;
  std::vector<GpdParams> forecasts;
};

inline ScoreFile read_score_file(const std::string& path) {
  ScoreFile f;
  try {
    f.meta = json::parse(csv::read_file(path + ".json"));
  } catch (const json::exception& e) {
    throw SchemaError(path + ".json: " + e.what());
  }
  f.scores.scheme = f.meta.at("scheme").get<std::string>();
  f.scores.test_year = f.meta.at("test_year").get<int>();
  const auto t = csv::read(path);
  const auto need = [&](const std::string& c) {
    const auto i = t.column(c);
    if (!i) throw SchemaError(path + ": missing column " + c);
    return *i;
  };
  const auto ci = need("event_id"), cl = need("loss"), cm = need("mu"), ct = need("tau");
  std::vector<std::pair<SeriesKey, std::size_t>> cols;
  for (std::size_t c = 5; c < t.header.size(); ++c) cols.emplace_back(series_from_column(t.header[c]), c);
  for (const auto& row : t.rows) {
    const auto num = [&](std::size_t c) {
      const auto v = csv::parse_double(row.at(c));
      if (!v) throw SchemaError(path + ": unparseable value '" + row.at(c) + "'");
      return *v;
    };
    f.scores.ids.push_back(row.at(ci));
    f.scores.losses.push_back(num(cl));
    f.forecasts.push_back({num(cm), num(ct)});
    for (const auto& [k, c] : cols) f.scores.scores[k].push_back(num(c));
  }
  return f;
}

// Table writers ----------------------------------------------------------------------------

inline const std::vector<WeightKind>& table_weights() {
  static const std::vector<WeightKind> w{WeightKind::Equal, WeightKind::Center, WeightKind::LeftTail,
                                         WeightKind::RightTail};
  return w;
}

inline std::vector<ScoreKind> kinds_of(const std::vector<SeriesKey>& keys) {
  std::vector<ScoreKind> out;
  for (const auto& [k, _] : keys) {
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

/// Pooled statistics, schemes x weights per score kind.
inline std::string overall_table(const ComparisonTables& t) {
  std::ostringstream out;
  csv::write_row(out, {"kind", "scheme", "Equal", "Center", "Left", "Right"});
  for (auto kind : kinds_of(t.keys)) {
    for (const auto& scheme : t.schemes) {
      std::vector<std::string> row{kind_name(kind), scheme};
      for (auto w : table_weights()) {
        const auto& cells = t.cells.at(scheme);
        const auto it = cells.find({kind, w});
        row.push_back(it != cells.end() && it->second.overall ? csv::format(it->second.overall->statistic) : "NA");
      }
      csv::write_row(out, row);
    }
  }
  return out.str();
}

/// Share of test years rejecting at 5%, schemes x weights per score kind.
inline std::string yearly_table(const ComparisonTables& t) {
  std::ostringstream out;
  csv::write_row(out, {"kind", "scheme", "Equal", "Center", "Left", "Right"});
  for (auto kind : kinds_of(t.keys)) {
    for (const auto& scheme : t.schemes) {
      std::vector<std::string> row{kind_name(kind), scheme};
      for (auto w : table_weights()) {
        const auto& cells = t.cells.at(scheme);
        const auto it = cells.find({kind, w});
        row.push_back(it != cells.end() && it->second.proportion ? csv::format(it->second.proportion->proportion())
                                                                   : "NA");
      }
      csv::write_row(out, row);
    }
  }
  return out.str();
}

/// Long format: one row per (scheme, kind, weight, test year), year "all" for the pooled test.
inline std::string detail_table(const ComparisonTables& t) {
  std::ostringstream out;
  csv::write_row(out, {"scheme", "kind", "weight", "test_year", "n", "mean_diff", "statistic", "p_value",
                       "reject_05", "reject_01"});
  auto emit = [&](const std::string& scheme, const SeriesKey& k, const std::string& year, const TestResult& r) {
    csv::write_row(out, {scheme, kind_name(k.first), weight_name(k.second), year, std::to_string(r.n),
                         csv::format(r.mean_diff), csv::format(r.statistic), csv::format(r.p_value),
                         r.reject_05 ? "1" : "0", r.reject_01 ? "1" : "0"});
  };
  for (const auto& scheme : t.schemes) {
    for (const auto& k : t.keys) {
      const auto& cell = t.cells.at(scheme).at(k);
      for (const auto& [year, r] : cell.yearly) emit(scheme, k, std::to_string(year), r);
      if (cell.overall) emit(scheme, k, "all", *cell.overall);
    }
  }
  return out.str();
}

/// Trimmed-statistic paths against the 1.64 reference line.
inline std::string trimmed_table(const ComparisonTables& t) {
  std::ostringstream out;
  csv::write_row(out, {"scheme", "kind", "weight", "quantile", "retained", "statistic", "critical"});
  for (const auto& scheme : t.schemes) {
    for (const auto& k : t.keys) {
      for (const auto& tr : t.cells.at(scheme).at(k).trimmed) {
        csv::write_row(out, {scheme, kind_name(k.first), weight_name(k.second), csv::format(tr.q),
                             std::to_string(tr.retained), csv::format(tr.test.statistic), csv::format(kCritical05)});
      }
    }
  }
  return out.str();
}

inline std::string frequency_table(const std::vector<FrequencyRow>& rows) {
  std::ostringstream out;
  csv::write_row(out, {"scheme", "test_year", "statistic", "df", "p_value", "note"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.scheme, r.test_year ? std::to_string(r.test_year) : "all",
                         r.defined ? csv::format(r.result.statistic) : "NA",
                         r.defined ? std::to_string(r.result.df) : "NA",
                         r.defined ? csv::format(r.result.p_value) : "NA", r.note});
  }
  return out.str();
}

inline std::string threshold_table(const PipelineResult& res) {
  std::ostringstream out;
  csv::write_row(out, {"train_first", "train_last", "test_year", "quantile", "threshold", "mu", "tau", "n_train",
                       "n_train_exceed", "n_test", "n_test_below", "error"});
  for (const auto& w : res.windows) {
    const bool t = w.threshold.valid;
    csv::write_row(out, {std::to_string(w.window.train_first), std::to_string(w.window.train_last),
                         std::to_string(w.window.test_year), t ? csv::format(w.threshold.quantile) : "NA",
                         t ? csv::format(w.threshold.u) : "NA", t ? csv::format(w.threshold.params.mu) : "NA",
                         t ? csv::format(w.threshold.params.tau) : "NA", std::to_string(w.n_train),
                         std::to_string(w.n_train_exceed), std::to_string(w.n_test),
                         std::to_string(w.n_test_below), w.error});
  }
  return out.str();
}

inline std::string power_csv(const PowerTable& t) {
  std::ostringstream out;
  std::vector<std::string> header{"size"};
  for (auto w : t.weights) header.push_back(weight_name(w));
  csv::write_row(out, header);
  for (std::size_t i = 0; i < t.sizes.size(); ++i) {
    std::vector<std::string> row{std::to_string(t.sizes[i])};
    for (double p : t.power[i]) row.push_back(csv::format(p));
    csv::write_row(out, row);
  }
  return out.str();
}

inline json power_meta(const PowerTable& t, const std::string& scheme, const std::string& baseline, int year) {
  return {{"scheme", scheme},   {"baseline", baseline},     {"test_year", year},       {"kind", kind_name(t.kind)},
          {"n_rep", t.n_rep}, {"universe", t.universe}, {"level", kCritical05}};
}

/// Yearly average score per scheme and series, with log10 for plotting.
inline std::string yearly_means_table(const std::vector<SchemeScores>& all) {
  std::ostringstream out;
  csv::write_row(out, {"scheme", "kind", "weight", "test_year", "n", "mean", "log10_mean"});
  for (const auto& s : all) {
    for (const auto& [k, v] : s.scores) {
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      csv::write_row(out, {s.scheme, kind_name(k.first), weight_name(k.second), std::to_string(s.test_year),
                           std::to_string(v.size()), csv::format(m), m > 0.0 ? csv::format(std::log10(m)) : "NA"});
    }
  }
  return out.str();
}

// Commands ---------------------------------------------------------------------------------

inline Manifest cmd_simulate(const RunConfig& cfg, const json& raw, const fs::path& out) {
  Manifest m("simulate", out);
  m.set_config(raw);
  m.set_seed(cfg.seed);
  const Dataset d = synth_generate(cfg.simulate);
  std::ostringstream s;
  write_events(s, d);
  m.write("events.csv", s.str());
  m.save();
  return m;
}

inline Manifest cmd_classify(const RunConfig& cfg, const json& raw, const std::string& data_path,
                             const std::string& scheme, const Window& w, const fs::path& out) {
  Manifest m("classify", out);
  m.set_config(raw);
  m.set_seed(cfg.seed);
  m.add_input(data_path);
  const Dataset d = pipeline_universe(load_dataset(data_path));
  const SchemeKind kind = scheme_from_name(scheme);
  const Dataset train = d.slice_years(w.train_first, w.train_last);
  double u = 0.0;
  if (kind == SchemeKind::Tail || kind == SchemeKind::Body) u = window_threshold(d, w, cfg.pipeline).u;
  const Classifier c = build_classifier(kind, train, u, cfg.pipeline, window_seed(cfg.pipeline, w));
  fs::create_directories(out);
  write_assignment((out / "assignment.csv").string(), d, c.apply(d), c);
  m.set("outputs", {{"assignment.csv", csv::digest(csv::read_file((out / "assignment.csv").string()))},
                    {"assignment.csv.json", csv::digest(csv::read_file((out / "assignment.csv.json").string()))}});
  m.set("window", window_json(w));
  m.save();
  return m;
}

inline Manifest cmd_fit(const RunConfig& cfg, const json& raw, const std::string& data_path,
                        const std::string& assignment_path, const Window& w, const fs::path& out) {
  Manifest m("fit", out);
  m.set_config(raw);
  m.set_seed(cfg.seed);
  m.add_input(data_path);
  m.add_input(assignment_path);
  m.add_input(assignment_path + ".json");
  const Dataset d = pipeline_universe(load_dataset(data_path));
  const auto la = read_assignment(assignment_path);
  const ThresholdResult th = window_threshold(d, w, cfg.pipeline);
  std::vector<LossEvent> exc;
  std::vector<double> y;
  std::vector<std::string> labels;
  for (const auto& e : d.slice_years(w.train_first, w.train_last).events) {
    if (e.loss <= th.u) continue;
    if (!la.assignment.contains(e.id)) throw AlignmentError("assignment has no label for event " + e.id);
    exc.push_back(e);
    y.push_back(e.loss - th.u);
    labels.push_back(la.assignment.label_of(e.id));
  }
  const auto design = build_design(exc, labels, la.assignment.categories, cfg.pipeline.covariates);
  const auto model = fit(y, design, cfg.pipeline.covariates, th.u);
  m.write_json("model.json", {{"scheme", la.assignment.scheme_name},
                              {"window", window_json(w)},
                              {"threshold", th},
                              {"classifier", la.rule},
                              {"model", model}});
  m.save();
  return m;
}

struct LoadedModel {
  std::string scheme;
  Window window;
  ThresholdResult threshold;
  Classifier classifier;
  FittedSeverityModel model;
};

inline LoadedModel read_model_file(const std::string& path) {
  try {
    const auto j = json::parse(csv::read_file(path));
    return {j.at("scheme").get<std::string>(), window_from_json(j.at("window")),
            j.at("threshold").get<ThresholdResult>(), j.at("classifier").get<Classifier>(),
            j.at("model").get<FittedSeverityModel>()};
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline std::vector<LossEvent> test_exceedances(const Dataset& universe, const Window& w, double u) {
  std::vector<LossEvent> out;
  for (const auto& e : universe.slice_years(w.test_year, w.test_year).events) {
    if (e.loss > u) out.push_back(e);
  }
  return out;
}

inline Manifest cmd_score(const RunConfig& cfg, const json& raw, const std::string& model_path,
                          const std::string& data_path, const fs::path& out) {
  Manifest m("score", out);
  m.set_config(raw);
  m.set_seed(cfg.seed);
  m.add_input(model_path);
  m.add_input(data_path);
  const auto lm = read_model_file(model_path);
  const Dataset d = pipeline_universe(load_dataset(data_path));
  SchemeWindowResult r;
  r.scheme = lm.scheme;
  r.classifier = lm.classifier;
  r.model = lm.model;
  score_test_year(r, test_exceedances(d, lm.window, lm.threshold.u), lm.threshold.u, cfg.pipeline);
  m.write("scores.csv", score_csv(r, series_keys(cfg.pipeline)));
  m.write_json("scores.csv.json", score_meta(r, lm.window, lm.threshold.u, cfg.pipeline));
  m.save();
  return m;
}

inline void write_comparison(Manifest& m, const ComparisonTables& t, const std::string& prefix) {
  m.write(prefix + "overall_" + t.baseline + ".csv", overall_table(t));
  m.write(prefix + "yearly_" + t.baseline + ".csv", yearly_table(t));
  m.write(prefix + "detail_" + t.baseline + ".csv", detail_table(t));
}

inline std::vector<SeriesKey> union_keys(const std::vector<SchemeScores>& all) {
  std::vector<SeriesKey> keys;
  for (const auto& s : all) {
    for (const auto& [k, _] : s.scores) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

/// `scores` and `baseline_scores` are score files; the baseline files fix the
/// baseline scheme and must cover every test year of the scheme files.
inline Manifest cmd_test(const std::vector<std::string>& scores, const std::vector<std::string>& baseline_scores,
                         const fs::path& out) {
  Manifest m("test", out);
  if (baseline_scores.empty()) throw ConfigError("test needs at least one baseline score file");
  std::vector<SchemeScores> all;
  std::string baseline;
  for (const auto& p : baseline_scores) {
    m.add_input(p);
    auto f = read_score_file(p);
    if (!baseline.empty() && f.scores.scheme != baseline) {
      throw AlignmentError("baseline score files mix schemes " + baseline + " and " + f.scores.scheme);
    }
    baseline = f.scores.scheme;
    all.push_back(std::move(f.scores));
  }
  for (const auto& p : scores) {
    m.add_input(p);
    auto f = read_score_file(p);
    if (f.scores.scheme == baseline) throw AlignmentError(p + " holds baseline scores");
    all.push_back(std::move(f.scores));
  }
  const auto t = compare_series(all, baseline, union_keys(all));
  write_comparison(m, t, "tests_");
  m.write("trimmed_" + baseline + ".csv", trimmed_table(t));
  m.save();
  return m;
}

/// Forecasts of the model and the baseline for the model's test-year exceedances.
inline PowerTable power_from_models(const LoadedModel& model, const LoadedModel& base, const Dataset& universe,
                                    const PowerConfig& pc, const PipelineConfig& cfg, std::uint64_t seed) {
  if (model.window.test_year != base.window.test_year || model.threshold.u != base.threshold.u) {
    throw AlignmentError("power: models were fitted on different windows or thresholds");
  }
  std::vector<GpdParams> truth, baseline;
  for (const auto& e : test_exceedances(universe, model.window, model.threshold.u)) {
    const auto p = predict_params(model.model, e, model.classifier.classify(e).value_or(""));
    const auto q = predict_params(base.model, e, base.classifier.classify(e).value_or(""));
    truth.push_back({p.p1, p.p2});
    baseline.push_back({q.p1, q.p2});
  }
  PowerOptions opt;
  opt.kind = pc.kind;
  opt.beta = cfg.beta;
  opt.ref = cfg.ref;
  return power_study(truth, baseline, pc.sizes, pc.n_rep, pc.n_draws_per_event, seed, opt);
}

inline Manifest cmd_power(const RunConfig& cfg, const json& raw, const std::string& model_path,
                          const std::string& baseline_path, const std::string& data_path, const fs::path& out) {
  Manifest m("power", out);
  m.set_config(raw);
  m.set_seed(cfg.seed);
  m.add_input(model_path);
  m.add_input(baseline_path);
  m.add_input(data_path);
  const PowerConfig pc = cfg.power.value_or(PowerConfig{});
  const auto model = read_model_file(model_path);
  const auto base = read_model_file(baseline_path);
  const Dataset d = pipeline_universe(load_dataset(data_path));
  const auto t = power_from_models(model, base, d, pc, cfg.pipeline, derive_seed(cfg.seed, 3));
  m.write("power.csv", power_csv(t));
  m.write_json("power.csv.json", power_meta(t, model.scheme, base.scheme, model.window.test_year));
  m.save();
  return m;
}

/// Plot data from a manifest listing score files under "scores" (as written
/// by `run`): yearly mean scores and the trimmed-statistic paths per baseline.
inline Manifest cmd_report(const std::string& manifest_path, const fs::path& out) {
  Manifest m("report", out);
  m.add_input(manifest_path);
  json src;
  try {
    src = json::parse(csv::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw SchemaError(manifest_path + ": " + e.what());
  }
  if (!src.contains("scores")) throw SchemaError(manifest_path + ": no score files listed");
  const fs::path base_dir = fs::path(manifest_path).parent_path();
  std::vector<SchemeScores> all;
  for (const auto& rel : src.at("scores")) {
    all.push_back(read_score_file((base_dir / rel.get<std::string>()).string()).scores);
  }
  m.write("figures/yearly_mean_scores.csv", yearly_means_table(all));
  const auto keys = union_keys(all);
  const auto trims = src.contains("config") && src["config"].contains("pipeline") &&
                             src["config"]["pipeline"].contains("trim_quantiles")
                         ? src["config"]["pipeline"]["trim_quantiles"].get<std::vector<double>>()
                         : default_trim_quantiles();
  for (const auto& b : src.value("baselines", std::vector<std::string>{})) {
    m.write("figures/trimmed_" + b + ".csv", trimmed_table(compare_series(all, b, keys, trims)));
  }
  m.save();
  return m;
}

/// Whole experiment in one process: simulate (or load `data_path`), run every
/// window and scheme, write thresholds, models, scores, test tables, frequency
/// tables, the optional power table and the plot data.
inline Manifest cmd_run(const RunConfig& cfg, const json& raw, const fs::path& out,
                        const std::string& data_path = "") {
  Manifest m("run", out);
  m.set_config(raw);
  m.set_seed(cfg.seed);
  Dataset data;
  if (data_path.empty()) {
    data = synth_generate(cfg.simulate);
    std::ostringstream s;
    write_events(s, data);
    m.write("events.csv", s.str());
  } else {
    m.add_input(data_path);
    data = load_dataset(data_path);
  }
  const PipelineResult res = run_pipeline(data, cfg.pipeline);
  m.write("thresholds.csv", threshold_table(res));
  json score_files = json::array();
  json window_errors = json::array();
  const auto keys = series_keys(cfg.pipeline);
  for (const auto& wr : res.windows) {
    const std::string year = std::to_string(wr.window.test_year);
    if (!wr.ok) {
      window_errors.push_back({{"test_year", wr.window.test_year}, {"error", wr.error}});
      continue;
    }
    for (auto kind : cfg.pipeline.schemes) {
      const auto& sr = wr.schemes.at(scheme_name(kind));
      if (!sr.ok) {
        window_errors.push_back({{"test_year", wr.window.test_year}, {"scheme", sr.scheme}, {"error", sr.error}});
        continue;
      }
      const std::string stem = year + "_" + sr.scheme;
      m.write_json("models/" + stem + ".json", {{"scheme", sr.scheme},
                                                {"window", window_json(wr.window)},
                                                {"threshold", wr.threshold},
                                                {"classifier", sr.classifier},
                                                {"model", sr.model}});
      m.write("scores/" + stem + ".csv", score_csv(sr, keys));
      m.write_json("scores/" + stem + ".csv.json", score_meta(sr, wr.window, wr.threshold.u, cfg.pipeline));
      score_files.push_back("scores/" + stem + ".csv");
    }
  }
  m.set("scores", score_files);
  m.set("errors", window_errors);
  m.set("baselines", cfg.baselines);
  for (const auto& b : cfg.baselines) {
    if (std::find(cfg.pipeline.schemes.begin(), cfg.pipeline.schemes.end(), scheme_from_name(b)) ==
        cfg.pipeline.schemes.end()) {
      throw ConfigError("baseline " + b + " is not among the pipeline schemes");
    }
    const auto t = compare_schemes(res, b);
    write_comparison(m, t, "tables/tests_");
    m.write("tables/frequency_" + b + ".csv", frequency_table(frequency_tables(res, b)));
  }
  if (cfg.power) {
    const auto& pc = *cfg.power;
    const WindowResult* wr = nullptr;
    for (const auto& w : res.windows) {
      if (w.ok && (pc.test_year == 0 || w.window.test_year == pc.test_year)) {
        wr = &w;
        break;
      }
    }
    if (!wr) throw ConfigError("power: no successful window for the requested test year");
    const auto& a = wr->schemes.at(pc.scheme);
    const auto& b = wr->schemes.at(pc.baseline);
    if (!a.ok || !b.ok) throw FitError("power: scheme or baseline failed in " + std::to_string(wr->window.test_year));
    const LoadedModel ma{a.scheme, wr->window, wr->threshold, a.classifier, a.model};
    const LoadedModel mb{b.scheme, wr->window, wr->threshold, b.classifier, b.model};
    const Dataset universe = pipeline_universe(data);
    const auto t = power_from_models(ma, mb, universe, pc, cfg.pipeline, derive_seed(cfg.seed, 3));
    m.write("tables/power.csv", power_csv(t));
    m.write_json("tables/power.csv.json", power_meta(t, pc.scheme, pc.baseline, wr->window.test_year));
  }
  // Figure data from the in-memory scores, identical to what `report` derives from the files.
  const auto all = collect_scores(res);
  m.write("figures/yearly_mean_scores.csv", yearly_means_table(all));
  for (const auto& b : cfg.baselines) {
    m.write("figures/trimmed_" + b + ".csv",
            trimmed_table(compare_series(all, b, union_keys(all), cfg.pipeline.trim_quantiles)));
  }
  m.save();
  return m;
}

}  // namespace taxoscore::cli
