#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data_model.hpp"
#include "error.hpp"
#include "harness.hpp"

namespace taxoscore {

struct PowerConfig {
  std::string scheme = "TypeImportance";
  std::string baseline = "None";
  int test_year = 0;  // 0: first test year of the plan
  std::vector<std::size_t> sizes{20, 50, 100, 500, 1000, 2000, 5000};
  std::size_t n_rep = 10000;
  std::size_t n_draws_per_event = 1000;
  ScoreKind kind = ScoreKind::rCRPS;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;
  SynthConfig simulate;
  PipelineConfig pipeline;
  std::vector<std::string> baselines{"None", "Random"};
  std::optional<PowerConfig> power;
};

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline GpdParams read_gpd(const json& j, const std::string& where) {
  check_keys(j, where, {"mu", "tau"});
  GpdParams p;
  read(j, "mu", p.mu, where);
  read(j, "tau", p.tau, where);
  return p;
}

inline SynthConfig parse_synth(const json& j, std::uint64_t seed) {
  const std::string w = "simulate";
  check_keys(j, w,
             {"n_per_year", "first_year", "last_year", "body_meanlog", "body_sdlog", "tail_fraction", "tail_params",
              "default_tail", "risk_weights", "covariate_effect_sizes", "sector_effects", "sectors",
              "employees_levels", "revenue_levels", "trend_slope", "trend_amplitude", "trend_period",
              "include_other"});
  SynthConfig c;
  c.seed = seed;
  read(j, "n_per_year", c.n_per_year, w);
  read(j, "first_year", c.first_year, w);
  read(j, "last_year", c.last_year, w);
  read(j, "body_meanlog", c.body_meanlog, w);
  read(j, "body_sdlog", c.body_sdlog, w);
  read(j, "tail_fraction", c.tail_fraction, w);
  if (j.contains("tail_params")) {
    for (const auto& [k, v] : j.at("tail_params").items()) c.tail_params[k] = read_gpd(v, w + ".tail_params." + k);
  }
  if (j.contains("default_tail")) c.default_tail = read_gpd(j.at("default_tail"), w + ".default_tail");
  read(j, "risk_weights", c.risk_weights, w);
  read(j, "covariate_effect_sizes", c.covariate_effect_sizes, w);
  read(j, "sector_effects", c.sector_effects, w);
  read(j, "sectors", c.sectors, w);
  read(j, "employees_levels", c.employees_levels, w);
  read(j, "revenue_levels", c.revenue_levels, w);
  read(j, "trend_slope", c.trend_slope, w);
  read(j, "trend_amplitude", c.trend_amplitude, w);
  read(j, "trend_period", c.trend_period, w);
  read(j, "include_other", c.include_other, w);
  c.validate();
  return c;
}

inline CovariateSpec parse_covariates(const json& j) {
  const std::string w = "pipeline.covariates";
  check_keys(j, w,
             {"scheme", "sector", "employees_band", "revenue_band", "us_flag", "contagion", "knot_grid",
              "penalty_grid"});
  CovariateSpec c;
  read(j, "scheme", c.scheme, w);
  read(j, "sector", c.sector, w);
  read(j, "employees_band", c.employees_band, w);
  read(j, "revenue_band", c.revenue_band, w);
  read(j, "us_flag", c.us_flag, w);
  read(j, "contagion", c.contagion, w);
  read(j, "knot_grid", c.knot_grid, w);
  read(j, "penalty_grid", c.time_spline.penalty_grid, w);
  if (c.knot_grid.empty()) throw ConfigError(w + ".knot_grid must not be empty");
  for (double g : c.time_spline.penalty_grid) {
    if (!(g > 0.0)) throw ConfigError(w + ".penalty_grid entries must be positive");
  }
  return c;
}

template <typename E, typename F>
std::vector<E> read_enum_list(const json& j, const char* key, F from_name, std::vector<E> dflt, const std::string& w) {
  if (!j.contains(key)) return dflt;
  std::vector<std::string> names;
  read(j, key, names, w);
  std::vector<E> out;
  for (const auto& n : names) out.push_back(from_name(n));
  if (out.empty()) throw ConfigError(w + "." + key + " must not be empty");
  return out;
}

inline PipelineConfig parse_pipeline(const json& j, std::uint64_t seed) {
  const std::string w = "pipeline";
  check_keys(j, w,
             {"window_length", "step", "schemes", "score_kinds", "weights", "beta", "ref_dist", "n_boot",
              "threshold_grid", "random_k", "merge_alpha", "covariates", "matrix_breaks", "trim_quantiles"});
  PipelineConfig c;
  c.seed = seed;
  read(j, "window_length", c.window_length, w);
  read(j, "step", c.step, w);
  c.schemes = read_enum_list(j, "schemes", scheme_from_name, c.schemes, w);
  c.score_kinds = read_enum_list(j, "score_kinds", kind_from_name, c.score_kinds, w);
  c.weights = read_enum_list(j, "weights", weight_from_name, c.weights, w);
  read(j, "beta", c.beta, w);
  check_beta(c.beta);
  if (j.contains("ref_dist")) c.ref = ref_from_name(j.at("ref_dist").get<std::string>());
  read(j, "n_boot", c.n_boot, w);
  if (c.n_boot < 200) throw ConfigError(w + ".n_boot must be >= 200");
  read(j, "threshold_grid", c.threshold_grid, w);
  for (double q : c.threshold_grid) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError(w + ".threshold_grid entries must lie in (0,1)");
  }
  read(j, "random_k", c.random_k, w);
  if (c.random_k < 1) throw ConfigError(w + ".random_k must be >= 1");
  read(j, "merge_alpha", c.merge_alpha, w);
  if (j.contains("covariates")) c.covariates = parse_covariates(j.at("covariates"));
  read(j, "matrix_breaks", c.matrix.breaks, w);
  c.matrix.validate();
  read(j, "trim_quantiles", c.trim_quantiles, w);
  return c;
}

inline PowerConfig parse_power(const json& j) {
  const std::string w = "power";
  check_keys(j, w, {"scheme", "baseline", "test_year", "sizes", "n_rep", "n_draws_per_event", "kind"});
  PowerConfig c;
  read(j, "scheme", c.scheme, w);
  read(j, "baseline", c.baseline, w);
  scheme_from_name(c.scheme);
  scheme_from_name(c.baseline);
  read(j, "test_year", c.test_year, w);
  read(j, "sizes", c.sizes, w);
  read(j, "n_rep", c.n_rep, w);
  read(j, "n_draws_per_event", c.n_draws_per_event, w);
  if (j.contains("kind")) c.kind = kind_from_name(j.at("kind").get<std::string>());
  if (c.sizes.empty()) throw ConfigError(w + ".sizes must not be empty");
  if (c.n_rep < 1000) throw ConfigError(w + ".n_rep must be >= 1000");
  if (c.n_draws_per_event < 1) throw ConfigError(w + ".n_draws_per_event must be >= 1");
  if (c.kind != ScoreKind::rCRPS && c.kind != ScoreKind::rES) throw ConfigError(w + ".kind must be rCRPS or rES");
  return c;
}

}  // namespace config_detail

/// Parses a run config. Unknown keys and out-of-range values raise ConfigError.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  using namespace config_detail;
  check_keys(j, "config", {"seed", "threads", "simulate", "pipeline", "baselines", "power"});
  RunConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "threads", c.threads, "config");
  if (c.threads < 0) throw ConfigError("config.threads must be >= 0");
  c.simulate = parse_synth(j.value("simulate", nlohmann::json::object()), derive_seed(c.seed, 1));
  c.pipeline = parse_pipeline(j.value("pipeline", nlohmann::json::object()), derive_seed(c.seed, 2));
  read(j, "baselines", c.baselines, "config");
  for (const auto& b : c.baselines) {
    if (b != "None" && b != "Random") throw ConfigError("config.baselines entries must be None or Random");
  }
  if (j.contains("power")) c.power = parse_power(j.at("power"));
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace taxoscore
