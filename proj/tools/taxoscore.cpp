#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "taxoscore/commands.hpp"
#include "taxoscore/taxoscore.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace taxoscore;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = -1;
  std::string out = "out";
};

void add_common(CLI::App* sub, Common& c, bool needs_config = true) {
  auto* opt = sub->add_option("--config", c.config, "run config (JSON)");
  if (needs_config) opt->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--threads", c.threads, "worker cap (0 = hardware)");
  sub->add_option("--out", c.out, "output directory");
}

/// Raw config JSON with the --seed override applied; `{}` when no file is given.
json raw_config(const Common& c) {
  json j = json::object();
  if (!c.config.empty()) {
    try {
      j = json::parse(csv::read_file(c.config));
    } catch (const json::exception& e) {
      throw ConfigError(c.config + ": " + e.what());
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

RunConfig resolve(const Common& c, json& raw) {
  raw = raw_config(c);
  RunConfig cfg = parse_run_config(raw);
  set_max_threads(c.threads >= 0 ? static_cast<unsigned>(c.threads) : static_cast<unsigned>(cfg.threads));
  return cfg;
}

void write_error(const std::string& out, const json& err) {
  std::cerr << err.dump() << '\n';
  if (out.empty()) return;
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream f(fs::path(out) / "error.json", std::ios::binary);
  if (f) f << err.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"taxoscore: severity models and scoring-rule comparisons of cyber risk classifications"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kToolVersion);

  Common c;
  std::string data, scheme, window, assignment, model, baseline_model, manifest;
  std::vector<std::string> scores, baseline_scores;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic loss dataset");
  add_common(sim, c);

  auto* cls = app.add_subcommand("classify", "build a scheme on a training window and label every event");
  add_common(cls, c, false);
  cls->add_option("--data", data, "events CSV")->required()->check(CLI::ExistingFile);
  cls->add_option("--scheme", scheme, "scheme name")->required();
  cls->add_option("--window", window, "training years, e.g. 2008-2012")->required();

  auto* fit = app.add_subcommand("fit", "fit the GPD regression on a window's exceedances");
  add_common(fit, c, false);
  fit->add_option("--data", data, "events CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--assignment", assignment, "assignment CSV from classify")->required()->check(CLI::ExistingFile);
  fit->add_option("--window", window, "training years, e.g. 2008-2012")->required();

  auto* score = app.add_subcommand("score", "score a fitted model on its test-year exceedances");
  add_common(score, c, false);
  score->add_option("--model", model, "model JSON from fit")->required()->check(CLI::ExistingFile);
  score->add_option("--data", data, "events CSV")->required()->check(CLI::ExistingFile);

  auto* test = app.add_subcommand("test", "compare score files against a baseline");
  add_common(test, c, false);
  test->add_option("--scores", scores, "scheme score CSVs")->required()->check(CLI::ExistingFile);
  test->add_option("--baseline", baseline_scores, "baseline score CSVs")->required()->check(CLI::ExistingFile);

  auto* power = app.add_subcommand("power", "simulated power of the comparison test");
  add_common(power, c, false);
  power->add_option("--model", model, "model JSON of the scheme")->required()->check(CLI::ExistingFile);
  power->add_option("--baseline-model", baseline_model, "model JSON of the baseline")
      ->required()
      ->check(CLI::ExistingFile);
  power->add_option("--data", data, "events CSV")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "plot data from a run manifest");
  add_common(report, c, false);
  report->add_option("--manifest", manifest, "manifest.json written by run")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "the whole rolling-window experiment");
  add_common(run, c);
  run->add_option("--data", data, "events CSV instead of simulating")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    json raw;
    const fs::path out = c.out;
    if (sim->parsed()) {
      cli::cmd_simulate(resolve(c, raw), raw, out);
    } else if (cls->parsed()) {
      const RunConfig cfg = resolve(c, raw);
      cli::cmd_classify(cfg, raw, data, scheme, cli::parse_window(window), out);
    } else if (fit->parsed()) {
      const RunConfig cfg = resolve(c, raw);
      cli::cmd_fit(cfg, raw, data, assignment, cli::parse_window(window), out);
    } else if (score->parsed()) {
      const RunConfig cfg = resolve(c, raw);
      cli::cmd_score(cfg, raw, model, data, out);
    } else if (test->parsed()) {
      resolve(c, raw);
      cli::cmd_test(scores, baseline_scores, out);
    } else if (power->parsed()) {
      const RunConfig cfg = resolve(c, raw);
      cli::cmd_power(cfg, raw, model, baseline_model, data, out);
    } else if (report->parsed()) {
      resolve(c, raw);
      cli::cmd_report(manifest, out);
    } else if (run->parsed()) {
      const RunConfig cfg = resolve(c, raw);
      cli::cmd_run(cfg, raw, out, data);
    }
  } catch (const Error& e) {
    write_error(c.out, cli::error_json(e.kind(), e.what()));
    return 1;
  } catch (const std::exception& e) {
    write_error(c.out, cli::error_json("internal", e.what()));
    return 1;
  }
  return 0;
}
