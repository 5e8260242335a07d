#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("taxoscore_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(TAXOSCORE_CLI) + " " + args + " >" + (work_dir() / "stdout.txt").string() +
                          " 2>" + (work_dir() / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path write_config(const std::string& name, const json& j) {
  const auto p = work_dir() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json small_config() {
  return json::parse(R"({
    "seed": 5,
    "threads": 1,
    "simulate": {"n_per_year": 120, "first_year": 2008, "last_year": 2014,
                 "default_tail": {"mu": 1.0, "tau": 1.5}},
    "pipeline": {"schemes": ["Advisen", "Random", "None"], "score_kinds": ["CRPS", "rCRPS"],
                 "weights": ["Equal", "Right"], "n_boot": 200, "covariates": {"knot_grid": [0]}},
    "baselines": ["None"],
    "power": {"scheme": "Advisen", "baseline": "None", "sizes": [20, 50], "n_rep": 1000,
              "n_draws_per_event": 10, "kind": "rCRPS"}
  })");
}

}  // namespace

TEST(Cli, RunWritesTablesAndIsReproducible) {
  const auto cfg = write_config("small.json", small_config());
  const auto a = work_dir() / "run_a", b = work_dir() / "run_b";
  ASSERT_EQ(run("run --config " + cfg.string() + " --out " + a.string()), 0) << slurp(work_dir() / "stderr.txt");
  ASSERT_EQ(run("run --config " + cfg.string() + " --out " + b.string()), 0) << slurp(work_dir() / "stderr.txt");
  for (const char* f : {"manifest.json", "events.csv", "thresholds.csv", "tables/tests_overall_None.csv",
                        "tables/frequency_None.csv", "tables/power.csv"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  const auto m = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(m.at("seed"), 5);
}

TEST(Cli, SeedOverrideChangesOutputs) {
  const auto cfg = write_config("small.json", small_config());
  const auto a = work_dir() / "sim_a", b = work_dir() / "sim_b";
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 6 --out " + b.string()), 0);
  EXPECT_NE(slurp(a / "events.csv"), slurp(b / "events.csv"));
}

TEST(Cli, StepwiseCommandsChain) {
  const auto cfg = write_config("small.json", small_config()).string();
  const auto sim = work_dir() / "step_sim";
  ASSERT_EQ(run("simulate --config " + cfg + " --out " + sim.string()), 0);
  const auto events = (sim / "events.csv").string();
  for (const char* scheme : {"Advisen", "None"}) {
    for (const char* window : {"2008-2012", "2009-2013"}) {
      const auto dir = work_dir() / (std::string("step_") + scheme + "_" + window);
      ASSERT_EQ(run("classify --config " + cfg + " --data " + events + " --scheme " + scheme + " --window " + window +
                    " --out " + (dir / "cls").string()),
                0)
          << slurp(work_dir() / "stderr.txt");
      ASSERT_EQ(run("fit --config " + cfg + " --data " + events + " --assignment " + (dir / "cls/assignment.csv").string() +
                    " --window " + window + " --out " + (dir / "fit").string()),
                0)
          << slurp(work_dir() / "stderr.txt");
      ASSERT_EQ(run("score --config " + cfg + " --model " + (dir / "fit/model.json").string() + " --data " + events +
                    " --out " + (dir / "score").string()),
                0)
          << slurp(work_dir() / "stderr.txt");
    }
  }
  auto scores = [&](const char* scheme, const char* window) {
    return (work_dir() / (std::string("step_") + scheme + "_" + window) / "score/scores.csv").string();
  };
  const auto out = work_dir() / "step_test";
  ASSERT_EQ(run("test --scores " + scores("Advisen", "2008-2012") + " " + scores("Advisen", "2009-2013") +
                " --baseline " + scores("None", "2008-2012") + " " + scores("None", "2009-2013") + " --out " +
                out.string()),
            0)
      << slurp(work_dir() / "stderr.txt");
  EXPECT_TRUE(fs::exists(out / "tests_overall_None.csv"));

  // A scheme year the baseline does not cover is an alignment error.
  const auto bad = work_dir() / "step_bad";
  EXPECT_EQ(run("test --scores " + scores("Advisen", "2009-2013") + " --baseline " + scores("None", "2008-2012") +
                " --out " + bad.string()),
            1);
  const auto err = json::parse(slurp(bad / "error.json"));
  EXPECT_EQ(err.at("error").at("kind"), "alignment");
}

TEST(Cli, UnknownConfigKeyIsAConfigError) {
  auto j = small_config();
  j["pipeline"]["window_lenght"] = 4;
  const auto cfg = write_config("typo.json", j);
  const auto out = work_dir() / "typo";
  EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + out.string()), 1);
  const auto err = json::parse(slurp(out / "error.json"));
  EXPECT_EQ(err.at("error").at("kind"), "config");
  EXPECT_NE(err.at("error").at("message").get<std::string>().find("window_lenght"), std::string::npos);
  // The same object goes to stderr.
  EXPECT_EQ(json::parse(slurp(work_dir() / "stderr.txt")), err);
}

TEST(Cli, MissingDataColumnIsASchemaError) {
  const auto csv = work_dir() / "bad.csv";
  std::ofstream(csv) << "id,year,loss\n1,2010,3.5\n";
  const auto out = work_dir() / "schema";
  EXPECT_EQ(run("classify --data " + csv.string() + " --scheme None --window 2008-2012 --out " + out.string()), 1);
  EXPECT_EQ(json::parse(slurp(out / "error.json")).at("error").at("kind"), "schema");
}

TEST(Cli, UsageErrorsExitNonZero) {
  EXPECT_NE(run(""), 0);
  EXPECT_NE(run("nonsense"), 0);
  EXPECT_EQ(run("--version"), 0);
}

TEST(Cli, DemoConfigParses) {
  // The shipped demo config must be accepted (only simulate, which is quick).
  const auto out = work_dir() / "demo_sim";
  ASSERT_EQ(run(std::string("simulate --config ") + TAXOSCORE_DEMO + " --out " + out.string()), 0)
      << slurp(work_dir() / "stderr.txt");
  EXPECT_TRUE(fs::exists(out / "events.csv"));
}
