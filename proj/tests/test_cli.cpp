#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "heparl/cli.hpp"

using namespace heparl;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int rc = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = cli::run(std::move(args), out, err);
  return {rc, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("heparl-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> json_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST_CASE("defaults command round-trips") {
  const auto r = run_cli({"defaults"});
  REQUIRE(r.rc == 0);
  CHECK(r.err.empty());

  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("seed") == 1);
  CHECK(j.at("models").size() == 9);
  CHECK(j.at("hyper").at("lr").is_null());
  CHECK(j.at("selection").at("preference") == "aggressive");

  const cli::RunConfig back = cli::run_config_from_json(j);
  CHECK(cli::to_json(back) == j);
  CHECK(r.out == cli::to_json(cli::RunConfig{}).dump(2) + "\n");
}

TEST_CASE("help exits zero") {
  const auto r = run_cli({"--help"});
  CHECK(r.rc == 0);
  CHECK(r.out.find("generate") != std::string::npos);
  CHECK(r.out.find("assess") != std::string::npos);
}

TEST_CASE("generate is deterministic and rerun-safe") {
  const fs::path a = fresh_dir("gen-a");
  const fs::path b = fresh_dir("gen-b");

  auto r = run_cli({"generate", "--out", a.string(), "--patients", "12", "--seed", "9"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("12 patients") != std::string::npos);
  REQUIRE(fs::exists(a / "cohort.jsonl"));
  REQUIRE(fs::exists(a / "ground_truth.json"));
  REQUIRE(fs::exists(a / "generate-manifest.json"));

  r = run_cli({"generate", "--out", b.string(), "--patients", "12", "--seed", "9"});
  REQUIRE(r.rc == 0);
  CHECK(cli::read_file((a / "cohort.jsonl").string()) ==
        cli::read_file((b / "cohort.jsonl").string()));

  SECTION("a different seed changes the cohort") {
    const fs::path c = fresh_dir("gen-c");
    r = run_cli({"generate", "--out", c.string(), "--patients", "12", "--seed", "10"});
    REQUIRE(r.rc == 0);
    CHECK(cli::read_file((a / "cohort.jsonl").string()) !=
          cli::read_file((c / "cohort.jsonl").string()));
  }

  SECTION("a rerun with the same inputs is a no-op unless forced") {
    r = run_cli({"generate", "--out", a.string(), "--patients", "12", "--seed", "9"});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("up to date") != std::string::npos);

    r = run_cli({"generate", "--out", a.string(), "--patients", "12", "--seed", "9",
                 "--force"});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("up to date") == std::string::npos);
    CHECK(cli::read_file((a / "cohort.jsonl").string()) ==
          cli::read_file((b / "cohort.jsonl").string()));
  }

  SECTION("changing a parameter invalidates the manifest") {
    r = run_cli({"generate", "--out", a.string(), "--patients", "13", "--seed", "9"});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("13 patients") != std::string::npos);
  }
}

TEST_CASE("invalid inputs exit with code 2") {
  const fs::path dir = fresh_dir("invalid");

  SECTION("zero patients in a config file") {
    const fs::path cfg = dir / "cfg.json";
    cli::write_file(cfg.string(), R"({"synth": {"patients": 0}})");
    const auto r = run_cli({"generate", "--config", cfg.string(), "--out", dir.string()});
    CHECK(r.rc == 2);
    CHECK(r.err.find("error:") != std::string::npos);
  }

  SECTION("unknown config key") {
    const fs::path cfg = dir / "cfg.json";
    cli::write_file(cfg.string(), R"({"bogus": 1})");
    const auto r = run_cli({"generate", "--config", cfg.string(), "--out", dir.string()});
    CHECK(r.rc == 2);
    CHECK(r.err.find("unknown key 'bogus'") != std::string::npos);
  }

  SECTION("the tabular learner rejects the continuous score") {
    const auto r = run_cli({"train", "--out", dir.string(), "--models", "cxsofa-ql"});
    CHECK(r.rc == 2);
    CHECK(r.err.find("cxsofa-ql") != std::string::npos);
  }

  SECTION("unknown preference") {
    const auto r = run_cli({"assess", "--out", dir.string(), "--pref", "bold"});
    CHECK(r.rc == 2);
  }

  SECTION("similarity threshold outside [0.5, 1]") {
    const auto r = run_cli({"assess", "--out", dir.string(), "--tau", "0.3"});
    CHECK(r.rc == 2);
  }

  SECTION("a subcommand is required") {
    const auto r = run_cli({});
    CHECK(r.rc == 2);
  }
}

TEST_CASE("missing or corrupt data exits with code 3") {
  const fs::path dir = fresh_dir("missing");

  SECTION("train without a cohort") {
    const auto r = run_cli({"train", "--out", dir.string()});
    CHECK(r.rc == 3);
    CHECK(r.err.find("cohort file not found") != std::string::npos);
  }

  SECTION("assess without checkpoints") {
    cli::write_file((dir / "eval.jsonl").string(), "");
    const auto r = run_cli({"assess", "--out", dir.string()});
    CHECK(r.rc == 3);
  }

  SECTION("outcomes without selected checkpoints") {
    const auto r = run_cli({"outcomes", "--out", dir.string()});
    CHECK(r.rc == 3);
    CHECK(r.err.find("run assess first") != std::string::npos);
  }

  SECTION("report on an empty directory") {
    const auto r = run_cli({"report", "--out", dir.string()});
    CHECK(r.rc == 3);
    CHECK(r.err.find("nothing to report") != std::string::npos);
  }

  SECTION("a corrupt checkpoint") {
    REQUIRE(run_cli({"generate", "--out", dir.string(), "--patients", "10", "--seed", "4"})
                .rc == 0);
    REQUIRE(run_cli({"train", "--out", dir.string(), "--seed", "4", "--models", "sofa-ql",
                     "--epochs", "2"})
                .rc == 0);
    cli::write_file((dir / "models" / "sofa-ql" / "checkpoint-1.json").string(),
                    "{\"not\": \"a checkpoint\"}");
    const auto r = run_cli({"assess", "--out", dir.string()});
    CHECK(r.rc == 3);
  }
}

TEST_CASE("pipeline produces assessment and outcome artifacts") {
  const fs::path dir = fresh_dir("pipeline");
  const std::string out = dir.string();

  REQUIRE(run_cli({"generate", "--out", out, "--patients", "30", "--seed", "11"}).rc == 0);

  auto r = run_cli({"train", "--out", out, "--seed", "11", "--jobs", "3", "--models",
                    "sofa-ql,cxsofa-dqn,cxsofa-bcq", "--epochs", "4", "--checkpoint-every",
                    "2", "--batch", "64", "--hidden", "8"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("train sofa-ql:") != std::string::npos);
  REQUIRE(fs::exists(dir / "train.jsonl"));
  REQUIRE(fs::exists(dir / "eval.jsonl"));

  // Tabular learners checkpoint every sweep, deep learners on the grid.
  CHECK(json_files(dir / "models" / "sofa-ql") ==
        std::vector<std::string>{"checkpoint-1.json", "checkpoint-2.json", "checkpoint-3.json",
                                 "checkpoint-4.json", "log.json", "manifest.json"});
  CHECK(json_files(dir / "models" / "cxsofa-dqn") ==
        std::vector<std::string>{"checkpoint-2.json", "checkpoint-4.json", "log.json",
                                 "manifest.json"});

  SECTION("training is rerun-safe per model") {
    r = run_cli({"train", "--out", out, "--seed", "11", "--jobs", "3", "--models",
                 "sofa-ql,cxsofa-dqn,cxsofa-bcq", "--epochs", "4", "--checkpoint-every", "2",
                 "--batch", "64", "--hidden", "8"});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("train sofa-ql: up to date") != std::string::npos);
    CHECK(r.out.find("train cxsofa-bcq: up to date") != std::string::npos);
  }

  r = run_cli({"assess", "--out", out, "--jobs", "1", "--tau-sweep", "0.6,0.7"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("winner:") != std::string::npos);

  const std::string tecm = cli::read_file((dir / "assess" / "tecm.csv").string());
  {
    std::istringstream lines(tecm);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "metric,cxsofa-bcq,cxsofa-dqn,sofa-ql");
    const std::vector<std::string> labels = {"OG", "OB", "WG", "WB", "sigma", "mu", "BE"};
    for (const auto& label : labels) {
      REQUIRE(std::getline(lines, line));
      CHECK(line.rfind(label + ",", 0) == 0);
    }
  }

  for (const std::string model : {"cxsofa-bcq", "cxsofa-dqn", "sofa-ql"}) {
    const auto report =
        nlohmann::json::parse(cli::read_file((dir / "assess" / "reports" / (model + ".json"))
                                                 .string()));
    CHECK(report.at("model") == model);
    CHECK(report.at("reports").is_array());
    CHECK(!report.at("reports").empty());

    // The selected file is a loadable checkpoint at the chosen epoch.
    const Checkpoint ck =
        load_checkpoint((dir / "assess" / "selected" / (model + ".json")).string());
    CHECK(ck.epoch == report.at("best_epoch").get<int>());
  }

  CHECK(fs::exists(dir / "assess" / "epochs.csv"));
  CHECK(fs::exists(dir / "assess" / "tau" / "tau-0.6.csv"));
  CHECK(fs::exists(dir / "assess" / "tau" / "tau-0.7.csv"));

  const auto winner =
      nlohmann::json::parse(cli::read_file((dir / "assess" / "winner.json").string()));
  for (const std::string key : {"model", "epoch", "sigma", "mu", "preference", "tau", "eta"}) {
    CHECK(winner.contains(key));
  }

  SECTION("assessment is deterministic across worker counts") {
    r = run_cli({"assess", "--out", out, "--jobs", "4", "--force", "--tau-sweep", "0.6,0.7"});
    REQUIRE(r.rc == 0);
    CHECK(cli::read_file((dir / "assess" / "tecm.csv").string()) == tecm);
  }

  SECTION("a rerun without changes is a no-op") {
    r = run_cli({"assess", "--out", out, "--jobs", "1", "--tau-sweep", "0.6,0.7"});
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("up to date") != std::string::npos);
  }

  r = run_cli({"outcomes", "--out", out});
  REQUIRE(r.rc == 0);
  const std::string ocsv = cli::read_file((dir / "outcomes" / "outcomes.csv").string());
  CHECK(ocsv.rfind("model,n_followers,MoR,AIHS,improvement_MoR,improvement_AIHS,p_MoR,p_AIHS,"
                   "tau\n",
                   0) == 0);
  CHECK(ocsv.find("\nphysician,") != std::string::npos);
  const auto ojson =
      nlohmann::json::parse(cli::read_file((dir / "outcomes" / "outcomes.json").string()));
  CHECK(ojson.at("models").size() == 3);

  r = run_cli({"report", "--out", out});
  REQUIRE(r.rc == 0);
  const std::string md = cli::read_file((dir / "report.md").string());
  CHECK(md.rfind("# heparl run report", 0) == 0);
  for (const std::string section :
       {"## Cohort", "## Training", "## Assessment (TECM*)", "## Outcomes"}) {
    CHECK(md.find(section) != std::string::npos);
  }
  CHECK(r.out == md);
}

TEST_CASE("train cleans stale checkpoints on retrain") {
  const fs::path dir = fresh_dir("stale");
  const std::string out = dir.string();
  REQUIRE(run_cli({"generate", "--out", out, "--patients", "10", "--seed", "5"}).rc == 0);
  REQUIRE(run_cli({"train", "--out", out, "--seed", "5", "--models", "sofa-ql", "--epochs",
                   "4"})
              .rc == 0);
  CHECK(fs::exists(dir / "models" / "sofa-ql" / "checkpoint-4.json"));

  REQUIRE(run_cli({"train", "--out", out, "--seed", "5", "--models", "sofa-ql", "--epochs",
                   "2"})
              .rc == 0);
  CHECK(json_files(dir / "models" / "sofa-ql") ==
        std::vector<std::string>{"checkpoint-1.json", "checkpoint-2.json", "log.json",
                                 "manifest.json"});
}

TEST_CASE("HEPARL_OUT redirects relative run directories") {
  const fs::path root = fresh_dir("envroot");
  REQUIRE(setenv("HEPARL_OUT", root.c_str(), 1) == 0);
  auto r = run_cli({"generate", "--out", "nested/run", "--patients", "8", "--seed", "2"});
  REQUIRE(unsetenv("HEPARL_OUT") == 0);
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(root / "nested" / "run" / "cohort.jsonl"));

  // Absolute run directories are left alone.
  const fs::path abs = fresh_dir("envabs");
  REQUIRE(setenv("HEPARL_OUT", root.c_str(), 1) == 0);
  r = run_cli({"generate", "--out", abs.string(), "--patients", "8", "--seed", "2"});
  REQUIRE(unsetenv("HEPARL_OUT") == 0);
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(abs / "cohort.jsonl"));
}

TEST_CASE("config file values yield to command-line flags") {
  const fs::path dir = fresh_dir("precedence");
  const fs::path cfg = dir / "cfg.json";
  nlohmann::json j{{"out_dir", (dir / "from-config").string()},
                   {"seed", 77},
                   {"synth", {{"patients", 6}}}};
  cli::write_file(cfg.string(), j.dump());

  auto r = run_cli({"generate", "--config", cfg.string()});
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(dir / "from-config" / "cohort.jsonl"));
  CHECK(r.out.find("6 patients") != std::string::npos);

  r = run_cli({"generate", "--config", cfg.string(), "--out", (dir / "flag").string(),
               "--patients", "7"});
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(dir / "flag" / "cohort.jsonl"));
  CHECK(r.out.find("7 patients") != std::string::npos);

  const auto manifest = nlohmann::json::parse(
      cli::read_file((dir / "flag" / "generate-manifest.json").string()));
  CHECK(manifest.at("config").at("seed") == 77);
  CHECK(manifest.at("config").at("synth").at("patients") == 7);
  CHECK(manifest.at("command") == "generate");
}
