// Drives the emrefine binary as a subprocess.

#include <doctest.h>
#include <sys/wait.h>

#include <fstream>

#include "emr/json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kSmall = " --set 'phantom.dims=32 32 32' --set corpus.cases=4";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(EMR_CLI) + "' " + args + " </dev/null >>" +
                          (fs::temp_directory_path() / "emr_test_cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config() { return " --config '" + support::source("config/default.ini").string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

emr::Json json_at(const fs::path& p) { return emr::Json::parse(slurp(p)); }

// Relative path -> bytes for every regular file under `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("generate writes a corpus and is reproducible") {
  const fs::path d = support::scratch("cli_gen");
  REQUIRE(run("generate" + config() + kSmall + " --set corpus.cases=3 --out " + q(d / "a")) == 0);
  REQUIRE(run("generate" + config() + kSmall + " --set corpus.cases=3 --out " + q(d / "b")) == 0);
  for (const char* f : {"manifest.json", "injections.json", "config.ini", "cases/case_0000.json",
                        "cases/case_0002.volume.smai", "cases/case_0002.pseudo.smai", "cases/case_0002.gold.smai"})
    CHECK_MESSAGE(fs::exists(d / "a" / f), f);
  CHECK(json_at(d / "a/manifest.json").at("cases").size() == 3);
  CHECK(tree(d / "a") == tree(d / "b"));

  REQUIRE(run("generate" + config() + kSmall + " --seed 5 --out " + q(d / "c")) == 0);
  CHECK(slurp(d / "a/cases/case_0000.volume.smai") != slurp(d / "c/cases/case_0000.volume.smai"));
}

TEST_CASE("output directories are only overwritten with --force") {
  const fs::path d = support::scratch("cli_force");
  REQUIRE(run("generate" + config() + kSmall + " --out " + q(d)) == 0);
  CHECK(run("generate" + config() + kSmall + " --out " + q(d)) == 3);
  {
    std::ofstream stale(d / "stale.txt");
    stale << "x";
  }
  CHECK(run("generate" + config() + kSmall + " --force --out " + q(d)) == 0);
  CHECK_FALSE(fs::exists(d / "stale.txt"));
}

TEST_CASE("exit codes") {
  const fs::path d = support::scratch("cli_codes");
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("generate" + config() + " --set em.bogus=1 --out " + q(d / "x")) == 2);
  CHECK(run("generate --config /nonexistent.ini --out " + q(d / "x")) == 2);
  CHECK(run("generate" + config() + " --threads 0 --out " + q(d / "x")) == 2);
  CHECK(run("generate" + config() + kSmall) == 2);  // no output directory
  CHECK(run("audit" + config() + " --corpus " + q(d / "missing") + " --out " + q(d / "y")) == 3);
  CHECK(run("review --escalations " + q(d / "missing.json") + " --out " + q(d / "z")) == 2);  // stdin is no terminal
  CHECK(run("--help") == 0);
}

TEST_CASE("environment variables stand in for --out and --threads") {
  const fs::path d = support::scratch("cli_env");
  CHECK(run("generate" + config() + kSmall, "EMREFINE_OUT=" + q(d / "env")) == 0);
  CHECK(fs::exists(d / "env/manifest.json"));
  CHECK(run("generate" + config() + kSmall + " --out " + q(d / "t"), "EMREFINE_THREADS=3") == 0);
  CHECK(tree(d / "env") == tree(d / "t"));
  CHECK(run("generate" + config() + kSmall + " --out " + q(d / "bad"), "EMREFINE_THREADS=zero") == 2);
}

TEST_CASE("evaluate scores a perfect corpus as 1") {
  const fs::path d = support::scratch("cli_eval");
  REQUIRE(run("generate" + config() + kSmall + " --set corpus.gold_fraction=1 --out " + q(d / "c")) == 0);
  REQUIRE(run("evaluate" + config() + " --corpus " + q(d / "c") + " --out " + q(d / "e")) == 0);
  const emr::Json j = json_at(d / "e/evaluation.json");
  CHECK(j.at("mean_dsc").get<double>() == 1.0);
  CHECK(j.at("cases_scored") == 4);
  CHECK(j.at("nsd_tolerance_mm").get<double>() == 2.0);
}

TEST_CASE("audit and refine outputs") {
  const fs::path d = support::scratch("cli_audit");
  REQUIRE(run("generate" + config() + kSmall + " --set corpus.cases=8 --out " + q(d / "c")) == 0);
  REQUIRE(run("audit" + config() + " --corpus " + q(d / "c") + " --out " + q(d / "a")) == 0);
  for (const char* f : {"audit.json", "changes.jsonl", "model.json", "corpus/manifest.json"})
    CHECK_MESSAGE(fs::exists(d / "a" / f), f);
  const emr::Json a = json_at(d / "a/audit.json");
  CHECK(a.at("cases").size() == 7);  // the gold case is not audited

  // A saved model can be reused and gives the same audit.
  REQUIRE(run("audit" + config() + " --corpus " + q(d / "c") + " --model " + q(d / "a/model.json") +
              " --out " + q(d / "a2")) == 0);
  CHECK(slurp(d / "a/audit.json") == slurp(d / "a2/audit.json"));

  REQUIRE(run("refine" + config() + " --corpus " + q(d / "c") + " --out " + q(d / "r")) == 0);
  for (const char* f : {"refine.json", "escalations.json", "changes.jsonl", "model.json", "corpus/manifest.json"})
    CHECK_MESSAGE(fs::exists(d / "r" / f), f);
  CHECK(json_at(d / "r/refine.json").at("escalation_fraction").get<double>() <= 0.05);
}

TEST_CASE("run-loop with zero iterations writes only the initial report") {
  const fs::path d = support::scratch("cli_loop0");
  REQUIRE(run("run-loop" + config() + kSmall + " --set em.max_iterations=0 --out " + q(d)) == 0);
  CHECK(fs::exists(d / "reports/iteration_000.json"));
  CHECK_FALSE(fs::exists(d / "reports/iteration_001.json"));
  CHECK(fs::exists(d / "models/model_000.json"));
  CHECK(json_at(d / "summary.json").at("stop_reason") == "max_iterations");
}

TEST_CASE("run-loop over a saved corpus") {
  const fs::path d = support::scratch("cli_loop");
  REQUIRE(run("generate" + config() + kSmall + " --out " + q(d / "c")) == 0);
  REQUIRE(run("run-loop" + config() + kSmall + " --set em.max_iterations=1 --corpus " + q(d / "c") + " --out " +
              q(d / "r")) == 0);
  CHECK(fs::exists(d / "r/reports/iteration_001.json"));
  CHECK(fs::exists(d / "r/final/manifest.json"));
  REQUIRE(run("run-loop" + config() + kSmall + " --set em.max_iterations=1 --withhold-gold --corpus " +
              q(d / "c") + " --out " + q(d / "w")) == 0);
  CHECK_FALSE(fs::exists(d / "w/final/cases/case_0000.gold.smai"));
}

TEST_CASE("roc on the fixture corpus matches the pinned curve") {
  const fs::path d = support::scratch("cli_roc");
  const std::string cfg = " --config " + q(support::source("tests/fixtures/roc_fixture.ini"));
  REQUIRE(run("generate" + cfg + " --out " + q(d / "c")) == 0);
  REQUIRE(run("roc" + cfg + " --corpus " + q(d / "c") + " --out " + q(d / "r")) == 0);
  CHECK(slurp(d / "r/roc.csv") == slurp(support::source("tests/fixtures/roc_fixture.csv")));
  const emr::Json j = json_at(d / "r/roc.json");
  CHECK(j.at("report_negative_fp") == 0);
  CHECK(j.at("policy").at("feasible") == true);
}

TEST_CASE("review reads answers from a file") {
  const fs::path d = support::scratch("cli_review");
  emr::Json esc = {{"schema_version", 1}, {"entries", emr::Json::array()}};
  for (int k = 0; k < 2; ++k)
    esc["entries"].push_back({{"iteration", 1},
                              {"case_id", "case_000" + std::to_string(k)},
                              {"structure", "aorta"},
                              {"reason", "expert_tie"},
                              {"dsc", 0.3},
                              {"width", 2},
                              {"height", 1},
                              {"overlays_rle", {"1:2", "0:2"}}});
  {
    std::ofstream(d / "esc.json") << esc.dump();
    std::ofstream(d / "answers.txt") << "2\nskip\n";
  }
  REQUIRE(run("review --escalations " + q(d / "esc.json") + " --input " + q(d / "answers.txt") + " --out " +
              q(d / "out")) == 0);
  const emr::Json r = json_at(d / "out/resolutions.json");
  const auto& list = r.at("resolutions");
  REQUIRE(list.size() == 2);
  CHECK(list[0].at("choice") == 2);
  CHECK(list[1].at("choice").is_null());
}
