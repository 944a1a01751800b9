#include <doctest.h>

#include <fstream>

#include "emr/cli.hpp"
#include "emr/config.hpp"
#include "support.hpp"

using namespace emr;

namespace {

std::string shipped() {
  std::ifstream in(support::source("config/default.ini"));
  return {std::istreambuf_iterator<char>(in), {}};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::invariant;
}

}  // namespace

TEST_CASE("shipped configuration loads with the documented defaults") {
  const RunConfig c = support::default_config();
  CHECK(c.seed == 0);
  CHECK(c.corpus.cases == 100);
  CHECK(c.corpus.gold_fraction == 0.1);
  CHECK(c.phantom.dims == Dims{64, 64, 64});
  CHECK(c.phantom.structures.size() == 6);
  CHECK(c.em.thresholds.auto_replace_dsc == 0.0);
  CHECK(c.em.thresholds.route_dsc == 0.5);
  CHECK(c.em.escalation_budget_fraction == 0.05);
  CHECK(c.em.stop_rule == StopRule::change_count);
  CHECK(c.em.reimpute);
  CHECK(c.roc.target_sensitivity == 0.99);
  CHECK(c.cost.seconds_per_fp_removal == 5.0);
  CHECK(c.cost.seconds_per_scratch_annotation == 270.0);
  CHECK(c.surface.tolerance_mm == 2.0);
  CHECK(c.judge.kind == JudgeKind::rule);
  CHECK(c.oracle.kind == OracleKind::simulated);
  CHECK(std::filesystem::exists(c.judge.priors));
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK(kind_of([] { support::default_config({"em.max_iteratoins=3"}); }) == ErrorKind::config);
  CHECK(kind_of([] { support::default_config({"emm.max_iterations=3"}); }) == ErrorKind::config);
  CHECK(kind_of([] { parse_run_config(shipped() + "\n[extra]\nx = 1\n", support::source("config")); }) ==
        ErrorKind::config);
}

TEST_CASE("malformed values are config errors") {
  for (const char* o : {"em.max_iterations=many", "corpus.gold_fraction=1.5", "corpus.cases=0",
                        "phantom.dims=32 32", "judge.type=oracle", "oracle.type=psychic",
                        "roc.connectivity=8", "metrics.nsd_tolerance_mm=0", "em.stop_rule=whenever",
                        "em.reimpute=maybe", "noise.shift=2"}) {
    CAPTURE(o);
    CHECK(kind_of([o] { support::default_config({o}); }) == ErrorKind::config);
  }
  CHECK(kind_of([] { support::default_config({"no-dot=1"}); }) == ErrorKind::config);
  CHECK(kind_of([] { support::default_config({"em.max_iterations"}); }) == ErrorKind::config);
  CHECK(kind_of([] { load_run_config("/nonexistent/run.ini"); }) == ErrorKind::config);
  CHECK(kind_of([] { parse_run_config("[run\nseed = 1\n", "."); }) == ErrorKind::config);
}

TEST_CASE("overrides apply on top of the file") {
  const RunConfig c = support::default_config({"em.max_iterations=7", "phantom.dims=16 24 32", "run.seed=9"});
  CHECK(c.em.max_iterations == 7);
  CHECK(c.phantom.dims == Dims{16, 24, 32});
  CHECK(c.seed == 9);
  CHECK(c.em.seed == 9);
  // The later override wins.
  CHECK(support::default_config({"em.max_iterations=2", "em.max_iterations=3"}).em.max_iterations == 3);
}

TEST_CASE("set_seed reaches every consumer and the snapshot") {
  RunConfig c = support::default_config();
  set_seed(c, 1234);
  CHECK(c.seed == 1234);
  CHECK(c.em.seed == 1234);
  CHECK(config_snapshot(c).find("seed=1234") != std::string::npos);
}

TEST_CASE("relative paths resolve against the config file") {
  const auto dir = support::scratch("config_paths");
  std::filesystem::copy_file(support::source("config/priors.ini"), dir / "my_priors.ini");
  {
    std::ofstream out(dir / "run.ini");
    out << shipped();
  }
  const RunConfig c =
      load_run_config(dir / "run.ini", {"judge.priors=my_priors.ini"});
  CHECK(c.judge.priors == dir / "my_priors.ini");
  CHECK_NOTHROW(load_config_priors(c));
  CHECK(kind_of([&] { load_run_config(dir / "run.ini", {"judge.priors=missing.ini"}); }) == ErrorKind::config);
  CHECK(kind_of([&] { load_run_config(dir / "run.ini", {"oracle.type=resolutions", "oracle.resolutions=r.json"}); }) ==
        ErrorKind::config);
}

TEST_CASE("snapshot reloads to the same configuration from another directory") {
  const RunConfig c = support::default_config({"em.max_iterations=2", "corpus.cases=7"});
  const auto dir = support::scratch("config_snapshot");
  {
    std::ofstream out(dir / "config.ini");
    out << config_snapshot(c);
  }
  const RunConfig back = load_run_config(dir / "config.ini");
  CHECK(back.em.max_iterations == 2);
  CHECK(back.corpus.cases == 7);
  CHECK(std::filesystem::equivalent(back.judge.priors, c.judge.priors));
  CHECK(config_snapshot(back) == config_snapshot(c));
}

TEST_CASE("judge and oracle factories") {
  RunConfig c = support::default_config();
  CHECK(dynamic_cast<RuleJudge*>(make_judge(c.judge).get()));
  CHECK(dynamic_cast<SimulatedExpert*>(make_oracle(c.oracle, 0).get()));
  c.oracle.kind = OracleKind::tie_keeper;
  CHECK(dynamic_cast<TieKeeper*>(make_oracle(c.oracle, 0).get()));
  CHECK(kind_of([] { support::default_config({"judge.type=external"}); }) == ErrorKind::config);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code(Error(ErrorKind::config, "")) == 2);
  CHECK(exit_code(Error(ErrorKind::io, "")) == 3);
  for (ErrorKind k : {ErrorKind::invariant, ErrorKind::catalog, ErrorKind::shape, ErrorKind::protocol,
                      ErrorKind::undefined_rate})
    CHECK(exit_code(Error(k, "")) == 4);
  CHECK(exit_code(std::runtime_error("other")) == 4);
}
