// emrefine: command-line front end. Argument errors exit 2 like config
// errors; see emr/cli.hpp for the rest of the exit-code mapping.

#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "emr/cli.hpp"
#include "emr/kernels.hpp"

namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

int default_threads() {
  const std::string env = env_or("EMREFINE_THREADS", "");
  if (!env.empty()) {
    try {
      std::size_t used = 0;
      const int t = std::stoi(env, &used);
      if (used == env.size() && t > 0) return t;
    } catch (const std::exception&) {
    }
    emr::fail(emr::ErrorKind::config, "EMREFINE_THREADS must be a positive integer, got '" + env + "'");
  }
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

struct Common {
  std::string config = "config/default.ini";
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  int threads = 0;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config, "INI run configuration")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Master seed (replaces [run] seed)");
  if (with_out) {
    cmd->add_option("--out", c.out, "Output directory (default: $EMREFINE_OUT)");
    cmd->add_flag("--force", c.force, "Overwrite a nonempty output directory");
  }
  cmd->add_option("--threads", c.threads, "Worker threads (default: $EMREFINE_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--set", c.overrides, "Override a config value: section.key=value");
}

emr::RunConfig load(const Common& c) {
  emr::RunConfig cfg = emr::load_run_config(c.config, c.overrides);
  if (c.seed) emr::set_seed(cfg, *c.seed);
  return cfg;
}

fs::path out_dir(const Common& c) { return c.out.empty() ? fs::path(env_or("EMREFINE_OUT", "")) : fs::path(c.out); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM annotation refinement over synthetic phantoms"};
  app.require_subcommand(1);

  Common common;
  std::string corpus, model, predictions, escalations, input;
  bool withhold_gold = false;

  auto* gen = app.add_subcommand("generate", "Generate a noisy phantom corpus");
  add_common(gen, common);

  auto* audit = app.add_subcommand("audit", "Verifier audit and DSC = 0 replacements");
  add_common(audit, common);
  audit->add_option("--corpus", corpus, "Corpus directory")->required();
  audit->add_option("--model", model, "Model snapshot (default: fit on the corpus)");

  auto* refine = app.add_subcommand("refine", "One expectation pass with tournaments and escalation");
  add_common(refine, common);
  refine->add_option("--corpus", corpus, "Corpus directory")->required();
  refine->add_option("--model", model, "Model snapshot (default: fit on the corpus)");

  auto* roc = app.add_subcommand("roc", "Threshold selection and annotation-cost savings");
  add_common(roc, common);
  roc->add_option("--corpus", corpus, "Corpus directory with gold labels")->required();
  roc->add_option("--model", model, "Model snapshot (default: fit on the corpus)");

  auto* loop = app.add_subcommand("run-loop", "Run the EM loop and write a run directory");
  add_common(loop, common);
  loop->add_option("--corpus", corpus, "Corpus directory (default: generate from the config)");
  loop->add_flag("--withhold-gold", withhold_gold, "Drop gold labels before the loop");

  auto* eval = app.add_subcommand("evaluate", "Score pseudo labels against gold");
  add_common(eval, common);
  eval->add_option("--corpus", corpus, "Corpus directory with gold labels")->required();
  eval->add_option("--pred", predictions, "Corpus whose pseudo labels are scored (default: --corpus)");

  auto* review = app.add_subcommand("review", "Resolve escalations by hand");
  review->add_option("--escalations", escalations, "escalations/iteration_NNN.json of a run")->required();
  review->add_option("--input", input, "Read answers from a file instead of the terminal");
  review->add_option("--out", common.out, "Directory for resolutions.json (default: $EMREFINE_OUT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return emr::kExitConfig;
  }

  try {
    emr::set_thread_count(common.threads > 0 ? common.threads : default_threads());
    const auto t0 = std::chrono::steady_clock::now();
    const auto model_path = model.empty() ? std::nullopt : std::optional<fs::path>(model);

    if (gen->parsed()) {
      emr::cmd_generate(load(common), out_dir(common), common.force);
    } else if (audit->parsed()) {
      emr::cmd_audit(load(common), {corpus, model_path}, out_dir(common), common.force);
    } else if (refine->parsed()) {
      emr::cmd_refine(load(common), {corpus, model_path}, out_dir(common), common.force);
    } else if (roc->parsed()) {
      emr::cmd_roc(load(common), {corpus, model_path}, out_dir(common), common.force);
    } else if (loop->parsed()) {
      const auto cfg = load(common);
      const auto r = emr::cmd_run_loop(
          cfg, corpus.empty() ? std::nullopt : std::optional<fs::path>(corpus), out_dir(common),
          common.force, withhold_gold);
      const auto& last = r.reports.empty() ? r.initial : r.reports.back();
      std::cout << "iterations " << r.reports.size() << ", stop " << r.stop_reason;
      if (last.mean_dsc) std::cout << ", mean dsc " << *last.mean_dsc;
      std::cout << '\n';
    } else if (eval->parsed()) {
      const auto j = emr::cmd_evaluate(load(common), corpus,
                                       predictions.empty() ? std::nullopt
                                                           : std::optional<fs::path>(predictions),
                                       out_dir(common), common.force);
      std::cout << "mean dsc " << j.at("mean_dsc").get<double>() << '\n';
    } else if (review->parsed()) {
      const fs::path out = out_dir(common);
      if (out.empty()) emr::fail(emr::ErrorKind::config, "no output directory given (--out or EMREFINE_OUT)");
      if (!input.empty()) {
        std::ifstream in(input);
        if (!in) emr::fail(emr::ErrorKind::io, "cannot open " + input);
        emr::cmd_review(escalations, in, std::cerr, out);
      } else {
        if (!isatty(STDIN_FILENO))
          emr::fail(emr::ErrorKind::config, "review needs a terminal on stdin or --input <file>; for unattended "
                              "runs use the simulated expert ([oracle] type = simulated)");
        emr::cmd_review(escalations, std::cin, std::cerr, out);
      }
    }
    // Timing goes to stderr only so outputs stay byte-identical.
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "done in " << secs << " s\n";
    return emr::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return emr::exit_code(e);
  }
}
