#pragma once

// Command bodies behind tools/emrefine. Each writes its outputs under `out`
// and throws emr::Error on failure; exit_code() maps errors to the CLI's
// exit codes.

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "emr/config.hpp"
#include "emr/loop.hpp"

namespace emr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInvariant = 4;

int exit_code(const std::exception& e);

// Creates `out`. A nonempty directory is refused unless `force`, in which
// case its contents are removed first.
void prepare_out_dir(const std::filesystem::path& out, bool force);

struct CorpusInput {
  std::filesystem::path dir;
  // Model snapshot (JSON); when absent the model is fit on the corpus.
  std::optional<std::filesystem::path> model;
};

void cmd_generate(const RunConfig& config, const std::filesystem::path& out, bool force);

// Verifier audit plus the DSC = 0 replacements. Writes audit.json,
// changes.jsonl, model.json and the updated corpus under corpus/.
void cmd_audit(const RunConfig& config, const CorpusInput& in, const std::filesystem::path& out,
               bool force);

// One expectation pass: audit, replacements, tournaments and escalation.
void cmd_refine(const RunConfig& config, const CorpusInput& in, const std::filesystem::path& out,
                bool force);

// Threshold selection, report suppression and savings. Writes roc.csv and
// roc.json. Needs gold labels.
void cmd_roc(const RunConfig& config, const CorpusInput& in, const std::filesystem::path& out,
             bool force);

// Without `corpus_dir` the corpus is generated from the config in memory.
// `withhold_gold` drops gold labels before the loop starts.
EMResult cmd_run_loop(const RunConfig& config, const std::optional<std::filesystem::path>& corpus_dir,
                      const std::filesystem::path& out, bool force, bool withhold_gold = false);

// Scores the pseudo labels of `predictions` (default: the corpus itself)
// against the corpus gold. Writes evaluation.json and returns it.
Json cmd_evaluate(const RunConfig& config, const std::filesystem::path& corpus_dir,
                  const std::optional<std::filesystem::path>& predictions,
                  const std::filesystem::path& out, bool force);

// Walks the escalations in `escalations_file`, prompting on `prompt`, and
// writes `out`/resolutions.json.
void cmd_review(const std::filesystem::path& escalations_file, std::istream& in,
                std::ostream& prompt, const std::filesystem::path& out);

}  // namespace emr
