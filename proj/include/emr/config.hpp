#pragma once

// Run configuration: one INI file holding the phantom, noise, loop, cost,
// ROC, judge and oracle settings. See config/default.ini for the grammar.

#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "emr/expert.hpp"
#include "emr/loop.hpp"
#include "emr/phantom.hpp"
#include "emr/roc.hpp"

namespace emr {

enum class JudgeKind { rule, external };
enum class OracleKind { simulated, interactive, tie_keeper, resolutions };

struct JudgeConfig {
  JudgeKind kind = JudgeKind::rule;
  std::string command;
  int timeout_ms = 5000;
  double tie_epsilon = kDefaultTieEpsilon;
  std::filesystem::path priors;  // resolved against the config file's directory
};

struct OracleConfig {
  OracleKind kind = OracleKind::simulated;
  double accuracy = 0.9;
  std::filesystem::path resolutions;
};

struct CorpusConfig {
  std::uint32_t cases = 100;
  double gold_fraction = 0.1;
};

struct RunConfig {
  PhantomSpec phantom;
  NoiseSpec noise;
  CorpusConfig corpus;
  EMConfig em;
  CostModel cost;
  RocWorkflowOptions roc;
  JudgeConfig judge;
  OracleConfig oracle;
  // Tolerance only; spacing comes from each case.
  SurfaceDistanceSpec surface;
  std::uint64_t seed = 0;

  // The parsed file with overrides applied; written back as the snapshot.
  boost::property_tree::ptree tree;

  void validate() const;
};

// `overrides` are "section.key=value" strings applied on top of the file.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});
// Replaces the seed everywhere it is used.
void set_seed(RunConfig& config, std::uint64_t seed);

std::string config_snapshot(const RunConfig& config);

std::unique_ptr<Judge> make_judge(const JudgeConfig& config);
PriorTable load_config_priors(const RunConfig& config);
// Interactive oracles read stdin and prompt on stderr.
std::unique_ptr<HumanOracle> make_oracle(const OracleConfig& config, std::uint64_t seed);

}  // namespace emr
