#pragma once

// The refinement loop: Expectation (audit, update, tournament, escalation)
// alternating with Maximization (data mix refit, then gold-subset annealing).

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emr/expert.hpp"
#include "emr/phantom.hpp"
#include "emr/verifier.hpp"

namespace emr {

struct DataMix {
  double labeled = 1.0;
  double synthetic = 0.0;
  double selective = 0.0;
};

enum class StopRule { gold_dsc, change_count };
std::string_view to_string(StopRule r);
StopRule parse_stop_rule(std::string_view text);

struct EMConfig {
  int max_iterations = 4;
  AuditThresholds thresholds;
  double escalation_budget_fraction = 0.05;
  // gold_dsc: stop when the corpus mean DSC gains less than this.
  // change_count: stop when fewer than this many structures changed.
  double convergence_epsilon = 1e-4;
  StopRule stop_rule = StopRule::change_count;
  DataMix mix;
  bool annealing_enabled = true;
  double annealing_weight = 5.0;
  // Tournament winners whose overlay score stays below this are escalated.
  double low_confidence_score = 0.25;
  // Re-audit sweeps after a pass until no auto_replace remains.
  int max_settle_sweeps = 4;
  // Refresh model-written structures from the current model every pass.
  bool reimpute = true;
  ModelOptions model;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class EscalationReason { expert_tie, low_confidence, protocol_failure };
std::string_view to_string(EscalationReason r);
EscalationReason parse_escalation_reason(std::string_view text);

struct EscalationEntry {
  int iteration = 0;
  std::string case_id;
  std::string structure;
  EscalationReason reason = EscalationReason::expert_tie;
  double dsc = 0.0;  // audit DSC that routed the structure
  // Front-view overlays of the candidates: [incumbent, challenger].
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::string> overlays_rle;
};

// 1-based choice of candidate; empty when left unresolved.
struct ReviewDecision {
  std::optional<int> choice;
  friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

struct Resolution {
  int iteration = 0;
  std::string case_id;
  std::string structure;
  ReviewDecision decision;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct EscalationQueue {
  std::vector<EscalationEntry> entries;
  // Index into entries -> decision.
  std::map<std::size_t, ReviewDecision> resolved;
};

struct ReviewItem {
  const EscalationEntry* entry = nullptr;
  const CaseRecord* record = nullptr;
  Label label = 0;
  const std::vector<LabelMap>* candidates = nullptr;
};

class HumanOracle {
 public:
  virtual ~HumanOracle() = default;
  // Index of the chosen candidate, or nullopt when no decision is made.
  virtual std::optional<std::size_t> review(const ReviewItem& item) = 0;
};

// Picks the candidate closest to gold (DSC of the structure) with
// probability `accuracy`, otherwise another candidate. Needs gold labels;
// without them it makes no decision.
class SimulatedExpert final : public HumanOracle {
 public:
  SimulatedExpert(double accuracy, std::uint64_t seed);
  std::optional<std::size_t> review(const ReviewItem& item) override;

 private:
  double accuracy_;
  std::uint64_t seed_;
};

// Always keeps the incumbent; never reads gold.
class TieKeeper final : public HumanOracle {
 public:
  std::optional<std::size_t> review(const ReviewItem&) override { return 0; }
};

// Answers from previously saved resolutions; unknown entries stay unresolved.
class ResolutionOracle final : public HumanOracle {
 public:
  explicit ResolutionOracle(std::vector<Resolution> resolutions);
  std::optional<std::size_t> review(const ReviewItem& item) override;

 private:
  std::vector<Resolution> resolutions_;
};

// Prompts on a terminal for each escalated entry.
class InteractiveOracle final : public HumanOracle {
 public:
  InteractiveOracle(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
  std::optional<std::size_t> review(const ReviewItem& item) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

struct PassCounts {
  std::size_t audited = 0;
  std::size_t keep = 0;
  std::size_t auto_replace = 0;
  std::size_t route = 0;
  std::size_t expert_replaced = 0;  // tournaments won by the challenger
  std::size_t escalated = 0;
  std::size_t auto_resolved = 0;    // over budget, tournament result kept
  std::size_t human_resolved = 0;
  std::size_t unresolved = 0;
  std::size_t settle_replacements = 0;
  int settle_sweeps = 0;
  std::size_t reimputed = 0;        // model-written structures refreshed
  std::size_t changed_structures = 0;
};

// Per case (corpus order) and label (index = label, 0 unused): true when the
// current annotation was written by the model rather than kept from the
// input or picked by a human. Such structures are missing data and get
// re-estimated under the current model at the start of every later pass.
using ImputedFlags = std::vector<std::vector<bool>>;

struct ExpectationResult {
  Corpus corpus;
  ImputedFlags imputed;
  EscalationQueue queue;
  PassCounts counts;
  std::vector<ChangeEntry> changes;
  // Mean audit DSC per case (1 for cases not audited), corpus order.
  std::vector<double> case_dsc;
  std::vector<Resolution> unresolved;
};

struct JudgeContext {
  Judge* judge = nullptr;
  const PriorTable* priors = nullptr;
};

// Gold-flagged cases carry verified labels and are neither audited nor edited.
ExpectationResult expectation_pass(const Corpus& corpus, const SegmentationModel& model,
                                   const JudgeContext& judge, HumanOracle& oracle,
                                   const EMConfig& cfg, int iteration = 1,
                                   const ImputedFlags* imputed = nullptr);

// Re-audits every non-gold case under `model` and counts auto_replace actions.
std::size_t count_auto_replacements(const Corpus& corpus, const SegmentationModel& model,
                                    const AuditThresholds& thresholds);

struct TrainingSet {
  std::vector<CaseRecord> synthetic;  // generated phantoms, labels = clean
  std::vector<TrainingSample> samples;
  std::vector<std::size_t> labeled_cases;
  std::size_t selective_case = 0;
  std::size_t selective_copies = 0;
};

// `case_dsc` (corpus order) ranks cases for selective duplication; when
// empty, no copies are added.
TrainingSet build_training_set(const Corpus& corpus, const EMConfig& cfg,
                               const PhantomSpec* phantom, int iteration,
                               const std::vector<double>& case_dsc);

struct MaximizationResult {
  GaussianIntensityModel model{StructureCatalog{}};
  std::size_t samples = 0;
  std::size_t synthetic = 0;
  std::size_t selective_copies = 0;
  bool annealed = false;
  std::string warning;
};

MaximizationResult maximization_pass(const Corpus& corpus, const EMConfig& cfg,
                                     const PhantomSpec* phantom, int iteration,
                                     const std::vector<double>& case_dsc);

struct StructureDsc {
  double mean = 0.0;
  double median = 0.0;
};

struct IterationReport {
  int iteration = 0;
  std::optional<double> mean_dsc;  // corpus mean vs gold, when gold is loaded
  std::map<std::string, StructureDsc> per_structure;
  PassCounts counts;
  double escalation_fraction = 0.0;
  bool budget_breach = false;
  std::string model_id;
  std::size_t carried_over = 0;
};

// Mean and per-structure DSC of pseudo against gold over cases with gold.
std::optional<double> corpus_mean_dsc(const Corpus& corpus,
                                      std::map<std::string, StructureDsc>* per_structure = nullptr);

struct EMResult {
  Corpus corpus;
  GaussianIntensityModel model{StructureCatalog{}};
  IterationReport initial;
  std::vector<IterationReport> reports;
  std::vector<GaussianIntensityModel> models;  // models[0] is the initial fit
  std::vector<std::vector<ChangeEntry>> changes;
  std::vector<EscalationQueue> escalations;
  std::vector<Resolution> resolutions;
  std::string stop_reason;
};

EMResult run_em(const Corpus& corpus, const EMConfig& cfg, const JudgeContext& judge,
                HumanOracle& oracle, const PhantomSpec* phantom = nullptr);

Json iteration_report_to_json(const IterationReport& r);
Json escalation_to_json(const EscalationEntry& e);
EscalationEntry escalation_from_json(const Json& j);
Json resolutions_to_json(const std::vector<Resolution>& r);
std::vector<Resolution> resolutions_from_json(const Json& j);
void save_resolutions(const std::filesystem::path& path, const std::vector<Resolution>& r);
std::vector<Resolution> load_resolutions(const std::filesystem::path& path);

// ASCII front-view rendering: '#' overlay, '.' background; top row is the
// highest z slice.
std::string render_overlay(const std::string& rle, std::uint32_t width, std::uint32_t height);

// Prompts "1", "2" or "skip" for each entry; skipped or unreadable entries
// stay unresolved.
std::vector<Resolution> interactive_review(const std::vector<EscalationEntry>& entries,
                                           std::istream& in, std::ostream& out);

// Run directory:
//   config.ini                      effective configuration
//   reports/iteration_NNN.json      000 is the initial state
//   models/model_NNN.json           000 is the initial fit
//   changes/iteration_NNN.jsonl     one change per line
//   escalations/iteration_NNN.json  entries sent to the oracle
//   resolutions.json                oracle decisions, all iterations
//   final/                          refined corpus
//   summary.json
void write_run(const std::filesystem::path& dir, const EMResult& result,
               const std::string& config_snapshot);
std::vector<EscalationEntry> load_escalations(const std::filesystem::path& path);

}  // namespace emr
