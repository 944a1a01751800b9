#pragma once

// The label expert: front-view overlays scored against anatomical priors,
// pairwise judging, and the tournament over candidate annotations.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "emr/geometry.hpp"
#include "emr/json.hpp"
#include "emr/volume.hpp"

namespace emr {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct CriterionWeights {
  double centroid = 1.0;
  double components = 1.0;
  double vertical = 1.0;
  double elongation = 1.0;
};

// Expected appearance of one or more structures in the front view.
// Coordinates are normalized to the projection: x in [0,1] left to right
// along the volume x axis, z in [0,1] from the first slice upward.
struct AnatomicalPrior {
  std::string name;
  std::vector<std::string> structures;  // drawn together into one overlay
  Range centroid_x;
  Range centroid_z;
  std::uint32_t components_min = 1;
  std::uint32_t components_max = 1;
  Range vertical_extent;  // expected z span
  Range elongation;       // bounding-box height / width, physical units
  double centroid_falloff = 0.1;
  CriterionWeights weights;
  std::string prompt;

  void validate() const;
};

struct PriorTable {
  std::vector<AnatomicalPrior> priors;

  // Priors whose structure list contains `structure`.
  std::vector<const AnatomicalPrior*> covering(const std::string& structure) const;
  const AnatomicalPrior* find(const std::string& name) const;
  // Throws catalog error if a prior names a structure outside the catalog.
  void check_against(const StructureCatalog& catalog) const;
};

// INI file, one section per prior; see config/priors.ini.
PriorTable parse_priors(const std::string& text);
PriorTable load_priors(const std::filesystem::path& path);

struct CriterionScores {
  double centroid = 0.0;
  double components = 0.0;
  double vertical = 0.0;
  double elongation = 0.0;
  double total = 0.0;
};

// `aspect` is spacing.z / spacing.x of the projected volume.
CriterionScores score_criteria(const AnatomicalPrior& prior, const Projection2D& proj,
                               double aspect = 1.0);
double score_overlay(const AnatomicalPrior& prior, const Projection2D& proj, double aspect = 1.0);

enum class Preference { first, second, tie };
std::string_view to_string(Preference p);
Preference parse_preference(std::string_view text);

enum class VerdictSource { rule, external, fallback };
std::string_view to_string(VerdictSource s);

struct JudgeVerdict {
  Preference preference = Preference::tie;
  CriterionScores first;
  CriterionScores second;
  VerdictSource source = VerdictSource::rule;
  bool protocol_failure = false;
  bool timed_out = false;
  std::string note;
};

inline constexpr double kDefaultTieEpsilon = 0.02;

JudgeVerdict judge_pair(const VoxelGrid& volume, const BinaryMask& a, const BinaryMask& b,
                        const AnatomicalPrior& prior, double tie_epsilon = kDefaultTieEpsilon);

struct JudgeRequest {
  std::string case_id;
  const AnatomicalPrior* prior = nullptr;
  const VoxelGrid* volume = nullptr;
  const BinaryMask* first = nullptr;
  const BinaryMask* second = nullptr;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict judge(const JudgeRequest& request) = 0;
};

class RuleJudge final : public Judge {
 public:
  explicit RuleJudge(double tie_epsilon = kDefaultTieEpsilon) : tie_epsilon_(tie_epsilon) {}
  JudgeVerdict judge(const JudgeRequest& request) override;

 private:
  double tie_epsilon_;
};

// Run-length encoding of an overlay: "value:count" runs joined by commas,
// row-major with x fastest. Example: 0 0 1 1 1 0 -> "0:2,1:3,0:1".
std::string encode_rle(const std::vector<std::uint8_t>& values);
std::vector<std::uint8_t> decode_rle(const std::string& text);

Json make_judge_request(const std::string& id, const JudgeRequest& request);

// Speaks newline-delimited JSON with a child process started through
// /bin/sh -c. One request is in flight at a time. A reply that is not a
// valid verdict for the request is a protocol failure and the rule judge
// answers instead; a reply that does not arrive in time yields a tie and the
// child is restarted on the next request.
class ExternalJudge final : public Judge {
 public:
  ExternalJudge(std::string command, int timeout_ms, double tie_epsilon = kDefaultTieEpsilon);
  ~ExternalJudge() override;
  ExternalJudge(const ExternalJudge&) = delete;
  ExternalJudge& operator=(const ExternalJudge&) = delete;

  JudgeVerdict judge(const JudgeRequest& request) override;

  std::size_t protocol_failures() const { return protocol_failures_; }
  std::size_t timeouts() const { return timeouts_; }

 private:
  void start();
  void stop();
  // Returns the reply line or nullopt on timeout / closed stream.
  std::optional<std::string> exchange(const std::string& line, bool& timed_out);

  std::string command_;
  int timeout_ms_;
  RuleJudge fallback_;
  std::mutex mutex_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  std::uint64_t next_id_ = 0;
  std::size_t protocol_failures_ = 0;
  std::size_t timeouts_ = 0;
};

// Reduced post-processing for candidate annotations: organs and vessels keep
// their largest component, tumors drop components below `min_tumor_voxels`,
// then a closing fills one-voxel gaps using background voxels only.
LabelMap shapekit_cleanup(const LabelMap& map, const StructureCatalog& catalog,
                          const std::vector<Label>& labels, std::size_t min_tumor_voxels = 8);

struct TournamentRound {
  std::size_t champion = 0;
  std::size_t challenger = 0;
  std::map<std::string, Preference> votes;  // prior name -> first = challenger
  std::uint32_t score_1 = 0;                // votes for the challenger
  std::uint32_t score_2 = 0;                // votes for the champion
  std::size_t protocol_failures = 0;
  std::size_t timeouts = 0;
};

struct TournamentResult {
  std::size_t winner = 0;  // index into the candidate list
  // Votes and scores of the final round.
  std::map<std::string, Preference> per_structure_votes;
  std::uint32_t score_1 = 0;
  std::uint32_t score_2 = 0;
  std::vector<TournamentRound> rounds;
  std::size_t protocol_failures = 0;
  std::size_t timeouts = 0;
  LabelMap selected;
};

// Union of the prior's structures in `map`.
BinaryMask prior_overlay_mask(const LabelMap& map, const AnatomicalPrior& prior,
                              const StructureCatalog& catalog);

// Narrows a tumor-only prior to the lesion count stated in the report and
// notes the count in the prompt. Other priors are returned unchanged.
AnatomicalPrior apply_report(const AnatomicalPrior& prior, const StructureCatalog& catalog,
                             const StructuredReport& report);

// Sequential elimination: the champion starts as candidate 0 and is replaced
// only when a challenger wins strictly more prior votes. Only priors covering
// a structure in `focus` vote; an empty focus means every prior whose
// structures exist in the catalog. With a report, tumor priors expect the
// reported lesion count.
TournamentResult run_tournament(const std::string& case_id, const VoxelGrid& volume,
                                const std::vector<LabelMap>& candidates, Judge& judge,
                                const PriorTable& priors, const StructureCatalog& catalog,
                                const std::vector<Label>& focus = {},
                                const StructuredReport* report = nullptr);

Json tournament_to_json(const TournamentResult& r);

}  // namespace emr
