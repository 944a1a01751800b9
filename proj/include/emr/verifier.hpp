#pragma once

// The label verifier: a retrainable segmentation model, the per-structure
// audit against it, and the DSC = 0 replacement rule.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "emr/json.hpp"
#include "emr/kernels.hpp"
#include "emr/volume.hpp"
#include "emr/volume_io.hpp"

namespace emr {

struct TrainingSample {
  const VoxelGrid* volume = nullptr;
  const LabelMap* labels = nullptr;
  double weight = 1.0;
};

class SegmentationModel {
 public:
  virtual ~SegmentationModel() = default;

  virtual void fit(std::span<const TrainingSample> samples) = 0;
  virtual bool fitted() const = 0;
  virtual LabelMap predict(const VoxelGrid& volume) const = 0;
  // Posterior probability of `tumor` per voxel.
  virtual ProbabilityMap predict_prob(const VoxelGrid& volume, Label tumor) const = 0;
  virtual Json to_json() const = 0;
  virtual const StructureCatalog& catalog() const = 0;
};

struct ModelOptions {
  double std_floor = 1e-3;
  // Predicted tumor components smaller than this are dropped.
  std::size_t min_tumor_voxels = 8;
};

struct ClassModel {
  bool modeled = false;
  double mean = 0.0;
  double stddev = 1.0;
  double weight = 0.0;
  // Normalized spatial prior; empty for background.
  std::array<double, 3> box_lo{0.0, 0.0, 0.0};
  std::array<double, 3> box_hi{0.0, 0.0, 0.0};
  friend bool operator==(const ClassModel&, const ClassModel&) = default;
};

// Weighted sufficient statistics: moments per label (0 = background) and
// the union of per-case boxes. Organ and vessel boxes come from the largest
// connected component, so stray blobs do not widen the prior.
class IntensityStats {
 public:
  explicit IntensityStats(std::size_t n_labels);

  static IntensityStats collect(const StructureCatalog& catalog,
                                std::span<const TrainingSample> samples);
  void merge(const IntensityStats& other);

  std::vector<Moments> moments;
  std::vector<bool> has_box;
  std::vector<std::array<double, 3>> lo, hi;
};

class GaussianIntensityModel final : public SegmentationModel {
 public:
  explicit GaussianIntensityModel(StructureCatalog catalog, ModelOptions options = {});

  void fit(std::span<const TrainingSample> samples) override;
  void fit(const IntensityStats& stats);
  bool fitted() const override { return fitted_; }
  LabelMap predict(const VoxelGrid& volume) const override;
  ProbabilityMap predict_prob(const VoxelGrid& volume, Label tumor) const override;
  Json to_json() const override;
  const StructureCatalog& catalog() const override { return catalog_; }

  static GaussianIntensityModel from_json(const Json& j);

  // Index 0 is background.
  const std::vector<ClassModel>& classes() const { return classes_; }
  const ModelOptions& options() const { return options_; }

  friend bool operator==(const GaussianIntensityModel&, const GaussianIntensityModel&) = default;

 private:
  std::vector<ClassParams> params_for(const Dims& dims) const;
  void require_fitted() const;

  StructureCatalog catalog_;
  ModelOptions options_;
  std::vector<ClassModel> classes_;
  bool fitted_ = false;
};

// Fits a GaussianIntensityModel on pseudo labels. `weights` (optional) are
// per-case sample weights: nonnegative and not all zero.
GaussianIntensityModel fit_model(const Corpus& corpus, const std::vector<double>* weights = nullptr,
                                 const ModelOptions& options = {});

enum class AuditAction { keep, auto_replace, route_to_expert };
std::string_view to_string(AuditAction a);

struct AuditThresholds {
  double auto_replace_dsc = 0.0;
  double route_dsc = 0.5;
};

// dsc <= auto_replace_dsc -> auto_replace; dsc < route_dsc -> route; else keep.
AuditAction classify_dsc(double dsc, const AuditThresholds& t = {});

struct StructureAudit {
  Label label = 0;
  double dsc = 1.0;
  AuditAction action = AuditAction::keep;
  std::size_t pseudo_voxels = 0;
  std::size_t predicted_voxels = 0;
};

struct AuditOutcome {
  std::string case_id;
  std::vector<StructureAudit> structures;  // catalog order
  LabelMap prediction;
};

// Reads only the volume and pseudo labels of the case.
AuditOutcome audit_case(const SegmentationModel& model, const CaseRecord& c,
                        const AuditThresholds& thresholds = {});
// Audit against an existing prediction of the same frozen model.
AuditOutcome audit_prediction(LabelMap prediction, const CaseRecord& c,
                              const StructureCatalog& catalog, const AuditThresholds& thresholds = {});

struct ChangeEntry {
  std::string case_id;
  std::string structure;
  std::string action;
  std::size_t voxels_before = 0;
  std::size_t voxels_after = 0;
  // Voxels whose label was contested while writing the new mask.
  std::size_t collisions = 0;
};

struct ReplaceStats {
  std::size_t before = 0;
  std::size_t after = 0;
  std::size_t collisions = 0;
};

// Clears `label` and writes `mask` in its place. A written organ or vessel
// never overwrites a tumor voxel; otherwise the new mask wins.
ReplaceStats replace_structure(LabelMap& map, const StructureCatalog& catalog, Label label,
                               const BinaryMask& mask);

struct UpdateResult {
  CaseRecord updated;
  std::vector<ChangeEntry> changes;
};

UpdateResult apply_update_rule(const CaseRecord& c, const AuditOutcome& outcome,
                               const StructureCatalog& catalog);

Json change_to_json(const ChangeEntry& e);
// One JSON object per line.
std::string to_jsonl(const std::vector<ChangeEntry>& entries);

}  // namespace emr
