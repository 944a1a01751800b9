#pragma once

// Sensitivity-first tumor annotation: threshold selection on a validation
// split, report-based suppression, simulated false-positive erasure, and the
// annotation-time model.

#include <string>
#include <vector>

#include "emr/json.hpp"
#include "emr/metrics.hpp"
#include "emr/verifier.hpp"
#include "emr/volume_io.hpp"

namespace emr {

struct ThresholdPolicy {
  double target_sensitivity = 0.99;
  double selected_threshold = 0.0;
  double achieved_sensitivity = 0.0;
  double fp_per_scan = 0.0;
  bool feasible = false;
};

// Largest threshold whose sensitivity reaches the target. When none does,
// the lowest-threshold point is returned with feasible = false.
ThresholdPolicy select_threshold(const RocCurve& curve, double target);

struct CostModel {
  double seconds_per_fp_removal = 5.0;
  double seconds_per_scratch_annotation = 270.0;
  // Report-negative cases are cleared without clicks.
  bool report_autoremoval = true;

  void validate() const;
};

// Empty mask when the report states no tumor; otherwise `pred` unchanged.
BinaryMask suppress_fp_by_report(const CaseRecord& c, const BinaryMask& pred);

struct FpErasure {
  BinaryMask cleaned;
  std::uint64_t clicks = 0;
  double seconds = 0.0;
};

// Erases every predicted component that touches no gold component; one
// click per erased component.
FpErasure simulate_fp_erasure(const BinaryMask& pred, const BinaryMask& gold,
                              const CostModel& cost, Connectivity connectivity = Connectivity::face6);

struct CaseCost {
  std::string case_id;
  std::uint64_t gold_instances = 0;
  std::uint64_t missed_instances = 0;
  std::uint64_t clicks = 0;
  std::uint64_t report_removed = 0;  // components cleared by the report
};

struct SavingsReport {
  std::uint64_t gold_instances = 0;
  std::uint64_t missed_instances = 0;
  std::uint64_t clicks = 0;
  std::uint64_t report_removed = 0;
  double scratch_seconds = 0.0;
  double workflow_seconds = 0.0;
  double ratio = 0.0;
};

// scratch = instances * scratch cost; workflow = clicks * fp cost + missed *
// scratch cost; ratio = 1 - workflow / scratch. Zero instances is an
// undefined_rate error.
SavingsReport annotation_savings(const std::vector<CaseCost>& cases, const CostModel& cost);

// The same arithmetic from per-scan rates.
double savings_ratio(double sensitivity, double fp_per_scan, double tumors_per_scan,
                     const CostModel& cost);

struct RocWorkflowOptions {
  double target_sensitivity = 0.99;
  std::size_t thresholds = 101;
  // The first ceil(fraction * n) cases select the threshold; the rest are annotated.
  double validation_fraction = 0.5;
  RocOptions roc;
};

struct RocWorkflowResult {
  RocCurve validation_curve;
  ThresholdPolicy policy;
  std::size_t validation_cases = 0;
  std::vector<CaseCost> costs;  // annotated split, corpus order
  SavingsReport savings;
  // Patient-wise false positives on report-negative cases after suppression.
  std::uint64_t report_negative_fp = 0;
};

// Simulation: every case needs gold labels.
RocWorkflowResult run_roc_workflow(const Corpus& corpus, const SegmentationModel& model,
                                   const CostModel& cost, const RocWorkflowOptions& options = {});

Json policy_to_json(const ThresholdPolicy& p);
Json savings_to_json(const SavingsReport& s);
Json roc_workflow_to_json(const RocWorkflowResult& r);
// threshold,sensitivity,fp_per_scan,specificity
std::string roc_to_csv(const RocCurve& curve);

}  // namespace emr
