#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emr/geometry.hpp"
#include "emr/json.hpp"
#include "emr/volume.hpp"

namespace emr {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct SurfaceDistanceSpec {
  double tolerance_mm = 2.0;
  Spacing spacing;
};

// Both empty -> 1, exactly one empty -> 0.
double dsc(const BinaryMask& a, const BinaryMask& b);

// Normalized surface dice with face-neighbour boundaries and strict d < tolerance.
// Both empty -> 1, exactly one empty -> 0.
double nsd(const BinaryMask& a, const BinaryMask& b, const SurfaceDistanceSpec& spec);

// Throws undefined_rate naming the rate whose denominator is zero.
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double f1_score(const ConfusionCounts& c);

struct ClassificationRates {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
};
// Rates whose denominators vanish are left empty.
ClassificationRates classification_rates(const ConfusionCounts& c);

enum class DetectionOutcome { TP, TN, FP, FN };
std::string_view to_string(DetectionOutcome o);

DetectionOutcome patient_wise_detection(const BinaryMask& pred, const BinaryMask& ref);
ConfusionCounts& operator+=(ConfusionCounts& c, DetectionOutcome o);

// Instance-level tallies: tp/fn over reference components, fp over predicted
// components touching no reference component. tn is always 0. Predicted
// components smaller than `min_fp_voxels` are not counted as fp.
ConfusionCounts tumor_wise_detection(const BinaryMask& pred, const BinaryMask& ref,
                                     Connectivity connectivity, std::size_t min_fp_voxels = 1);

struct DiagnosisConfusion {
  std::array<std::array<std::uint64_t, 3>, 3> matrix{};  // [reference][predicted]
  double accuracy = 0.0;
};
DiagnosisConfusion diagnosis_confusion(const std::vector<TumorType>& pred,
                                       const std::vector<TumorType>& ref);

struct RocPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double fp_per_scan = 0.0;
  // Patient-level specificity over reference-negative cases; 1 when there are none.
  double specificity = 1.0;
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t fp = 0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocCurve {
  std::vector<RocPoint> points;  // thresholds strictly decreasing
};

struct RocOptions {
  Connectivity connectivity = Connectivity::face6;
  std::size_t min_fp_voxels = 1;
};

// A voxel is predicted at threshold t iff prob > t.
RocCurve build_roc(const std::vector<ProbabilityMap>& probs, const std::vector<BinaryMask>& refs,
                   const std::vector<double>& thresholds, const RocOptions& options = {});

// n evenly spaced thresholds from 1 down to 0 inclusive.
std::vector<double> default_thresholds(std::size_t n = 101);

BinaryMask binarize(const ProbabilityMap& prob, double threshold);

struct StructureScore {
  double dsc = 0.0;
  std::optional<double> nsd;
  std::size_t pred_voxels = 0;
  std::size_t ref_voxels = 0;
};

struct MetricReport {
  std::map<Label, StructureScore> per_structure;
};

MetricReport evaluate_case(const LabelMap& pred, const LabelMap& ref,
                           const StructureCatalog& catalog, const SurfaceDistanceSpec& spec,
                           bool with_nsd = true);

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t n = 0;
};
// Quartiles by linear interpolation between order statistics.
Summary summarize(std::vector<double> values);

Json metric_report_to_json(const MetricReport& r, const StructureCatalog& catalog);
Json summary_to_json(const Summary& s);

}  // namespace emr
