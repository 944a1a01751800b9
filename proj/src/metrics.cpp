#include "emr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emr/kernels.hpp"

namespace emr {

double dsc(const BinaryMask& a, const BinaryMask& b) {
  const OverlapCounts c = kernels::omp::overlap_counts(a, b);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * double(c.both) / double(c.a + c.b);
}

double nsd(const BinaryMask& a, const BinaryMask& b, const SurfaceDistanceSpec& spec) {
  require_same_shape(a.dims, b.dims, "nsd");
  if (!(spec.tolerance_mm > 0)) fail(ErrorKind::invariant, "nsd tolerance must be positive");
  if (!(a.spacing == spec.spacing) || !(b.spacing == spec.spacing))
    fail(ErrorKind::shape, "nsd: mask spacing does not match the distance spec");

  const BinaryMask sa = kernels::omp::boundary(a);
  const BinaryMask sb = kernels::omp::boundary(b);
  const std::size_t na = count_nonzero(sa), nb = count_nonzero(sb);
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;

  const std::vector<double> to_b = kernels::omp::squared_distance_to(sb);
  const std::vector<double> to_a = kernels::omp::squared_distance_to(sa);
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa.data[i] && std::sqrt(to_b[i]) < spec.tolerance_mm) ++hits;
    if (sb.data[i] && std::sqrt(to_a[i]) < spec.tolerance_mm) ++hits;
  }
  return double(hits) / double(na + nb);
}

double sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) fail(ErrorKind::undefined_rate, "sensitivity undefined: TP + FN = 0");
  return double(c.tp) / double(c.tp + c.fn);
}

double specificity(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0) fail(ErrorKind::undefined_rate, "specificity undefined: TN + FP = 0");
  return double(c.tn) / double(c.tn + c.fp);
}

double precision(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0) fail(ErrorKind::undefined_rate, "precision undefined: TP + FP = 0");
  return double(c.tp) / double(c.tp + c.fp);
}

double f1_score(const ConfusionCounts& c) {
  const double p = precision(c);
  const double r = sensitivity(c);
  if (p + r == 0) fail(ErrorKind::undefined_rate, "f1 undefined: precision + recall = 0");
  return 2.0 * p * r / (p + r);
}

ClassificationRates classification_rates(const ConfusionCounts& c) {
  ClassificationRates r;
  if (c.tp + c.fn > 0) r.sensitivity = sensitivity(c);
  if (c.tn + c.fp > 0) r.specificity = specificity(c);
  if (c.tp + c.fp > 0 && c.tp + c.fn > 0 && c.tp > 0) r.f1 = f1_score(c);
  return r;
}

std::string_view to_string(DetectionOutcome o) {
  switch (o) {
    case DetectionOutcome::TP: return "TP";
    case DetectionOutcome::TN: return "TN";
    case DetectionOutcome::FP: return "FP";
    case DetectionOutcome::FN: return "FN";
  }
  return "TN";
}

DetectionOutcome patient_wise_detection(const BinaryMask& pred, const BinaryMask& ref) {
  require_same_shape(pred.dims, ref.dims, "patient_wise_detection");
  const bool p = count_nonzero(pred) > 0;
  const bool r = count_nonzero(ref) > 0;
  if (p && r) return DetectionOutcome::TP;
  if (p) return DetectionOutcome::FP;
  if (r) return DetectionOutcome::FN;
  return DetectionOutcome::TN;
}

ConfusionCounts& operator+=(ConfusionCounts& c, DetectionOutcome o) {
  switch (o) {
    case DetectionOutcome::TP: ++c.tp; break;
    case DetectionOutcome::TN: ++c.tn; break;
    case DetectionOutcome::FP: ++c.fp; break;
    case DetectionOutcome::FN: ++c.fn; break;
  }
  return c;
}

ConfusionCounts tumor_wise_detection(const BinaryMask& pred, const BinaryMask& ref,
                                     Connectivity connectivity, std::size_t min_fp_voxels) {
  require_same_shape(pred.dims, ref.dims, "tumor_wise_detection");
  const ComponentLabeling rc = connected_components(ref, connectivity);
  const ComponentLabeling pc = connected_components(pred, connectivity);
  std::vector<std::uint8_t> ref_hit(rc.count, 0), pred_hit(pc.count, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (rc.ids[i] && pc.ids[i]) {
      ref_hit[rc.ids[i] - 1] = 1;
      pred_hit[pc.ids[i] - 1] = 1;
    }
  }
  ConfusionCounts c;
  for (const auto h : ref_hit) (h ? c.tp : c.fn) += 1;
  for (std::uint32_t k = 0; k < pc.count; ++k)
    if (!pred_hit[k] && pc.sizes[k] >= min_fp_voxels) ++c.fp;
  return c;
}

DiagnosisConfusion diagnosis_confusion(const std::vector<TumorType>& pred,
                                       const std::vector<TumorType>& ref) {
  if (pred.size() != ref.size())
    fail(ErrorKind::shape, "diagnosis_confusion: prediction and reference lengths differ");
  if (pred.empty()) fail(ErrorKind::invariant, "diagnosis_confusion: empty input");
  DiagnosisConfusion out;
  std::uint64_t trace = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = std::size_t(ref[i]), p = std::size_t(pred[i]);
    ++out.matrix[r][p];
    trace += r == p;
  }
  out.accuracy = double(trace) / double(pred.size());
  return out;
}

BinaryMask binarize(const ProbabilityMap& prob, double threshold) {
  BinaryMask m(prob.dims, prob.spacing, 0);
  for (std::size_t i = 0; i < prob.size(); ++i) m.data[i] = double(prob.data[i]) > threshold;
  return m;
}

std::vector<double> default_thresholds(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = n == 1 ? 0.0 : double(n - 1 - i) / double(n - 1);
  return t;
}

RocCurve build_roc(const std::vector<ProbabilityMap>& probs, const std::vector<BinaryMask>& refs,
                   const std::vector<double>& thresholds, const RocOptions& options) {
  if (probs.empty()) fail(ErrorKind::invariant, "build_roc: empty case set");
  if (probs.size() != refs.size()) fail(ErrorKind::shape, "build_roc: probs/refs length mismatch");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] < thresholds[i - 1]))
      fail(ErrorKind::invariant, "build_roc: thresholds must be strictly decreasing");

  struct CaseTally {
    ConfusionCounts inst;
    bool predicted = false;
  };
  RocCurve curve;
  for (const double t : thresholds) {
    std::vector<CaseTally> tallies(probs.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < long(probs.size()); ++i) {
      const BinaryMask pred = binarize(probs[i], t);
      tallies[i].inst = tumor_wise_detection(pred, refs[i], options.connectivity, options.min_fp_voxels);
      tallies[i].predicted = tallies[i].inst.tp + tallies[i].inst.fp > 0;
    }
    RocPoint p;
    p.threshold = t;
    std::uint64_t negatives = 0, true_negatives = 0;
    for (const CaseTally& c : tallies) {
      p.tp += c.inst.tp;
      p.fn += c.inst.fn;
      p.fp += c.inst.fp;
      if (c.inst.tp + c.inst.fn == 0) {
        ++negatives;
        true_negatives += !c.predicted;
      }
    }
    p.sensitivity = p.tp + p.fn ? double(p.tp) / double(p.tp + p.fn) : 0.0;
    p.fp_per_scan = double(p.fp) / double(probs.size());
    p.specificity = negatives ? double(true_negatives) / double(negatives) : 1.0;
    curve.points.push_back(p);
  }
  return curve;
}

MetricReport evaluate_case(const LabelMap& pred, const LabelMap& ref,
                           const StructureCatalog& catalog, const SurfaceDistanceSpec& spec,
                           bool with_nsd) {
  require_same_shape(pred.dims, ref.dims, "evaluate_case");
  MetricReport r;
  for (const auto& e : catalog.entries()) {
    const BinaryMask p = extract_structure_mask(pred, catalog, e.label);
    const BinaryMask g = extract_structure_mask(ref, catalog, e.label);
    StructureScore s;
    s.dsc = dsc(p, g);
    if (with_nsd) s.nsd = nsd(p, g, spec);
    s.pred_voxels = count_nonzero(p);
    s.ref_voxels = count_nonzero(g);
    r.per_structure[e.label] = s;
  }
  return r;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  auto quantile = [&](double q) {
    const double pos = q * double(values.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
  };
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  return s;
}

Json metric_report_to_json(const MetricReport& r, const StructureCatalog& catalog) {
  Json out = Json::object();
  for (const auto& [label, s] : r.per_structure) {
    Json e = {{"label", label},
              {"dsc", s.dsc},
              {"pred_voxels", s.pred_voxels},
              {"ref_voxels", s.ref_voxels}};
    e["nsd"] = s.nsd ? Json(*s.nsd) : Json(nullptr);
    out[catalog.at(label).name] = e;
  }
  return out;
}

Json summary_to_json(const Summary& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"n", s.n}};
}

}  // namespace emr
