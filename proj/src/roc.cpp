#include "emr/roc.hpp"

#include <cmath>
#include <cstdio>

namespace emr {

ThresholdPolicy select_threshold(const RocCurve& curve, double target) {
  if (curve.points.empty()) fail(ErrorKind::invariant, "select_threshold: empty curve");
  if (!(target > 0.0 && target <= 1.0))
    fail(ErrorKind::config, "select_threshold: target must be in (0,1]");
  ThresholdPolicy p;
  p.target_sensitivity = target;
  const RocPoint* pick = nullptr;
  for (const RocPoint& pt : curve.points)
    if (pt.sensitivity >= target && (!pick || pt.threshold > pick->threshold)) pick = &pt;
  p.feasible = pick != nullptr;
  if (!pick) {
    pick = &curve.points.front();
    for (const RocPoint& pt : curve.points)
      if (pt.threshold < pick->threshold) pick = &pt;
  }
  p.selected_threshold = pick->threshold;
  p.achieved_sensitivity = pick->sensitivity;
  p.fp_per_scan = pick->fp_per_scan;
  return p;
}

void CostModel::validate() const {
  if (!(seconds_per_fp_removal > 0) || !(seconds_per_scratch_annotation > 0))
    fail(ErrorKind::config, "cost model: both costs must be positive");
}

BinaryMask suppress_fp_by_report(const CaseRecord& c, const BinaryMask& pred) {
  if (c.report.tumor_present) return pred;
  return BinaryMask(pred.dims, pred.spacing, 0);
}

FpErasure simulate_fp_erasure(const BinaryMask& pred, const BinaryMask& gold,
                              const CostModel& cost, Connectivity connectivity) {
  require_same_shape(pred.dims, gold.dims, "simulate_fp_erasure");
  const ComponentLabeling cc = connected_components(pred, connectivity);
  std::vector<std::uint8_t> hit(cc.count, 0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (cc.ids[i] && gold.data[i]) hit[cc.ids[i] - 1] = 1;
  FpErasure out{pred, 0, 0.0};
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (cc.ids[i] && !hit[cc.ids[i] - 1]) out.cleaned.data[i] = 0;
  for (const auto h : hit) out.clicks += !h;
  out.seconds = double(out.clicks) * cost.seconds_per_fp_removal;
  return out;
}

SavingsReport annotation_savings(const std::vector<CaseCost>& cases, const CostModel& cost) {
  cost.validate();
  SavingsReport s;
  for (const CaseCost& c : cases) {
    s.gold_instances += c.gold_instances;
    s.missed_instances += c.missed_instances;
    s.clicks += c.clicks;
    s.report_removed += c.report_removed;
  }
  if (s.gold_instances == 0)
    fail(ErrorKind::undefined_rate, "annotation savings undefined: no gold tumor instances");
  s.scratch_seconds = double(s.gold_instances) * cost.seconds_per_scratch_annotation;
  s.workflow_seconds = double(s.clicks) * cost.seconds_per_fp_removal +
                       double(s.missed_instances) * cost.seconds_per_scratch_annotation;
  s.ratio = 1.0 - s.workflow_seconds / s.scratch_seconds;
  return s;
}

double savings_ratio(double sensitivity, double fp_per_scan, double tumors_per_scan,
                     const CostModel& cost) {
  if (!(tumors_per_scan > 0))
    fail(ErrorKind::undefined_rate, "savings ratio undefined: no tumors per scan");
  const double scratch = tumors_per_scan * cost.seconds_per_scratch_annotation;
  const double workflow = fp_per_scan * cost.seconds_per_fp_removal +
                          (1.0 - sensitivity) * tumors_per_scan * cost.seconds_per_scratch_annotation;
  return 1.0 - workflow / scratch;
}

RocWorkflowResult run_roc_workflow(const Corpus& corpus, const SegmentationModel& model,
                                   const CostModel& cost, const RocWorkflowOptions& options) {
  cost.validate();
  const auto tumor = corpus.catalog.first_tumor();
  if (!tumor) fail(ErrorKind::catalog, "roc workflow: catalog has no tumor structure");
  if (corpus.cases.size() < 2) fail(ErrorKind::invariant, "roc workflow: need at least 2 cases");
  if (!(options.validation_fraction > 0 && options.validation_fraction < 1))
    fail(ErrorKind::config, "roc workflow: validation_fraction must be in (0,1)");
  for (const auto& c : corpus.cases)
    if (!c.gold) fail(ErrorKind::invariant, "roc workflow: case " + c.case_id + " has no gold labels");

  const std::size_t n = corpus.cases.size();
  std::size_t n_val = std::size_t(std::ceil(options.validation_fraction * double(n) - 1e-9));
  n_val = std::min(std::max<std::size_t>(n_val, 1), n - 1);

  std::vector<ProbabilityMap> probs(n);
  std::vector<BinaryMask> refs(n);
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = model.predict_prob(corpus.cases[i].volume, *tumor);
    refs[i] = extract_structure_mask(*corpus.cases[i].gold, corpus.catalog, *tumor);
  }

  RocWorkflowResult r;
  r.validation_cases = n_val;
  r.validation_curve = build_roc({probs.begin(), probs.begin() + long(n_val)},
                                 {refs.begin(), refs.begin() + long(n_val)},
                                 default_thresholds(options.thresholds), options.roc);
  r.policy = select_threshold(r.validation_curve, options.target_sensitivity);

  r.costs.resize(n - n_val);
  std::vector<std::uint8_t> negative_fp(n - n_val, 0);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < long(n - n_val); ++k) {
    const std::size_t i = n_val + std::size_t(k);
    const CaseRecord& c = corpus.cases[i];
    const BinaryMask raw = binarize(probs[i], r.policy.selected_threshold);
    CaseCost cc;
    cc.case_id = c.case_id;
    BinaryMask pred = raw;
    if (cost.report_autoremoval) {
      pred = suppress_fp_by_report(c, raw);
      if (!c.report.tumor_present)
        cc.report_removed = connected_components(raw, options.roc.connectivity).count;
    }
    negative_fp[k] = !c.report.tumor_present &&
                     patient_wise_detection(pred, refs[i]) == DetectionOutcome::FP;
    const FpErasure e = simulate_fp_erasure(pred, refs[i], cost, options.roc.connectivity);
    const ConfusionCounts t = tumor_wise_detection(e.cleaned, refs[i], options.roc.connectivity);
    cc.gold_instances = t.tp + t.fn;
    cc.missed_instances = t.fn;
    cc.clicks = e.clicks;
    r.costs[k] = cc;
  }
  for (const auto f : negative_fp) r.report_negative_fp += f;
  r.savings = annotation_savings(r.costs, cost);
  return r;
}

Json policy_to_json(const ThresholdPolicy& p) {
  return {{"target_sensitivity", p.target_sensitivity},
          {"selected_threshold", p.selected_threshold},
          {"achieved_sensitivity", p.achieved_sensitivity},
          {"fp_per_scan", p.fp_per_scan},
          {"feasible", p.feasible}};
}

Json savings_to_json(const SavingsReport& s) {
  return {{"gold_instances", s.gold_instances}, {"missed_instances", s.missed_instances},
          {"clicks", s.clicks},                 {"report_removed", s.report_removed},
          {"scratch_seconds", s.scratch_seconds}, {"workflow_seconds", s.workflow_seconds},
          {"ratio", s.ratio}};
}

Json roc_workflow_to_json(const RocWorkflowResult& r) {
  Json cases = Json::array();
  for (const CaseCost& c : r.costs)
    cases.push_back({{"case_id", c.case_id},
                     {"gold_instances", c.gold_instances},
                     {"missed_instances", c.missed_instances},
                     {"clicks", c.clicks},
                     {"report_removed", c.report_removed}});
  return {{"schema_version", kSchemaVersion},
          {"validation_cases", r.validation_cases},
          {"policy", policy_to_json(r.policy)},
          {"savings", savings_to_json(r.savings)},
          {"report_negative_fp", r.report_negative_fp},
          {"cases", cases}};
}

std::string roc_to_csv(const RocCurve& curve) {
  std::string out = "threshold,sensitivity,fp_per_scan,specificity\n";
  char line[128];
  for (const RocPoint& p : curve.points) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f\n", p.threshold, p.sensitivity,
                  p.fp_per_scan, p.specificity);
    out += line;
  }
  return out;
}

}  // namespace emr
