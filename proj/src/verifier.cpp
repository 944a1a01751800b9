#include "emr/verifier.hpp"

#include <algorithm>
#include <sstream>

#include "emr/metrics.hpp"

namespace emr {

std::string_view to_string(AuditAction a) {
  switch (a) {
    case AuditAction::keep: return "keep";
    case AuditAction::auto_replace: return "auto_replace";
    case AuditAction::route_to_expert: return "route_to_expert";
  }
  return "keep";
}

AuditAction classify_dsc(double dsc, const AuditThresholds& t) {
  if (dsc <= t.auto_replace_dsc) return AuditAction::auto_replace;
  if (dsc < t.route_dsc) return AuditAction::route_to_expert;
  return AuditAction::keep;
}

AuditOutcome audit_case(const SegmentationModel& model, const CaseRecord& c,
                        const AuditThresholds& thresholds) {
  require_same_shape(c.volume.dims, c.pseudo.dims, "audit_case");
  return audit_prediction(model.predict(c.volume), c, model.catalog(), thresholds);
}

AuditOutcome audit_prediction(LabelMap prediction, const CaseRecord& c,
                              const StructureCatalog& catalog, const AuditThresholds& thresholds) {
  require_same_shape(prediction.dims, c.pseudo.dims, "audit_prediction");
  AuditOutcome out;
  out.case_id = c.case_id;
  out.prediction = std::move(prediction);
  for (const auto& e : catalog.entries()) {
    const BinaryMask p = extract_structure_mask(c.pseudo, catalog, e.label);
    const BinaryMask m = extract_structure_mask(out.prediction, catalog, e.label);
    StructureAudit a;
    a.label = e.label;
    a.dsc = dsc(p, m);
    a.action = classify_dsc(a.dsc, thresholds);
    a.pseudo_voxels = count_nonzero(p);
    a.predicted_voxels = count_nonzero(m);
    out.structures.push_back(a);
  }
  return out;
}

ReplaceStats replace_structure(LabelMap& map, const StructureCatalog& catalog, Label label,
                               const BinaryMask& mask) {
  require_same_shape(map.dims, mask.dims, "replace_structure");
  const bool writing_tumor = catalog.at(label).kind == StructureKind::tumor;
  ReplaceStats s;
  for (auto& v : map.data)
    if (v == label) {
      ++s.before;
      v = 0;
    }
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!mask.data[i]) continue;
    const Label cur = map.data[i];
    if (cur != 0) {
      ++s.collisions;
      if (!writing_tumor && catalog.at(cur).kind == StructureKind::tumor) continue;
    }
    map.data[i] = label;
    ++s.after;
  }
  return s;
}

UpdateResult apply_update_rule(const CaseRecord& c, const AuditOutcome& outcome,
                               const StructureCatalog& catalog) {
  if (outcome.case_id != c.case_id)
    fail(ErrorKind::invariant, "apply_update_rule: outcome belongs to " + outcome.case_id);
  UpdateResult r{c, {}};
  // Tumors first: an organ written afterwards can then claim voxels a
  // replaced tumor vacated instead of leaving holes.
  std::vector<const StructureAudit*> order;
  for (const StructureAudit& a : outcome.structures)
    if (a.action == AuditAction::auto_replace) order.push_back(&a);
  std::stable_partition(order.begin(), order.end(), [&](const StructureAudit* a) {
    return catalog.at(a->label).kind == StructureKind::tumor;
  });
  for (const StructureAudit* ap : order) {
    const StructureAudit& a = *ap;
    const BinaryMask predicted = extract_structure_mask(outcome.prediction, catalog, a.label);
    const ReplaceStats s = replace_structure(r.updated.pseudo, catalog, a.label, predicted);
    r.changes.push_back({c.case_id, catalog.at(a.label).name, std::string(to_string(a.action)),
                         s.before, s.after, s.collisions});
  }
  return r;
}

Json change_to_json(const ChangeEntry& e) {
  return {{"case_id", e.case_id},   {"structure", e.structure},       {"action", e.action},
          {"voxels_before", e.voxels_before}, {"voxels_after", e.voxels_after},
          {"collisions", e.collisions}};
}

std::string to_jsonl(const std::vector<ChangeEntry>& entries) {
  std::ostringstream os;
  for (const auto& e : entries) os << change_to_json(e).dump() << '\n';
  return os.str();
}

}  // namespace emr
