#include "emr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emr/kernels.hpp"

namespace emr {

std::string_view to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::organ: return "organ";
    case StructureKind::vessel: return "vessel";
    case StructureKind::tumor: return "tumor";
  }
  return "organ";
}

StructureKind parse_structure_kind(std::string_view text) {
  if (text == "organ") return StructureKind::organ;
  if (text == "vessel") return StructureKind::vessel;
  if (text == "tumor") return StructureKind::tumor;
  fail(ErrorKind::catalog, "unknown structure kind '" + std::string(text) + "'");
}

std::string_view to_string(TumorType t) {
  switch (t) {
    case TumorType::PDAC: return "PDAC";
    case TumorType::cyst: return "cyst";
    case TumorType::PNET: return "PNET";
  }
  return "PDAC";
}

TumorType parse_tumor_type(std::string_view text) {
  if (text == "PDAC") return TumorType::PDAC;
  if (text == "cyst") return TumorType::cyst;
  if (text == "PNET") return TumorType::PNET;
  fail(ErrorKind::invariant, "unknown tumor type '" + std::string(text) + "'");
}

std::string_view to_string(Sex s) { return s == Sex::female ? "female" : "male"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::arterial: return "arterial";
    case Phase::venous: return "venous";
    case Phase::noncontrast: return "noncontrast";
  }
  return "venous";
}

Sex parse_sex(std::string_view text) {
  if (text == "female") return Sex::female;
  if (text == "male") return Sex::male;
  fail(ErrorKind::invariant, "unknown sex '" + std::string(text) + "'");
}

Phase parse_phase(std::string_view text) {
  if (text == "arterial") return Phase::arterial;
  if (text == "venous") return Phase::venous;
  if (text == "noncontrast") return Phase::noncontrast;
  fail(ErrorKind::invariant, "unknown phase '" + std::string(text) + "'");
}

StructureCatalog::StructureCatalog(std::string id, std::vector<StructureEntry> entries)
    : id_(std::move(id)), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].label != i + 1)
      fail(ErrorKind::catalog, "catalog labels must be dense from 1; entry '" +
                                   entries_[i].name + "' has label " +
                                   std::to_string(entries_[i].label));
    for (std::size_t j = 0; j < i; ++j)
      if (entries_[j].name == entries_[i].name)
        fail(ErrorKind::catalog, "duplicate structure name '" + entries_[i].name + "'");
  }
}

const StructureEntry& StructureCatalog::at(Label label) const {
  if (!contains(label))
    fail(ErrorKind::catalog, "label " + std::to_string(label) + " is not in catalog '" + id_ + "'");
  return entries_[label - 1];
}

const StructureEntry& StructureCatalog::by_name(std::string_view name) const {
  const auto label = find(name);
  if (!label) fail(ErrorKind::catalog, "structure '" + std::string(name) + "' is not in catalog");
  return entries_[*label - 1];
}

std::optional<Label> StructureCatalog::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.label;
  return std::nullopt;
}

std::vector<Label> StructureCatalog::labels_of_kind(StructureKind kind) const {
  std::vector<Label> out;
  for (const auto& e : entries_)
    if (e.kind == kind) out.push_back(e.label);
  return out;
}

std::optional<Label> StructureCatalog::first_tumor() const {
  for (const auto& e : entries_)
    if (e.kind == StructureKind::tumor) return e.label;
  return std::nullopt;
}

StructureCatalog StructureCatalog::default_catalog() {
  return StructureCatalog("abdomen-7", {{1, "liver", StructureKind::organ},
                                        {2, "spleen", StructureKind::organ},
                                        {3, "kidney_left", StructureKind::organ},
                                        {4, "kidney_right", StructureKind::organ},
                                        {5, "pancreas", StructureKind::organ},
                                        {6, "aorta", StructureKind::vessel},
                                        {7, "tumor", StructureKind::tumor}});
}

void StructuredReport::validate() const {
  if (tumor_present != (tumor_count > 0))
    fail(ErrorKind::invariant, "report: tumor_present must equal (tumor_count > 0)");
  if (tumor_type.has_value() != tumor_present)
    fail(ErrorKind::invariant, "report: tumor_type must be set iff a tumor is present");
}

void require_same_shape(const Dims& a, const Dims& b, std::string_view what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.x << "x" << a.y << "x" << a.z << " vs " << b.x << "x"
       << b.y << "x" << b.z;
    fail(ErrorKind::shape, os.str());
  }
}

void validate_grid_geometry(const Dims& d, const Spacing& s) {
  if (d.x == 0 || d.y == 0 || d.z == 0) fail(ErrorKind::shape, "dims must be positive");
  if (!(s.x > 0 && s.y > 0 && s.z > 0) || !std::isfinite(s.x) || !std::isfinite(s.y) ||
      !std::isfinite(s.z))
    fail(ErrorKind::shape, "spacing must be positive and finite");
}

void validate_label_map(const LabelMap& map, const StructureCatalog& catalog) {
  validate_grid_geometry(map.dims, map.spacing);
  if (map.data.size() != map.dims.count()) fail(ErrorKind::shape, "label data length != dims");
  if (map.catalog_id != catalog.id())
    fail(ErrorKind::catalog, "label map references catalog '" + map.catalog_id + "', expected '" +
                                 catalog.id() + "'");
  for (const auto l : map.data)
    if (l != 0 && !catalog.contains(l))
      fail(ErrorKind::catalog, "label " + std::to_string(l) + " not in catalog");
}

void CaseRecord::validate(const StructureCatalog& catalog, bool gold_withheld) const {
  validate_grid_geometry(volume.dims, volume.spacing);
  if (volume.data.size() != volume.dims.count()) fail(ErrorKind::shape, "volume data length != dims");
  for (const float v : volume.data)
    if (!std::isfinite(v)) fail(ErrorKind::invariant, case_id + ": non-finite intensity");
  validate_label_map(pseudo, catalog);
  require_same_shape(volume.dims, pseudo.dims, case_id + " pseudo");
  if (!(volume.spacing == pseudo.spacing)) fail(ErrorKind::shape, case_id + ": spacing mismatch");
  if (gold) {
    validate_label_map(*gold, catalog);
    require_same_shape(volume.dims, gold->dims, case_id + " gold");
    if (!(volume.spacing == gold->spacing)) fail(ErrorKind::shape, case_id + ": spacing mismatch");
  }
  if (meta.is_gold && !gold && !gold_withheld)
    fail(ErrorKind::invariant, case_id + ": flagged gold but has no gold labels");
  report.validate();
}

std::size_t count_nonzero(const BinaryMask& mask) {
  return std::size_t(std::count_if(mask.data.begin(), mask.data.end(),
                                   [](std::uint8_t v) { return v != 0; }));
}

BinaryMask extract_structure_mask(const LabelMap& map, const StructureCatalog& catalog,
                                  Label label) {
  if (!catalog.contains(label))
    fail(ErrorKind::catalog, "label " + std::to_string(label) + " is not in catalog '" +
                                 catalog.id() + "'");
  return kernels::omp::label_equals(map.data, map.dims, map.spacing, label);
}

BinaryMask extract_union_mask(const LabelMap& map, const StructureCatalog& catalog,
                              const std::vector<Label>& labels) {
  BinaryMask out(map.dims, map.spacing, 0);
  for (const Label l : labels) {
    const BinaryMask m = extract_structure_mask(map, catalog, l);
    for (std::size_t i = 0; i < m.size(); ++i) out.data[i] |= m.data[i];
  }
  return out;
}

}  // namespace emr
