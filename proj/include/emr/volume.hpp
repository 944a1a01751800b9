#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emr/error.hpp"

namespace emr {

// Voxel counts along each axis. Storage is row-major with x fastest:
// index = x + dims.x * (y + dims.y * z).
struct Dims {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;

  std::size_t count() const noexcept {
    return std::size_t{x} * std::size_t{y} * std::size_t{z};
  }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return i + std::size_t{x} * (j + std::size_t{y} * k);
  }
  bool contains(long i, long j, long k) const noexcept {
    return i >= 0 && j >= 0 && k >= 0 && i < long(x) && j < long(y) && k < long(z);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

// Millimetres per voxel.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct Coord {
  long x = 0;
  long y = 0;
  long z = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

template <typename T>
struct Grid {
  Dims dims;
  Spacing spacing;
  std::vector<T> data;

  Grid() = default;
  Grid(Dims d, Spacing s, T fill = T{}) : dims(d), spacing(s), data(d.count(), fill) {}

  T& at(std::size_t i, std::size_t j, std::size_t k) { return data[dims.index(i, j, k)]; }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[dims.index(i, j, k)];
  }
  Coord coord(std::size_t idx) const noexcept {
    const std::size_t plane = std::size_t{dims.x} * dims.y;
    return {long(idx % dims.x), long((idx / dims.x) % dims.y), long(idx / plane)};
  }
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using VoxelGrid = Grid<float>;
using BinaryMask = Grid<std::uint8_t>;
using ProbabilityMap = Grid<float>;

struct LabelMap : Grid<std::uint16_t> {
  std::string catalog_id;

  LabelMap() = default;
  LabelMap(Dims d, Spacing s, std::string catalog)
      : Grid<std::uint16_t>(d, s, 0), catalog_id(std::move(catalog)) {}

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

using Label = std::uint16_t;

enum class StructureKind { organ, vessel, tumor };

std::string_view to_string(StructureKind kind);
StructureKind parse_structure_kind(std::string_view text);

struct StructureEntry {
  Label label = 0;
  std::string name;
  StructureKind kind = StructureKind::organ;
  friend bool operator==(const StructureEntry&, const StructureEntry&) = default;
};

class StructureCatalog {
 public:
  StructureCatalog() = default;
  // Throws catalog error unless labels are unique and dense from 1.
  StructureCatalog(std::string id, std::vector<StructureEntry> entries);

  const std::string& id() const noexcept { return id_; }
  const std::vector<StructureEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool contains(Label label) const noexcept { return label >= 1 && label <= entries_.size(); }
  const StructureEntry& at(Label label) const;
  const StructureEntry& by_name(std::string_view name) const;
  std::optional<Label> find(std::string_view name) const;
  std::vector<Label> labels_of_kind(StructureKind kind) const;
  std::optional<Label> first_tumor() const;

  // liver, spleen, kidney_left, kidney_right, pancreas, aorta, tumor
  static StructureCatalog default_catalog();

  friend bool operator==(const StructureCatalog&, const StructureCatalog&) = default;

 private:
  std::string id_;
  std::vector<StructureEntry> entries_;
};

enum class TumorType { PDAC, cyst, PNET };
std::string_view to_string(TumorType t);
TumorType parse_tumor_type(std::string_view text);

struct StructuredReport {
  bool tumor_present = false;
  std::optional<TumorType> tumor_type;
  std::uint32_t tumor_count = 0;

  void validate() const;
  friend bool operator==(const StructuredReport&, const StructuredReport&) = default;
};

enum class Sex { female, male };
enum class Phase { arterial, venous, noncontrast };
std::string_view to_string(Sex s);
std::string_view to_string(Phase p);
Sex parse_sex(std::string_view text);
Phase parse_phase(std::string_view text);

struct CaseMeta {
  int age = 0;
  Sex sex = Sex::female;
  Phase phase = Phase::venous;
  // The pseudo annotation of a gold case is expert-verified.
  bool is_gold = false;
  friend bool operator==(const CaseMeta&, const CaseMeta&) = default;
};

struct CaseRecord {
  std::string case_id;
  VoxelGrid volume;
  LabelMap pseudo;
  std::optional<LabelMap> gold;
  StructuredReport report;
  CaseMeta meta;

  // `gold_withheld` relaxes is_gold => gold present, for runs that load
  // without gold labels.
  void validate(const StructureCatalog& catalog, bool gold_withheld = false) const;
  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

void require_same_shape(const Dims& a, const Dims& b, std::string_view what);
void validate_grid_geometry(const Dims& d, const Spacing& s);
void validate_label_map(const LabelMap& map, const StructureCatalog& catalog);

std::size_t count_nonzero(const BinaryMask& mask);

BinaryMask extract_structure_mask(const LabelMap& map, const StructureCatalog& catalog,
                                  Label label);
// Union of several structure masks.
BinaryMask extract_union_mask(const LabelMap& map, const StructureCatalog& catalog,
                              const std::vector<Label>& labels);

}  // namespace emr
