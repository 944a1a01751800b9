#pragma once

// Synthetic abdominal phantoms and annotation-noise injection.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emr/json.hpp"
#include "emr/rng.hpp"
#include "emr/volume.hpp"
#include "emr/volume_io.hpp"

namespace emr {

enum class Shape { ellipsoid, cylinder, sphere };
std::string_view to_string(Shape s);
Shape parse_shape(std::string_view text);

// Centers and radii are normalized to the unit cube. A cylinder is vertical:
// radii x/y give the cross-section and radii z the half-height. A sphere
// uses radii x for all three axes.
struct StructureSpec {
  std::string name;
  StructureKind kind = StructureKind::organ;
  Shape shape = Shape::ellipsoid;
  std::array<double, 3> center{0.5, 0.5, 0.5};
  std::array<double, 3> radii{0.1, 0.1, 0.1};
  double mean = 100.0;
  double stddev = 6.0;
};

struct TumorSpec {
  std::string name = "tumor";
  std::string host = "pancreas";
  std::uint32_t count_min = 0;
  std::uint32_t count_max = 2;
  double radius_min = 2.0;  // voxels
  double radius_max = 4.0;
  double intensity_offset = -40.0;  // relative to the host mean
  double stddev = 6.0;
  // Minimum gap in voxels between the surfaces of two tumors.
  double separation = 2.0;
};

struct PhantomSpec {
  std::string catalog_id = "abdomen-7";
  Dims dims{64, 64, 64};
  Spacing spacing;
  std::vector<StructureSpec> structures;
  std::optional<TumorSpec> tumor;
  double background_mean = 0.0;
  double background_std = 6.0;
  // Per-case variation: uniform center offset, per-axis radius scale, and
  // structure mean offset.
  double center_jitter = 0.02;
  double radius_jitter = 0.1;
  double intensity_jitter = 2.0;

  // Structures in listed order with the tumor last.
  StructureCatalog catalog() const;
  void validate() const;
};

enum class NoiseOp { remove, shift, fragment, dilate, erode, spurious, tumor_miss, tumor_fp };
std::string_view to_string(NoiseOp op);
NoiseOp parse_noise_op(std::string_view text);

struct OpRates {
  double remove = 0.0;
  double shift = 0.0;
  double fragment = 0.0;
  double spurious = 0.0;
  double boundary_jitter = 0.0;
};

struct NoiseSpec {
  std::string name = "none";
  OpRates rates;                          // for every non-tumor structure
  std::map<std::string, OpRates> overrides;  // by structure name
  // Shift magnitude as a multiple of the structure's half-extent along the
  // chosen axis (x or z), and never less than `shift_min_voxels`.
  double shift_min = 0.8;
  double shift_max = 1.6;
  long shift_min_voxels = 5;
  long fragment_gap = 2;
  long spurious_radius_min = 3;
  long spurious_radius_max = 4;
  // Tumor errors: each gold tumor is missed with `tumor_miss`; one false blob
  // inside the host is added with probability `tumor_fp`.
  double tumor_miss = 0.0;
  double tumor_fp = 0.0;
  long tumor_fp_radius_min = 2;
  long tumor_fp_radius_max = 3;
  std::string tumor_host = "pancreas";

  const OpRates& rates_for(const std::string& structure) const;
  void validate() const;
};

// One applied corruption. Parameters by op:
//   shift      dx, dy, dz
//   fragment   axis, first slab index, thickness
//   spurious   cx, cy, cz, radius
//   tumor_miss seed voxel index, host label
//   tumor_fp   cx, cy, cz, radius, host label
struct InjectionOp {
  NoiseOp op = NoiseOp::remove;
  Label label = 0;
  std::array<long, 5> params{};
  friend bool operator==(const InjectionOp&, const InjectionOp&) = default;
};

struct InjectionLog {
  std::vector<InjectionOp> ops;
};

Json injection_log_to_json(const InjectionLog& log, const StructureCatalog& catalog);

void apply_noise_op(LabelMap& map, const InjectionOp& op);
// Replays a log on gold; reproduces the pseudo annotation exactly.
LabelMap replay(const LabelMap& gold, const InjectionLog& log);

CaseRecord generate_case(const PhantomSpec& spec, std::uint64_t seed);
CaseRecord generate_case(const PhantomSpec& spec, std::uint64_t seed,
                         std::optional<std::uint32_t> forced_tumor_count);

struct NoisyCase {
  CaseRecord record;
  InjectionLog log;
};
NoisyCase inject_noise(const CaseRecord& c, const StructureCatalog& catalog, const NoiseSpec& noise,
                       std::uint64_t seed);

// Applies exactly one structural corruption (remove, shift, fragment or
// spurious; miss or false blob for tumors) to `label`, drawn in proportion
// to the noise rates. Used to build judge benchmarks.
std::optional<InjectionOp> corrupt_structure(LabelMap& map, const StructureCatalog& catalog,
                                             Label label, const NoiseSpec& noise, Rng& rng);

struct GeneratedCorpus {
  Corpus corpus;
  std::vector<InjectionLog> logs;
};

// ceil(gold_fraction * n) cases are flagged gold and keep clean pseudo labels.
GeneratedCorpus generate_corpus(const PhantomSpec& spec, const NoiseSpec& noise,
                                std::uint32_t n_cases, double gold_fraction, std::uint64_t seed);

}  // namespace emr
