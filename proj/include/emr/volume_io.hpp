#pragma once

// On-disk formats.
//
// Binary volume (.smai), little-endian, 31-byte header:
//   offset 0  char[4]  "SMAI"
//   offset 4  u16      format version (1)
//   offset 6  u8       dtype: 1 = f32 intensities, 2 = u16 labels
//   offset 7  u32[3]   dims x, y, z
//   offset 19 f32[3]   spacing x, y, z (mm)
//   offset 31 payload  dims.x*dims.y*dims.z samples, x fastest
//
// Corpus directory:
//   manifest.json            schema_version, catalog, case list, crc32 per file
//   cases/<id>.json          sidecar: case_id, report, meta, file names
//   cases/<id>.volume.smai   intensities
//   cases/<id>.pseudo.smai   pseudo labels
//   cases/<id>.gold.smai     gold labels (optional)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emr/json.hpp"
#include "emr/volume.hpp"

namespace emr {

inline constexpr std::uint16_t kVolumeFormatVersion = 1;
inline constexpr int kSchemaVersion = 1;

enum class VolumeDtype : std::uint8_t { f32 = 1, u16 = 2 };

std::vector<std::uint8_t> encode_volume(const VoxelGrid& grid);
std::vector<std::uint8_t> encode_labels(const LabelMap& map);
VoxelGrid decode_volume(const std::vector<std::uint8_t>& bytes);
LabelMap decode_labels(const std::vector<std::uint8_t>& bytes, const std::string& catalog_id);

void write_volume(const std::filesystem::path& path, const VoxelGrid& grid);
void write_labels(const std::filesystem::path& path, const LabelMap& map);
VoxelGrid read_volume(const std::filesystem::path& path);
LabelMap read_labels(const std::filesystem::path& path, const std::string& catalog_id);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::uint32_t crc32(const std::vector<std::uint8_t>& bytes);
std::string crc32_hex(const std::vector<std::uint8_t>& bytes);

Json catalog_to_json(const StructureCatalog& catalog);
StructureCatalog catalog_from_json(const Json& j);
Json report_to_json(const StructuredReport& r);
StructuredReport report_from_json(const Json& j);
Json meta_to_json(const CaseMeta& m);
CaseMeta meta_from_json(const Json& j);

struct Corpus {
  StructureCatalog catalog;
  std::vector<CaseRecord> cases;
};

// Writes the corpus layout above; `dir` must exist.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
// Reads and validates a corpus; `with_gold = false` leaves gold labels unloaded.
Corpus read_corpus(const std::filesystem::path& dir, bool with_gold = true);

// Serialized JSON with stable key order and a trailing newline.
std::string dump_json(const Json& j);

}  // namespace emr
