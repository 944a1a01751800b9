#include "emr/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <boost/crc.hpp>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace emr {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'M', 'A', 'I'};
constexpr std::size_t kHeaderBytes = 31;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

void put_header(std::vector<std::uint8_t>& out, VolumeDtype dtype, const Dims& d,
                const Spacing& s) {
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint16_t>(out, kVolumeFormatVersion);
  put_le<std::uint8_t>(out, std::uint8_t(dtype));
  put_le<std::uint32_t>(out, d.x);
  put_le<std::uint32_t>(out, d.y);
  put_le<std::uint32_t>(out, d.z);
  put_le<float>(out, float(s.x));
  put_le<float>(out, float(s.y));
  put_le<float>(out, float(s.z));
}

struct Header {
  VolumeDtype dtype;
  Dims dims;
  Spacing spacing;
};

Header get_header(const std::vector<std::uint8_t>& in, VolumeDtype expected) {
  if (in.size() < kHeaderBytes || std::memcmp(in.data(), kMagic, 4) != 0)
    fail(ErrorKind::io, "not an SMAI volume (bad magic)");
  const auto version = get_le<std::uint16_t>(in, 4);
  if (version != kVolumeFormatVersion)
    fail(ErrorKind::io, "unsupported SMAI format version " + std::to_string(version));
  Header h;
  h.dtype = VolumeDtype(get_le<std::uint8_t>(in, 6));
  if (h.dtype != expected)
    fail(ErrorKind::io, "SMAI dtype " + std::to_string(int(h.dtype)) + ", expected " +
                            std::to_string(int(expected)));
  h.dims = {get_le<std::uint32_t>(in, 7), get_le<std::uint32_t>(in, 11),
            get_le<std::uint32_t>(in, 15)};
  h.spacing = {get_le<float>(in, 19), get_le<float>(in, 23), get_le<float>(in, 27)};
  validate_grid_geometry(h.dims, h.spacing);
  const std::size_t sample = expected == VolumeDtype::f32 ? 4 : 2;
  if (in.size() != kHeaderBytes + h.dims.count() * sample)
    fail(ErrorKind::io, "SMAI payload length does not match dims");
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_volume(const VoxelGrid& grid) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + grid.size() * 4);
  put_header(out, VolumeDtype::f32, grid.dims, grid.spacing);
  for (const float v : grid.data) put_le<float>(out, v);
  return out;
}

std::vector<std::uint8_t> encode_labels(const LabelMap& map) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + map.size() * 2);
  put_header(out, VolumeDtype::u16, map.dims, map.spacing);
  for (const std::uint16_t v : map.data) put_le<std::uint16_t>(out, v);
  return out;
}

VoxelGrid decode_volume(const std::vector<std::uint8_t>& bytes) {
  const Header h = get_header(bytes, VolumeDtype::f32);
  VoxelGrid g(h.dims, h.spacing, 0.0f);
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = get_le<float>(bytes, kHeaderBytes + 4 * i);
  return g;
}

LabelMap decode_labels(const std::vector<std::uint8_t>& bytes, const std::string& catalog_id) {
  const Header h = get_header(bytes, VolumeDtype::u16);
  LabelMap m(h.dims, h.spacing, catalog_id);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data[i] = get_le<std::uint16_t>(bytes, kHeaderBytes + 2 * i);
  return m;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_volume(const fs::path& path, const VoxelGrid& grid) { write_bytes(path, encode_volume(grid)); }
void write_labels(const fs::path& path, const LabelMap& map) { write_bytes(path, encode_labels(map)); }
VoxelGrid read_volume(const fs::path& path) { return decode_volume(read_bytes(path)); }
LabelMap read_labels(const fs::path& path, const std::string& catalog_id) {
  return decode_labels(read_bytes(path), catalog_id);
}

std::uint32_t crc32(const std::vector<std::uint8_t>& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::string crc32_hex(const std::vector<std::uint8_t>& bytes) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << crc32(bytes);
  return os.str();
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json catalog_to_json(const StructureCatalog& catalog) {
  Json entries = Json::array();
  for (const auto& e : catalog.entries())
    entries.push_back({{"label", e.label}, {"name", e.name}, {"kind", to_string(e.kind)}});
  return {{"id", catalog.id()}, {"entries", entries}};
}

StructureCatalog catalog_from_json(const Json& j) {
  std::vector<StructureEntry> entries;
  for (const auto& e : j.at("entries"))
    entries.push_back({e.at("label").get<Label>(), e.at("name").get<std::string>(),
                       parse_structure_kind(e.at("kind").get<std::string>())});
  return StructureCatalog(j.at("id").get<std::string>(), std::move(entries));
}

Json report_to_json(const StructuredReport& r) {
  Json j = {{"tumor_present", r.tumor_present}, {"tumor_count", r.tumor_count}};
  j["tumor_type"] = r.tumor_type ? Json(to_string(*r.tumor_type)) : Json(nullptr);
  return j;
}

StructuredReport report_from_json(const Json& j) {
  StructuredReport r;
  r.tumor_present = j.at("tumor_present").get<bool>();
  r.tumor_count = j.at("tumor_count").get<std::uint32_t>();
  if (j.contains("tumor_type") && !j.at("tumor_type").is_null())
    r.tumor_type = parse_tumor_type(j.at("tumor_type").get<std::string>());
  r.validate();
  return r;
}

Json meta_to_json(const CaseMeta& m) {
  return {{"age", m.age}, {"sex", to_string(m.sex)}, {"phase", to_string(m.phase)},
          {"is_gold", m.is_gold}};
}

CaseMeta meta_from_json(const Json& j) {
  CaseMeta m;
  m.age = j.at("age").get<int>();
  m.sex = parse_sex(j.at("sex").get<std::string>());
  m.phase = parse_phase(j.at("phase").get<std::string>());
  m.is_gold = j.at("is_gold").get<bool>();
  return m;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir / "cases");
  Json cases = Json::array();
  Json checksums = Json::object();
  auto put = [&](const std::string& rel, const std::vector<std::uint8_t>& bytes) {
    write_bytes(dir / rel, bytes);
    checksums[rel] = crc32_hex(bytes);
  };
  for (const CaseRecord& c : corpus.cases) {
    const std::string base = "cases/" + c.case_id;
    Json files = {{"volume", c.case_id + ".volume.smai"}, {"pseudo", c.case_id + ".pseudo.smai"}};
    put(base + ".volume.smai", encode_volume(c.volume));
    put(base + ".pseudo.smai", encode_labels(c.pseudo));
    if (c.gold) {
      files["gold"] = c.case_id + ".gold.smai";
      put(base + ".gold.smai", encode_labels(*c.gold));
    } else {
      files["gold"] = nullptr;
    }
    const Json sidecar = {{"schema_version", kSchemaVersion},
                          {"case_id", c.case_id},
                          {"report", report_to_json(c.report)},
                          {"meta", meta_to_json(c.meta)},
                          {"files", files}};
    const std::string text = dump_json(sidecar);
    put(base + ".json", std::vector<std::uint8_t>(text.begin(), text.end()));
    cases.push_back(base + ".json");
  }
  const Json manifest = {{"schema_version", kSchemaVersion},
                         {"catalog", catalog_to_json(corpus.catalog)},
                         {"cases", cases},
                         {"checksums", checksums}};
  write_text(dir / "manifest.json", dump_json(manifest));
}

Corpus read_corpus(const fs::path& dir, bool with_gold) {
  Json manifest;
  try {
    manifest = Json::parse(read_text(dir / "manifest.json"));
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, "bad manifest in " + dir.string() + ": " + e.what());
  }
  Corpus corpus;
  try {
    corpus.catalog = catalog_from_json(manifest.at("catalog"));
    for (const auto& rel : manifest.at("cases")) {
      const fs::path sidecar_path = dir / rel.get<std::string>();
      const Json s = Json::parse(read_text(sidecar_path));
      const fs::path base = sidecar_path.parent_path();
      CaseRecord c;
      c.case_id = s.at("case_id").get<std::string>();
      c.report = report_from_json(s.at("report"));
      c.meta = meta_from_json(s.at("meta"));
      const Json& files = s.at("files");
      c.volume = read_volume(base / files.at("volume").get<std::string>());
      c.pseudo = read_labels(base / files.at("pseudo").get<std::string>(), corpus.catalog.id());
      if (with_gold && !files.at("gold").is_null())
        c.gold = read_labels(base / files.at("gold").get<std::string>(), corpus.catalog.id());
      c.validate(corpus.catalog, !with_gold);
      corpus.cases.push_back(std::move(c));
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, "bad corpus metadata in " + dir.string() + ": " + e.what());
  }
  return corpus;
}

}  // namespace emr
