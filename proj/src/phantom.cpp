#include "emr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emr/geometry.hpp"

namespace emr {

std::string_view to_string(Shape s) {
  switch (s) {
    case Shape::ellipsoid: return "ellipsoid";
    case Shape::cylinder: return "cylinder";
    case Shape::sphere: return "sphere";
  }
  return "ellipsoid";
}

Shape parse_shape(std::string_view text) {
  if (text == "ellipsoid") return Shape::ellipsoid;
  if (text == "cylinder") return Shape::cylinder;
  if (text == "sphere") return Shape::sphere;
  fail(ErrorKind::config, "unknown shape '" + std::string(text) + "'");
}

std::string_view to_string(NoiseOp op) {
  switch (op) {
    case NoiseOp::remove: return "delete";
    case NoiseOp::shift: return "shift";
    case NoiseOp::fragment: return "fragment";
    case NoiseOp::dilate: return "dilate";
    case NoiseOp::erode: return "erode";
    case NoiseOp::spurious: return "spurious";
    case NoiseOp::tumor_miss: return "tumor_miss";
    case NoiseOp::tumor_fp: return "tumor_fp";
  }
  return "delete";
}

NoiseOp parse_noise_op(std::string_view text) {
  for (const NoiseOp op : {NoiseOp::remove, NoiseOp::shift, NoiseOp::fragment, NoiseOp::dilate,
                           NoiseOp::erode, NoiseOp::spurious, NoiseOp::tumor_miss, NoiseOp::tumor_fp})
    if (to_string(op) == text) return op;
  fail(ErrorKind::config, "unknown noise op '" + std::string(text) + "'");
}

StructureCatalog PhantomSpec::catalog() const {
  std::vector<StructureEntry> entries;
  for (const auto& s : structures)
    entries.push_back({Label(entries.size() + 1), s.name, s.kind});
  if (tumor) entries.push_back({Label(entries.size() + 1), tumor->name, StructureKind::tumor});
  return StructureCatalog(catalog_id, std::move(entries));
}

void PhantomSpec::validate() const {
  validate_grid_geometry(dims, spacing);
  for (const auto& s : structures) {
    if (s.kind == StructureKind::tumor)
      fail(ErrorKind::config, "structure '" + s.name + "': tumors belong in the tumor section");
    for (int a = 0; a < 3; ++a) {
      const double r = s.shape == Shape::sphere ? s.radii[0] : s.radii[a];
      if (!(r > 0)) fail(ErrorKind::config, "structure '" + s.name + "': radii must be positive");
      if (s.center[a] - r < 0.0 || s.center[a] + r > 1.0)
        fail(ErrorKind::config, "structure '" + s.name + "' leaves the unit cube");
    }
    if (!(s.stddev > 0)) fail(ErrorKind::config, "structure '" + s.name + "': std must be positive");
  }
  if (!(background_std > 0)) fail(ErrorKind::config, "background std must be positive");
  if (center_jitter < 0 || radius_jitter < 0 || radius_jitter >= 1 || intensity_jitter < 0)
    fail(ErrorKind::config, "jitter values out of range");
  if (tumor) {
    const auto host = std::find_if(structures.begin(), structures.end(),
                                   [&](const StructureSpec& s) { return s.name == tumor->host; });
    if (host == structures.end())
      fail(ErrorKind::config, "tumor host '" + tumor->host + "' is not a structure");
    if (tumor->count_min > tumor->count_max) fail(ErrorKind::config, "tumor count range is empty");
    if (!(tumor->radius_min > 0) || tumor->radius_min > tumor->radius_max)
      fail(ErrorKind::config, "tumor radius range is invalid");
    if (!(tumor->stddev > 0)) fail(ErrorKind::config, "tumor std must be positive");
  }
  (void)catalog();  // name uniqueness
}

const OpRates& NoiseSpec::rates_for(const std::string& structure) const {
  const auto it = overrides.find(structure);
  return it == overrides.end() ? rates : it->second;
}

void NoiseSpec::validate() const {
  auto check = [](const OpRates& r, const std::string& where) {
    for (const double p : {r.remove, r.shift, r.fragment, r.spurious, r.boundary_jitter})
      if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::config, "noise rate out of [0,1] in " + where);
  };
  check(rates, "noise");
  for (const auto& [name, r] : overrides) check(r, "noise override '" + name + "'");
  for (const double p : {tumor_miss, tumor_fp})
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::config, "tumor noise rate out of [0,1]");
  if (!(shift_min > 0) || shift_min > shift_max || shift_min_voxels < 1)
    fail(ErrorKind::config, "shift range is invalid");
  if (fragment_gap < 1) fail(ErrorKind::config, "fragment gap must be at least 1");
  if (spurious_radius_min < 1 || spurious_radius_min > spurious_radius_max ||
      tumor_fp_radius_min < 1 || tumor_fp_radius_min > tumor_fp_radius_max)
    fail(ErrorKind::config, "blob radius range is invalid");
}

Json injection_log_to_json(const InjectionLog& log, const StructureCatalog& catalog) {
  Json ops = Json::array();
  for (const auto& op : log.ops)
    ops.push_back({{"op", to_string(op.op)},
                   {"structure", catalog.at(op.label).name},
                   {"params", op.params}});
  return ops;
}

namespace {

template <typename F>
void for_ball(const Dims& d, long cx, long cy, long cz, long r, F&& f) {
  for (long z = std::max(0L, cz - r); z <= std::min(long(d.z) - 1, cz + r); ++z)
    for (long y = std::max(0L, cy - r); y <= std::min(long(d.y) - 1, cy + r); ++y)
      for (long x = std::max(0L, cx - r); x <= std::min(long(d.x) - 1, cx + r); ++x) {
        const long dx = x - cx, dy = y - cy, dz = z - cz;
        if (dx * dx + dy * dy + dz * dz <= r * r) f(d.index(x, y, z));
      }
}

BinaryMask mask_of(const LabelMap& map, Label label) {
  BinaryMask m(map.dims, map.spacing, 0);
  for (std::size_t i = 0; i < map.size(); ++i) m.data[i] = map.data[i] == label;
  return m;
}

}  // namespace

void apply_noise_op(LabelMap& map, const InjectionOp& op) {
  const Label l = op.label;
  const auto& p = op.params;
  switch (op.op) {
    case NoiseOp::remove:
      std::replace(map.data.begin(), map.data.end(), l, Label{0});
      break;
    case NoiseOp::shift: {
      const BinaryMask moved = translate(mask_of(map, l), p[0], p[1], p[2]);
      std::replace(map.data.begin(), map.data.end(), l, Label{0});
      for (std::size_t i = 0; i < map.size(); ++i)
        if (moved.data[i] && map.data[i] == 0) map.data[i] = l;
      break;
    }
    case NoiseOp::fragment: {
      const int axis = int(p[0]);
      for (std::size_t i = 0; i < map.size(); ++i) {
        if (map.data[i] != l) continue;
        const Coord c = map.coord(i);
        const long v = axis == 0 ? c.x : axis == 1 ? c.y : c.z;
        if (v >= p[1] && v < p[1] + p[2]) map.data[i] = 0;
      }
      break;
    }
    case NoiseOp::dilate: {
      const BinaryMask grown = dilate(mask_of(map, l));
      for (std::size_t i = 0; i < map.size(); ++i)
        if (grown.data[i] && map.data[i] == 0) map.data[i] = l;
      break;
    }
    case NoiseOp::erode: {
      const BinaryMask m = mask_of(map, l);
      const BinaryMask core = erode(m);
      for (std::size_t i = 0; i < map.size(); ++i)
        if (m.data[i] && !core.data[i]) map.data[i] = 0;
      break;
    }
    case NoiseOp::spurious:
      for_ball(map.dims, p[0], p[1], p[2], p[3], [&](std::size_t i) {
        if (map.data[i] == 0) map.data[i] = l;
      });
      break;
    case NoiseOp::tumor_miss: {
      const auto seed = std::size_t(p[0]);
      if (seed >= map.size() || map.data[seed] != l) break;
      const auto cc = connected_components(mask_of(map, l), Connectivity::face6);
      const std::uint32_t id = cc.ids[seed];
      for (std::size_t i = 0; i < map.size(); ++i)
        if (cc.ids[i] == id) map.data[i] = Label(p[1]);
      break;
    }
    case NoiseOp::tumor_fp:
      for_ball(map.dims, p[0], p[1], p[2], p[3], [&](std::size_t i) {
        if (map.data[i] == Label(p[4])) map.data[i] = l;
      });
      break;
  }
}

LabelMap replay(const LabelMap& gold, const InjectionLog& log) {
  LabelMap out = gold;
  for (const auto& op : log.ops) apply_noise_op(out, op);
  return out;
}

namespace {

struct Placed {
  double x, y, z;
};

void rasterize(LabelMap& map, const StructureSpec& s, const std::array<double, 3>& c,
               const std::array<double, 3>& r, Label label) {
  const Dims& d = map.dims;
  for (std::uint32_t z = 0; z < d.z; ++z) {
    const double pz = (z + 0.5) / d.z;
    for (std::uint32_t y = 0; y < d.y; ++y) {
      const double py = (y + 0.5) / d.y;
      for (std::uint32_t x = 0; x < d.x; ++x) {
        const double px = (x + 0.5) / d.x;
        const double ex = (px - c[0]) / r[0], ey = (py - c[1]) / r[1], ez = (pz - c[2]) / r[2];
        bool inside = false;
        switch (s.shape) {
          case Shape::ellipsoid:
          case Shape::sphere: inside = ex * ex + ey * ey + ez * ez <= 1.0; break;
          case Shape::cylinder: inside = ex * ex + ey * ey <= 1.0 && std::abs(ez) <= 1.0; break;
        }
        if (inside) map.at(x, y, z) = label;
      }
    }
  }
}

std::uint32_t place_tumors(LabelMap& map, const TumorSpec& t, Label host, Label tumor,
                           std::uint32_t count, Rng& rng) {
  std::vector<std::size_t> host_voxels;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map.data[i] == host) host_voxels.push_back(i);
  std::vector<std::pair<Placed, double>> placed;
  for (std::uint32_t n = 0; n < count && !host_voxels.empty(); ++n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const std::size_t idx = host_voxels[rng.uniform_int(0, long(host_voxels.size()) - 1)];
      const double radius = rng.uniform(t.radius_min, t.radius_max);
      const Coord c = map.coord(idx);
      bool clear = true;
      for (const auto& [q, rq] : placed) {
        const double dx = c.x - q.x, dy = c.y - q.y, dz = c.z - q.z;
        if (std::sqrt(dx * dx + dy * dy + dz * dz) < radius + rq + t.separation) clear = false;
      }
      if (!clear) continue;
      std::vector<std::size_t> written;
      const long reach = long(std::ceil(radius));
      for (long z = c.z - reach; z <= c.z + reach; ++z)
        for (long y = c.y - reach; y <= c.y + reach; ++y)
          for (long x = c.x - reach; x <= c.x + reach; ++x) {
            if (!map.dims.contains(x, y, z)) continue;
            const double dx = double(x - c.x), dy = double(y - c.y), dz = double(z - c.z);
            if (dx * dx + dy * dy + dz * dz > radius * radius) continue;
            const std::size_t i = map.dims.index(x, y, z);
            if (map.data[i] == host) written.push_back(i);
          }
      if (written.size() < 12) continue;
      for (const auto i : written) map.data[i] = tumor;
      const auto cc = connected_components(mask_of(map, tumor), Connectivity::face6);
      if (cc.count != placed.size() + 1) {
        for (const auto i : written) map.data[i] = host;
        continue;
      }
      placed.push_back({Placed{double(c.x), double(c.y), double(c.z)}, radius});
      break;
    }
  }
  return std::uint32_t(placed.size());
}

}  // namespace

CaseRecord generate_case(const PhantomSpec& spec, std::uint64_t seed) {
  return generate_case(spec, seed, std::nullopt);
}

CaseRecord generate_case(const PhantomSpec& spec, std::uint64_t seed,
                         std::optional<std::uint32_t> forced_tumor_count) {
  spec.validate();
  const StructureCatalog catalog = spec.catalog();
  Rng geo(seed, {stream::kGeometry});
  Rng noise(seed, {stream::kIntensity});
  Rng report(seed, {stream::kReport});
  Rng meta(seed, {stream::kMeta});

  CaseRecord c;
  LabelMap gold(spec.dims, spec.spacing, catalog.id());
  std::vector<double> means(catalog.size() + 1, spec.background_mean);
  std::vector<double> stds(catalog.size() + 1, spec.background_std);
  for (std::size_t k = 0; k < spec.structures.size(); ++k) {
    const StructureSpec& s = spec.structures[k];
    std::array<double, 3> center{}, radii{};
    for (int a = 0; a < 3; ++a) center[a] = s.center[a] + geo.uniform(-spec.center_jitter, spec.center_jitter);
    if (s.shape == Shape::sphere) {
      const double r = s.radii[0] * geo.uniform(1.0 - spec.radius_jitter, 1.0 + spec.radius_jitter);
      radii = {r, r, r};
    } else {
      for (int a = 0; a < 3; ++a)
        radii[a] = s.radii[a] * geo.uniform(1.0 - spec.radius_jitter, 1.0 + spec.radius_jitter);
    }
    const Label label = Label(k + 1);
    means[label] = s.mean + geo.uniform(-spec.intensity_jitter, spec.intensity_jitter);
    stds[label] = s.stddev;
    rasterize(gold, s, center, radii, label);
  }

  std::uint32_t tumors = 0;
  if (spec.tumor) {
    const TumorSpec& t = *spec.tumor;
    const Label host = *catalog.find(t.host);
    const Label tumor = *catalog.first_tumor();
    const std::uint32_t want =
        forced_tumor_count ? *forced_tumor_count
                           : std::uint32_t(geo.uniform_int(t.count_min, t.count_max));
    tumors = place_tumors(gold, t, host, tumor, want, geo);
    means[tumor] = means[host] + t.intensity_offset;
    stds[tumor] = t.stddev;
  }

  c.volume = VoxelGrid(spec.dims, spec.spacing, 0.0f);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Label l = gold.data[i];
    c.volume.data[i] = float(noise.normal(means[l], stds[l]));
  }

  c.report.tumor_count = tumors;
  c.report.tumor_present = tumors > 0;
  if (tumors > 0) c.report.tumor_type = TumorType(report.uniform_int(0, 2));
  c.meta.age = int(meta.uniform_int(30, 85));
  c.meta.sex = meta.bernoulli(0.5) ? Sex::male : Sex::female;
  c.meta.phase = Phase(meta.uniform_int(0, 2));
  c.pseudo = gold;
  c.gold = std::move(gold);
  return c;
}

namespace {

struct Extent {
  BoundingBox box;
  long half(int axis) const { return std::max(1L, (box.hi[axis] - box.lo[axis] + 1) / 2); }
};

std::optional<InjectionOp> sample_shift(const LabelMap& map, Label l, const NoiseSpec& n, Rng& rng) {
  const Extent e{bounding_box(mask_of(map, l))};
  if (e.box.empty()) return std::nullopt;
  const int axis = rng.bernoulli(0.5) ? 0 : 2;
  const double scale = rng.uniform(n.shift_min, n.shift_max);
  const long sign = rng.bernoulli(0.5) ? 1 : -1;
  const long k = std::max(n.shift_min_voxels, std::lround(scale * double(e.half(axis))));
  InjectionOp op{NoiseOp::shift, l, {}};
  op.params[axis] = sign * k;
  return op;
}

std::optional<InjectionOp> sample_fragment(const LabelMap& map, Label l, const NoiseSpec& n, Rng& rng) {
  const Extent e{bounding_box(mask_of(map, l))};
  if (e.box.empty()) return std::nullopt;
  const long ex = e.box.hi[0] - e.box.lo[0] + 1, ez = e.box.hi[2] - e.box.lo[2] + 1;
  const int axis = ez >= ex ? 2 : 0;
  const long extent = std::max(ex, ez);
  const long mid = (e.box.lo[axis] + e.box.hi[axis]) / 2 + rng.uniform_int(-extent / 6, extent / 6);
  return InjectionOp{NoiseOp::fragment, l, {axis, mid - n.fragment_gap / 2, n.fragment_gap, 0, 0}};
}

std::optional<InjectionOp> sample_spurious(const LabelMap& map, Label l, const NoiseSpec& n, Rng& rng) {
  const Dims& d = map.dims;
  const long r = rng.uniform_int(n.spurious_radius_min, n.spurious_radius_max);
  if (2 * r + 1 > long(d.x) || 2 * r + 1 > long(d.y) || 2 * r + 1 > long(d.z)) return std::nullopt;
  // The blob's footprint in the front view must not touch the structure.
  std::vector<std::uint8_t> footprint(std::size_t{d.x} * d.z, 0);
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map.data[i] == l) {
      const Coord c = map.coord(i);
      footprint[c.x + std::size_t{d.x} * c.z] = 1;
    }
  for (int attempt = 0; attempt < 64; ++attempt) {
    const long cx = rng.uniform_int(r, long(d.x) - 1 - r);
    const long cy = rng.uniform_int(r, long(d.y) - 1 - r);
    const long cz = rng.uniform_int(r, long(d.z) - 1 - r);
    const long reach = r + 2;
    bool touches = false;
    for (long z = std::max(0L, cz - reach); z <= std::min(long(d.z) - 1, cz + reach) && !touches; ++z)
      for (long x = std::max(0L, cx - reach); x <= std::min(long(d.x) - 1, cx + reach); ++x)
        if ((x - cx) * (x - cx) + (z - cz) * (z - cz) <= reach * reach &&
            footprint[x + std::size_t{d.x} * z]) {
          touches = true;
          break;
        }
    if (touches) continue;
    std::size_t total = 0, free = 0;
    for_ball(d, cx, cy, cz, r, [&](std::size_t i) {
      ++total;
      free += map.data[i] == 0;
    });
    if (free * 5 < total * 4) continue;
    return InjectionOp{NoiseOp::spurious, l, {cx, cy, cz, r, 0}};
  }
  return std::nullopt;
}

std::optional<InjectionOp> sample_tumor_fp(const LabelMap& map, Label tumor, Label host,
                                           const NoiseSpec& n, Rng& rng) {
  const Dims& d = map.dims;
  std::vector<std::size_t> host_voxels;
  // A false lesion is a separate spot: its front-view footprint keeps clear of real ones.
  std::vector<std::uint8_t> footprint(std::size_t{d.x} * d.z, 0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map.data[i] == host) host_voxels.push_back(i);
    if (map.data[i] == tumor) {
      const Coord c = map.coord(i);
      footprint[c.x + std::size_t{d.x} * c.z] = 1;
    }
  }
  if (host_voxels.empty()) return std::nullopt;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t idx = host_voxels[rng.uniform_int(0, long(host_voxels.size()) - 1)];
    const long r = rng.uniform_int(n.tumor_fp_radius_min, n.tumor_fp_radius_max);
    const Coord c = map.coord(idx);
    const long cx = c.x, cz = c.z, reach = r + 2;
    bool touches = false;
    for (long z = std::max(0L, cz - reach); z <= std::min(long(d.z) - 1, cz + reach) && !touches; ++z)
      for (long x = std::max(0L, cx - reach); x <= std::min(long(d.x) - 1, cx + reach); ++x)
        if ((x - cx) * (x - cx) + (z - cz) * (z - cz) <= reach * reach &&
            footprint[x + std::size_t{d.x} * z]) {
          touches = true;
          break;
        }
    if (touches) continue;
    std::size_t written = 0;
    for_ball(d, c.x, c.y, c.z, r, [&](std::size_t i) { written += map.data[i] == host; });
    if (written < 8) continue;
    return InjectionOp{NoiseOp::tumor_fp, tumor, {c.x, c.y, c.z, r, host}};
  }
  return std::nullopt;
}

}  // namespace

NoisyCase inject_noise(const CaseRecord& c, const StructureCatalog& catalog, const NoiseSpec& noise,
                       std::uint64_t seed) {
  if (!c.gold) fail(ErrorKind::invariant, "inject_noise: case " + c.case_id + " has no gold labels");
  noise.validate();
  Rng rng(seed, {stream::kNoise});
  NoisyCase out{c, {}};
  LabelMap& p = out.record.pseudo;
  p = *c.gold;
  auto apply = [&](const std::optional<InjectionOp>& op) {
    if (!op) return;
    apply_noise_op(p, *op);
    out.log.ops.push_back(*op);
  };

  for (const auto& e : catalog.entries()) {
    if (e.kind == StructureKind::tumor) continue;
    const OpRates& r = noise.rates_for(e.name);
    // Draw every decision up front so each structure consumes a fixed amount
    // of the stream before its parameters are sampled.
    const bool del = rng.bernoulli(r.remove), shift = rng.bernoulli(r.shift),
               frag = rng.bernoulli(r.fragment), spur = rng.bernoulli(r.spurious),
               jitter = rng.bernoulli(r.boundary_jitter), grow = rng.bernoulli(0.5);
    if (count_nonzero(mask_of(p, e.label)) == 0) continue;
    if (del) {
      apply(InjectionOp{NoiseOp::remove, e.label, {}});
      continue;
    }
    if (shift) apply(sample_shift(p, e.label, noise, rng));
    if (frag) apply(sample_fragment(p, e.label, noise, rng));
    if (jitter) apply(InjectionOp{grow ? NoiseOp::dilate : NoiseOp::erode, e.label, {}});
    if (spur) apply(sample_spurious(p, e.label, noise, rng));
  }

  const auto tumor = catalog.first_tumor();
  const auto host = catalog.find(noise.tumor_host);
  if (tumor && host) {
    const auto cc = connected_components(mask_of(*c.gold, *tumor), Connectivity::face6);
    std::vector<std::size_t> first(cc.count, SIZE_MAX);
    for (std::size_t i = 0; i < cc.ids.size(); ++i)
      if (cc.ids[i] && first[cc.ids[i] - 1] == SIZE_MAX) first[cc.ids[i] - 1] = i;
    for (std::uint32_t k = 0; k < cc.count; ++k)
      if (rng.bernoulli(noise.tumor_miss))
        apply(InjectionOp{NoiseOp::tumor_miss, *tumor, {long(first[k]), *host, 0, 0, 0}});
    if (rng.bernoulli(noise.tumor_fp)) apply(sample_tumor_fp(p, *tumor, *host, noise, rng));
  }
  return out;
}

std::optional<InjectionOp> corrupt_structure(LabelMap& map, const StructureCatalog& catalog,
                                             Label label, const NoiseSpec& noise, Rng& rng) {
  const StructureEntry& e = catalog.at(label);
  std::optional<InjectionOp> op;
  if (e.kind == StructureKind::tumor) {
    const auto host = catalog.find(noise.tumor_host);
    if (!host) return std::nullopt;
    const auto cc = connected_components(mask_of(map, label), Connectivity::face6);
    const double w_miss = cc.count ? noise.tumor_miss : 0.0;
    const double total = w_miss + noise.tumor_fp;
    if (total <= 0) return std::nullopt;
    if (rng.uniform() * total < w_miss) {
      const auto pick = std::uint32_t(rng.uniform_int(1, cc.count));
      std::size_t seed = 0;
      while (cc.ids[seed] != pick) ++seed;
      op = InjectionOp{NoiseOp::tumor_miss, label, {long(seed), *host, 0, 0, 0}};
    } else {
      op = sample_tumor_fp(map, label, *host, noise, rng);
    }
  } else {
    if (count_nonzero(mask_of(map, label)) == 0) return std::nullopt;
    const OpRates& r = noise.rates_for(e.name);
    const double w[4] = {r.remove, r.shift, r.fragment, r.spurious};
    const double total = w[0] + w[1] + w[2] + w[3];
    if (total <= 0) return std::nullopt;
    double u = rng.uniform() * total;
    int which = 0;
    while (which < 3 && u >= w[which]) u -= w[which++];
    switch (which) {
      case 0: op = InjectionOp{NoiseOp::remove, label, {}}; break;
      case 1: op = sample_shift(map, label, noise, rng); break;
      case 2: op = sample_fragment(map, label, noise, rng); break;
      default: op = sample_spurious(map, label, noise, rng); break;
    }
  }
  if (op) apply_noise_op(map, *op);
  return op;
}

GeneratedCorpus generate_corpus(const PhantomSpec& spec, const NoiseSpec& noise,
                                std::uint32_t n_cases, double gold_fraction, std::uint64_t seed) {
  if (n_cases == 0) fail(ErrorKind::config, "n_cases must be at least 1");
  if (!(gold_fraction >= 0.0 && gold_fraction <= 1.0))
    fail(ErrorKind::config, "gold_fraction must lie in [0, 1]");
  spec.validate();
  noise.validate();
  const StructureCatalog catalog = spec.catalog();

  // The small slack keeps e.g. 0.07 * 100 from rounding up to 8.
  const auto n_gold = std::uint32_t(std::ceil(gold_fraction * n_cases - 1e-9));
  std::vector<std::uint32_t> order(n_cases);
  std::iota(order.begin(), order.end(), 0u);
  Rng pick(seed, {stream::kGoldPick});
  for (std::uint32_t i = n_cases; i > 1; --i)
    std::swap(order[i - 1], order[std::size_t(pick.uniform_int(0, i - 1))]);
  std::vector<std::uint8_t> is_gold(n_cases, 0);
  for (std::uint32_t i = 0; i < n_gold; ++i) is_gold[order[i]] = 1;

  GeneratedCorpus out;
  out.corpus.catalog = catalog;
  out.corpus.cases.resize(n_cases);
  out.logs.resize(n_cases);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(n_cases); ++i) {
    const std::uint64_t case_seed = derive_seed(seed, {stream::kCase, std::uint64_t(i)});
    CaseRecord c = generate_case(spec, case_seed);
    char id[32];
    std::snprintf(id, sizeof id, "case_%04ld", i);
    c.case_id = id;
    c.meta.is_gold = is_gold[i];
    if (!is_gold[i]) {
      NoisyCase noisy = inject_noise(c, catalog, noise, case_seed);
      c = std::move(noisy.record);
      out.logs[i] = std::move(noisy.log);
    }
    out.corpus.cases[i] = std::move(c);
  }
  return out;
}

}  // namespace emr
