#include "emr/geometry.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <vector>

namespace emr {

namespace {

std::vector<std::array<long, 3>> neighbourhood(Connectivity c) {
  std::vector<std::array<long, 3>> out;
  for (long dz = -1; dz <= 1; ++dz)
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (c == Connectivity::face6 && manhattan != 1) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

}  // namespace

ComponentLabeling connected_components(const BinaryMask& mask, Connectivity connectivity) {
  const Dims& d = mask.dims;
  const auto offsets = neighbourhood(connectivity);
  ComponentLabeling out;
  out.ids.assign(mask.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask.data[seed] || out.ids[seed]) continue;
    const std::uint32_t id = ++out.count;
    std::size_t size = 0;
    out.ids[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const Coord c = mask.coord(cur);
      for (const auto& o : offsets) {
        const long nx = c.x + o[0], ny = c.y + o[1], nz = c.z + o[2];
        if (!d.contains(nx, ny, nz)) continue;
        const std::size_t n = d.index(nx, ny, nz);
        if (mask.data[n] && !out.ids[n]) {
          out.ids[n] = id;
          stack.push_back(n);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

ComponentLabeling overlay_components(const Projection2D& proj) {
  BinaryMask flat(Dims{proj.width, proj.height, 1}, Spacing{}, 0);
  flat.data = proj.overlay;
  return connected_components(flat, Connectivity::full26);
}

BinaryMask largest_component(const BinaryMask& mask, Connectivity connectivity) {
  const ComponentLabeling cc = connected_components(mask, connectivity);
  BinaryMask out(mask.dims, mask.spacing, 0);
  if (cc.count == 0) return out;
  const auto best = std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin();
  const std::uint32_t keep = std::uint32_t(best) + 1;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = cc.ids[i] == keep;
  return out;
}

BinaryMask drop_small_components(const BinaryMask& mask, Connectivity connectivity,
                                 std::size_t min_voxels) {
  const ComponentLabeling cc = connected_components(mask, connectivity);
  BinaryMask out(mask.dims, mask.spacing, 0);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = cc.ids[i] != 0 && cc.sizes[cc.ids[i] - 1] >= min_voxels;
  return out;
}

namespace {

template <bool Grow>
BinaryMask morph(const BinaryMask& mask) {
  const Dims& d = mask.dims;
  BinaryMask out(d, mask.spacing, 0);
  static constexpr long kFace[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                       {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const Coord c = mask.coord(i);
    bool v = mask.data[i] != 0;
    if (v != Grow) {
      for (const auto& o : kFace) {
        const long nx = c.x + o[0], ny = c.y + o[1], nz = c.z + o[2];
        const bool nv = d.contains(nx, ny, nz) && mask.at(nx, ny, nz);
        if (nv == Grow) {
          v = Grow;
          break;
        }
      }
    }
    out.data[i] = v;
  }
  return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& mask) { return morph<true>(mask); }
BinaryMask erode(const BinaryMask& mask) { return morph<false>(mask); }
BinaryMask closing(const BinaryMask& mask) {
  BinaryMask out = erode(dilate(mask));
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] |= mask.data[i];
  return out;
}

BinaryMask translate(const BinaryMask& mask, long dx, long dy, long dz) {
  const Dims& d = mask.dims;
  BinaryMask out(d, mask.spacing, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.data[i]) continue;
    const Coord c = mask.coord(i);
    const long nx = c.x + dx, ny = c.y + dy, nz = c.z + dz;
    if (d.contains(nx, ny, nz)) out.at(nx, ny, nz) = 1;
  }
  return out;
}

Projection2D front_view_projection(const VoxelGrid& volume, const BinaryMask& mask) {
  return kernels::omp::front_projection(volume, mask);
}

BoundingBox bounding_box(const BinaryMask& mask) {
  BoundingBox box;
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.data[i]) continue;
    const Coord c = mask.coord(i);
    const long v[3] = {c.x, c.y, c.z};
    for (int a = 0; a < 3; ++a) {
      if (!any || v[a] < box.lo[a]) box.lo[a] = v[a];
      if (!any || v[a] > box.hi[a]) box.hi[a] = v[a];
    }
    any = true;
  }
  return box;
}

}  // namespace emr
