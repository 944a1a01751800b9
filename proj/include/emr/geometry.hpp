#pragma once

// Mask geometry: connected components, morphology, and the front view.

#include <cstdint>
#include <vector>

#include "emr/kernels.hpp"
#include "emr/volume.hpp"

namespace emr {

enum class Connectivity { face6 = 6, full26 = 26 };

struct ComponentLabeling {
  // 0 = background, components numbered 1..count in scan order.
  std::vector<std::uint32_t> ids;
  std::uint32_t count = 0;
  // sizes[k] is the voxel count of component k + 1.
  std::vector<std::size_t> sizes;
};

ComponentLabeling connected_components(const BinaryMask& mask, Connectivity connectivity);

// 2D components of a projection overlay (8-neighbourhood).
ComponentLabeling overlay_components(const Projection2D& proj);

// Keeps the largest component; ties go to the lower id.
BinaryMask largest_component(const BinaryMask& mask, Connectivity connectivity);
// Drops components smaller than `min_voxels`.
BinaryMask drop_small_components(const BinaryMask& mask, Connectivity connectivity,
                                 std::size_t min_voxels);

// 6-neighbourhood morphology. Voxels outside the grid count as background.
BinaryMask dilate(const BinaryMask& mask);
BinaryMask erode(const BinaryMask& mask);
// Closing that never removes original voxels.
BinaryMask closing(const BinaryMask& mask);

// Translates a mask, dropping voxels that leave the grid.
BinaryMask translate(const BinaryMask& mask, long dx, long dy, long dz);

// Intensity mean along y and overlay any-hit along y, on the x-z plane.
Projection2D front_view_projection(const VoxelGrid& volume, const BinaryMask& mask);

struct BoundingBox {
  long lo[3] = {0, 0, 0};
  long hi[3] = {-1, -1, -1};
  bool empty() const { return hi[0] < lo[0]; }
};

BoundingBox bounding_box(const BinaryMask& mask);

}  // namespace emr
