#pragma once

// Voxel-level kernels. Every kernel exists twice with identical signatures:
// `serial` is the reference used by tests, `omp` is the OpenMP version used
// by the library. Both must produce bit-identical results for any thread
// count, so floating-point reductions are folded per z-slice in a fixed
// order.

#include <cstdint>
#include <span>
#include <vector>

#include "emr/volume.hpp"

namespace emr {

struct OverlapCounts {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t both = 0;
  friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

// Front view: intensity mean and overlay any-hit along y, laid out on the
// x-z plane with x fastest (index = x + width * z).
struct Projection2D {
  std::uint32_t width = 0;   // dims.x
  std::uint32_t height = 0;  // dims.z
  std::vector<double> intensity;
  std::vector<std::uint8_t> overlay;

  bool at(std::uint32_t x, std::uint32_t z) const { return overlay[x + std::size_t{width} * z] != 0; }
  friend bool operator==(const Projection2D&, const Projection2D&) = default;
};

// Per-class log-likelihood parameters for the argmax labeller. Class 0 is
// background and has no spatial gate.
struct ClassParams {
  Label label = 0;
  bool modeled = false;
  double mean = 0.0;
  double stddev = 1.0;
  // Inclusive voxel-index box; voxels outside never take this class.
  long lo[3] = {0, 0, 0};
  long hi[3] = {-1, -1, -1};
};

// Weighted intensity moments under a mask.
struct Moments {
  double weight = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
};

namespace kernels {

#define EMR_KERNEL_DECLS                                                                    \
  OverlapCounts overlap_counts(const BinaryMask& a, const BinaryMask& b);                   \
  BinaryMask label_equals(std::span<const std::uint16_t> labels, const Dims& dims,          \
                          const Spacing& spacing, std::uint16_t label);                     \
  BinaryMask boundary(const BinaryMask& mask);                                              \
  std::vector<double> squared_distance_to(const BinaryMask& seeds);                         \
  Projection2D front_projection(const VoxelGrid& volume, const BinaryMask& mask);           \
  std::vector<std::uint16_t> argmax_labels(const VoxelGrid& volume,                         \
                                           std::span<const ClassParams> classes);           \
  std::vector<float> class_posterior(const VoxelGrid& volume,                               \
                                     std::span<const ClassParams> classes, std::size_t target); \
  Moments masked_moments(const VoxelGrid& volume, const BinaryMask& mask);

namespace serial {
EMR_KERNEL_DECLS
}  // namespace serial

namespace omp {
EMR_KERNEL_DECLS
}  // namespace omp

#undef EMR_KERNEL_DECLS

}  // namespace kernels

// Thread control for the OpenMP kernels and per-case loops.
void set_thread_count(int threads);
int thread_count();

}  // namespace emr
