// Reference kernels: plain loops in storage order. Kept for tests and the
// benchmark baseline.

#include <algorithm>
#include <cmath>

#include "edt_line.hpp"
#include "emr/kernels.hpp"

namespace emr::kernels::serial {

OverlapCounts overlap_counts(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a.dims, b.dims, "overlap_counts");
  OverlapCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a.data[i] != 0;
    const bool in_b = b.data[i] != 0;
    c.a += in_a;
    c.b += in_b;
    c.both += in_a && in_b;
  }
  return c;
}

BinaryMask label_equals(std::span<const std::uint16_t> labels, const Dims& dims,
                        const Spacing& spacing, std::uint16_t label) {
  BinaryMask m(dims, spacing, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) m.data[i] = labels[i] == label;
  return m;
}

BinaryMask boundary(const BinaryMask& mask) {
  const Dims& d = mask.dims;
  BinaryMask out(d, mask.spacing, 0);
  static constexpr long kFace[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                       {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  for (long z = 0; z < long(d.z); ++z)
    for (long y = 0; y < long(d.y); ++y)
      for (long x = 0; x < long(d.x); ++x) {
        if (!mask.at(x, y, z)) continue;
        bool edge = false;
        for (const auto& o : kFace) {
          const long nx = x + o[0], ny = y + o[1], nz = z + o[2];
          if (!d.contains(nx, ny, nz) || !mask.at(nx, ny, nz)) {
            edge = true;
            break;
          }
        }
        out.at(x, y, z) = edge;
      }
  return out;
}

std::vector<double> squared_distance_to(const BinaryMask& seeds) {
  const Dims& d = seeds.dims;
  const std::size_t n = d.count();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = seeds.data[i] ? 0.0 : detail::kFar;

  std::vector<std::size_t> v;
  std::vector<double> zb;
  const std::size_t len[3] = {d.x, d.y, d.z};
  const std::size_t stride[3] = {1, d.x, std::size_t{d.x} * d.y};
  const double step[3] = {seeds.spacing.x, seeds.spacing.y, seeds.spacing.z};
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> in(len[axis]), out(len[axis]);
    for (std::size_t start = 0; start < n; ++start) {
      // A line starts at every index whose coordinate along `axis` is zero.
      if ((start / stride[axis]) % len[axis] != 0) continue;
      for (std::size_t p = 0; p < len[axis]; ++p) in[p] = dist[start + p * stride[axis]];
      detail::edt_line(in.data(), out.data(), len[axis], step[axis], v, zb);
      for (std::size_t p = 0; p < len[axis]; ++p) dist[start + p * stride[axis]] = out[p];
    }
  }
  return dist;
}

Projection2D front_projection(const VoxelGrid& volume, const BinaryMask& mask) {
  require_same_shape(volume.dims, mask.dims, "front_view_projection");
  const Dims& d = volume.dims;
  Projection2D p;
  p.width = d.x;
  p.height = d.z;
  p.intensity.assign(std::size_t{d.x} * d.z, 0.0);
  p.overlay.assign(std::size_t{d.x} * d.z, 0);
  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t x = 0; x < d.x; ++x) {
      double sum = 0.0;
      std::uint8_t hit = 0;
      for (std::size_t y = 0; y < d.y; ++y) {
        sum += volume.at(x, y, z);
        hit |= mask.at(x, y, z) != 0;
      }
      p.intensity[x + std::size_t{d.x} * z] = d.y ? sum / double(d.y) : 0.0;
      p.overlay[x + std::size_t{d.x} * z] = hit;
    }
  return p;
}

namespace {

bool gated_in(const ClassParams& c, long x, long y, long z) {
  return c.modeled && x >= c.lo[0] && x <= c.hi[0] && y >= c.lo[1] && y <= c.hi[1] &&
         z >= c.lo[2] && z <= c.hi[2];
}

double log_likelihood(const ClassParams& c, double v) {
  const double r = (v - c.mean) / c.stddev;
  return -0.5 * r * r - std::log(c.stddev);
}

}  // namespace

std::vector<std::uint16_t> argmax_labels(const VoxelGrid& volume,
                                         std::span<const ClassParams> classes) {
  std::vector<std::uint16_t> out(volume.size(), 0);
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const Coord c = volume.coord(i);
    const double v = volume.data[i];
    std::size_t best = 0;
    double best_ll = log_likelihood(classes[0], v);
    for (std::size_t k = 1; k < classes.size(); ++k) {
      if (!gated_in(classes[k], c.x, c.y, c.z)) continue;
      const double ll = log_likelihood(classes[k], v);
      if (ll > best_ll) {
        best_ll = ll;
        best = k;
      }
    }
    out[i] = classes[best].label;
  }
  return out;
}

std::vector<float> class_posterior(const VoxelGrid& volume, std::span<const ClassParams> classes,
                                   std::size_t target) {
  std::vector<float> out(volume.size(), 0.0f);
  std::vector<double> ll(classes.size());
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const Coord c = volume.coord(i);
    if (!gated_in(classes[target], c.x, c.y, c.z)) continue;
    const double v = volume.data[i];
    double top = log_likelihood(classes[0], v);
    ll[0] = top;
    for (std::size_t k = 1; k < classes.size(); ++k) {
      ll[k] = gated_in(classes[k], c.x, c.y, c.z) ? log_likelihood(classes[k], v) : -detail::kFar;
      top = std::max(top, ll[k]);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < classes.size(); ++k) denom += std::exp(ll[k] - top);
    out[i] = float(std::exp(ll[target] - top) / denom);
  }
  return out;
}

Moments masked_moments(const VoxelGrid& volume, const BinaryMask& mask) {
  require_same_shape(volume.dims, mask.dims, "masked_moments");
  const Dims& d = volume.dims;
  const std::size_t plane = std::size_t{d.x} * d.y;
  Moments total;
  for (std::size_t z = 0; z < d.z; ++z) {
    Moments slice;
    for (std::size_t i = z * plane; i < (z + 1) * plane; ++i) {
      if (!mask.data[i]) continue;
      const double v = volume.data[i];
      slice.weight += 1.0;
      slice.sum += v;
      slice.sum_sq += v * v;
    }
    total.weight += slice.weight;
    total.sum += slice.sum;
    total.sum_sq += slice.sum_sq;
  }
  return total;
}

}  // namespace emr::kernels::serial
