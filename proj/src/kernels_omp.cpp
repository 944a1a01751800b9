#include <omp.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "edt_line.hpp"
#include "emr/kernels.hpp"

namespace emr {

namespace {
int g_threads = int(std::max(1u, std::thread::hardware_concurrency()));
}

void set_thread_count(int threads) {
  g_threads = std::max(1, threads);
  omp_set_num_threads(g_threads);
}

int thread_count() { return g_threads; }

namespace kernels::omp {

OverlapCounts overlap_counts(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a.dims, b.dims, "overlap_counts");
  const long n = long(a.size());
  const std::uint8_t* pa = a.data.data();
  const std::uint8_t* pb = b.data.data();
  std::uint64_t ca = 0, cb = 0, both = 0;
#pragma omp parallel for schedule(static) reduction(+ : ca, cb, both)
  for (long i = 0; i < n; ++i) {
    const bool in_a = pa[i] != 0;
    const bool in_b = pb[i] != 0;
    ca += in_a;
    cb += in_b;
    both += in_a && in_b;
  }
  return {ca, cb, both};
}

BinaryMask label_equals(std::span<const std::uint16_t> labels, const Dims& dims,
                        const Spacing& spacing, std::uint16_t label) {
  BinaryMask m(dims, spacing, 0);
  const long n = long(labels.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) m.data[i] = labels[i] == label;
  return m;
}

BinaryMask boundary(const BinaryMask& mask) {
  const Dims d = mask.dims;
  BinaryMask out(d, mask.spacing, 0);
  const long nz = d.z, ny = d.y, nx = d.x;
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z)
    for (long y = 0; y < ny; ++y)
      for (long x = 0; x < nx; ++x) {
        if (!mask.at(x, y, z)) continue;
        const bool edge = x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 ||
                          z == nz - 1 || !mask.at(x - 1, y, z) || !mask.at(x + 1, y, z) ||
                          !mask.at(x, y - 1, z) || !mask.at(x, y + 1, z) ||
                          !mask.at(x, y, z - 1) || !mask.at(x, y, z + 1);
        out.at(x, y, z) = edge;
      }
  return out;
}

std::vector<double> squared_distance_to(const BinaryMask& seeds) {
  const Dims d = seeds.dims;
  const long n = long(d.count());
  std::vector<double> dist(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) dist[i] = seeds.data[i] ? 0.0 : detail::kFar;

  const std::size_t len[3] = {d.x, d.y, d.z};
  const std::size_t stride[3] = {1, d.x, std::size_t{d.x} * d.y};
  const double step[3] = {seeds.spacing.x, seeds.spacing.y, seeds.spacing.z};
  for (int axis = 0; axis < 3; ++axis) {
    // Lines along `axis` are indexed by the two remaining coordinates.
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const long lines = long(len[a1] * len[a2]);
#pragma omp parallel
    {
      std::vector<std::size_t> v;
      std::vector<double> zb, in(len[axis]), out(len[axis]);
#pragma omp for schedule(static)
      for (long l = 0; l < lines; ++l) {
        const std::size_t c1 = std::size_t(l) % len[a1], c2 = std::size_t(l) / len[a1];
        const std::size_t start = c1 * stride[a1] + c2 * stride[a2];
        for (std::size_t p = 0; p < len[axis]; ++p) in[p] = dist[start + p * stride[axis]];
        detail::edt_line(in.data(), out.data(), len[axis], step[axis], v, zb);
        for (std::size_t p = 0; p < len[axis]; ++p) dist[start + p * stride[axis]] = out[p];
      }
    }
  }
  return dist;
}

Projection2D front_projection(const VoxelGrid& volume, const BinaryMask& mask) {
  require_same_shape(volume.dims, mask.dims, "front_view_projection");
  const Dims d = volume.dims;
  Projection2D p;
  p.width = d.x;
  p.height = d.z;
  p.intensity.assign(std::size_t{d.x} * d.z, 0.0);
  p.overlay.assign(std::size_t{d.x} * d.z, 0);
  const long nz = d.z;
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z)
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

struct Gate {
  const ClassParams* c;
  bool in(long x, long y, long z) const {
    return c->modeled && x >= c->lo[0] && x <= c->hi[0] && y >= c->lo[1] && y <= c->hi[1] &&
           z >= c->lo[2] && z <= c->hi[2];
  }
};

double log_likelihood(const ClassParams& c, double log_std, double v) {
  const double r = (v - c.mean) / c.stddev;
  return -0.5 * r * r - log_std;
}

}  // namespace

std::vector<std::uint16_t> argmax_labels(const VoxelGrid& volume,
                                         std::span<const ClassParams> classes) {
  const Dims d = volume.dims;
  std::vector<std::uint16_t> out(volume.size(), 0);
  std::vector<double> log_std(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) log_std[k] = std::log(classes[k].stddev);
  const long nz = d.z;
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z) {
    // Classes whose gate covers this slice.
    std::vector<std::size_t> active;
    for (std::size_t k = 1; k < classes.size(); ++k)
      if (classes[k].modeled && z >= classes[k].lo[2] && z <= classes[k].hi[2]) active.push_back(k);
    for (long y = 0; y < long(d.y); ++y)
      for (long x = 0; x < long(d.x); ++x) {
        const std::size_t i = d.index(x, y, z);
        const double v = volume.data[i];
        std::size_t best = 0;
        double best_ll = log_likelihood(classes[0], log_std[0], v);
        for (const std::size_t k : active) {
          if (!Gate{&classes[k]}.in(x, y, z)) continue;
          const double ll = log_likelihood(classes[k], log_std[k], v);
          if (ll > best_ll) {
            best_ll = ll;
            best = k;
          }
        }
        out[i] = classes[best].label;
      }
  }
  return out;
}

std::vector<float> class_posterior(const VoxelGrid& volume, std::span<const ClassParams> classes,
                                   std::size_t target) {
  const Dims d = volume.dims;
  std::vector<float> out(volume.size(), 0.0f);
  std::vector<double> log_std(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) log_std[k] = std::log(classes[k].stddev);
  const Gate tgate{&classes[target]};
  const long nz = d.z;
#pragma omp parallel
  {
    std::vector<double> ll(classes.size());
#pragma omp for schedule(static)
    for (long z = 0; z < nz; ++z)
      for (long y = 0; y < long(d.y); ++y)
        for (long x = 0; x < long(d.x); ++x) {
          if (!tgate.in(x, y, z)) continue;
          const std::size_t i = d.index(x, y, z);
          const double v = volume.data[i];
          double top = log_likelihood(classes[0], log_std[0], v);
          ll[0] = top;
          for (std::size_t k = 1; k < classes.size(); ++k) {
            ll[k] = Gate{&classes[k]}.in(x, y, z) ? log_likelihood(classes[k], log_std[k], v)
                                                  : -detail::kFar;
            top = std::max(top, ll[k]);
          }
          double denom = 0.0;
          for (std::size_t k = 0; k < classes.size(); ++k) denom += std::exp(ll[k] - top);
          out[i] = float(std::exp(ll[target] - top) / denom);
        }
  }
  return out;
}

Moments masked_moments(const VoxelGrid& volume, const BinaryMask& mask) {
  require_same_shape(volume.dims, mask.dims, "masked_moments");
  const Dims d = volume.dims;
  const std::size_t plane = std::size_t{d.x} * d.y;
  std::vector<Moments> slices(d.z);
  const long nz = d.z;
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z) {
    Moments s;
    for (std::size_t i = std::size_t(z) * plane; i < std::size_t(z + 1) * plane; ++i) {
      if (!mask.data[i]) continue;
      const double v = volume.data[i];
      s.weight += 1.0;
      s.sum += v;
      s.sum_sq += v * v;
    }
    slices[z] = s;
  }
  Moments total;
  for (const Moments& s : slices) {
    total.weight += s.weight;
    total.sum += s.sum;
    total.sum_sq += s.sum_sq;
  }
  return total;
}

}  // namespace kernels::omp
}  // namespace emr
