#include <doctest.h>

#include <cmath>
#include <cstring>

#include "emr/kernels.hpp"
#include "oracles.hpp"

using namespace emr;
namespace ser = emr::kernels::serial;
namespace par = emr::kernels::omp;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

template <typename T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

VoxelGrid random_volume(std::mt19937_64& rng, Dims d) {
  std::normal_distribution<float> n(100.0f, 40.0f);
  VoxelGrid v(d, Spacing{0.7, 1.0, 1.3}, 0.0f);
  for (auto& x : v.data) x = n(rng);
  return v;
}

std::vector<ClassParams> random_classes(std::mt19937_64& rng, Dims d) {
  std::uniform_real_distribution<double> mean(0, 200), sd(2, 30);
  std::vector<ClassParams> cls(4);
  cls[0] = {0, true, 0.0, 20.0, {0, 0, 0}, {long(d.x), long(d.y), long(d.z)}};
  for (Label k = 1; k < 4; ++k) {
    cls[k].label = k;
    cls[k].modeled = k != 2;
    cls[k].mean = mean(rng);
    cls[k].stddev = sd(rng);
    cls[k].lo[0] = k;
    cls[k].lo[1] = 0;
    cls[k].lo[2] = 1;
    cls[k].hi[0] = long(d.x) - 2;
    cls[k].hi[1] = long(d.y);
    cls[k].hi[2] = long(d.z) - k;
  }
  return cls;
}

}  // namespace

TEST_CASE("serial and parallel kernels agree bit for bit across thread counts") {
  std::mt19937_64 rng(77);
  for (const int threads : {1, 2, 3, 7}) {
    set_thread_count(threads);
    for (int trial = 0; trial < 6; ++trial) {
      const Dims d{std::uint32_t(5 + trial), std::uint32_t(4 + 2 * trial), std::uint32_t(3 + trial)};
      const VoxelGrid vol = random_volume(rng, d);
      const BinaryMask a = oracle::random_mask(rng, d, vol.spacing, 0.3);
      const BinaryMask b = oracle::random_mask(rng, d, vol.spacing, 0.05);

      CHECK(ser::overlap_counts(a, b) == par::overlap_counts(a, b));
      std::vector<std::uint16_t> labels(d.count());
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = std::uint16_t(a.data[i] + 2 * b.data[i]);
      CHECK(ser::label_equals(labels, d, vol.spacing, 1) == par::label_equals(labels, d, vol.spacing, 1));
      CHECK(ser::boundary(a) == par::boundary(a));
      CHECK(same_bits(ser::squared_distance_to(b), par::squared_distance_to(b)));
      CHECK(ser::front_projection(vol, a) == par::front_projection(vol, a));

      const auto cls = random_classes(rng, d);
      CHECK(same_bits(ser::argmax_labels(vol, cls), par::argmax_labels(vol, cls)));
      CHECK(same_bits(ser::class_posterior(vol, cls, 1), par::class_posterior(vol, cls, 1)));
      const Moments ms = ser::masked_moments(vol, a), mp = par::masked_moments(vol, a);
      CHECK(std::memcmp(&ms, &mp, sizeof(Moments)) == 0);
    }
  }
  set_thread_count(1);
}

TEST_CASE("distance transform matches brute force") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const Dims d{std::uint32_t(1 + trial % 6), std::uint32_t(1 + (trial / 2) % 5), std::uint32_t(1 + trial % 4)};
    const Spacing s{0.5 + 0.1 * (trial % 4), 1.0, 1.25};
    const BinaryMask seeds = oracle::random_mask(rng, d, s, 0.15);
    const auto dist = par::squared_distance_to(seeds);
    for (long z = 0; z < long(d.z); ++z)
      for (long y = 0; y < long(d.y); ++y)
        for (long x = 0; x < long(d.x); ++x) {
          double best = std::numeric_limits<double>::infinity();
          for (long k = 0; k < long(d.z); ++k)
            for (long j = 0; j < long(d.y); ++j)
              for (long i = 0; i < long(d.x); ++i) {
                if (!seeds.at(i, j, k)) continue;
                const double dx = double(x - i) * s.x, dy = double(y - j) * s.y, dz = double(z - k) * s.z;
                best = std::min(best, dx * dx + dy * dy + dz * dz);
              }
          if (std::isinf(best))
            CHECK(std::isinf(dist[d.index(x, y, z)]));
          else
            CHECK(dist[d.index(x, y, z)] == doctest::Approx(best).epsilon(1e-12));
        }
  }
}

TEST_CASE("posterior is a probability and zero outside the gate") {
  std::mt19937_64 rng(8);
  const Dims d{6, 5, 4};
  const VoxelGrid vol = random_volume(rng, d);
  const auto cls = random_classes(rng, d);
  const auto post = par::class_posterior(vol, cls, 1);
  for (std::size_t i = 0; i < post.size(); ++i) {
    CHECK(post[i] >= 0.0f);
    CHECK(post[i] <= 1.0f);
    const Coord c = vol.coord(i);
    if (c.x < cls[1].lo[0] || c.z < cls[1].lo[2]) CHECK(post[i] == 0.0f);
  }
}
