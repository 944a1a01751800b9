#pragma once

// Portable random streams.
//
// Every stream is a std::mt19937_64 (output fully specified by the standard)
// seeded from SplitMix64 applied to (seed, tag, tag, ...). Real-valued draws
// are converted here instead of through <random> distributions, whose output
// differs between standard libraries.
//
//   derive(seed, tags): h = mix(seed); for t in tags: h = mix(h ^ mix(t + 1))
//   uniform():          top 53 bits / 2^53
//   uniform_int(a, b):  rejection sampling on the 64-bit output
//   normal():           Box-Muller on two uniforms, cosine branch only

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace emr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (const std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 1));
  return h;
}

// Stream tags. Values are part of the corpus format: changing one changes
// every generated byte.
namespace stream {
inline constexpr std::uint64_t kCase = 1;
inline constexpr std::uint64_t kGeometry = 2;
inline constexpr std::uint64_t kIntensity = 3;
inline constexpr std::uint64_t kReport = 4;
inline constexpr std::uint64_t kMeta = 5;
inline constexpr std::uint64_t kNoise = 6;
inline constexpr std::uint64_t kGoldPick = 7;
inline constexpr std::uint64_t kSynthetic = 8;
inline constexpr std::uint64_t kMix = 9;
inline constexpr std::uint64_t kOracle = 10;
inline constexpr std::uint64_t kBenchmark = 11;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
      : engine_(derive_seed(seed, tags)) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }

  // Inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    if (span == 0) return std::int64_t(engine_());
    const std::uint64_t limit = std::uint64_t(-span) % span;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r < limit);
    return lo + std::int64_t(r % span);
  }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace emr
