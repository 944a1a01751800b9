#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace emr::detail {

inline constexpr double kFar = std::numeric_limits<double>::infinity();

// One pass of the separable squared Euclidean distance transform (lower
// envelope of parabolas). `f` holds squared distances from earlier axes,
// `step` is the physical spacing along this axis. Sites with infinite f are
// skipped so the envelope only contains reachable seeds. `f` and `out` must
// not alias.
//
// The value written at p is f[q] + ((p - q) * step)^2 for the minimizing q,
// which keeps the per-axis accumulation order identical to a direct sum.
inline void edt_line(const double* f, double* out, std::size_t n, double step,
                     std::vector<std::size_t>& v, std::vector<double>& zb) {
  v.resize(n);
  zb.resize(n + 1);
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    const double fq = f[q];
    if (fq == kFar) continue;
    const double pq = double(q) * step;
    if (!any) {
      v[0] = q;
      zb[0] = -kFar;
      zb[1] = kFar;
      any = true;
      continue;
    }
    double s = 0.0;
    while (true) {
      const std::size_t r = v[k];
      const double pr = double(r) * step;
      s = ((fq + pq * pq) - (f[r] + pr * pr)) / (2.0 * (pq - pr));
      if (s > zb[k] || k == 0) break;
      --k;
    }
    ++k;
    v[k] = q;
    zb[k] = s;
    zb[k + 1] = kFar;
  }
  if (!any) {
    for (std::size_t p = 0; p < n; ++p) out[p] = kFar;
    return;
  }
  std::size_t j = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double pp = double(p) * step;
    while (zb[j + 1] < pp) ++j;
    const std::size_t q = v[j];
    const double d = (double(p) - double(q)) * step;
    out[p] = f[q] + d * d;
  }
}

}  // namespace emr::detail
