// Serial vs OpenMP kernels on one 64^3 phantom case.
//
//   emrefine_bench [--threads N] [benchmark flags]

#include <benchmark/benchmark.h>

#include <cstdlib>
#include <cstring>

#include "emr/config.hpp"
#include "emr/kernels.hpp"
#include "emr/phantom.hpp"

using namespace emr;

namespace {

struct Data {
  CaseRecord c;
  BinaryMask organ;
  BinaryMask sparse;
  std::vector<ClassParams> classes;
};

const Data& data() {
  static const Data d = [] {
    const RunConfig cfg = load_run_config(std::filesystem::path(EMR_SOURCE_DIR) / "config/default.ini");
    Data out;
    out.c = generate_case(cfg.phantom, 1);
    const Dims& dims = out.c.volume.dims;
    out.organ = kernels::serial::label_equals(out.c.pseudo.data, dims, out.c.volume.spacing, 1);
    out.sparse = kernels::serial::boundary(out.organ);
    // Background plus one class per label, each gated to the whole grid.
    for (Label k = 0; k < 8; ++k) {
      ClassParams p;
      p.label = k;
      p.modeled = true;
      p.mean = 20.0 * k;
      p.stddev = 15.0;
      p.hi[0] = long(dims.x) - 1;
      p.hi[1] = long(dims.y) - 1;
      p.hi[2] = long(dims.z) - 1;
      out.classes.push_back(p);
    }
    return out;
  }();
  return d;
}

#define EMR_BENCH(name, call)                                        \
  template <int Omp>                                                 \
  void name(benchmark::State& st) {                                  \
    const Data& d = data();                                          \
    for (auto _ : st) {                                              \
      if constexpr (Omp) {                                           \
        namespace k = kernels::omp;                                  \
        benchmark::DoNotOptimize(call);                              \
      } else {                                                       \
        namespace k = kernels::serial;                               \
        benchmark::DoNotOptimize(call);                              \
      }                                                              \
    }                                                                \
  }                                                                  \
  BENCHMARK(name<0>)->Name(#name "/serial")->Unit(benchmark::kMillisecond); \
  BENCHMARK(name<1>)->Name(#name "/omp")->Unit(benchmark::kMillisecond);

EMR_BENCH(overlap_counts, k::overlap_counts(d.organ, d.sparse))
EMR_BENCH(label_equals, k::label_equals(d.c.pseudo.data, d.c.volume.dims, d.c.volume.spacing, 3))
EMR_BENCH(boundary, k::boundary(d.organ))
EMR_BENCH(squared_distance_to, k::squared_distance_to(d.sparse))
EMR_BENCH(front_projection, k::front_projection(d.c.volume, d.organ))
EMR_BENCH(argmax_labels, k::argmax_labels(d.c.volume, d.classes))
EMR_BENCH(class_posterior, k::class_posterior(d.c.volume, d.classes, 1))
EMR_BENCH(masked_moments, k::masked_moments(d.c.volume, d.organ))

}  // namespace

int main(int argc, char** argv) {
  // Strip our own flag before handing the rest to the library.
  int out = 1;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc) {
      set_thread_count(std::atoi(argv[++i]));
      continue;
    }
    argv[out++] = argv[i];
  }
  argc = out;
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 2;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
