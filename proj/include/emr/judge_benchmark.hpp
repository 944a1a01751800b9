#pragma once

// Accuracy harness for judges: each pair is a fresh phantom, one structure
// present in its gold labels, a gold-derived candidate (optionally with
// boundary jitter) and a corrupted copy. The judge is right when the
// tournament over [corrupted, gold-derived] selects the gold-derived one.

#include <map>
#include <string>

#include "emr/expert.hpp"
#include "emr/phantom.hpp"

namespace emr {

struct JudgeBenchmarkOptions {
  std::uint32_t pairs = 1000;
  std::uint64_t seed = 0;
  // Probability that the gold-derived candidate is dilated or eroded by one voxel.
  double jitter_probability = 0.15;
  // Redraws of structure and corruption before a pair is given up.
  int max_redraws = 16;
};

struct JudgeBenchmarkResult {
  std::uint32_t pairs = 0;
  std::uint32_t correct = 0;
  std::uint32_t ties = 0;
  // "structure:op" -> {correct, total}
  std::map<std::string, std::array<std::uint32_t, 2>> by_category;

  double accuracy() const { return pairs ? double(correct) / double(pairs) : 0.0; }
};

JudgeBenchmarkResult judge_benchmark(const PhantomSpec& spec, const NoiseSpec& noise,
                                     const PriorTable& priors, Judge& judge,
                                     const JudgeBenchmarkOptions& options = {});

Json judge_benchmark_to_json(const JudgeBenchmarkResult& r);

}  // namespace emr
