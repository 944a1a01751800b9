#include "emr/judge_benchmark.hpp"

namespace emr {

namespace {

struct Pair {
  bool valid = false;
  bool correct = false;
  bool tie = false;
  std::string category;
};

Pair run_pair(const PhantomSpec& spec, const StructureCatalog& catalog, const NoiseSpec& noise,
              const PriorTable& priors, Judge& judge, const JudgeBenchmarkOptions& o,
              std::uint32_t i) {
  Rng rng(derive_seed(o.seed, {stream::kBenchmark, i}));
  const CaseRecord c = generate_case(spec, derive_seed(o.seed, {stream::kBenchmark, i, 1}));
  std::vector<Label> present;
  for (const auto& e : catalog.entries())
    if (count_nonzero(extract_structure_mask(*c.gold, catalog, e.label)) > 0)
      present.push_back(e.label);
  Pair p;
  if (present.empty()) return p;

  for (int attempt = 0; attempt < o.max_redraws; ++attempt) {
    const Label l = present[std::size_t(rng.uniform_int(0, long(present.size()) - 1))];
    LabelMap good = *c.gold;
    if (rng.bernoulli(o.jitter_probability))
      apply_noise_op(good, {rng.bernoulli(0.5) ? NoiseOp::dilate : NoiseOp::erode, l, {}});
    LabelMap bad = *c.gold;
    const auto op = corrupt_structure(bad, catalog, l, noise, rng);
    if (!op || bad == *c.gold) continue;
    const TournamentResult r =
        run_tournament(c.case_id, c.volume, {bad, good}, judge, priors, catalog, {l}, &c.report);
    p.valid = true;
    p.correct = r.winner == 1;
    p.tie = r.score_1 == r.score_2;
    p.category = catalog.at(l).name + ":" + std::string(to_string(op->op));
    return p;
  }
  return p;
}

}  // namespace

JudgeBenchmarkResult judge_benchmark(const PhantomSpec& spec, const NoiseSpec& noise,
                                     const PriorTable& priors, Judge& judge,
                                     const JudgeBenchmarkOptions& options) {
  spec.validate();
  noise.validate();
  const StructureCatalog catalog = spec.catalog();
  priors.check_against(catalog);

  // Pair i uses stream i; a pair that cannot be built is replaced by the
  // next unused index so the count stays exact.
  std::vector<Pair> pairs(options.pairs);
  std::vector<std::uint8_t> done(options.pairs, 0);
  std::uint32_t next = options.pairs;
  for (int round = 0; round < 8; ++round) {
    std::vector<std::uint32_t> todo, stream_of;
    for (std::uint32_t k = 0; k < options.pairs; ++k)
      if (!done[k]) {
        todo.push_back(k);
        stream_of.push_back(round == 0 ? k : next++);
      }
    if (todo.empty()) break;
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < long(todo.size()); ++t)
      pairs[todo[t]] = run_pair(spec, catalog, noise, priors, judge, options, stream_of[t]);
    for (const auto k : todo) done[k] = pairs[k].valid;
  }

  JudgeBenchmarkResult r;
  for (const Pair& p : pairs) {
    if (!p.valid) continue;
    ++r.pairs;
    r.correct += p.correct;
    r.ties += p.tie;
    auto& cat = r.by_category[p.category];
    cat[0] += p.correct;
    ++cat[1];
  }
  return r;
}

Json judge_benchmark_to_json(const JudgeBenchmarkResult& r) {
  Json cats = Json::object();
  for (const auto& [k, v] : r.by_category) cats[k] = {{"correct", v[0]}, {"total", v[1]}};
  return {{"schema_version", kSchemaVersion},
          {"pairs", r.pairs},
          {"correct", r.correct},
          {"ties", r.ties},
          {"accuracy", r.accuracy()},
          {"by_category", cats}};
}

}  // namespace emr
