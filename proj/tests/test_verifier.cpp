#include <doctest.h>

#include <random>

#include "emr/metrics.hpp"
#include "emr/phantom.hpp"
#include "emr/verifier.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace emr;

namespace {

Corpus clean_corpus(const RunConfig& cfg, std::uint32_t n, std::uint64_t seed = 0) {
  return generate_corpus(cfg.phantom, NoiseSpec{}, n, 0.0, seed).corpus;
}

BinaryMask mask(const LabelMap& m, Label l) {
  BinaryMask out(m.dims, m.spacing, 0);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = m.data[i] == l;
  return out;
}

}  // namespace

TEST_CASE("constant intensity gives that mean and the floored std") {
  const StructureCatalog cat = StructureCatalog::default_catalog();
  CaseRecord c;
  c.volume = VoxelGrid(Dims{6, 6, 6}, Spacing{}, 0.0f);
  c.pseudo = LabelMap(c.volume.dims, c.volume.spacing, cat.id());
  for (long z = 1; z < 4; ++z)
    for (long y = 1; y < 4; ++y)
      for (long x = 1; x < 4; ++x) {
        c.pseudo.at(x, y, z) = 1;
        c.volume.at(x, y, z) = 40.0f;
      }
  Corpus corpus{cat, {c}};
  const GaussianIntensityModel m = fit_model(corpus);
  CHECK(m.classes()[1].modeled);
  CHECK(m.classes()[1].mean == 40.0);
  CHECK(m.classes()[1].stddev == m.options().std_floor);
  // Nothing else was labelled.
  for (Label l = 2; l <= cat.size(); ++l) CHECK_FALSE(m.classes()[l].modeled);
}

TEST_CASE("zero-weight cases are excluded from the fit") {
  const RunConfig cfg = support::small_config();
  Corpus two = generate_corpus(cfg.phantom, cfg.noise, 2, 0.0, 3).corpus;
  const std::vector<double> w{1.0, 0.0};
  const GaussianIntensityModel weighted = fit_model(two, &w);
  Corpus first{two.catalog, {two.cases[0]}};
  CHECK(weighted.to_json() == fit_model(first).to_json());

  const std::vector<double> zeros{0.0, 0.0}, negative{1.0, -1.0}, short_w{1.0};
  CHECK_THROWS_AS(fit_model(two, &zeros), Error);
  CHECK_THROWS_AS(fit_model(two, &negative), Error);
  CHECK_THROWS_AS(fit_model(two, &short_w), Error);
}

TEST_CASE("fitted means track the generator on a clean corpus") {
  // Per-case intensity jitter off: only voxel noise is left to average out.
  const RunConfig cfg = support::small_config({"phantom.intensity_jitter=0"});
  const Corpus corpus = clean_corpus(cfg, 5);
  const GaussianIntensityModel m = fit_model(corpus);
  for (const auto& s : cfg.phantom.structures) {
    const Label l = *corpus.catalog.find(s.name);
    CHECK_MESSAGE(std::abs(m.classes()[l].mean - s.mean) <= 1.0, s.name);
    double sum = 0;
    std::size_t n = 0;
    for (const auto& c : corpus.cases)
      for (std::size_t i = 0; i < c.pseudo.size(); ++i)
        if (c.pseudo.data[i] == l) {
          sum += c.volume.data[i];
          ++n;
        }
    CHECK(m.classes()[l].mean == doctest::Approx(sum / double(n)).epsilon(1e-9));
    CHECK(m.classes()[l].stddev > 0);
    for (int a = 0; a < 3; ++a) {
      CHECK(m.classes()[l].box_lo[a] >= 0.0);
      CHECK(m.classes()[l].box_hi[a] <= 1.0);
    }
  }
}

TEST_CASE("fit is deterministic and survives a JSON round trip") {
  const RunConfig cfg = support::small_config();
  const Corpus corpus = generate_corpus(cfg.phantom, cfg.noise, 6, 0.0, 1).corpus;
  const GaussianIntensityModel a = fit_model(corpus), b = fit_model(corpus);
  CHECK(a.to_json() == b.to_json());
  CHECK(GaussianIntensityModel::from_json(a.to_json()).to_json() == a.to_json());
  CHECK(a.to_json().at("schema_version") == kSchemaVersion);
}

TEST_CASE("prediction on background-only volume is empty") {
  const RunConfig cfg = support::small_config();
  const GaussianIntensityModel m = fit_model(clean_corpus(cfg, 3));
  VoxelGrid bg(cfg.phantom.dims, cfg.phantom.spacing, float(cfg.phantom.background_mean));
  const LabelMap p = m.predict(bg);
  for (auto l : p.data) CHECK(l == 0);
  CHECK(p.dims == bg.dims);
  CHECK(p.catalog_id == m.catalog().id());
}

TEST_CASE("voxels outside every spatial prior are background whatever the intensity") {
  const RunConfig cfg = support::small_config();
  const GaussianIntensityModel m = fit_model(clean_corpus(cfg, 3));
  // Corner voxel (0,0,0) lies outside all boxes; give it the liver's mean.
  const Label liver = *m.catalog().find("liver");
  CHECK(m.classes()[liver].box_lo[0] > 0.0);
  VoxelGrid v(cfg.phantom.dims, cfg.phantom.spacing, 0.0f);
  v.at(0, 0, 0) = float(m.classes()[liver].mean);
  v.at(1, 0, 0) = float(m.classes()[liver].mean);
  const LabelMap p = m.predict(v);
  CHECK(p.at(0, 0, 0) == 0);
  CHECK(p.at(1, 0, 0) == 0);
}

TEST_CASE("noise-free phantom is segmented with dsc >= 0.95 per structure") {
  const RunConfig cfg = support::default_config();
  const Corpus corpus = clean_corpus(cfg, 4);
  const GaussianIntensityModel m = fit_model(corpus);
  const CaseRecord& c = corpus.cases[0];
  const LabelMap p = m.predict(c.volume);
  for (const auto& e : corpus.catalog.entries()) {
    const BinaryMask g = mask(*c.gold, e.label);
    if (count_nonzero(g) == 0) continue;
    CHECK_MESSAGE(oracle::dsc(mask(p, e.label), g) >= 0.95, e.name);
  }
}

TEST_CASE("unlabelled structure is unmodeled and never predicted") {
  const RunConfig cfg = support::small_config();
  Corpus corpus = clean_corpus(cfg, 2);
  const Label spleen = *corpus.catalog.find("spleen");
  for (auto& c : corpus.cases)
    for (auto& l : c.pseudo.data)
      if (l == spleen) l = 0;
  const GaussianIntensityModel m = fit_model(corpus);
  CHECK_FALSE(m.classes()[spleen].modeled);
  const LabelMap p = m.predict(corpus.cases[0].volume);
  CHECK(count_nonzero(mask(p, spleen)) == 0);
}

TEST_CASE("unfitted model refuses to predict") {
  GaussianIntensityModel m(StructureCatalog::default_catalog());
  CHECK_THROWS_AS(m.predict(VoxelGrid(Dims{4, 4, 4}, Spacing{}, 0.0f)), Error);
}

TEST_CASE("audit actions are a function of dsc alone") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double d = i < 3 ? std::vector<double>{0.0, 0.5, 1.0}[i] : u(rng);
    const AuditAction a = classify_dsc(d);
    if (d == 0.0) CHECK(a == AuditAction::auto_replace);
    else if (d < 0.5) CHECK(a == AuditAction::route_to_expert);
    else CHECK(a == AuditAction::keep);
  }
}

TEST_CASE("audit against a controlled prediction") {
  const RunConfig cfg = support::small_config();
  const Corpus corpus = clean_corpus(cfg, 1);
  const CaseRecord& c = corpus.cases[0];
  const StructureCatalog& cat = corpus.catalog;

  SUBCASE("identical maps keep everything") {
    const AuditOutcome a = audit_prediction(c.pseudo, c, cat);
    for (const auto& s : a.structures) {
      CHECK(s.dsc == 1.0);
      CHECK(s.action == AuditAction::keep);
    }
  }
  SUBCASE("a structure only the prediction has is replaced") {
    CaseRecord missing = c;
    const Label kidney = *cat.find("kidney_left");
    for (auto& l : missing.pseudo.data)
      if (l == kidney) l = 0;
    const AuditOutcome a = audit_prediction(c.pseudo, missing, cat);
    CHECK(a.structures[kidney - 1].dsc == 0.0);
    CHECK(a.structures[kidney - 1].action == AuditAction::auto_replace);
  }
  SUBCASE("a partial overlap near 0.3 is routed") {
    // Keep a prefix of the liver voxels: dsc = 2k / (1 + k) for a fraction k.
    const Label liver = *cat.find("liver");
    CaseRecord partial = c;
    const std::size_t total = count_nonzero(mask(c.pseudo, liver));
    const auto keep = std::size_t(double(total) * 0.3 / 1.7);
    std::size_t seen = 0;
    for (auto& l : partial.pseudo.data)
      if (l == liver && ++seen > keep) l = 0;
    const AuditOutcome a = audit_prediction(c.pseudo, partial, cat);
    const double expected = oracle::dsc(mask(partial.pseudo, liver), mask(c.pseudo, liver));
    CHECK(a.structures[liver - 1].dsc == doctest::Approx(expected).epsilon(1e-15));
    CHECK(a.structures[liver - 1].dsc == doctest::Approx(0.3).epsilon(0.01));
    CHECK(a.structures[liver - 1].action == AuditAction::route_to_expert);
  }
  SUBCASE("disjoint nonempty masks score zero") {
    const Label aorta = *cat.find("aorta");
    CaseRecord moved = c;
    apply_noise_op(moved.pseudo, InjectionOp{NoiseOp::shift, aorta, {8, 0, 0}});
    const AuditOutcome a = audit_prediction(c.pseudo, moved, cat);
    CHECK(a.structures[aorta - 1].dsc == 0.0);
    CHECK(a.structures[aorta - 1].action == AuditAction::auto_replace);
  }
}

TEST_CASE("update rule: no-op when everything is kept") {
  const RunConfig cfg = support::small_config();
  const Corpus corpus = clean_corpus(cfg, 1);
  const CaseRecord& c = corpus.cases[0];
  const UpdateResult r = apply_update_rule(c, audit_prediction(c.pseudo, c, corpus.catalog), corpus.catalog);
  CHECK(r.updated.pseudo == c.pseudo);
  CHECK(r.changes.empty());
}

TEST_CASE("update rule replaces only DSC = 0 structures and is idempotent") {
  const RunConfig cfg = support::small_config();
  const StructureCatalog cat = cfg.phantom.catalog();
  const Corpus clean = clean_corpus(cfg, 6, 2);
  const GaussianIntensityModel model = fit_model(clean);
  const GeneratedCorpus noisy = generate_corpus(cfg.phantom, cfg.noise, 30, 0.0, 4);

  std::size_t replaced = 0;
  for (const CaseRecord& c : noisy.corpus.cases) {
    const AuditOutcome a = audit_case(model, c);
    const UpdateResult r = apply_update_rule(c, a, cat);
    std::vector<bool> touched(cat.size() + 1, false);
    for (const auto& s : a.structures) touched[s.label] = s.action == AuditAction::auto_replace;

    // Outside the old and new footprints of replaced labels nothing moves.
    for (std::size_t i = 0; i < c.pseudo.size(); ++i) {
      const bool footprint = touched[c.pseudo.data[i]] || touched[a.prediction.data[i]];
      if (!footprint) REQUIRE(r.updated.pseudo.data[i] == c.pseudo.data[i]);
    }
    std::size_t logged = 0;
    for (const auto& s : a.structures) {
      if (s.action != AuditAction::auto_replace) continue;
      ++replaced;
      ++logged;
    }
    CHECK(r.changes.size() == logged);

    // A replaced structure becomes the prediction, minus voxels where a
    // tumor already sat (tumors are never overwritten by organs).
    for (std::size_t i = 0; i < c.pseudo.size(); ++i) {
      const Label p = a.prediction.data[i], old = c.pseudo.data[i];
      if (!touched[p]) continue;
      const bool tumor_kept =
          p != old && old != 0 && !touched[old] && cat.entries()[old - 1].kind == StructureKind::tumor;
      REQUIRE(r.updated.pseudo.data[i] == (tumor_kept ? old : p));
    }
    const AuditOutcome again = audit_prediction(a.prediction, r.updated, cat);
    for (const auto& s : again.structures)
      if (touched[s.label]) CHECK(s.dsc > 0.5);
  }
  CHECK(replaced > 0);
}

TEST_CASE("tumor voxels survive an organ replacement") {
  const StructureCatalog cat = StructureCatalog::default_catalog();
  LabelMap m(Dims{6, 6, 6}, Spacing{}, cat.id());
  m.at(2, 2, 2) = 7;  // tumor
  BinaryMask organ(m.dims, m.spacing, 0);
  for (long x = 1; x < 4; ++x) organ.at(x, 2, 2) = 1;
  const ReplaceStats s = replace_structure(m, cat, 5, organ);
  CHECK(m.at(2, 2, 2) == 7);
  CHECK(m.at(1, 2, 2) == 5);
  CHECK(m.at(3, 2, 2) == 5);
  CHECK(s.after == 2);
  CHECK(s.collisions == 1);
}

TEST_CASE("auto-replacement rate follows the injected deletion rate") {
  RunConfig cfg = support::small_config({"tumor.enabled=false"});
  const StructureCatalog cat = cfg.phantom.catalog();
  NoiseSpec noise;
  noise.rates.remove = 0.2;
  const GaussianIntensityModel model = fit_model(clean_corpus(cfg, 6, 5));
  const GeneratedCorpus g = generate_corpus(cfg.phantom, noise, 60, 0.0, 6);
  std::size_t structures = 0, replaced = 0, deleted = 0;
  for (std::size_t i = 0; i < g.corpus.cases.size(); ++i) {
    for (const auto& s : audit_case(model, g.corpus.cases[i]).structures) {
      ++structures;
      replaced += s.action == AuditAction::auto_replace;
    }
    for (const auto& op : g.logs[i].ops) deleted += op.op == NoiseOp::remove;
  }
  // Every deletion is caught and nothing else is replaced on otherwise clean labels.
  CHECK(replaced == deleted);
  const double p = 0.2, sigma = std::sqrt(double(structures) * p * (1 - p));
  CHECK(std::abs(double(replaced) - p * double(structures)) <= 3 * sigma);
}

TEST_CASE("change log serializes one object per line") {
  const std::vector<ChangeEntry> e{{"case_0000", "liver", "auto_replace", 10, 12, 1},
                                   {"case_0001", "aorta", "expert_keep", 5, 5, 0}};
  const std::string text = to_jsonl(e);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  const Json first = Json::parse(text.substr(0, text.find('\n')));
  CHECK(first.at("case_id") == "case_0000");
  CHECK(first.at("voxels_before") == 10);
  CHECK(first.at("voxels_after") == 12);
  CHECK(first.at("action") == "auto_replace");
}
