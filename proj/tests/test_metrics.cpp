#include <doctest.h>

#include <cmath>

#include "emr/metrics.hpp"
#include "oracles.hpp"

using namespace emr;

TEST_CASE("dsc empty-set conventions") {
  BinaryMask e(Dims{3, 3, 3}, Spacing{}, 0), f = e;
  CHECK(dsc(e, e) == 1.0);
  f.data[4] = 1;
  CHECK(dsc(e, f) == 0.0);
  CHECK(dsc(f, f) == 1.0);
}

TEST_CASE("dsc, nsd and tumor-wise detection match brute force on random pairs") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> side(1, 6);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  for (int trial = 0; trial < 300; ++trial) {
    const Dims d{std::uint32_t(side(rng)), std::uint32_t(side(rng)), std::uint32_t(side(rng))};
    const Spacing s = trial % 2 ? Spacing{0.8, 1.0, 1.7} : Spacing{};
    const BinaryMask a = oracle::random_mask(rng, d, s, density(rng));
    const BinaryMask b = oracle::random_mask(rng, d, s, density(rng));
    CHECK(dsc(a, b) == oracle::dsc(a, b));
    const double tol = trial % 3 ? 1.5 : 2.0;
    CHECK(std::abs(nsd(a, b, {tol, s}) - oracle::nsd(a, b, tol)) <= 1e-12);
    for (const bool full : {false, true}) {
      const auto c = tumor_wise_detection(a, b, full ? Connectivity::full26 : Connectivity::face6);
      const auto o = oracle::tumor_wise(a, b, full);
      CHECK(c.tp == o.tp);
      CHECK(c.fn == o.fn);
      CHECK(c.fp == o.fp);
      CHECK(c.tn == 0);
    }
  }
}

TEST_CASE("nsd uses a strict tolerance") {
  // Two single voxels exactly 2 mm apart are outside a 2 mm tolerance.
  BinaryMask a(Dims{3, 1, 1}, Spacing{}, 0), b = a;
  a.data[0] = 1;
  b.data[2] = 1;
  CHECK(nsd(a, b, {2.0, Spacing{}}) == 0.0);
  CHECK(nsd(a, b, {2.0001, Spacing{}}) == 1.0);
  CHECK_THROWS_AS(nsd(a, b, {0.0, Spacing{}}), Error);
  CHECK_THROWS_AS(nsd(a, b, {2.0, Spacing{2, 1, 1}}), Error);
}

TEST_CASE("classification rates") {
  const ConfusionCounts c{.tp = 8, .tn = 5, .fp = 2, .fn = 2};
  CHECK(sensitivity(c) == doctest::Approx(0.8));
  CHECK(specificity(c) == doctest::Approx(5.0 / 7.0));
  CHECK(f1_score(c) == doctest::Approx(0.8));
  const auto r = classification_rates(ConfusionCounts{.tp = 0, .tn = 3, .fp = 0, .fn = 0});
  CHECK_FALSE(r.sensitivity.has_value());
  CHECK(r.specificity == 1.0);
  CHECK_FALSE(r.f1.has_value());
  try {
    sensitivity(ConfusionCounts{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::undefined_rate);
    CHECK(std::string(e.what()).find("sensitivity") != std::string::npos);
  }
  CHECK_THROWS_AS(specificity(ConfusionCounts{}), Error);
}

TEST_CASE("published fraction arithmetic") {
  CHECK(std::abs(100.0 * specificity({.tp = 0, .tn = 550, .fp = 73, .fn = 0}) - 88.3) <= 0.05);
  CHECK(std::abs(100.0 * sensitivity({.tp = 509, .tn = 0, .fp = 0, .fn = 69}) - 88.1) <= 0.05);
}

TEST_CASE("patient-wise detection") {
  BinaryMask e(Dims{2, 2, 2}, Spacing{}, 0), f = e;
  f.data[0] = 1;
  CHECK(patient_wise_detection(f, f) == DetectionOutcome::TP);
  CHECK(patient_wise_detection(f, e) == DetectionOutcome::FP);
  CHECK(patient_wise_detection(e, f) == DetectionOutcome::FN);
  CHECK(patient_wise_detection(e, e) == DetectionOutcome::TN);
  ConfusionCounts c;
  c += DetectionOutcome::TP;
  c += DetectionOutcome::FN;
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
}

TEST_CASE("tumor-wise min fp size") {
  BinaryMask pred(Dims{6, 1, 1}, Spacing{}, 0), ref = pred;
  pred.data = {1, 0, 1, 1, 0, 0};
  CHECK(tumor_wise_detection(pred, ref, Connectivity::face6).fp == 2);
  CHECK(tumor_wise_detection(pred, ref, Connectivity::face6, 2).fp == 1);
}

TEST_CASE("diagnosis confusion") {
  const auto d = diagnosis_confusion({TumorType::PDAC, TumorType::cyst, TumorType::cyst},
                                     {TumorType::PDAC, TumorType::PNET, TumorType::cyst});
  CHECK(d.matrix[0][0] == 1);
  CHECK(d.matrix[2][1] == 1);
  CHECK(d.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(diagnosis_confusion({}, {}), Error);
  CHECK_THROWS_AS(diagnosis_confusion({TumorType::PDAC}, {}), Error);
}

TEST_CASE("roc curve extremes and monotone sensitivity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.001f, 1.0f);
  std::vector<ProbabilityMap> probs;
  std::vector<BinaryMask> refs;
  for (int i = 0; i < 12; ++i) {
    ProbabilityMap p(Dims{5, 5, 2}, Spacing{}, 0.0f);
    for (auto& v : p.data) v = u(rng);
    probs.push_back(p);
    refs.push_back(oracle::random_mask(rng, p.dims, p.spacing, i % 3 ? 0.1 : 0.0));
  }
  const auto curve = build_roc(probs, refs, default_thresholds());
  REQUIRE(curve.points.size() == 101);
  CHECK(curve.points.front().threshold == 1.0);
  CHECK(curve.points.front().sensitivity == 0.0);
  CHECK(curve.points.front().fp == 0);
  CHECK(curve.points.back().sensitivity == 1.0);
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    CHECK(curve.points[i].sensitivity >= curve.points[i - 1].sensitivity);
  CHECK_THROWS_AS(build_roc(probs, refs, {0.1, 0.5}), Error);
  CHECK_THROWS_AS(build_roc({}, {}, {0.5}), Error);
}

TEST_CASE("roc fp count is monotone for separated predictions") {
  // Isolated single-voxel predictions never merge, so lowering the
  // threshold can only add false positives.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<ProbabilityMap> probs;
  std::vector<BinaryMask> refs;
  for (int i = 0; i < 6; ++i) {
    ProbabilityMap p(Dims{9, 9, 1}, Spacing{}, 0.0f);
    for (std::uint32_t y = 0; y < 9; y += 2)
      for (std::uint32_t x = 0; x < 9; x += 2) p.at(x, y, 0) = u(rng);
    probs.push_back(p);
    refs.emplace_back(p.dims, p.spacing, 0);
  }
  const auto curve = build_roc(probs, refs, default_thresholds(21));
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    CHECK(curve.points[i].fp_per_scan >= curve.points[i - 1].fp_per_scan);
  CHECK(curve.points.front().specificity == 1.0);
}

TEST_CASE("summary quartiles interpolate") {
  const Summary s = summarize({4, 1, 3, 2});
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.q1 == doctest::Approx(1.75));
  CHECK(s.q3 == doctest::Approx(3.25));
  CHECK(summarize({}).n == 0);
}

TEST_CASE("evaluate_case scores every catalog structure") {
  const auto cat = StructureCatalog::default_catalog();
  LabelMap a(Dims{4, 4, 4}, Spacing{}, cat.id());
  a.at(1, 1, 1) = 1;
  const auto r = evaluate_case(a, a, cat, {2.0, Spacing{}});
  CHECK(r.per_structure.size() == 7);
  for (const auto& [label, s] : r.per_structure) {
    CHECK(s.dsc == 1.0);
    CHECK(s.nsd == 1.0);
  }
  const Json j = metric_report_to_json(r, cat);
  CHECK(j.at("liver").at("pred_voxels") == 1);
}
