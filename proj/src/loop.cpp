#include "emr/loop.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "emr/metrics.hpp"
#include "emr/volume_io.hpp"

namespace emr {

std::string_view to_string(StopRule r) {
  return r == StopRule::gold_dsc ? "gold_dsc" : "change_count";
}

StopRule parse_stop_rule(std::string_view text) {
  if (text == "gold_dsc") return StopRule::gold_dsc;
  if (text == "change_count") return StopRule::change_count;
  fail(ErrorKind::config, "unknown stop rule '" + std::string(text) + "'");
}

std::string_view to_string(EscalationReason r) {
  switch (r) {
    case EscalationReason::expert_tie: return "expert_tie";
    case EscalationReason::low_confidence: return "low_confidence";
    case EscalationReason::protocol_failure: return "protocol_failure";
  }
  return "expert_tie";
}

EscalationReason parse_escalation_reason(std::string_view text) {
  if (text == "expert_tie") return EscalationReason::expert_tie;
  if (text == "low_confidence") return EscalationReason::low_confidence;
  if (text == "protocol_failure") return EscalationReason::protocol_failure;
  fail(ErrorKind::config, "unknown escalation reason '" + std::string(text) + "'");
}

void EMConfig::validate() const {
  if (max_iterations < 0) fail(ErrorKind::config, "em: max_iterations must be >= 0");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(thresholds.auto_replace_dsc) || !unit(thresholds.route_dsc) ||
      thresholds.auto_replace_dsc > thresholds.route_dsc)
    fail(ErrorKind::config, "em: thresholds must satisfy 0 <= auto_replace_dsc <= route_dsc <= 1");
  if (!(escalation_budget_fraction > 0 && escalation_budget_fraction < 1))
    fail(ErrorKind::config, "em: escalation_budget_fraction must be in (0,1)");
  if (!(convergence_epsilon >= 0)) fail(ErrorKind::config, "em: convergence_epsilon must be >= 0");
  if (mix.labeled < 0 || mix.synthetic < 0 || mix.selective < 0 ||
      std::abs(mix.labeled + mix.synthetic + mix.selective - 1.0) > 1e-9)
    fail(ErrorKind::config, "em: data mix fractions must be nonnegative and sum to 1");
  if (!(annealing_weight > 0)) fail(ErrorKind::config, "em: annealing_weight must be positive");
  if (max_settle_sweeps < 0) fail(ErrorKind::config, "em: max_settle_sweeps must be >= 0");
}

// ---- oracles ----

SimulatedExpert::SimulatedExpert(double accuracy, std::uint64_t seed)
    : accuracy_(accuracy), seed_(seed) {
  if (!(accuracy >= 0 && accuracy <= 1)) fail(ErrorKind::config, "oracle accuracy must be in [0,1]");
}

std::optional<std::size_t> SimulatedExpert::review(const ReviewItem& item) {
  if (!item.record || !item.record->gold || !item.candidates || item.candidates->size() < 2)
    return std::nullopt;
  const auto& cands = *item.candidates;
  // Catalog is implied by the label; masks are compared label-wise.
  auto mask_of = [&](const LabelMap& m) {
    BinaryMask b(m.dims, m.spacing, 0);
    for (std::size_t i = 0; i < m.size(); ++i) b.data[i] = m.data[i] == item.label;
    return b;
  };
  const BinaryMask gold = mask_of(*item.record->gold);
  std::size_t best = 0;
  double best_dsc = -1.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    const double d = dsc(mask_of(cands[k]), gold);
    if (d > best_dsc) {
      best_dsc = d;
      best = k;
    }
  }
  const std::string& id = item.record->case_id;
  Rng rng(seed_, {stream::kOracle, crc32({id.begin(), id.end()}), item.label,
                  std::uint64_t(item.entry ? item.entry->iteration : 0)});
  if (rng.bernoulli(accuracy_)) return best;
  std::size_t other = std::size_t(rng.uniform_int(0, long(cands.size()) - 2));
  if (other >= best) ++other;
  return other;
}

ResolutionOracle::ResolutionOracle(std::vector<Resolution> resolutions)
    : resolutions_(std::move(resolutions)) {}

std::optional<std::size_t> ResolutionOracle::review(const ReviewItem& item) {
  if (!item.entry) return std::nullopt;
  for (const Resolution& r : resolutions_)
    if (r.iteration == item.entry->iteration && r.case_id == item.entry->case_id &&
        r.structure == item.entry->structure) {
      if (!r.decision.choice) return std::nullopt;
      return std::size_t(*r.decision.choice - 1);
    }
  return std::nullopt;
}

namespace {

std::optional<int> prompt_entry(const EscalationEntry& e, std::istream& in, std::ostream& out) {
  out << "\n== " << e.case_id << " / " << e.structure << " (" << to_string(e.reason)
      << ", audit dsc " << e.dsc << ", iteration " << e.iteration << ")\n";
  std::vector<std::vector<std::string>> panels;
  for (const auto& rle : e.overlays_rle) {
    std::vector<std::string> rows;
    std::istringstream is(render_overlay(rle, e.width, e.height));
    for (std::string line; std::getline(is, line);) rows.push_back(line);
    panels.push_back(rows);
  }
  if (!panels.empty()) {
    std::string head;
    for (std::size_t k = 0; k < panels.size(); ++k) {
      std::string label = "[" + std::to_string(k + 1) + "]";
      label.resize(std::size_t(e.width) + 2, ' ');
      head += label;
    }
    out << head << '\n';
    for (std::size_t row = 0; row < panels[0].size(); ++row) {
      for (const auto& p : panels) out << p[row] << "  ";
      out << '\n';
    }
  }
  for (int attempt = 0; attempt < 3; ++attempt) {
    out << "choose 1, 2 or skip: " << std::flush;
    std::string line;
    if (!std::getline(in, line)) return std::nullopt;
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line == "skip" || line == "s") return std::nullopt;
    if (line == "1" || line == "2") {
      const int c = line[0] - '0';
      if (std::size_t(c) <= e.overlays_rle.size()) return c;
    }
    out << "unrecognized answer '" << line << "'\n";
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::size_t> InteractiveOracle::review(const ReviewItem& item) {
  if (!item.entry) return std::nullopt;
  const auto c = prompt_entry(*item.entry, in_, out_);
  if (!c) return std::nullopt;
  return std::size_t(*c - 1);
}

std::string render_overlay(const std::string& rle, std::uint32_t width, std::uint32_t height) {
  const auto v = decode_rle(rle);
  if (v.size() != std::size_t(width) * height)
    fail(ErrorKind::protocol, "overlay RLE length does not match width * height");
  std::string out;
  for (std::uint32_t r = 0; r < height; ++r) {
    const std::uint32_t z = height - 1 - r;
    for (std::uint32_t x = 0; x < width; ++x) out += v[x + std::size_t{width} * z] ? '#' : '.';
    out += '\n';
  }
  return out;
}

std::vector<Resolution> interactive_review(const std::vector<EscalationEntry>& entries,
                                           std::istream& in, std::ostream& out) {
  std::vector<Resolution> res;
  for (const EscalationEntry& e : entries) {
    Resolution r{e.iteration, e.case_id, e.structure, {}};
    r.decision.choice = prompt_entry(e, in, out);
    res.push_back(r);
  }
  return res;
}

// ---- expectation ----

namespace {

struct Pending {
  std::size_t case_index = 0;
  Label label = 0;
  double dsc = 0.0;
  EscalationReason reason = EscalationReason::expert_tie;
  std::vector<LabelMap> candidates;
};

struct CaseWork {
  bool audited = false;
  std::vector<bool> imputed;
  LabelMap pseudo;
  LabelMap prediction;
  std::vector<ChangeEntry> changes;
  std::vector<Pending> pending;
  PassCounts counts;
  double mean_dsc = 1.0;
};

bool same_structure(const LabelMap& a, const LabelMap& b, Label l) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if ((a.data[i] == l) != (b.data[i] == l)) return false;
  return true;
}

std::size_t count_label(const LabelMap& m, Label l) {
  return std::size_t(std::count(m.data.begin(), m.data.end(), l));
}

double min_prior_score(const CaseRecord& c, const LabelMap& selected, Label label,
                       const PriorTable& priors, const StructureCatalog& catalog) {
  const double aspect = c.volume.spacing.z / c.volume.spacing.x;
  double lo = 1.0;
  for (const AnatomicalPrior* p : priors.covering(catalog.at(label).name)) {
    bool known = true;
    for (const auto& s : p->structures) known = known && catalog.find(s).has_value();
    if (!known) continue;
    const AnatomicalPrior q = apply_report(*p, catalog, c.report);
    const Projection2D proj =
        front_view_projection(c.volume, prior_overlay_mask(selected, q, catalog));
    lo = std::min(lo, score_overlay(q, proj, aspect));
  }
  return lo;
}

CaseWork expect_case(const CaseRecord& c, std::size_t index, const SegmentationModel& model,
                     const JudgeContext& jc, const EMConfig& cfg, const StructureCatalog& catalog,
                     const std::vector<bool>* flags) {
  CaseWork w;
  w.pseudo = c.pseudo;
  w.imputed = flags ? *flags : std::vector<bool>(catalog.size() + 1, false);
  if (c.meta.is_gold) return w;
  w.audited = true;
  w.prediction = model.predict(c.volume);

  CaseRecord current = c;
  for (const auto& e : catalog.entries()) {
    if (!w.imputed[e.label] || same_structure(current.pseudo, w.prediction, e.label)) continue;
    const ReplaceStats s = replace_structure(current.pseudo, catalog, e.label,
                                             extract_structure_mask(w.prediction, catalog, e.label));
    if (same_structure(current.pseudo, c.pseudo, e.label)) continue;
    ++w.counts.reimputed;
    w.changes.push_back({c.case_id, e.name, "reimpute", s.before, s.after, s.collisions});
  }

  const AuditOutcome audit = audit_prediction(w.prediction, current, catalog, cfg.thresholds);
  const UpdateResult upd = apply_update_rule(current, audit, catalog);
  w.pseudo = upd.updated.pseudo;
  w.changes.insert(w.changes.end(), upd.changes.begin(), upd.changes.end());

  double sum = 0.0;
  for (const StructureAudit& a : audit.structures) {
    sum += a.dsc;
    ++w.counts.audited;
    switch (a.action) {
      case AuditAction::keep: ++w.counts.keep; break;
      case AuditAction::auto_replace:
        ++w.counts.auto_replace;
        w.imputed[a.label] = true;
        break;
      case AuditAction::route_to_expert: ++w.counts.route; break;
    }
  }
  w.mean_dsc = audit.structures.empty() ? 1.0 : sum / double(audit.structures.size());

  for (const StructureAudit& a : audit.structures) {
    if (a.action != AuditAction::route_to_expert) continue;
    const std::string& name = catalog.at(a.label).name;
    LabelMap incumbent =
        shapekit_cleanup(w.pseudo, catalog, {a.label}, cfg.model.min_tumor_voxels);
    LabelMap challenger = w.pseudo;
    replace_structure(challenger, catalog, a.label,
                      extract_structure_mask(audit.prediction, catalog, a.label));
    const std::size_t before = count_label(w.pseudo, a.label);
    const TournamentResult tr = run_tournament(c.case_id, c.volume, {incumbent, challenger},
                                               *jc.judge, *jc.priors, catalog, {a.label}, &c.report);
    const bool replaced = tr.winner == 1;
    w.counts.expert_replaced += replaced;
    if (replaced) w.imputed[a.label] = true;
    w.pseudo = tr.selected;
    w.changes.push_back({c.case_id, name, replaced ? "expert_replace" : "expert_keep", before,
                         count_label(w.pseudo, a.label), 0});

    std::optional<EscalationReason> reason;
    if (tr.protocol_failures > 0) reason = EscalationReason::protocol_failure;
    else if (tr.score_1 == tr.score_2 && !same_structure(incumbent, challenger, a.label))
      reason = EscalationReason::expert_tie;
    else if (min_prior_score(c, tr.selected, a.label, *jc.priors, catalog) < cfg.low_confidence_score)
      reason = EscalationReason::low_confidence;
    if (reason)
      w.pending.push_back({index, a.label, a.dsc, *reason, {std::move(incumbent), std::move(challenger)}});
  }
  return w;
}

EscalationEntry make_entry(const CaseRecord& c, const Pending& p, const StructureCatalog& catalog,
                           int iteration) {
  EscalationEntry e;
  e.iteration = iteration;
  e.case_id = c.case_id;
  e.structure = catalog.at(p.label).name;
  e.reason = p.reason;
  e.dsc = p.dsc;
  for (const LabelMap& m : p.candidates) {
    const Projection2D proj =
        front_view_projection(c.volume, extract_structure_mask(m, catalog, p.label));
    e.width = proj.width;
    e.height = proj.height;
    e.overlays_rle.push_back(encode_rle(proj.overlay));
  }
  return e;
}

}  // namespace

std::size_t count_auto_replacements(const Corpus& corpus, const SegmentationModel& model,
                                    const AuditThresholds& thresholds) {
  std::vector<std::size_t> n(corpus.cases.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(corpus.cases.size()); ++i) {
    const CaseRecord& c = corpus.cases[i];
    if (c.meta.is_gold) continue;
    for (const auto& a : audit_case(model, c, thresholds).structures)
      n[i] += a.action == AuditAction::auto_replace;
  }
  return std::accumulate(n.begin(), n.end(), std::size_t{0});
}

ExpectationResult expectation_pass(const Corpus& corpus, const SegmentationModel& model,
                                   const JudgeContext& jc, HumanOracle& oracle,
                                   const EMConfig& cfg, int iteration, const ImputedFlags* imputed) {
  if (!model.fitted()) fail(ErrorKind::invariant, "expectation_pass: model is not fitted");
  if (!jc.judge || !jc.priors) fail(ErrorKind::config, "expectation_pass: judge and priors required");
  const StructureCatalog& catalog = corpus.catalog;
  const std::size_t n = corpus.cases.size();
  if (imputed && imputed->size() != n)
    fail(ErrorKind::invariant, "expectation_pass: one imputed-flag row per case required");
  if (imputed)
    for (const auto& row : *imputed)
      if (row.size() != catalog.size() + 1)
        fail(ErrorKind::invariant, "expectation_pass: imputed-flag row size != labels + 1");
  const bool refresh = imputed && cfg.reimpute;

  std::vector<CaseWork> work(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(n); ++i)
    work[i] = expect_case(corpus.cases[i], std::size_t(i), model, jc, cfg, catalog,
                          refresh ? &(*imputed)[i] : nullptr);

  ExpectationResult r;
  r.corpus = corpus;
  r.case_dsc.resize(n, 1.0);
  r.imputed.resize(n);
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < n; ++i) {
    CaseWork& w = work[i];
    r.corpus.cases[i].pseudo = std::move(w.pseudo);
    r.imputed[i] = std::move(w.imputed);
    r.case_dsc[i] = w.mean_dsc;
    PassCounts& k = r.counts;
    k.audited += w.counts.audited;
    k.keep += w.counts.keep;
    k.auto_replace += w.counts.auto_replace;
    k.route += w.counts.route;
    k.expert_replaced += w.counts.expert_replaced;
    k.reimputed += w.counts.reimputed;
    r.changes.insert(r.changes.end(), w.changes.begin(), w.changes.end());
    for (auto& p : w.pending) pending.push_back(std::move(p));
  }

  // Most doubtful first; the budget caps what reaches a human.
  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    if (a.dsc != b.dsc) return a.dsc < b.dsc;
    if (a.case_index != b.case_index) return a.case_index < b.case_index;
    return a.label < b.label;
  });
  const auto budget =
      std::size_t(std::floor(cfg.escalation_budget_fraction * double(r.counts.audited) + 1e-9));
  for (std::size_t k = 0; k < pending.size(); ++k) {
    const Pending& p = pending[k];
    if (k >= budget) {
      ++r.counts.auto_resolved;
      continue;
    }
    CaseRecord& c = r.corpus.cases[p.case_index];
    const EscalationEntry entry = make_entry(c, p, catalog, iteration);
    const std::size_t slot = r.queue.entries.size();
    r.queue.entries.push_back(entry);
    ++r.counts.escalated;
    const CaseRecord& original = corpus.cases[p.case_index];
    const auto choice = oracle.review({&entry, &original, p.label, &p.candidates});
    Resolution res{iteration, entry.case_id, entry.structure, {}};
    if (choice && *choice < p.candidates.size()) {
      res.decision.choice = int(*choice) + 1;
      r.queue.resolved[slot] = res.decision;
      ++r.counts.human_resolved;
      const std::size_t before = count_label(c.pseudo, p.label);
      const ReplaceStats s = replace_structure(
          c.pseudo, catalog, p.label, extract_structure_mask(p.candidates[*choice], catalog, p.label));
      r.changes.push_back({c.case_id, entry.structure, "human_choice_" + std::to_string(*choice + 1),
                           before, s.after, s.collisions});
      // A human pick of the incumbent vouches for it.
      r.imputed[p.case_index][p.label] = *choice != 0;
    } else {
      ++r.counts.unresolved;
      r.unresolved.push_back(res);
    }
  }

  // Settle: later writes can empty a structure that an earlier replacement
  // filled, so re-audit under the same frozen model until no auto_replace
  // remains. Predictions depend only on the volume and are reused.
  for (int sweep = 0; sweep < cfg.max_settle_sweeps; ++sweep) {
    std::vector<std::vector<ChangeEntry>> fixes(n);
    std::vector<std::size_t> replaced(n, 0);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < long(n); ++i) {
      if (!work[i].audited) continue;
      CaseRecord& c = r.corpus.cases[i];
      const AuditOutcome a = audit_prediction(work[i].prediction, c, catalog, cfg.thresholds);
      for (const auto& s : a.structures)
        if (s.action == AuditAction::auto_replace) {
          ++replaced[i];
          r.imputed[i][s.label] = true;
        }
      if (!replaced[i]) continue;
      UpdateResult u = apply_update_rule(c, a, catalog);
      c.pseudo = std::move(u.updated.pseudo);
      fixes[i] = std::move(u.changes);
    }
    const std::size_t total = std::accumulate(replaced.begin(), replaced.end(), std::size_t{0});
    if (total == 0) break;
    ++r.counts.settle_sweeps;
    r.counts.settle_replacements += total;
    for (auto& f : fixes)
      for (auto& e : f) {
        e.action = "settle_replace";
        r.changes.push_back(std::move(e));
      }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!work[i].audited) continue;
    for (const auto& e : catalog.entries())
      r.counts.changed_structures += !same_structure(corpus.cases[i].pseudo, r.corpus.cases[i].pseudo, e.label);
  }
  return r;
}

// ---- maximization ----

TrainingSet build_training_set(const Corpus& corpus, const EMConfig& cfg,
                               const PhantomSpec* phantom, int iteration,
                               const std::vector<double>& case_dsc) {
  const std::size_t n = corpus.cases.size();
  if (n == 0) fail(ErrorKind::invariant, "maximization: empty corpus");
  TrainingSet t;

  auto count_of = [&](double f) { return std::size_t(std::llround(f * double(n))); };
  const std::size_t n_labeled = std::min(n, count_of(cfg.mix.labeled));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (n_labeled < n) {
    Rng rng(cfg.seed, {stream::kMix, std::uint64_t(iteration)});
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(rng.uniform_int(0, long(i) - 1))]);
    order.resize(n_labeled);
    std::sort(order.begin(), order.end());
  }
  t.labeled_cases = order;

  const std::size_t n_synth = count_of(cfg.mix.synthetic);
  if (n_synth > 0) {
    if (!phantom) fail(ErrorKind::config, "maximization: synthetic data needs a phantom spec");
    t.synthetic.resize(n_synth);
#pragma omp parallel for schedule(dynamic)
    for (long j = 0; j < long(n_synth); ++j)
      t.synthetic[j] = generate_case(
          *phantom, derive_seed(cfg.seed, {stream::kSynthetic, std::uint64_t(iteration), std::uint64_t(j)}));
  }

  if (cfg.mix.selective > 0 && case_dsc.size() == n) {
    std::size_t worst = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (case_dsc[i] < case_dsc[worst]) worst = i;
    t.selective_case = worst;
    t.selective_copies = std::size_t(std::ceil(cfg.mix.selective * double(n) - 1e-9));
  }

  for (const auto i : t.labeled_cases)
    t.samples.push_back({&corpus.cases[i].volume, &corpus.cases[i].pseudo, 1.0});
  for (const auto& s : t.synthetic) t.samples.push_back({&s.volume, &s.pseudo, 1.0});
  for (std::size_t k = 0; k < t.selective_copies; ++k) {
    const CaseRecord& c = corpus.cases[t.selective_case];
    t.samples.push_back({&c.volume, &c.pseudo, 1.0});
  }
  if (t.samples.empty()) fail(ErrorKind::invariant, "maximization: empty training set");
  return t;
}

MaximizationResult maximization_pass(const Corpus& corpus, const EMConfig& cfg,
                                     const PhantomSpec* phantom, int iteration,
                                     const std::vector<double>& case_dsc) {
  const TrainingSet t = build_training_set(corpus, cfg, phantom, iteration, case_dsc);
  MaximizationResult r;
  r.model = GaussianIntensityModel(corpus.catalog, cfg.model);
  r.samples = t.samples.size();
  r.synthetic = t.synthetic.size();
  r.selective_copies = t.selective_copies;

  std::vector<TrainingSample> gold;
  if (cfg.annealing_enabled)
    for (const auto& c : corpus.cases)
      if (c.meta.is_gold) gold.push_back({&c.volume, &c.pseudo, cfg.annealing_weight});
  if (cfg.annealing_enabled && gold.empty())
    r.warning = "annealing enabled but the corpus has no gold cases; skipped";

  if (gold.empty()) {
    r.model.fit(t.samples);
  } else {
    // Annealing: the verified subset enters a second pass at elevated weight.
    IntensityStats stats = IntensityStats::collect(corpus.catalog, t.samples);
    stats.merge(IntensityStats::collect(corpus.catalog, gold));
    r.model.fit(stats);
    r.annealed = true;
  }
  return r;
}

// ---- the loop ----

std::optional<double> corpus_mean_dsc(const Corpus& corpus,
                                      std::map<std::string, StructureDsc>* per_structure) {
  const StructureCatalog& catalog = corpus.catalog;
  std::vector<std::vector<double>> by_label(catalog.size() + 1);
  std::vector<std::vector<double>> rows(corpus.cases.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(corpus.cases.size()); ++i) {
    const CaseRecord& c = corpus.cases[i];
    if (!c.gold) continue;
    for (const auto& e : catalog.entries())
      rows[i].push_back(dsc(extract_structure_mask(c.pseudo, catalog, e.label),
                            extract_structure_mask(*c.gold, catalog, e.label)));
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& row : rows)
    for (std::size_t k = 0; k < row.size(); ++k) {
      by_label[k + 1].push_back(row[k]);
      sum += row[k];
      ++count;
    }
  if (count == 0) return std::nullopt;
  if (per_structure) {
    per_structure->clear();
    for (const auto& e : catalog.entries()) {
      const Summary s = summarize(by_label[e.label]);
      (*per_structure)[e.name] = {s.mean, s.median};
    }
  }
  return sum / double(count);
}

namespace {

std::string model_id(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "model_%03d", iteration);
  return buf;
}

}  // namespace

EMResult run_em(const Corpus& corpus, const EMConfig& cfg, const JudgeContext& jc,
                HumanOracle& oracle, const PhantomSpec* phantom) {
  cfg.validate();
  if (corpus.cases.empty()) fail(ErrorKind::invariant, "run_em: empty corpus");
  if (jc.priors) jc.priors->check_against(corpus.catalog);

  EMResult r;
  r.corpus = corpus;
  r.model = fit_model(corpus, nullptr, cfg.model);
  r.models.push_back(r.model);
  r.initial.iteration = 0;
  r.initial.mean_dsc = corpus_mean_dsc(r.corpus, &r.initial.per_structure);
  r.initial.model_id = model_id(0);

  StopRule rule = cfg.stop_rule;
  if (rule == StopRule::gold_dsc && !r.initial.mean_dsc) rule = StopRule::change_count;

  std::optional<double> previous = r.initial.mean_dsc;
  std::size_t carried = 0;
  ImputedFlags imputed(corpus.cases.size(), std::vector<bool>(corpus.catalog.size() + 1, false));
  r.stop_reason = cfg.max_iterations == 0 ? "max_iterations" : "";
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    ExpectationResult e = expectation_pass(r.corpus, r.model, jc, oracle, cfg, it, &imputed);
    r.corpus = std::move(e.corpus);
    imputed = std::move(e.imputed);
    MaximizationResult m = maximization_pass(r.corpus, cfg, phantom, it, e.case_dsc);
    if (!m.warning.empty()) std::cerr << "warning: " << m.warning << '\n';
    r.model = std::move(m.model);
    r.models.push_back(r.model);

    IterationReport rep;
    rep.iteration = it;
    rep.mean_dsc = corpus_mean_dsc(r.corpus, &rep.per_structure);
    rep.counts = e.counts;
    rep.escalation_fraction =
        e.counts.audited ? double(e.counts.escalated) / double(e.counts.audited) : 0.0;
    rep.budget_breach = rep.escalation_fraction > cfg.escalation_budget_fraction;
    rep.model_id = model_id(it);
    rep.carried_over = carried;
    carried = e.unresolved.size();
    r.reports.push_back(rep);
    r.changes.push_back(std::move(e.changes));
    r.escalations.push_back(std::move(e.queue));
    const auto& q = r.escalations.back();
    for (std::size_t k = 0; k < q.entries.size(); ++k) {
      Resolution res{it, q.entries[k].case_id, q.entries[k].structure, {}};
      if (auto f = q.resolved.find(k); f != q.resolved.end()) res.decision = f->second;
      r.resolutions.push_back(res);
    }

    if (rule == StopRule::gold_dsc) {
      if (*rep.mean_dsc - *previous < cfg.convergence_epsilon) {
        r.stop_reason = "converged";
        break;
      }
      previous = rep.mean_dsc;
    } else if (double(e.counts.changed_structures) < cfg.convergence_epsilon) {
      r.stop_reason = "converged";
      break;
    }
    if (it == cfg.max_iterations) r.stop_reason = "max_iterations";
  }
  return r;
}

// ---- serialization ----

Json iteration_report_to_json(const IterationReport& r) {
  Json per = Json::object();
  for (const auto& [name, s] : r.per_structure) per[name] = {{"mean", s.mean}, {"median", s.median}};
  const PassCounts& k = r.counts;
  return {{"schema_version", kSchemaVersion},
          {"iteration", r.iteration},
          {"mean_dsc", r.mean_dsc ? Json(*r.mean_dsc) : Json(nullptr)},
          {"per_structure_dsc", per},
          {"counts",
           {{"audited", k.audited},
            {"keep", k.keep},
            {"auto_replace", k.auto_replace},
            {"route", k.route},
            {"expert_replaced", k.expert_replaced},
            {"escalated", k.escalated},
            {"auto_resolved", k.auto_resolved},
            {"human_resolved", k.human_resolved},
            {"unresolved", k.unresolved},
            {"settle_replacements", k.settle_replacements},
            {"settle_sweeps", k.settle_sweeps},
            {"reimputed", k.reimputed},
            {"changed_structures", k.changed_structures}}},
          {"escalation_fraction", r.escalation_fraction},
          {"budget_breach", r.budget_breach},
          {"model_id", r.model_id},
          {"carried_over", r.carried_over}};
}

Json escalation_to_json(const EscalationEntry& e) {
  return {{"iteration", e.iteration}, {"case_id", e.case_id},   {"structure", e.structure},
          {"reason", to_string(e.reason)}, {"dsc", e.dsc},       {"width", e.width},
          {"height", e.height},        {"overlays_rle", e.overlays_rle}};
}

EscalationEntry escalation_from_json(const Json& j) {
  EscalationEntry e;
  e.iteration = j.at("iteration").get<int>();
  e.case_id = j.at("case_id").get<std::string>();
  e.structure = j.at("structure").get<std::string>();
  e.reason = parse_escalation_reason(j.at("reason").get<std::string>());
  e.dsc = j.at("dsc").get<double>();
  e.width = j.at("width").get<std::uint32_t>();
  e.height = j.at("height").get<std::uint32_t>();
  e.overlays_rle = j.at("overlays_rle").get<std::vector<std::string>>();
  return e;
}

Json resolutions_to_json(const std::vector<Resolution>& rs) {
  Json arr = Json::array();
  for (const Resolution& r : rs)
    arr.push_back({{"iteration", r.iteration},
                   {"case_id", r.case_id},
                   {"structure", r.structure},
                   {"choice", r.decision.choice ? Json(*r.decision.choice) : Json(nullptr)}});
  return {{"schema_version", kSchemaVersion}, {"resolutions", arr}};
}

std::vector<Resolution> resolutions_from_json(const Json& j) {
  std::vector<Resolution> out;
  try {
    for (const auto& e : j.at("resolutions")) {
      Resolution r;
      r.iteration = e.at("iteration").get<int>();
      r.case_id = e.at("case_id").get<std::string>();
      r.structure = e.at("structure").get<std::string>();
      if (!e.at("choice").is_null()) {
        const int c = e.at("choice").get<int>();
        if (c < 1) fail(ErrorKind::io, "resolution choice must be >= 1");
        r.decision.choice = c;
      }
      out.push_back(r);
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, std::string("bad resolutions file: ") + e.what());
  }
  return out;
}

void save_resolutions(const std::filesystem::path& path, const std::vector<Resolution>& r) {
  write_text(path, dump_json(resolutions_to_json(r)));
}

std::vector<Resolution> load_resolutions(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, "bad resolutions file " + path.string() + ": " + e.what());
  }
  return resolutions_from_json(j);
}

}  // namespace emr

namespace emr {

namespace {

std::string numbered(const char* stem, int k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d%s", stem, k, ext);
  return buf;
}

}  // namespace

void write_run(const std::filesystem::path& dir, const EMResult& r,
               const std::string& config_snapshot) {
  namespace fs = std::filesystem;
  for (const char* sub : {"reports", "models", "changes", "escalations", "final"})
    fs::create_directories(dir / sub);
  write_text(dir / "config.ini", config_snapshot);
  write_text(dir / "reports" / numbered("iteration", 0, ".json"),
             dump_json(iteration_report_to_json(r.initial)));
  for (const auto& rep : r.reports)
    write_text(dir / "reports" / numbered("iteration", rep.iteration, ".json"),
               dump_json(iteration_report_to_json(rep)));
  for (std::size_t k = 0; k < r.models.size(); ++k) {
    Json m = r.models[k].to_json();
    m["model_id"] = numbered("model", int(k), "");
    write_text(dir / "models" / numbered("model", int(k), ".json"), dump_json(m));
  }
  for (std::size_t k = 0; k < r.changes.size(); ++k)
    write_text(dir / "changes" / numbered("iteration", int(k) + 1, ".jsonl"), to_jsonl(r.changes[k]));
  for (std::size_t k = 0; k < r.escalations.size(); ++k) {
    Json arr = Json::array();
    for (const auto& e : r.escalations[k].entries) arr.push_back(escalation_to_json(e));
    write_text(dir / "escalations" / numbered("iteration", int(k) + 1, ".json"),
               dump_json({{"schema_version", kSchemaVersion}, {"entries", arr}}));
  }
  save_resolutions(dir / "resolutions.json", r.resolutions);
  write_corpus(dir / "final", r.corpus);

  Json iters = Json::array();
  for (const auto& rep : r.reports)
    iters.push_back({{"iteration", rep.iteration},
                     {"mean_dsc", rep.mean_dsc ? Json(*rep.mean_dsc) : Json(nullptr)},
                     {"escalation_fraction", rep.escalation_fraction},
                     {"changed_structures", rep.counts.changed_structures}});
  write_text(dir / "summary.json",
             dump_json({{"schema_version", kSchemaVersion},
                        {"initial_mean_dsc", r.initial.mean_dsc ? Json(*r.initial.mean_dsc) : Json(nullptr)},
                        {"iterations", iters},
                        {"stop_reason", r.stop_reason}}));
}

std::vector<EscalationEntry> load_escalations(const std::filesystem::path& path) {
  std::vector<EscalationEntry> out;
  try {
    const Json j = Json::parse(read_text(path));
    for (const auto& e : j.at("entries")) out.push_back(escalation_from_json(e));
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, "bad escalations file " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace emr
