#include "emr/cli.hpp"

#include <iostream>
#include <memory>
#include <numeric>

#include "emr/metrics.hpp"
#include "emr/roc.hpp"

namespace emr {

namespace fs = std::filesystem;

int exit_code(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return kExitInvariant;
  switch (err->kind()) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::io: return kExitIo;
    default: return kExitInvariant;
  }
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (out.empty()) fail(ErrorKind::config, "no output directory given (--out or EMREFINE_OUT)");
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out, ec)) fail(ErrorKind::io, out.string() + " exists and is not a directory");
    if (!fs::is_empty(out, ec)) {
      if (!force)
        fail(ErrorKind::io, out.string() + " is not empty; pass --force to overwrite");
      for (const auto& entry : fs::directory_iterator(out)) fs::remove_all(entry.path(), ec);
      if (ec) fail(ErrorKind::io, "cannot clear " + out.string() + ": " + ec.message());
    }
  }
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + out.string() + ": " + ec.message());
}

namespace {

Corpus load_corpus(const fs::path& dir, bool with_gold = true) {
  if (!fs::is_directory(dir)) fail(ErrorKind::io, "corpus directory not found: " + dir.string());
  return read_corpus(dir, with_gold);
}

GaussianIntensityModel load_or_fit(const RunConfig& config, const CorpusInput& in,
                                   const Corpus& corpus) {
  if (!in.model) return fit_model(corpus, nullptr, config.em.model);
  Json j;
  try {
    j = Json::parse(read_text(*in.model));
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, "bad model file " + in.model->string() + ": " + e.what());
  }
  GaussianIntensityModel m = GaussianIntensityModel::from_json(j);
  if (m.catalog().id() != corpus.catalog.id())
    fail(ErrorKind::catalog, "model catalog '" + m.catalog().id() + "' does not match corpus '" +
                                 corpus.catalog.id() + "'");
  return m;
}

Json counts_to_json(const PassCounts& k) {
  return {{"audited", k.audited},
          {"keep", k.keep},
          {"auto_replace", k.auto_replace},
          {"route", k.route},
          {"expert_replaced", k.expert_replaced},
          {"escalated", k.escalated},
          {"auto_resolved", k.auto_resolved},
          {"human_resolved", k.human_resolved},
          {"unresolved", k.unresolved},
          {"settle_replacements", k.settle_replacements},
          {"reimputed", k.reimputed},
          {"changed_structures", k.changed_structures}};
}

}  // namespace

void cmd_generate(const RunConfig& config, const fs::path& out, bool force) {
  config.validate();
  const GeneratedCorpus g = generate_corpus(config.phantom, config.noise, config.corpus.cases,
                                            config.corpus.gold_fraction, config.seed);
  prepare_out_dir(out, force);
  write_corpus(out, g.corpus);
  Json logs = Json::object();
  for (std::size_t i = 0; i < g.logs.size(); ++i)
    logs[g.corpus.cases[i].case_id] = injection_log_to_json(g.logs[i], g.corpus.catalog);
  write_text(out / "injections.json", dump_json({{"schema_version", kSchemaVersion}, {"cases", logs}}));
  write_text(out / "config.ini", config_snapshot(config));
}

void cmd_audit(const RunConfig& config, const CorpusInput& in, const fs::path& out, bool force) {
  config.validate();
  const Corpus corpus = load_corpus(in.dir);
  const GaussianIntensityModel model = load_or_fit(config, in, corpus);
  const std::size_t n = corpus.cases.size();

  std::vector<AuditOutcome> audits(n);
  std::vector<UpdateResult> updates(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(n); ++i) {
    const CaseRecord& c = corpus.cases[i];
    if (c.meta.is_gold) continue;
    audits[i] = audit_case(model, c, config.em.thresholds);
    updates[i] = apply_update_rule(c, audits[i], corpus.catalog);
  }

  Corpus updated = corpus;
  Json cases = Json::array();
  std::vector<ChangeEntry> changes;
  std::map<std::string, std::size_t> counts{{"keep", 0}, {"auto_replace", 0}, {"route_to_expert", 0}};
  for (std::size_t i = 0; i < n; ++i) {
    if (corpus.cases[i].meta.is_gold) continue;
    Json rows = Json::array();
    for (const StructureAudit& a : audits[i].structures) {
      ++counts[std::string(to_string(a.action))];
      rows.push_back({{"structure", corpus.catalog.at(a.label).name},
                      {"dsc", a.dsc},
                      {"action", to_string(a.action)},
                      {"pseudo_voxels", a.pseudo_voxels},
                      {"predicted_voxels", a.predicted_voxels}});
    }
    cases.push_back({{"case_id", corpus.cases[i].case_id}, {"structures", rows}});
    updated.cases[i].pseudo = updates[i].updated.pseudo;
    changes.insert(changes.end(), updates[i].changes.begin(), updates[i].changes.end());
  }

  prepare_out_dir(out, force);
  write_text(out / "audit.json", dump_json({{"schema_version", kSchemaVersion},
                                            {"thresholds",
                                             {{"auto_replace_dsc", config.em.thresholds.auto_replace_dsc},
                                              {"route_dsc", config.em.thresholds.route_dsc}}},
                                            {"counts", counts},
                                            {"cases", cases}}));
  write_text(out / "changes.jsonl", to_jsonl(changes));
  write_text(out / "model.json", dump_json(model.to_json()));
  fs::create_directories(out / "corpus");
  write_corpus(out / "corpus", updated);
}

void cmd_refine(const RunConfig& config, const CorpusInput& in, const fs::path& out, bool force) {
  config.validate();
  const Corpus corpus = load_corpus(in.dir);
  const GaussianIntensityModel model = load_or_fit(config, in, corpus);
  const PriorTable priors = load_config_priors(config);
  priors.check_against(corpus.catalog);
  const auto judge = make_judge(config.judge);
  const auto oracle = make_oracle(config.oracle, config.seed);
  const ExpectationResult e = expectation_pass(corpus, model, {judge.get(), &priors}, *oracle, config.em);

  prepare_out_dir(out, force);
  Json entries = Json::array();
  for (std::size_t k = 0; k < e.queue.entries.size(); ++k) {
    Json j = escalation_to_json(e.queue.entries[k]);
    if (auto f = e.queue.resolved.find(k); f != e.queue.resolved.end() && f->second.choice)
      j["resolved_choice"] = *f->second.choice;
    entries.push_back(j);
  }
  write_text(out / "escalations.json",
             dump_json({{"schema_version", kSchemaVersion}, {"entries", entries}}));
  write_text(out / "changes.jsonl", to_jsonl(e.changes));
  const double fraction =
      e.counts.audited ? double(e.counts.escalated) / double(e.counts.audited) : 0.0;
  write_text(out / "refine.json", dump_json({{"schema_version", kSchemaVersion},
                                             {"counts", counts_to_json(e.counts)},
                                             {"escalation_fraction", fraction},
                                             {"budget_breach", fraction > config.em.escalation_budget_fraction}}));
  write_text(out / "model.json", dump_json(model.to_json()));
  fs::create_directories(out / "corpus");
  write_corpus(out / "corpus", e.corpus);
}

void cmd_roc(const RunConfig& config, const CorpusInput& in, const fs::path& out, bool force) {
  config.validate();
  const Corpus corpus = load_corpus(in.dir);
  const GaussianIntensityModel model = load_or_fit(config, in, corpus);
  const RocWorkflowResult r = run_roc_workflow(corpus, model, config.cost, config.roc);
  prepare_out_dir(out, force);
  write_text(out / "roc.csv", roc_to_csv(r.validation_curve));
  write_text(out / "roc.json", dump_json(roc_workflow_to_json(r)));
}

EMResult cmd_run_loop(const RunConfig& config, const std::optional<fs::path>& corpus_dir,
                      const fs::path& out, bool force, bool withhold_gold) {
  config.validate();
  Corpus corpus;
  if (corpus_dir) {
    corpus = load_corpus(*corpus_dir, !withhold_gold);
  } else {
    corpus = generate_corpus(config.phantom, config.noise, config.corpus.cases,
                             config.corpus.gold_fraction, config.seed)
                 .corpus;
    if (withhold_gold)
      for (auto& c : corpus.cases) c.gold.reset();
  }
  const PriorTable priors = load_config_priors(config);
  const auto judge = make_judge(config.judge);
  const auto oracle = make_oracle(config.oracle, config.seed);
  // Output is checked before the (long) loop and written after it.
  prepare_out_dir(out, force);
  EMResult r = run_em(corpus, config.em, {judge.get(), &priors}, *oracle, &config.phantom);
  write_run(out, r, config_snapshot(config));
  return r;
}

Json cmd_evaluate(const RunConfig& config, const fs::path& corpus_dir,
                  const std::optional<fs::path>& predictions, const fs::path& out, bool force) {
  const Corpus ref = load_corpus(corpus_dir);
  const Corpus pred = predictions ? load_corpus(*predictions, false) : ref;
  if (pred.catalog.id() != ref.catalog.id())
    fail(ErrorKind::catalog, "prediction and reference catalogs differ");
  if (pred.cases.size() != ref.cases.size())
    fail(ErrorKind::shape, "prediction corpus has a different number of cases");
  const StructureCatalog& catalog = ref.catalog;
  const std::size_t n = ref.cases.size();

  for (std::size_t i = 0; i < n; ++i)
    if (pred.cases[i].case_id != ref.cases[i].case_id)
      fail(ErrorKind::invariant,
           "case order differs: " + pred.cases[i].case_id + " vs " + ref.cases[i].case_id);

  std::vector<std::optional<MetricReport>> reports(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(n); ++i) {
    const CaseRecord& c = ref.cases[i];
    if (!c.gold) continue;
    SurfaceDistanceSpec spec = config.surface;
    spec.spacing = c.gold->spacing;
    reports[i] = evaluate_case(pred.cases[i].pseudo, *c.gold, catalog, spec);
  }

  Json cases = Json::array();
  std::map<Label, std::vector<double>> dscs, nsds;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!reports[i]) continue;
    cases.push_back({{"case_id", ref.cases[i].case_id},
                     {"is_gold", ref.cases[i].meta.is_gold},
                     {"structures", metric_report_to_json(*reports[i], catalog)}});
    for (const auto& [label, s] : reports[i]->per_structure) {
      dscs[label].push_back(s.dsc);
      if (s.nsd) nsds[label].push_back(*s.nsd);
      sum += s.dsc;
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::invariant, "evaluate: no case has gold labels");
  Json per = Json::object();
  for (const auto& e : catalog.entries()) {
    Json s = {{"dsc", summary_to_json(summarize(dscs[e.label]))}};
    s["nsd"] = nsds[e.label].empty() ? Json(nullptr) : summary_to_json(summarize(nsds[e.label]));
    per[e.name] = s;
  }
  const Json result = {{"schema_version", kSchemaVersion},
                       {"nsd_tolerance_mm", config.surface.tolerance_mm},
                       {"cases_scored", cases.size()},
                       {"mean_dsc", sum / double(count)},
                       {"per_structure", per},
                       {"cases", cases}};
  prepare_out_dir(out, force);
  write_text(out / "evaluation.json", dump_json(result));
  return result;
}

void cmd_review(const fs::path& escalations_file, std::istream& in, std::ostream& prompt,
                const fs::path& out) {
  if (!fs::exists(escalations_file))
    fail(ErrorKind::io, "escalations file not found: " + escalations_file.string());
  const auto entries = load_escalations(escalations_file);
  const auto resolutions = interactive_review(entries, in, prompt);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + out.string() + ": " + ec.message());
  save_resolutions(out / "resolutions.json", resolutions);
}

}  // namespace emr
