#include "emr/expert.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <sstream>

#include "emr/verifier.hpp"
#include "emr/volume_io.hpp"

namespace emr {

void AnatomicalPrior::validate() const {
  auto unit = [&](const Range& r, const char* what) {
    if (!(r.lo <= r.hi) || r.lo < 0.0 || r.hi > 1.0)
      fail(ErrorKind::config, "prior '" + name + "': " + what + " must be a nonempty range in [0,1]");
  };
  if (structures.empty()) fail(ErrorKind::config, "prior '" + name + "' lists no structures");
  unit(centroid_x, "centroid_x");
  unit(centroid_z, "centroid_z");
  unit(vertical_extent, "vertical_extent");
  if (!(elongation.lo <= elongation.hi) || !(elongation.lo > 0))
    fail(ErrorKind::config, "prior '" + name + "': elongation must be a nonempty positive range");
  if (components_min > components_max || components_min == 0)
    fail(ErrorKind::config, "prior '" + name + "': components range is invalid");
  if (!(centroid_falloff > 0)) fail(ErrorKind::config, "prior '" + name + "': falloff must be positive");
  for (const double w : {weights.centroid, weights.components, weights.vertical, weights.elongation})
    if (!(w >= 0)) fail(ErrorKind::config, "prior '" + name + "': weights must be nonnegative");
}

std::vector<const AnatomicalPrior*> PriorTable::covering(const std::string& structure) const {
  std::vector<const AnatomicalPrior*> out;
  for (const auto& p : priors)
    if (std::find(p.structures.begin(), p.structures.end(), structure) != p.structures.end())
      out.push_back(&p);
  return out;
}

const AnatomicalPrior* PriorTable::find(const std::string& name) const {
  for (const auto& p : priors)
    if (p.name == name) return &p;
  return nullptr;
}

void PriorTable::check_against(const StructureCatalog& catalog) const {
  for (const auto& p : priors)
    for (const auto& s : p.structures)
      if (!catalog.find(s))
        fail(ErrorKind::catalog, "prior '" + p.name + "' names unknown structure '" + s + "'");
}

namespace {

namespace pt = boost::property_tree;

std::vector<double> numbers(const std::string& text, std::size_t n, const std::string& where) {
  std::istringstream is(text);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  if (out.size() != n || !is.eof())
    fail(ErrorKind::config, where + ": expected " + std::to_string(n) + " numbers, got '" + text + "'");
  return out;
}

Range range_of(const pt::ptree& s, const std::string& key, const std::string& where) {
  const auto v = numbers(s.get<std::string>(key), 2, where + "." + key);
  return {v[0], v[1]};
}

}  // namespace

PriorTable parse_priors(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::config, std::string("priors: ") + e.what());
  }
  PriorTable table;
  try {
    for (const auto& [name, s] : tree) {
      AnatomicalPrior p;
      p.name = name;
      std::istringstream names(s.get<std::string>("structures"));
      for (std::string n; names >> n;) p.structures.push_back(n);
      p.centroid_x = range_of(s, "centroid_x", name);
      p.centroid_z = range_of(s, "centroid_z", name);
      const auto comps = numbers(s.get<std::string>("components"), 2, name + ".components");
      p.components_min = std::uint32_t(comps[0]);
      p.components_max = std::uint32_t(comps[1]);
      p.vertical_extent = range_of(s, "vertical_extent", name);
      p.elongation = range_of(s, "elongation", name);
      p.centroid_falloff = s.get<double>("falloff", 0.1);
      if (const auto w = s.get_optional<std::string>("weights")) {
        const auto v = numbers(*w, 4, name + ".weights");
        p.weights = {v[0], v[1], v[2], v[3]};
      }
      p.prompt = s.get<std::string>("prompt", "");
      p.validate();
      table.priors.push_back(std::move(p));
    }
  } catch (const pt::ptree_error& e) {
    fail(ErrorKind::config, std::string("priors: ") + e.what());
  }
  if (table.priors.empty()) fail(ErrorKind::config, "priors: no prior sections");
  return table;
}

PriorTable load_priors(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::config, "priors file not found: " + path.string());
  return parse_priors(read_text(path));
}

CriterionScores score_criteria(const AnatomicalPrior& prior, const Projection2D& proj, double aspect) {
  CriterionScores s;
  const std::uint32_t w = proj.width, h = proj.height;
  double sx = 0, sz = 0;
  std::size_t n = 0;
  long x0 = long(w), x1 = -1, z0 = long(h), z1 = -1;
  for (std::uint32_t z = 0; z < h; ++z)
    for (std::uint32_t x = 0; x < w; ++x) {
      if (!proj.at(x, z)) continue;
      sx += (x + 0.5) / w;
      sz += (z + 0.5) / h;
      ++n;
      x0 = std::min(x0, long(x));
      x1 = std::max(x1, long(x));
      z0 = std::min(z0, long(z));
      z1 = std::max(z1, long(z));
    }
  if (n == 0) return s;

  const double cx = sx / double(n), cz = sz / double(n);
  const double dx = std::max({0.0, prior.centroid_x.lo - cx, cx - prior.centroid_x.hi});
  const double dz = std::max({0.0, prior.centroid_z.lo - cz, cz - prior.centroid_z.hi});
  s.centroid = std::max(0.0, 1.0 - std::hypot(dx, dz) / prior.centroid_falloff);

  const std::uint32_t count = overlay_components(proj).count;
  const std::uint32_t gap = count < prior.components_min   ? prior.components_min - count
                            : count > prior.components_max ? count - prior.components_max
                                                           : 0;
  s.components = 1.0 / (1.0 + gap);

  const double lo = double(z0) / h, hi = double(z1 + 1) / h;
  const double inter = std::max(0.0, std::min(hi, prior.vertical_extent.hi) -
                                          std::max(lo, prior.vertical_extent.lo));
  const double uni = (hi - lo) + (prior.vertical_extent.hi - prior.vertical_extent.lo) - inter;
  s.vertical = uni > 0 ? inter / uni : 0.0;

  const double ratio = double(z1 - z0 + 1) * aspect / double(x1 - x0 + 1);
  s.elongation = ratio < prior.elongation.lo   ? ratio / prior.elongation.lo
                 : ratio > prior.elongation.hi ? prior.elongation.hi / ratio
                                               : 1.0;

  const CriterionWeights& wt = prior.weights;
  s.total = std::pow(s.centroid, wt.centroid) * std::pow(s.components, wt.components) *
            std::pow(s.vertical, wt.vertical) * std::pow(s.elongation, wt.elongation);
  return s;
}

double score_overlay(const AnatomicalPrior& prior, const Projection2D& proj, double aspect) {
  return score_criteria(prior, proj, aspect).total;
}

std::string_view to_string(Preference p) {
  switch (p) {
    case Preference::first: return "first";
    case Preference::second: return "second";
    case Preference::tie: return "tie";
  }
  return "tie";
}

Preference parse_preference(std::string_view text) {
  if (text == "first") return Preference::first;
  if (text == "second") return Preference::second;
  if (text == "tie") return Preference::tie;
  fail(ErrorKind::protocol, "unknown preference '" + std::string(text) + "'");
}

std::string_view to_string(VerdictSource s) {
  switch (s) {
    case VerdictSource::rule: return "rule";
    case VerdictSource::external: return "external";
    case VerdictSource::fallback: return "fallback";
  }
  return "rule";
}

JudgeVerdict judge_pair(const VoxelGrid& volume, const BinaryMask& a, const BinaryMask& b,
                        const AnatomicalPrior& prior, double tie_epsilon) {
  require_same_shape(volume.dims, a.dims, "judge_pair");
  require_same_shape(volume.dims, b.dims, "judge_pair");
  const double aspect = volume.spacing.z / volume.spacing.x;
  JudgeVerdict v;
  v.first = score_criteria(prior, front_view_projection(volume, a), aspect);
  v.second = score_criteria(prior, front_view_projection(volume, b), aspect);
  const double delta = v.first.total - v.second.total;
  v.preference = std::abs(delta) < tie_epsilon ? Preference::tie
                 : delta > 0                   ? Preference::first
                                               : Preference::second;
  return v;
}

JudgeVerdict RuleJudge::judge(const JudgeRequest& r) {
  return judge_pair(*r.volume, *r.first, *r.second, *r.prior, tie_epsilon_);
}

LabelMap shapekit_cleanup(const LabelMap& map, const StructureCatalog& catalog,
                          const std::vector<Label>& labels, std::size_t min_tumor_voxels) {
  LabelMap out = map;
  for (const Label l : labels) {
    const BinaryMask m = extract_structure_mask(out, catalog, l);
    if (count_nonzero(m) == 0) continue;
    const BinaryMask kept = catalog.at(l).kind == StructureKind::tumor
                                ? drop_small_components(m, Connectivity::face6, min_tumor_voxels)
                                : largest_component(m, Connectivity::full26);
    const BinaryMask closed = closing(kept);
    BinaryMask final_mask = kept;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (closed.data[i] && (out.data[i] == 0 || out.data[i] == l)) final_mask.data[i] = 1;
    replace_structure(out, catalog, l, final_mask);
  }
  return out;
}

BinaryMask prior_overlay_mask(const LabelMap& map, const AnatomicalPrior& prior,
                              const StructureCatalog& catalog) {
  std::vector<Label> labels;
  for (const auto& s : prior.structures) {
    const auto l = catalog.find(s);
    if (!l) fail(ErrorKind::catalog, "prior '" + prior.name + "' names unknown structure " + s);
    labels.push_back(*l);
  }
  return extract_union_mask(map, catalog, labels);
}

AnatomicalPrior apply_report(const AnatomicalPrior& prior, const StructureCatalog& catalog,
                             const StructuredReport& report) {
  AnatomicalPrior out = prior;
  for (const auto& s : prior.structures) {
    const auto l = catalog.find(s);
    if (!l || catalog.at(*l).kind != StructureKind::tumor) return out;
  }
  if (report.tumor_count == 0) return out;
  out.components_min = out.components_max = report.tumor_count;
  out.prompt += " The report lists " + std::to_string(report.tumor_count) + " lesion(s).";
  return out;
}

TournamentResult run_tournament(const std::string& case_id, const VoxelGrid& volume,
                                const std::vector<LabelMap>& candidates, Judge& judge,
                                const PriorTable& priors, const StructureCatalog& catalog,
                                const std::vector<Label>& focus, const StructuredReport* report) {
  if (candidates.size() < 2) fail(ErrorKind::invariant, "run_tournament needs at least two candidates");
  for (const auto& c : candidates) require_same_shape(volume.dims, c.dims, "run_tournament");

  std::vector<AnatomicalPrior> voters;
  for (const auto& p : priors.priors) {
    bool relevant = true, focused = focus.empty();
    for (const auto& s : p.structures) {
      const auto l = catalog.find(s);
      if (!l) relevant = false;
      else if (std::find(focus.begin(), focus.end(), *l) != focus.end()) focused = true;
    }
    if (relevant && focused) voters.push_back(report ? apply_report(p, catalog, *report) : p);
  }

  auto overlay_mask = [&](const LabelMap& m, const AnatomicalPrior& p) {
    return prior_overlay_mask(m, p, catalog);
  };

  TournamentResult r;
  std::size_t champion = 0;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    TournamentRound round;
    round.champion = champion;
    round.challenger = k;
    for (const AnatomicalPrior& p : voters) {
      const BinaryMask first = overlay_mask(candidates[k], p);
      const BinaryMask second = overlay_mask(candidates[champion], p);
      const JudgeVerdict v = judge.judge({case_id, &p, &volume, &first, &second});
      round.votes[p.name] = v.preference;
      round.protocol_failures += v.protocol_failure;
      round.timeouts += v.timed_out;
      if (v.preference == Preference::first) ++round.score_1;
      if (v.preference == Preference::second) ++round.score_2;
    }
    if (round.score_1 > round.score_2) champion = k;
    r.protocol_failures += round.protocol_failures;
    r.timeouts += round.timeouts;
    r.rounds.push_back(std::move(round));
  }
  r.winner = champion;
  r.per_structure_votes = r.rounds.back().votes;
  r.score_1 = r.rounds.back().score_1;
  r.score_2 = r.rounds.back().score_2;
  r.selected = candidates[champion];
  return r;
}

Json tournament_to_json(const TournamentResult& r) {
  Json rounds = Json::array();
  for (const auto& round : r.rounds) {
    Json votes = Json::object();
    for (const auto& [name, p] : round.votes) votes[name] = to_string(p);
    rounds.push_back({{"champion", round.champion},
                      {"challenger", round.challenger},
                      {"score_1", round.score_1},
                      {"score_2", round.score_2},
                      {"votes", votes}});
  }
  return {{"winner", r.winner}, {"score_1", r.score_1}, {"score_2", r.score_2}, {"rounds", rounds},
          {"protocol_failures", r.protocol_failures}, {"timeouts", r.timeouts}};
}

}  // namespace emr
