#include "emr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <iostream>
#include <set>
#include <sstream>

#include "emr/volume_io.hpp"

namespace emr {

namespace pt = boost::property_tree;

namespace {

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string section) : section_(std::move(section)) {
    if (auto s = tree.get_child_optional(pt::ptree::path_type(section_, '\0'))) node_ = &*s;
  }

  bool present() const { return node_ != nullptr; }

  std::string text(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    if (!node_) return fallback;
    const auto v = node_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    return v ? *v : fallback;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const std::string s = text(key, "");
    if (s.empty()) return fallback;
    return parse<T>(key, s);
  }

  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback, std::size_t expected = 0) {
    const std::string s = text(key, "");
    if (s.empty()) return fallback;
    std::istringstream is(s);
    std::vector<T> out;
    for (std::string tok; is >> tok;) out.push_back(parse<T>(key, tok));
    if (expected && out.size() != expected)
      fail(ErrorKind::config, where(key) + ": expected " + std::to_string(expected) + " values");
    return out;
  }

  // Unknown keys are usually typos; refuse them.
  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : *node_)
      if (!used_.count(k)) fail(ErrorKind::config, "unknown key '" + k + "' in [" + section_ + "]");
  }

 private:
  std::string where(const std::string& key) const { return "[" + section_ + "] " + key; }

  template <typename T>
  T parse(const std::string& key, const std::string& s) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      fail(ErrorKind::config, where(key) + ": expected a boolean, got '" + s + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else {
      std::istringstream is(s);
      T v{};
      if (!(is >> v) || !is.eof())
        fail(ErrorKind::config, where(key) + ": cannot parse '" + s + "'");
      return v;
    }
  }

  const pt::ptree* node_ = nullptr;
  std::string section_;
  std::set<std::string> used_;
};

StructureKind kind_of(const std::string& s) {
  try {
    return parse_structure_kind(s);
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

OpRates read_rates(Reader& r, const OpRates& base) {
  OpRates o;
  o.remove = r.get("remove", base.remove);
  o.shift = r.get("shift", base.shift);
  o.fragment = r.get("fragment", base.fragment);
  o.spurious = r.get("spurious", base.spurious);
  o.boundary_jitter = r.get("boundary_jitter", base.boundary_jitter);
  return o;
}

void apply_override(pt::ptree& tree, const std::string& spec) {
  const auto eq = spec.find('=');
  const auto dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    fail(ErrorKind::config, "override '" + spec + "' is not section.key=value");
  const std::string section = spec.substr(0, dot);
  const std::string key = spec.substr(dot + 1, eq - dot - 1);
  auto child = tree.get_child_optional(pt::ptree::path_type(section, '\0'));
  if (!child) child = tree.add_child(pt::ptree::path_type(section, '\0'), pt::ptree());
  child->put(pt::ptree::path_type(key, '\0'), spec.substr(eq + 1));
}

RunConfig from_tree(pt::ptree tree, const std::filesystem::path& base_dir) {
  RunConfig c;
  static const std::set<std::string> known = {"run",   "corpus", "phantom", "tumor", "noise", "em", "metrics",
                                              "model", "roc",    "cost",    "judge", "oracle"};

  Reader run(tree, "run");
  c.seed = run.get<std::uint64_t>("seed", 0);
  run.finish();

  Reader corpus(tree, "corpus");
  c.corpus.cases = corpus.get<std::uint32_t>("cases", c.corpus.cases);
  c.corpus.gold_fraction = corpus.get("gold_fraction", c.corpus.gold_fraction);
  corpus.finish();

  Reader ph(tree, "phantom");
  PhantomSpec& p = c.phantom;
  p.catalog_id = ph.text("catalog_id", p.catalog_id);
  const auto dims = ph.list<std::uint32_t>("dims", {p.dims.x, p.dims.y, p.dims.z}, 3);
  p.dims = {dims[0], dims[1], dims[2]};
  const auto sp = ph.list<double>("spacing", {p.spacing.x, p.spacing.y, p.spacing.z}, 3);
  p.spacing = {sp[0], sp[1], sp[2]};
  p.background_mean = ph.get("background_mean", p.background_mean);
  p.background_std = ph.get("background_std", p.background_std);
  p.center_jitter = ph.get("center_jitter", p.center_jitter);
  p.radius_jitter = ph.get("radius_jitter", p.radius_jitter);
  p.intensity_jitter = ph.get("intensity_jitter", p.intensity_jitter);
  const auto names = ph.list<std::string>("structures", {});
  ph.finish();

  std::set<std::string> structure_sections;
  for (const auto& name : names) {
    const std::string sec = "structure:" + name;
    structure_sections.insert(sec);
    Reader r(tree, sec);
    if (!r.present()) fail(ErrorKind::config, "missing section [" + sec + "]");
    StructureSpec s;
    s.name = name;
    s.kind = kind_of(r.text("kind", "organ"));
    try {
      s.shape = parse_shape(r.text("shape", "ellipsoid"));
    } catch (const Error& e) {
      fail(ErrorKind::config, e.what());
    }
    const auto ctr = r.list<double>("center", {}, 3);
    const auto rad = r.list<double>("radii", {}, 3);
    if (ctr.empty() || rad.empty()) fail(ErrorKind::config, "[" + sec + "] needs center and radii");
    s.center = {ctr[0], ctr[1], ctr[2]};
    s.radii = {rad[0], rad[1], rad[2]};
    s.mean = r.get("mean", s.mean);
    s.stddev = r.get("std", s.stddev);
    r.finish();
    p.structures.push_back(s);
  }

  Reader tu(tree, "tumor");
  if (tu.get("enabled", tu.present())) {
    TumorSpec t;
    t.name = tu.text("name", t.name);
    t.host = tu.text("host", t.host);
    const auto count = tu.list<std::uint32_t>("count", {t.count_min, t.count_max}, 2);
    t.count_min = count[0];
    t.count_max = count[1];
    const auto radius = tu.list<double>("radius", {t.radius_min, t.radius_max}, 2);
    t.radius_min = radius[0];
    t.radius_max = radius[1];
    t.intensity_offset = tu.get("intensity_offset", t.intensity_offset);
    t.stddev = tu.get("std", t.stddev);
    t.separation = tu.get("separation", t.separation);
    p.tumor = t;
  } else {
    for (const char* k : {"name", "host", "count", "radius", "intensity_offset", "std", "separation"})
      tu.text(k, "");
  }
  tu.finish();

  Reader no(tree, "noise");
  NoiseSpec& n = c.noise;
  n.name = no.text("name", n.name);
  n.rates = read_rates(no, n.rates);
  const auto scale = no.list<double>("shift_scale", {n.shift_min, n.shift_max}, 2);
  n.shift_min = scale[0];
  n.shift_max = scale[1];
  n.shift_min_voxels = no.get("shift_min_voxels", n.shift_min_voxels);
  n.fragment_gap = no.get("fragment_gap", n.fragment_gap);
  const auto sr = no.list<long>("spurious_radius", {n.spurious_radius_min, n.spurious_radius_max}, 2);
  n.spurious_radius_min = sr[0];
  n.spurious_radius_max = sr[1];
  n.tumor_miss = no.get("tumor_miss", n.tumor_miss);
  n.tumor_fp = no.get("tumor_fp", n.tumor_fp);
  const auto fr = no.list<long>("tumor_fp_radius", {n.tumor_fp_radius_min, n.tumor_fp_radius_max}, 2);
  n.tumor_fp_radius_min = fr[0];
  n.tumor_fp_radius_max = fr[1];
  n.tumor_host = no.text("tumor_host", n.tumor_host);
  no.finish();

  std::set<std::string> noise_sections;
  for (const auto& [sec, v] : tree) {
    if (sec.rfind("noise:", 0) != 0) continue;
    noise_sections.insert(sec);
    Reader r(tree, sec);
    n.overrides[sec.substr(6)] = read_rates(r, n.rates);
    r.finish();
  }

  Reader em(tree, "em");
  EMConfig& e = c.em;
  e.max_iterations = em.get("max_iterations", e.max_iterations);
  e.thresholds.auto_replace_dsc = em.get("auto_replace_dsc", e.thresholds.auto_replace_dsc);
  e.thresholds.route_dsc = em.get("route_dsc", e.thresholds.route_dsc);
  e.escalation_budget_fraction = em.get("escalation_budget", e.escalation_budget_fraction);
  try {
    e.stop_rule = parse_stop_rule(em.text("stop_rule", std::string(to_string(e.stop_rule))));
  } catch (const Error& err) {
    fail(ErrorKind::config, err.what());
  }
  e.convergence_epsilon = em.get("convergence_epsilon", e.convergence_epsilon);
  const auto mix = em.list<double>("mix", {e.mix.labeled, e.mix.synthetic, e.mix.selective}, 3);
  e.mix = {mix[0], mix[1], mix[2]};
  e.annealing_enabled = em.get("annealing", e.annealing_enabled);
  e.annealing_weight = em.get("annealing_weight", e.annealing_weight);
  e.low_confidence_score = em.get("low_confidence_score", e.low_confidence_score);
  e.max_settle_sweeps = em.get("settle_sweeps", e.max_settle_sweeps);
  e.reimpute = em.get("reimpute", e.reimpute);
  em.finish();

  Reader mo(tree, "model");
  e.model.std_floor = mo.get("std_floor", e.model.std_floor);
  e.model.min_tumor_voxels = mo.get("min_tumor_voxels", e.model.min_tumor_voxels);
  mo.finish();

  Reader ro(tree, "roc");
  c.roc.target_sensitivity = ro.get("target_sensitivity", c.roc.target_sensitivity);
  c.roc.thresholds = ro.get("thresholds", c.roc.thresholds);
  c.roc.validation_fraction = ro.get("validation_fraction", c.roc.validation_fraction);
  const int conn = ro.get("connectivity", 6);
  if (conn != 6 && conn != 26) fail(ErrorKind::config, "[roc] connectivity must be 6 or 26");
  c.roc.roc.connectivity = conn == 6 ? Connectivity::face6 : Connectivity::full26;
  c.roc.roc.min_fp_voxels = ro.get("min_fp_voxels", c.roc.roc.min_fp_voxels);
  ro.finish();

  Reader me(tree, "metrics");
  c.surface.tolerance_mm = me.get("nsd_tolerance_mm", c.surface.tolerance_mm);
  me.finish();
  if (!(c.surface.tolerance_mm > 0)) fail(ErrorKind::config, "[metrics] nsd_tolerance_mm must be > 0");

  Reader co(tree, "cost");
  c.cost.seconds_per_fp_removal = co.get("seconds_per_fp_removal", c.cost.seconds_per_fp_removal);
  c.cost.seconds_per_scratch_annotation =
      co.get("seconds_per_scratch_annotation", c.cost.seconds_per_scratch_annotation);
  c.cost.report_autoremoval = co.get("report_autoremoval", c.cost.report_autoremoval);
  co.finish();

  Reader ju(tree, "judge");
  const std::string jt = ju.text("type", "rule");
  if (jt == "rule") c.judge.kind = JudgeKind::rule;
  else if (jt == "external") c.judge.kind = JudgeKind::external;
  else fail(ErrorKind::config, "[judge] type must be rule or external");
  c.judge.command = ju.text("command", "");
  c.judge.timeout_ms = ju.get("timeout_ms", c.judge.timeout_ms);
  c.judge.tie_epsilon = ju.get("tie_epsilon", c.judge.tie_epsilon);
  const std::string priors = ju.text("priors", "priors.ini");
  c.judge.priors = std::filesystem::path(priors).is_absolute() ? std::filesystem::path(priors)
                                                               : base_dir / priors;
  ju.finish();

  Reader orc(tree, "oracle");
  const std::string ot = orc.text("type", "simulated");
  if (ot == "simulated") c.oracle.kind = OracleKind::simulated;
  else if (ot == "interactive") c.oracle.kind = OracleKind::interactive;
  else if (ot == "tie_keeper") c.oracle.kind = OracleKind::tie_keeper;
  else if (ot == "resolutions") c.oracle.kind = OracleKind::resolutions;
  else fail(ErrorKind::config, "[oracle] type must be simulated, interactive, tie_keeper or resolutions");
  c.oracle.accuracy = orc.get("accuracy", c.oracle.accuracy);
  const std::string res = orc.text("resolutions", "");
  if (!res.empty())
    c.oracle.resolutions =
        std::filesystem::path(res).is_absolute() ? std::filesystem::path(res) : base_dir / res;
  orc.finish();

  for (const auto& [sec, v] : tree)
    if (!known.count(sec) && !structure_sections.count(sec) && !noise_sections.count(sec))
      fail(ErrorKind::config, "unknown section [" + sec + "]");

  c.em.seed = c.seed;
  c.tree = std::move(tree);
  return c;
}

}  // namespace

void RunConfig::validate() const {
  try {
    phantom.validate();
    noise.validate();
    cost.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(ErrorKind::config, e.what());
  }
  em.validate();
  if (corpus.cases == 0) fail(ErrorKind::config, "[corpus] cases must be >= 1");
  if (!(corpus.gold_fraction >= 0 && corpus.gold_fraction <= 1))
    fail(ErrorKind::config, "[corpus] gold_fraction must be in [0,1]");
  if (!(roc.target_sensitivity > 0 && roc.target_sensitivity <= 1))
    fail(ErrorKind::config, "[roc] target_sensitivity must be in (0,1]");
  if (roc.thresholds < 2) fail(ErrorKind::config, "[roc] thresholds must be >= 2");
  if (judge.kind == JudgeKind::external && judge.command.empty())
    fail(ErrorKind::config, "[judge] external judge needs a command");
  if (judge.timeout_ms <= 0) fail(ErrorKind::config, "[judge] timeout_ms must be positive");
  if (!std::filesystem::exists(judge.priors))
    fail(ErrorKind::config, "prior table not found: " + judge.priors.string());
  if (oracle.kind == OracleKind::resolutions && !std::filesystem::exists(oracle.resolutions))
    fail(ErrorKind::config, "resolutions file not found: " + oracle.resolutions.string());
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(tree, o);
  RunConfig c = from_tree(std::move(tree), base_dir);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::config, "config not found: " + path.string());
  return parse_run_config(read_text(path), path.parent_path(), overrides);
}

void set_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.em.seed = seed;
  apply_override(config.tree, "run.seed=" + std::to_string(seed));
}

std::string config_snapshot(const RunConfig& config) {
  // Paths are written resolved so the snapshot reloads from anywhere.
  pt::ptree tree = config.tree;
  tree.put(pt::ptree::path_type("judge\x1fpriors", '\x1f'),
           std::filesystem::weakly_canonical(config.judge.priors).string());
  if (!config.oracle.resolutions.empty())
    tree.put(pt::ptree::path_type("oracle\x1fresolutions", '\x1f'),
             std::filesystem::weakly_canonical(config.oracle.resolutions).string());
  std::ostringstream os;
  pt::write_ini(os, tree);
  return os.str();
}

std::unique_ptr<Judge> make_judge(const JudgeConfig& config) {
  if (config.kind == JudgeKind::external)
    return std::make_unique<ExternalJudge>(config.command, config.timeout_ms, config.tie_epsilon);
  return std::make_unique<RuleJudge>(config.tie_epsilon);
}

PriorTable load_config_priors(const RunConfig& config) {
  PriorTable t = load_priors(config.judge.priors);
  t.check_against(config.phantom.catalog());
  return t;
}

std::unique_ptr<HumanOracle> make_oracle(const OracleConfig& config, std::uint64_t seed) {
  switch (config.kind) {
    case OracleKind::simulated: return std::make_unique<SimulatedExpert>(config.accuracy, seed);
    case OracleKind::interactive: return std::make_unique<InteractiveOracle>(std::cin, std::cerr);
    case OracleKind::tie_keeper: return std::make_unique<TieKeeper>();
    case OracleKind::resolutions:
      return std::make_unique<ResolutionOracle>(load_resolutions(config.resolutions));
  }
  return std::make_unique<TieKeeper>();
}

}  // namespace emr
