#include "chunkrt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "chunkrt/config.hpp"
#include "chunkrt/errors.hpp"

#ifndef CHUNKRT_DATA_DIR
#define CHUNKRT_DATA_DIR "data"
#endif

namespace chunkrt {
namespace fs = std::filesystem;

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::strategy_compare: return "strategy_compare";
    case ScenarioKind::repr_ablation: return "repr_ablation";
    case ScenarioKind::error_propagation: return "error_propagation";
    case ScenarioKind::throughput: return "throughput";
    case ScenarioKind::rtg_unit: return "rtg_unit";
  }
  return "?";
}

std::string default_data_root() {
  if (const char* env = std::getenv("CHUNKRT_DATA"); env && *env) return env;
  return CHUNKRT_DATA_DIR;
}

namespace {

using Section = ConfigDoc::Section;

class Reader {
 public:
  Reader(const ConfigDoc& doc, std::string base_dir, std::string data_root)
      : doc_(doc), base_dir_(std::move(base_dir)), data_root_(std::move(data_root)) {}

  const ConfigDoc& doc() const { return doc_; }

  /// The single section with this name, or null. Repeats are an error.
  const Section* single(const std::string& name) const {
    const auto all = doc_.sections_named(name);
    if (all.size() > 1) doc_.fail(all[1]->line, "section [" + name + "] appears more than once");
    return all.empty() ? nullptr : all.front();
  }

  const Section& required(const std::string& name) const {
    const Section* s = single(name);
    if (!s) doc_.fail(1, "missing section [" + name + "]");
    return *s;
  }

  void allow_sections(const std::set<std::string>& names) const {
    for (const auto& s : doc_.sections())
      if (!names.count(s.name)) doc_.fail(s.line, "unexpected section [" + s.name + "] for this scenario kind");
  }

  void allow_keys(const Section& s, const std::set<std::string>& keys) const {
    for (const auto& [k, e] : s.entries)
      if (!keys.count(k)) doc_.fail(e.line, "unknown key '" + k + "' in [" + s.name + "]");
  }

  int line_of(const Section& s, const std::string& key) const {
    const auto* e = s.find(key);
    return e ? e->line : s.line;
  }

  double positive(const Section& s, const std::string& key, double fallback) const {
    const double v = doc_.get_double(s, key, fallback);
    if (!(v > 0.0)) doc_.fail(line_of(s, key), "'" + key + "' must be positive");
    return v;
  }

  double non_negative(const Section& s, const std::string& key, double fallback) const {
    const double v = doc_.get_double(s, key, fallback);
    if (!(v >= 0.0)) doc_.fail(line_of(s, key), "'" + key + "' must be non-negative");
    return v;
  }

  std::size_t count(const Section& s, const std::string& key, long fallback, long minimum = 1) const {
    const long v = doc_.get_int(s, key, fallback);
    if (v < minimum) doc_.fail(line_of(s, key), "'" + key + "' must be at least " + std::to_string(minimum));
    return static_cast<std::size_t>(v);
  }

  bool flag(const Section& s, const std::string& key, bool fallback) const {
    const std::string v = doc_.get_string(s, key, fallback ? "true" : "false");
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    doc_.fail(line_of(s, key), "'" + key + "' must be true or false");
  }

  /// Runs `parse` on the entry's value, turning InvalidInput into a ParseError
  /// at the entry's line.
  template <class F>
  auto parse_value(const Section& s, const std::string& key, F&& parse) const {
    try {
      return parse(doc_.require_string(s, key));
    } catch (const InvalidInput& e) {
      doc_.fail(line_of(s, key), e.what());
    }
  }

  std::string resolve(const Section& s, const std::string& key) const {
    const std::string rel = doc_.require_string(s, key);
    return resolve_path(rel);
  }

  std::string resolve_path(const std::string& rel) const {
    const fs::path p(rel);
    if (p.is_absolute()) {
      if (fs::exists(p)) return p.string();
      throw FileNotFound(rel);
    }
    for (const auto& root : {base_dir_, data_root_}) {
      if (root.empty()) continue;
      const fs::path cand = fs::path(root) / p;
      if (fs::exists(cand)) return cand.lexically_normal().string();
    }
    throw FileNotFound(rel);
  }

  /// Calls validate(); InvalidInput becomes a ParseError at `line`.
  template <class F>
  void check(int line, F&& validate) const {
    try {
      validate();
    } catch (const InvalidInput& e) {
      doc_.fail(line, e.what());
    }
  }

 private:
  const ConfigDoc& doc_;
  std::string base_dir_;
  std::string data_root_;
};

ScenarioKind kind_from_string(const Reader& r, const Section& s) {
  const std::string v = r.doc().require_string(s, "kind");
  for (ScenarioKind k : {ScenarioKind::strategy_compare, ScenarioKind::repr_ablation, ScenarioKind::error_propagation,
                         ScenarioKind::throughput, ScenarioKind::rtg_unit})
    if (to_string(k) == v) return k;
  r.doc().fail(r.line_of(s, "kind"), "unknown scenario kind '" + v + "'");
}

void read_limits(const Reader& r, WholeBodyLimits& lim) {
  const Section* s = r.single("limits");
  if (!s) return;
  r.allow_keys(*s, {"base_linear", "base_yaw", "torso", "ee_linear", "ee_angular", "grip", "head"});
  lim.base_linear = r.positive(*s, "base_linear", lim.base_linear);
  lim.base_yaw = r.positive(*s, "base_yaw", lim.base_yaw);
  lim.torso = r.positive(*s, "torso", lim.torso);
  lim.ee_linear = r.positive(*s, "ee_linear", lim.ee_linear);
  lim.ee_angular = r.positive(*s, "ee_angular", lim.ee_angular);
  lim.grip = r.positive(*s, "grip", lim.grip);
  lim.head = r.positive(*s, "head", lim.head);
}

void read_rtg(const Reader& r, RtgConfig& cfg) {
  const Section* s = r.single("rtg");
  if (!s) return;
  r.allow_keys(*s, {"dt_opt", "w_acc", "tau", "t_f_fraction", "t2_budget", "reanchor_angle", "max_swing"});
  const ConfigDoc& d = r.doc();
  cfg.dt_opt = r.non_negative(*s, "dt_opt", cfg.dt_opt);
  cfg.w_acc = r.non_negative(*s, "w_acc", cfg.w_acc);
  cfg.tau = d.get_double(*s, "tau", cfg.tau);
  cfg.t_f_fraction = r.positive(*s, "t_f_fraction", cfg.t_f_fraction);
  cfg.t2_budget = r.non_negative(*s, "t2_budget", cfg.t2_budget);
  cfg.reanchor_angle = r.positive(*s, "reanchor_angle", cfg.reanchor_angle);
  cfg.max_swing = r.positive(*s, "max_swing", cfg.max_swing);
}

/// [exec] plus [limits] and [rtg].
ExecConfig read_exec(const Reader& r, bool with_strategies, std::vector<StrategyKind>* strategies) {
  ExecConfig ec;
  const Section* s = r.single("exec");
  if (s) {
    std::set<std::string> keys{"control_dt", "duration", "sync_horizon", "fusion_decay"};
    if (with_strategies) keys.insert("strategies");
    r.allow_keys(*s, keys);
    ec.control_dt = r.positive(*s, "control_dt", ec.control_dt);
    ec.duration = r.positive(*s, "duration", ec.duration);
    ec.sync_horizon = r.doc().get_double(*s, "sync_horizon", ec.sync_horizon);
    ec.fusion_decay = r.non_negative(*s, "fusion_decay", ec.fusion_decay);
    if (strategies) {
      for (const auto& name : r.doc().get_list(*s, "strategies")) {
        try {
          strategies->push_back(strategy_from_string(name));
        } catch (const InvalidInput& e) {
          r.doc().fail(r.line_of(*s, "strategies"), e.what());
        }
      }
    }
  }
  if (strategies && strategies->empty()) *strategies = all_strategies();
  read_limits(r, ec.limits);
  read_rtg(r, ec.rtg);
  const int line = s ? s->line : 1;
  r.check(line, [&] { ec.validate(); });
  return ec;
}

NoiseSigma read_sigma(const Reader& r, const Section& s) {
  NoiseSigma sigma{};
  const auto v = r.doc().get_doubles(s, "sigma");
  if (!v) return sigma;
  if (v->size() == 1) {
    sigma.fill(v->front());
  } else if (v->size() == kNoiseCoords) {
    std::copy(v->begin(), v->end(), sigma.begin());
  } else {
    r.doc().fail(r.line_of(s, "sigma"), "'sigma' takes 1 or " + std::to_string(kNoiseCoords) + " values");
  }
  for (double x : sigma)
    if (!(x >= 0.0)) r.doc().fail(r.line_of(s, "sigma"), "'sigma' must be non-negative");
  return sigma;
}

/// [source]; the reference is read only when `with_reference`.
ChunkSourceConfig read_source(const Reader& r, bool with_reference, std::string* reference_path) {
  ChunkSourceConfig sc;
  const Section& s = r.required("source");
  std::set<std::string> keys{"chunk_len", "dt",         "repr",       "robot_anchor", "noise_mode", "sigma",
                             "latency",   "latency_lo", "latency_hi", "comm_delay",   "wait_delay"};
  if (with_reference) keys.insert("reference");
  r.allow_keys(s, keys);
  const ConfigDoc& d = r.doc();
  sc.chunk_len = r.count(s, "chunk_len", static_cast<long>(sc.chunk_len), 2);
  sc.dt = r.positive(s, "dt", sc.dt);
  if (s.find("repr")) sc.repr = r.parse_value(s, "repr", repr_from_string);
  if (s.find("robot_anchor")) {
    const std::string a = d.require_string(s, "robot_anchor");
    if (a == "instantaneous") sc.robot_anchor = RobotFrameAnchor::instantaneous;
    else if (a == "episode_start") sc.robot_anchor = RobotFrameAnchor::episode_start;
    else d.fail(r.line_of(s, "robot_anchor"), "robot_anchor must be instantaneous or episode_start");
  }
  if (s.find("noise_mode")) sc.noise_mode = r.parse_value(s, "noise_mode", noise_mode_from_string);
  sc.sigma = read_sigma(r, s);

  const std::string kind = d.get_string(s, "latency", "constant");
  if (kind == "constant") sc.latency.kind = LatencyModel::Kind::constant;
  else if (kind == "uniform") sc.latency.kind = LatencyModel::Kind::uniform;
  else d.fail(r.line_of(s, "latency"), "latency must be constant or uniform");
  sc.latency.lo = r.non_negative(s, "latency_lo", sc.latency.lo);
  sc.latency.hi = r.non_negative(s, "latency_hi", sc.latency.lo);
  sc.latency.comm_delay = r.non_negative(s, "comm_delay", 0.0);
  sc.latency.wait_delay = r.non_negative(s, "wait_delay", 0.0);
  r.check(s.line, [&] { sc.latency.validate(); });

  if (with_reference) {
    *reference_path = r.resolve(s, "reference");
    try {
      sc.reference = std::make_shared<const ReferenceTrajectory>(ReferenceTrajectory::load(*reference_path));
    } catch (const InvalidInput& e) {
      d.fail(r.line_of(s, "reference"), std::string("reference trajectory: ") + e.what());
    }
    r.check(s.line, [&] { sc.validate(); });
  }
  return sc;
}

void read_strategy_compare(const Reader& r, StrategyCompareParams& p) {
  r.allow_sections({"scenario", "source", "exec", "limits", "rtg", "report"});
  p.source = read_source(r, true, &p.reference_path);
  p.exec = read_exec(r, true, &p.strategies);
  if (const Section* s = r.single("report")) {
    r.allow_keys(*s, {"seeds", "overlay_channel", "overlay_span"});
    p.seeds = r.count(*s, "seeds", 1);
    p.overlay_span = r.positive(*s, "overlay_span", p.overlay_span);
    if (s->find("overlay_channel")) {
      const std::string name = r.doc().require_string(*s, "overlay_channel");
      const auto& names = whole_body_layout().scalar_names;
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) r.doc().fail(r.line_of(*s, "overlay_channel"), "unknown channel '" + name + "'");
      p.overlay_channel = static_cast<std::size_t>(it - names.begin());
    }
  }
}

void read_repr_ablation(const Reader& r, ReprAblationParams& p) {
  r.allow_sections({"scenario", "repr_ablation", "source", "exec", "limits", "rtg", "variant"});
  const ConfigDoc& d = r.doc();
  const Section& s = r.required("repr_ablation");
  r.allow_keys(s, {"references", "studies", "roundtrip_steps", "roundtrip_tolerance", "offset_tolerance", "seeds",
                   "ratio", "min_ratio", "segment", "common_length"});
  const auto refs = d.get_list(s, "references");
  if (refs.empty()) d.fail(s.line, "section [repr_ablation] is missing 'references'");
  for (const auto& rel : refs) {
    p.reference_paths.push_back(r.resolve_path(rel));
    try {
      p.references.push_back(
          std::make_shared<const ReferenceTrajectory>(ReferenceTrajectory::load(p.reference_paths.back())));
    } catch (const InvalidInput& e) {
      d.fail(r.line_of(s, "references"), rel + ": " + e.what());
    }
  }
  const auto studies = d.get_list(s, "studies");
  if (studies.empty()) d.fail(s.line, "section [repr_ablation] is missing 'studies'");
  for (const auto& st : studies) {
    if (st == "roundtrip") p.roundtrip = true;
    else if (st == "smoothness") p.smoothness = true;
    else if (st == "compactness") p.compactness = true;
    else d.fail(r.line_of(s, "studies"), "unknown study '" + st + "'");
  }
  p.roundtrip_steps = r.count(s, "roundtrip_steps", static_cast<long>(p.roundtrip_steps), 2);
  p.roundtrip_tolerance = r.positive(s, "roundtrip_tolerance", p.roundtrip_tolerance);
  p.offset_tolerance = r.positive(s, "offset_tolerance", p.offset_tolerance);
  p.segment = r.positive(s, "segment", p.segment);
  p.common_length = r.count(s, "common_length", 0, 0);
  for (const auto& ref : p.references)
    if (p.roundtrip && ref->data().t.size() < p.roundtrip_steps + 1)
      d.fail(r.line_of(s, "roundtrip_steps"), "a reference has fewer rows than roundtrip_steps + 1");

  if (p.smoothness) {
    p.seeds = r.count(s, "seeds", static_cast<long>(p.seeds));
    p.source = read_source(r, false, nullptr);
    p.exec = read_exec(r, false, nullptr);
    for (const Section* v : d.sections_named("variant")) {
      if (v->label.empty()) d.fail(v->line, "[variant] needs a label, e.g. [variant abs_offset]");
      for (const auto& other : p.variants)
        if (other.label == v->label) d.fail(v->line, "duplicate variant '" + v->label + "'");
      r.allow_keys(*v, {"repr", "noise_mode", "sigma"});
      ReprVariant rv;
      rv.label = v->label;
      rv.repr = r.parse_value(*v, "repr", repr_from_string);
      rv.noise = r.parse_value(*v, "noise_mode", noise_mode_from_string);
      rv.sigma = r.non_negative(*v, "sigma", 0.0);
      p.variants.push_back(rv);
    }
    if (p.variants.empty()) d.fail(s.line, "the smoothness study needs at least one [variant]");
    if (s.find("ratio")) {
      const auto ratio = d.get_list(s, "ratio");
      if (ratio.size() != 2) d.fail(r.line_of(s, "ratio"), "'ratio' takes two variant labels");
      for (const auto& lbl : ratio)
        if (std::none_of(p.variants.begin(), p.variants.end(), [&](const ReprVariant& v) { return v.label == lbl; }))
          d.fail(r.line_of(s, "ratio"), "unknown variant '" + lbl + "'");
      p.ratio_numerator = ratio[0];
      p.ratio_denominator = ratio[1];
      p.min_ratio = r.positive(s, "min_ratio", p.min_ratio);
    }
  } else {
    for (const char* sec : {"source", "exec", "limits", "rtg", "variant"})
      if (const auto v = d.sections_named(sec); !v.empty())
        d.fail(v.front()->line, std::string("[") + sec + "] is only used by the smoothness study");
  }
}

BodySegment segment_from(const Reader& r, const Section& s, const std::string& name, Arm arm) {
  if (name == "base") return BodySegment::base;
  if (name == "torso") return BodySegment::torso;
  if (name == "head") return BodySegment::head;
  if (name == "arm") return arm == Arm::left ? BodySegment::arm_left : BodySegment::arm_right;
  if (name == "arm_left") return BodySegment::arm_left;
  if (name == "arm_right") return BodySegment::arm_right;
  r.doc().fail(r.line_of(s, "segments"), "unknown body segment '" + name + "'");
}

void read_error_propagation(const Reader& r, ErrorPropagationParams& p) {
  r.allow_sections({"scenario", "error_propagation", "scope"});
  const ConfigDoc& d = r.doc();
  const Section& s = r.required("error_propagation");
  r.allow_keys(s, {"model", "arm", "sigma", "trials", "points", "spread", "seeds", "compare", "min_fraction"});
  p.model_path = r.resolve(s, "model");
  p.model = std::make_shared<const ChainModel>(ChainModel::load(p.model_path));
  const std::string arm = d.get_string(s, "arm", "left");
  if (arm == "left") p.arm = Arm::left;
  else if (arm == "right") p.arm = Arm::right;
  else d.fail(r.line_of(s, "arm"), "arm must be left or right");
  if (!p.model->has_end_effector(p.arm)) d.fail(r.line_of(s, "arm"), "the model has no " + arm + " end-effector");
  p.sigma = r.non_negative(s, "sigma", p.sigma);
  p.trials = r.count(s, "trials", static_cast<long>(p.trials));
  p.points = r.count(s, "points", static_cast<long>(p.points));
  p.spread = r.non_negative(s, "spread", p.spread);
  p.seeds = r.count(s, "seeds", static_cast<long>(p.seeds));
  for (const Section* sc : d.sections_named("scope")) {
    if (sc->label.empty()) d.fail(sc->line, "[scope] needs a label, e.g. [scope distal]");
    for (const auto& other : p.scopes)
      if (other.label == sc->label) d.fail(sc->line, "duplicate scope '" + sc->label + "'");
    r.allow_keys(*sc, {"segments"});
    ScopeSpec spec;
    spec.label = sc->label;
    const auto names = d.get_list(*sc, "segments");
    if (names.empty()) d.fail(sc->line, "[scope " + sc->label + "] is missing 'segments'");
    for (const auto& n : names) spec.segments.push_back(segment_from(r, *sc, n, p.arm));
    p.scopes.push_back(spec);
  }
  if (p.scopes.empty()) d.fail(s.line, "at least one [scope] is required");
  if (s.find("compare")) {
    const auto cmp = d.get_list(s, "compare");
    if (cmp.size() != 2) d.fail(r.line_of(s, "compare"), "'compare' takes two scope labels");
    for (const auto& lbl : cmp)
      if (std::none_of(p.scopes.begin(), p.scopes.end(), [&](const ScopeSpec& x) { return x.label == lbl; }))
        d.fail(r.line_of(s, "compare"), "unknown scope '" + lbl + "'");
    p.wider = cmp[0];
    p.narrower = cmp[1];
    p.min_fraction = d.get_double(s, "min_fraction", p.min_fraction);
    if (!(p.min_fraction >= 0.0 && p.min_fraction <= 1.0))
      d.fail(r.line_of(s, "min_fraction"), "'min_fraction' must lie in [0, 1]");
  }
}

void read_throughput(const Reader& r, ThroughputParams& p) {
  r.allow_sections({"scenario", "throughput"});
  const ConfigDoc& d = r.doc();
  const Section& s = r.required("throughput");
  r.allow_keys(s, {"chunk_len", "channels", "repetitions", "sample_queries", "scaling", "max_median",
                   "max_sample_p99", "max_scaling_ratio"});
  if (s.find("chunk_len")) {
    p.chunk_lens.clear();
    for (double v : d.require_doubles(s, "chunk_len")) {
      if (v < 2.0 || v != std::floor(v)) d.fail(r.line_of(s, "chunk_len"), "chunk lengths must be integers >= 2");
      p.chunk_lens.push_back(static_cast<std::size_t>(v));
    }
  }
  p.channels = r.count(s, "channels", static_cast<long>(p.channels));
  p.repetitions = r.count(s, "repetitions", static_cast<long>(p.repetitions), 100);
  p.sample_queries = r.count(s, "sample_queries", static_cast<long>(p.sample_queries));
  p.scaling = r.flag(s, "scaling", p.scaling);
  p.max_median = r.positive(s, "max_median", p.max_median);
  p.max_sample_p99 = r.positive(s, "max_sample_p99", p.max_sample_p99);
  p.max_scaling_ratio = r.positive(s, "max_scaling_ratio", p.max_scaling_ratio);
}

void read_rtg_unit(const Reader& r, RtgUnitParams& p) {
  r.allow_sections({"scenario", "rtg_unit", "rtg"});
  const Section& s = r.required("rtg_unit");
  r.allow_keys(s, {"channels", "chunk_len", "dt", "chunks", "t1", "slope", "offset", "v_max", "control_dt"});
  p.channels = r.count(s, "channels", static_cast<long>(p.channels));
  p.chunk_len = r.count(s, "chunk_len", static_cast<long>(p.chunk_len), 2);
  p.dt = r.positive(s, "dt", p.dt);
  p.chunks = r.count(s, "chunks", static_cast<long>(p.chunks));
  p.t1 = r.non_negative(s, "t1", p.t1);
  p.slope = r.doc().get_double(s, "slope", p.slope);
  p.offset = r.doc().get_double(s, "offset", p.offset);
  p.v_max = r.positive(s, "v_max", p.v_max);
  p.control_dt = r.positive(s, "control_dt", p.control_dt);
  read_rtg(r, p.rtg);
  p.rtg.v_max.assign(p.channels, p.v_max);
  r.check(s.line, [&] { p.rtg.validate(ChannelLayout::plain(p.channels)); });
  if (p.t1 + p.rtg.t2_budget >= static_cast<double>(p.chunk_len - 1) * p.dt)
    r.doc().fail(r.line_of(s, "t1"), "t1 + t2_budget must be shorter than a chunk");
}

}  // namespace

Scenario parse_scenario(std::istream& is, const std::string& source, const std::string& base_dir,
                        const std::string& data_root) {
  const ConfigDoc doc = ConfigDoc::parse(is, source);
  const Reader r(doc, base_dir, data_root);
  Scenario sc;
  sc.path = source;
  sc.config_hash = doc.content_hash();
  const Section& head = r.required("scenario");
  r.allow_keys(head, {"name", "kind", "seed", "output"});
  sc.name = doc.require_string(head, "name");
  sc.kind = kind_from_string(r, head);
  const long seed = doc.get_int(head, "seed", 0);
  if (seed < 0) doc.fail(r.line_of(head, "seed"), "'seed' must be non-negative");
  sc.seed = static_cast<std::uint64_t>(seed);
  sc.output = doc.get_string(head, "output", sc.name);
  if (sc.output.empty() || fs::path(sc.output).is_absolute() || sc.output.find("..") != std::string::npos)
    doc.fail(r.line_of(head, "output"), "'output' must be a relative directory name");

  switch (sc.kind) {
    case ScenarioKind::strategy_compare: read_strategy_compare(r, sc.strategy_compare); break;
    case ScenarioKind::repr_ablation: read_repr_ablation(r, sc.repr_ablation); break;
    case ScenarioKind::error_propagation: read_error_propagation(r, sc.error_propagation); break;
    case ScenarioKind::throughput: read_throughput(r, sc.throughput); break;
    case ScenarioKind::rtg_unit: read_rtg_unit(r, sc.rtg_unit); break;
  }
  return sc;
}

Scenario load_scenario(const std::string& path, const std::string& data_root) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  const std::string dir = fs::path(path).parent_path().string();
  return parse_scenario(in, path, dir.empty() ? "." : dir, data_root);
}

}  // namespace chunkrt
