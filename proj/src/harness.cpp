#include "chunkrt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "chunkrt/clock.hpp"
#include "chunkrt/errors.hpp"
#include "chunkrt/svg_plot.hpp"
#include "chunkrt/trajectory_csv.hpp"

namespace chunkrt {
namespace fs = std::filesystem;

namespace {

using WallClock = std::chrono::steady_clock;

double seconds_since(WallClock::time_point t0) { return std::chrono::duration<double>(WallClock::now() - t0).count(); }

/// Scenario output directory plus the list of files written into it.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::ofstream open(const std::string& name) {
    std::ofstream os(dir_ / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
    files_.push_back(name);
    return os;
  }
  void text(const std::string& name, const std::string& content) { open(name) << content; }
  void trajectory(const std::string& name, const TimedTrajectory& traj) {
    auto os = open(name);
    write_trajectory_csv(os, traj);
  }

  const fs::path& path() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

/// Named pass/fail results collected while a scenario runs.
class Checks {
 public:
  void add(const std::string& name, bool ok) {
    json_[name] = ok;
    all_ &= ok;
  }
  const Json& json() const { return json_; }
  bool all() const { return all_; }

 private:
  Json json_ = Json::object();
  bool all_ = true;
};

std::string fmt(double v) { return format_double(v); }

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Synthetic multi-channel chunks for the throughput benchmark.

constexpr double kBenchDt = 0.1;
constexpr double kBenchPeriod = 0.05;
constexpr double kBenchLatency = 0.04;

ChannelChunk bench_chunk(std::size_t k, std::size_t len, std::size_t channels, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.002);
  ChannelChunk c;
  c.t_obs = static_cast<double>(k) * kBenchPeriod;
  c.dt = kBenchDt;
  for (std::size_t i = 0; i < len; ++i) {
    const double t = c.t_obs + static_cast<double>(i) * kBenchDt;
    ChannelFrame f;
    f.scalar.resize(static_cast<Eigen::Index>(channels));
    // Phases spread evenly over the channels, so doubling the channel count
    // adds channels of the same difficulty.
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(ch) / static_cast<double>(channels);
      f.scalar[static_cast<Eigen::Index>(ch)] = 0.2 * std::sin(0.3 * t + phase) + noise(rng);
    }
    c.frames.push_back(std::move(f));
  }
  return c;
}

RtgConfig bench_config(std::size_t channels, Exec exec) {
  RtgConfig cfg;
  cfg.v_max.assign(channels, 1.0);
  cfg.exec = exec;
  return cfg;
}

// Scenario runners.

Json run_metrics_json(const RunResult& r) {
  const RunMetrics& m = r.metrics;
  Json j;
  j["strategy"] = to_string(r.strategy);
  j["chunks"] = m.chunks;
  j["rejected"] = m.rejected;
  j["transitions"] = m.transitions;
  j["total_pause_time"] = m.total_pause_time;
  j["pause_count"] = m.pause_count;
  j["mean_boundary_discontinuity"] = m.mean_boundary_discontinuity;
  j["max_boundary_discontinuity"] = m.max_boundary_discontinuity;
  j["max_velocity_discontinuity"] = m.max_velocity_discontinuity;
  j["tracking_rms_mean"] = m.tracking_rms_mean;
  j["latency_mean"] = m.latency_mean;
  j["latency_max"] = m.latency_max;
  j["truncated"] = m.truncated;
  Json mv;
  for (std::size_t c = 0; c < kMetricChannels; ++c) mv[metric_channel_names()[c]] = m.max_velocity[c];
  j["max_velocity"] = mv;
  return j;
}

const RunResult* find_run(const std::vector<RunResult>& runs, StrategyKind k) {
  for (const auto& r : runs)
    if (r.strategy == k) return &r;
  return nullptr;
}

/// Pause time the synchronous schedule implies: the latency of every chunk
/// after the first.
double expected_sync_pause(const RunResult& r) {
  double s = 0.0;
  for (std::size_t i = 1; i < r.chunks.size(); ++i) s += r.chunks[i].t1;
  return s;
}

void strategy_compare(const Scenario& sc, OutputDir& out, Json& results, Checks& checks) {
  const StrategyCompareParams& p = sc.strategy_compare;
  const auto has = [&](StrategyKind k) { return std::count(p.strategies.begin(), p.strategies.end(), k) > 0; };

  auto seeds_csv = out.open("seeds.csv");
  seeds_csv << "seed,strategy,chunks,transitions,max_boundary_discontinuity,max_velocity_discontinuity,"
               "total_pause_time,expected_pause_time,tracking_rms_mean,velocity_excess\n";

  bool ordering = true, rtg_pause = true, sync_pause = true, rtg_bound = true, rtg_continuity = true,
       rtg_tracking = true;
  double worst_excess = -std::numeric_limits<double>::infinity();
  std::size_t min_transitions = std::numeric_limits<std::size_t>::max();
  Json per_seed = Json::array();

  for (std::size_t i = 0; i < p.seeds; ++i) {
    const std::uint64_t seed = sc.seed + i;
    const auto runs = run_strategy_compare(p, seed);
    Json row;
    row["seed"] = seed;
    for (const auto& r : runs) {
      const double excess = velocity_excess(r, p.exec.limits);
      const double expected = r.strategy == StrategyKind::synchronous ? expected_sync_pause(r) : 0.0;
      seeds_csv << seed << ',' << to_string(r.strategy) << ',' << r.metrics.chunks << ',' << r.metrics.transitions
                << ',' << fmt(r.metrics.max_boundary_discontinuity) << ','
                << fmt(r.metrics.max_velocity_discontinuity) << ',' << fmt(r.metrics.total_pause_time) << ','
                << fmt(expected) << ',' << fmt(r.metrics.tracking_rms_mean) << ',' << fmt(excess) << '\n';
      row[to_string(r.strategy)] = r.metrics.max_boundary_discontinuity;
      if (r.strategy == StrategyKind::rtg) {
        worst_excess = std::max(worst_excess, excess);
        min_transitions = std::min(min_transitions, r.metrics.transitions);
        rtg_bound &= excess <= 1e-9;
        rtg_continuity &= r.metrics.max_boundary_discontinuity <= 1e-6 && r.metrics.max_velocity_discontinuity <= 1e-6;
        rtg_pause &= r.metrics.total_pause_time == 0.0;
      }
      if (r.strategy == StrategyKind::synchronous)
        sync_pause &= std::abs(r.metrics.total_pause_time - expected) <= p.exec.control_dt && r.metrics.total_pause_time > 0.0;
    }
    const RunResult* rtg = find_run(runs, StrategyKind::rtg);
    const RunResult* fusion = find_run(runs, StrategyKind::async_history_fusion);
    const RunResult* naive = find_run(runs, StrategyKind::async_naive);
    if (rtg && fusion && naive)
      ordering &= rtg->metrics.max_boundary_discontinuity < fusion->metrics.max_boundary_discontinuity &&
                  fusion->metrics.max_boundary_discontinuity < naive->metrics.max_boundary_discontinuity;
    if (rtg && fusion) rtg_tracking &= rtg->metrics.tracking_rms_mean <= fusion->metrics.tracking_rms_mean;
    per_seed.push_back(row);

    if (i == 0) {
      Json metrics = Json::array();
      for (const auto& r : runs) metrics.push_back(run_metrics_json(r));
      results["metrics"] = metrics;
      {
        auto os = out.open("metrics.csv");
        write_metrics_csv(os, runs);
      }
      for (const auto& r : runs) {
        const std::string name = to_string(r.strategy);
        out.trajectory("executed_" + name + ".csv", r.executed);
        out.text("overlay_" + name + ".svg", overlay_svg(r, p.overlay_channel, p.overlay_span));
        if (r.strategy == StrategyKind::rtg) {
          auto os = out.open("telemetry_rtg.csv");
          os << telemetry_csv_header() << '\n';
          for (const auto& rec : r.telemetry) os << telemetry_csv_row(rec) << '\n';
        }
      }
    }
  }
  results["max_boundary_discontinuity_per_seed"] = per_seed;
  if (has(StrategyKind::rtg)) {
    results["rtg_velocity_excess"] = worst_excess;
    results["rtg_min_transitions"] = min_transitions;
    checks.add("rtg_velocity_within_limits", rtg_bound);
    checks.add("rtg_splice_continuity", rtg_continuity);
    checks.add("rtg_no_pauses", rtg_pause);
  }
  if (has(StrategyKind::synchronous)) checks.add("synchronous_pause_matches_latency", sync_pause);
  if (has(StrategyKind::rtg) && has(StrategyKind::async_history_fusion) && has(StrategyKind::async_naive))
    checks.add("discontinuity_ordering", ordering);
  if (has(StrategyKind::rtg) && has(StrategyKind::async_history_fusion))
    checks.add("rtg_tracks_latest_chunk", rtg_tracking);
}

double pose_gap(const Pose& a, const Pose& b) {
  return std::max((a.p - b.p).lpNorm<Eigen::Infinity>(), (a.r.matrix() - b.r.matrix()).lpNorm<Eigen::Infinity>());
}

double max_pose_error(const std::vector<Pose>& a, const std::vector<Pose>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, pose_gap(a[k], b[k]));
  return worst;
}

void repr_roundtrip(const ReprAblationParams& p, OutputDir& out, Json& results, Checks& checks) {
  auto csv = out.open("roundtrip.csv");
  csv << "reference,case,max_error\n";
  Json cases = Json::array();
  double worst = 0.0, worst_offset = 0.0;
  const Pose offset{Vec3(1.5, -2.0, 0.3), rot_z(0.7) * rot_x(0.3)};

  for (std::size_t ri = 0; ri < p.references.size(); ++ri) {
    const auto& data = p.references[ri]->data();
    const std::string ref = fs::path(p.reference_paths[ri]).stem().string();
    const std::size_t n = p.roundtrip_steps + 1;
    auto record = [&](const std::string& name, double err, bool offset_case = false) {
      csv << ref << ',' << name << ',' << fmt(err) << '\n';
      cases.push_back(Json{{"reference", ref}, {"case", name}, {"max_error", err}});
      (offset_case ? worst_offset : worst) = std::max(offset_case ? worst_offset : worst, err);
    };

    ActionChunk chunk;
    chunk.t_obs = data.t.front();
    chunk.dt = (data.t[n - 1] - data.t.front()) / static_cast<double>(n - 1);
    chunk.frames.assign(data.frames.begin(), data.frames.begin() + static_cast<std::ptrdiff_t>(n));
    for (ReprTag tag : {ReprTag::absolute_world, ReprTag::robot_delta, ReprTag::egocentric_delta})
      for (RobotFrameAnchor anchor : {RobotFrameAnchor::instantaneous, RobotFrameAnchor::episode_start}) {
        if (tag != ReprTag::robot_delta && anchor == RobotFrameAnchor::episode_start) continue;
        const auto back = to_absolute(to_repr(chunk, tag, chunk.frames.front(), anchor));
        double err = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          for (double v : channel_change(chunk.frames[k], back.frames[k])) err = std::max(err, v);
        std::string name = "whole_body_" + to_string(tag);
        if (tag == ReprTag::robot_delta)
          name += anchor == RobotFrameAnchor::instantaneous ? "_instantaneous" : "_episode_start";
        record(name, err);
      }

    std::vector<Pose> base;
    for (std::size_t k = 0; k < n; ++k) base.push_back(chunk.frames[k].base.to_pose());
    for (Arm arm : {Arm::left, Arm::right}) {
      const std::string side = arm == Arm::left ? "left" : "right";
      std::vector<Pose> ee, moved;
      for (std::size_t k = 0; k < n; ++k) {
        ee.push_back(chunk.frames[k].ee(arm));
        moved.push_back(compose(offset, ee.back()));
      }
      record("ee_" + side + "_egocentric", max_pose_error(apply_egocentric_delta(ee.front(), to_egocentric_delta(ee)), ee));
      for (RobotFrameAnchor anchor : {RobotFrameAnchor::instantaneous, RobotFrameAnchor::episode_start}) {
        const auto back = apply_robot_delta(ee.front(), to_robot_delta(ee, base, anchor), base, anchor);
        record("ee_" + side + "_robot_" +
                   (anchor == RobotFrameAnchor::instantaneous ? std::string("instantaneous") : "episode_start"),
               max_pose_error(back, ee));
      }
      record("ee_" + side + "_egocentric_rigid_offset",
             max_pose_error(to_egocentric_delta(ee), to_egocentric_delta(moved)), true);
    }
  }
  results["roundtrip"] = Json{{"steps", p.roundtrip_steps},
                              {"max_error", worst},
                              {"max_rigid_offset_error", worst_offset},
                              {"cases", cases}};
  checks.add("roundtrip_within_tolerance", worst <= p.roundtrip_tolerance);
  checks.add("rigid_offset_invariance", worst_offset <= p.offset_tolerance);
}

void repr_smoothness(const ReprAblationParams& p, std::uint64_t seed0, OutputDir& out, Json& results,
                     Checks& checks) {
  auto csv = out.open("smoothness.csv");
  csv << "reference,variant,seed,boundary_change\n";
  Json refs = Json::array();
  bool ratio_ok = true;
  for (std::size_t ri = 0; ri < p.references.size(); ++ri) {
    const std::string ref = fs::path(p.reference_paths[ri]).stem().string();
    Json medians;
    std::map<std::string, double> med;
    for (const auto& v : p.variants) {
      std::vector<double> values;
      for (std::size_t i = 0; i < p.seeds; ++i) {
        ChunkSourceConfig sc = p.source;
        sc.reference = p.references[ri];
        sc.repr = v.repr;
        sc.noise_mode = v.noise;
        sc.set_sigma(v.sigma);
        sc.seed = seed0 + i;
        const double m = boundary_change_metric(run(StrategyKind::async_naive, ChunkSource(sc), p.exec));
        csv << ref << ',' << v.label << ',' << sc.seed << ',' << fmt(m) << '\n';
        values.push_back(m);
      }
      med[v.label] = median_of(values);
      medians[v.label] = med[v.label];
    }
    Json entry{{"reference", ref}, {"median_boundary_change", medians}};
    if (!p.ratio_numerator.empty()) {
      const double ratio = med[p.ratio_numerator] / med[p.ratio_denominator];
      entry["ratio"] = ratio;
      ratio_ok &= ratio >= p.min_ratio;
    }
    refs.push_back(entry);
  }
  results["smoothness"] = Json{{"seeds", p.seeds}, {"executor", "async_naive"}, {"references", refs}};
  if (!p.ratio_numerator.empty())
    checks.add("boundary_change_ratio_" + p.ratio_numerator + "_over_" + p.ratio_denominator, ratio_ok);
}

void repr_compactness_study(const ReprAblationParams& p, OutputDir& out, Json& results) {
  std::vector<std::vector<WholeBodyAction>> segments;
  for (const auto& ref : p.references) {
    const auto& d = ref->data();
    std::size_t begin = 0;
    for (std::size_t k = 1; k < d.t.size(); ++k) {
      if (d.t[k] - d.t[begin] >= p.segment) {
        segments.emplace_back(d.frames.begin() + static_cast<std::ptrdiff_t>(begin),
                              d.frames.begin() + static_cast<std::ptrdiff_t>(k + 1));
        begin = k;
      }
    }
  }
  if (segments.size() < 2) throw InvalidInput("the compactness study needs at least two segments");
  auto csv = out.open("compactness.csv");
  csv << "repr,arm,mean_variance\n";
  Json rows = Json::array();
  for (ReprTag tag : {ReprTag::absolute_world, ReprTag::robot_delta, ReprTag::egocentric_delta})
    for (Arm arm : {Arm::left, Arm::right}) {
      const auto s = repr_compactness(segments, tag, arm, p.common_length);
      const std::string side = arm == Arm::left ? "left" : "right";
      csv << to_string(tag) << ',' << side << ',' << fmt(s.mean_variance) << '\n';
      rows.push_back(Json{{"repr", to_string(tag)}, {"arm", side}, {"mean_variance", s.mean_variance}});
    }
  results["compactness"] = Json{{"segments", segments.size()}, {"segment_length", p.segment}, {"rows", rows}};
}

void repr_ablation(const Scenario& sc, OutputDir& out, Json& results, Checks& checks) {
  const ReprAblationParams& p = sc.repr_ablation;
  if (p.roundtrip) repr_roundtrip(p, out, results, checks);
  if (p.smoothness) repr_smoothness(p, sc.seed, out, results, checks);
  if (p.compactness) repr_compactness_study(p, out, results);
}

std::vector<JointState> error_reference(const ErrorPropagationParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-p.spread, p.spread);
  std::vector<JointState> ref;
  for (std::size_t k = 0; k < p.points; ++k) {
    JointState q(static_cast<Eigen::Index>(p.model->dof()));
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = u(rng);
    ref.push_back(q);
  }
  return ref;
}

void error_propagation(const Scenario& sc, OutputDir& out, Json& results, Checks& checks) {
  const ErrorPropagationParams& p = sc.error_propagation;
  const auto ref = error_reference(p, sc.seed);
  std::map<std::string, std::vector<std::size_t>> joints;
  for (const auto& s : p.scopes) {
    auto& js = joints[s.label];
    for (BodySegment seg : s.segments) {
      const auto part = p.model->joints_in(seg);
      js.insert(js.end(), part.begin(), part.end());
    }
  }

  auto csv = out.open("error_propagation.csv");
  csv << "seed,scope,joints,rms_position_error\n";
  std::map<std::string, std::vector<double>> rms;
  for (std::size_t i = 0; i < p.seeds; ++i) {
    const std::uint64_t seed = sc.seed + i;
    for (const auto& s : p.scopes) {
      const double e =
          error_propagation_experiment(*p.model, ref, p.sigma, joints[s.label], p.trials, seed, p.arm).rms_position_error;
      rms[s.label].push_back(e);
      csv << seed << ',' << s.label << ',' << joints[s.label].size() << ',' << fmt(e) << '\n';
    }
  }
  Json scopes = Json::array();
  for (const auto& s : p.scopes)
    scopes.push_back(Json{{"scope", s.label},
                          {"joints", joints[s.label].size()},
                          {"rms_position_error", rms[s.label].front()},
                          {"median_over_seeds", median_of(rms[s.label])}});
  results["model"] = p.model->name();
  results["sigma"] = p.sigma;
  results["trials"] = p.trials;
  results["points"] = p.points;
  results["seeds"] = p.seeds;
  results["scopes"] = scopes;
  if (!p.wider.empty()) {
    const auto& w = rms[p.wider];
    const auto& n = rms[p.narrower];
    std::size_t positive = 0;
    for (std::size_t i = 0; i < w.size(); ++i) positive += w[i] - n[i] > 0.0 ? 1 : 0;
    const double fraction = static_cast<double>(positive) / static_cast<double>(w.size());
    results["paired_positive_fraction"] = fraction;
    checks.add(p.wider + "_exceeds_" + p.narrower, w.front() > n.front());
    checks.add("paired_difference_positive", fraction >= p.min_fraction);
  }
}

Json latency_json(const LatencyStats& s) {
  return Json{{"samples", s.samples}, {"median", s.median}, {"p99", s.p99}, {"mean", s.mean}, {"min", s.min},
              {"max", s.max}};
}

void throughput(const Scenario& sc, Json& results, Checks& checks) {
  const ThroughputParams& p = sc.throughput;
  Json runs = Json::array();
  double main_median = 0.0;
  for (std::size_t i = 0; i < p.chunk_lens.size(); ++i) {
    const auto r = throughput_bench(p.chunk_lens[i], p.channels, p.repetitions, sc.seed);
    if (i == 0) main_median = r.ingest.median;
    runs.push_back(Json{{"chunk_len", r.chunk_len},
                        {"channels", r.channels},
                        {"accepted", r.accepted},
                        {"ingest", latency_json(r.ingest)}});
  }
  results["ingest"] = runs;
  checks.add("ingest_median_within_budget", main_median <= p.max_median);
  if (p.scaling) {
    const auto doubled = throughput_bench(p.chunk_lens.front(), 2 * p.channels, p.repetitions, sc.seed);
    const double ratio = doubled.ingest.median / main_median;
    results["scaling"] = Json{{"channels", 2 * p.channels}, {"ingest", latency_json(doubled.ingest)}, {"ratio", ratio}};
    checks.add("channel_doubling_ratio", ratio <= p.max_scaling_ratio);
  }
  const auto smp = sample_latency_bench(p.chunk_lens.front(), p.channels, p.sample_queries, sc.seed);
  results["sample"] = latency_json(smp);
  checks.add("sample_p99_within_budget", smp.p99 <= p.max_sample_p99);
  results["machine"] = machine_info();
}

void rtg_unit(const Scenario& sc, OutputDir& out, Json& results, Checks& checks) {
  const RtgUnitParams& p = sc.rtg_unit;
  const ChannelLayout layout = ChannelLayout::plain(p.channels);
  VirtualClock clock;
  RtgEngine engine(layout, p.rtg, clock);

  auto make_chunk = [&](std::size_t k) {
    ChannelChunk c;
    c.t_obs = static_cast<double>(k) * p.t1;
    c.dt = p.dt;
    const double off = k % 2 == 0 ? p.offset : -p.offset;
    for (std::size_t i = 0; i < p.chunk_len; ++i) {
      ChannelFrame f;
      f.scalar.resize(static_cast<Eigen::Index>(p.channels));
      const double t = c.t_obs + static_cast<double>(i) * p.dt;
      for (std::size_t ch = 0; ch < p.channels; ++ch)
        f.scalar[static_cast<Eigen::Index>(ch)] = p.slope * t + off + 0.01 * static_cast<double>(ch);
      c.frames.push_back(std::move(f));
    }
    return c;
  };

  auto csv = out.open("rtg_unit.csv");
  csv << 't';
  for (std::size_t ch = 0; ch < p.channels; ++ch) csv << ",x_" << ch;
  for (std::size_t ch = 0; ch < p.channels; ++ch) csv << ",v_" << ch;
  csv << '\n';

  std::size_t next = 0;
  auto ingest_next = [&] {
    const ChannelChunk c = make_chunk(next);
    clock.set(c.t_obs + p.t1);
    engine.ingest(c);
    ++next;
  };
  ingest_next();
  if (!engine.trajectory()) throw InvalidInput("the first rtg_unit chunk was rejected");
  const double t0 = engine.trajectory()->t_start();
  const double t_stop = static_cast<double>(p.chunks - 1) * p.t1 + static_cast<double>(p.chunk_len - 1) * p.dt;
  double max_ratio = 0.0, max_fd = 0.0;
  std::optional<Eigen::VectorXd> prev;
  for (std::size_t k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) * p.control_dt;
    if (t > t_stop + 1e-12) break;
    while (next < p.chunks && static_cast<double>(next + 1) * p.t1 <= t) ingest_next();
    const auto traj = engine.trajectory();
    const auto ev = traj->eval(t);
    csv << fmt(t);
    for (Eigen::Index ch = 0; ch < ev.x.size(); ++ch) csv << ',' << fmt(ev.x[ch]);
    for (Eigen::Index ch = 0; ch < ev.v.size(); ++ch) csv << ',' << fmt(ev.v[ch]);
    csv << '\n';
    max_ratio = std::max(max_ratio, ev.v.cwiseAbs().maxCoeff() / p.v_max);
    if (prev) max_fd = std::max(max_fd, (ev.x - *prev).cwiseAbs().maxCoeff() / p.control_dt);
    prev = ev.x;
  }

  auto tel = out.open("telemetry.csv");
  tel << telemetry_csv_header() << '\n';
  std::size_t accepted = 0;
  double max_pos_jump = 0.0, max_vel_jump = 0.0;
  for (const auto& rec : engine.telemetry()) {
    tel << telemetry_csv_row(rec) << '\n';
    accepted += rec.accepted() ? 1 : 0;
    max_pos_jump = std::max(max_pos_jump, rec.splice_position_jump);
    max_vel_jump = std::max(max_vel_jump, rec.splice_velocity_jump);
  }
  results["chunks"] = next;
  results["accepted"] = accepted;
  results["max_velocity_ratio"] = max_ratio;
  results["max_finite_difference_velocity"] = max_fd;
  results["max_splice_position_jump"] = max_pos_jump;
  results["max_splice_velocity_jump"] = max_vel_jump;
  checks.add("all_chunks_accepted", accepted == next);
  checks.add("velocity_within_limit", max_ratio <= 1.0 + 1e-9 && max_fd <= p.v_max + 1e-9);
  checks.add("splice_continuity", max_pos_jump <= 1e-6 && max_vel_jump <= 1e-6);
}

}  // namespace

LatencyStats latency_stats(std::vector<double> s) {
  LatencyStats out;
  out.samples = s.size();
  if (s.empty()) return out;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  out.median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n)));
  out.p99 = s[std::max<std::size_t>(rank, 1) - 1];
  double sum = 0.0;
  for (double v : s) sum += v;
  out.mean = sum / static_cast<double>(n);
  out.min = s.front();
  out.max = s.back();
  return out;
}

ThroughputResult throughput_bench(std::size_t chunk_len, std::size_t channels, std::size_t repetitions,
                                  std::uint64_t seed, Exec exec) {
  if (repetitions < 100) throw InvalidInput("throughput_bench needs at least 100 repetitions");
  if (chunk_len < 2 || channels < 1) throw InvalidInput("throughput_bench needs chunk_len >= 2 and channels >= 1");
  std::mt19937_64 rng(seed);
  VirtualClock clock;
  RtgEngine engine(ChannelLayout::plain(channels), bench_config(channels, exec), clock);
  clock.set(kBenchLatency);
  engine.ingest(bench_chunk(0, chunk_len, channels, rng));

  ThroughputResult r;
  r.chunk_len = chunk_len;
  r.channels = channels;
  std::vector<double> times;
  times.reserve(repetitions);
  for (std::size_t k = 1; k <= repetitions; ++k) {
    const ChannelChunk c = bench_chunk(k, chunk_len, channels, rng);
    clock.set(c.t_obs + kBenchLatency);
    const auto t0 = WallClock::now();
    const TelemetryRecord rec = engine.ingest(c);
    times.push_back(seconds_since(t0));
    r.accepted += rec.accepted() ? 1 : 0;
  }
  r.ingest = latency_stats(std::move(times));
  return r;
}

LatencyStats sample_latency_bench(std::size_t chunk_len, std::size_t channels, std::size_t queries,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  VirtualClock clock;
  RtgEngine engine(ChannelLayout::plain(channels), bench_config(channels, Exec::parallel), clock);
  for (std::size_t k = 0; k < 4; ++k) {
    const ChannelChunk c = bench_chunk(k, chunk_len, channels, rng);
    clock.set(c.t_obs + kBenchLatency);
    engine.ingest(c);
  }
  const auto traj = engine.trajectory();
  if (!traj) throw InvalidInput("sample_latency_bench could not build a trajectory");
  std::uniform_real_distribution<double> u(traj->t_start(), traj->t_end());
  std::vector<double> times;
  times.reserve(queries);
  double sink = 0.0;
  for (std::size_t q = 0; q < queries; ++q) {
    const double t = u(rng);
    const auto t0 = WallClock::now();
    const RtgSample s = engine.sample(t);
    times.push_back(seconds_since(t0));
    sink += s.frame.scalar[0];
  }
  if (!std::isfinite(sink)) throw std::runtime_error("non-finite sample");
  return latency_stats(std::move(times));
}

Json machine_info() {
  Json j;
  j["hardware_threads"] = std::thread::hardware_concurrency();
  j["parallel_backend"] = parallel_backend();
  j["max_threads"] = max_threads();
#ifdef __VERSION__
  j["compiler"] = __VERSION__;
#endif
  std::ifstream cpu("/proc/cpuinfo");
  for (std::string line; std::getline(cpu, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) j["cpu"] = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return j;
}

std::vector<RunResult> run_strategy_compare(const StrategyCompareParams& p, std::uint64_t seed) {
  ChunkSourceConfig sc = p.source;
  sc.seed = seed;
  const ChunkSource source(sc);
  std::vector<RunResult> out;
  for (StrategyKind k : p.strategies) out.push_back(run(k, source, p.exec));
  return out;
}

double velocity_excess(const RunResult& r, const WholeBodyLimits& limits) {
  const auto v = whole_body_velocity_limits(limits);
  const std::size_t S = whole_body_layout().scalars();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < r.executed.frames.size(); ++k) {
    const double h = r.executed.t[k] - r.executed.t[k - 1];
    const ChannelFrame a = to_channels(r.executed.frames[k - 1]);
    const ChannelFrame b = to_channels(r.executed.frames[k]);
    for (std::size_t c = 0; c < S; ++c) {
      double d = b.scalar[static_cast<Eigen::Index>(c)] - a.scalar[static_cast<Eigen::Index>(c)];
      if (whole_body_layout().angular[c]) d = wrap_angle(d);
      worst = std::max(worst, std::abs(d) / h - v[c]);
    }
    for (std::size_t j = 0; j < a.rot.size(); ++j)
      worst = std::max(worst, geodesic_angle(a.rot[j], b.rot[j]) / h - std::sqrt(3.0) * v[S + j]);
  }
  return worst;
}

double boundary_change_metric(const RunResult& r) {
  const auto stats = trajectory_stats(r.executed.frames, boundary_ticks(r));
  if (!stats.mean_boundary_change) throw InvalidInput("run has no chunk boundaries");
  return aggregate_over(*stats.mean_boundary_change, ee_metric_channels());
}

ScenarioOutcome run_scenario(const Scenario& sc, const std::string& out_root) {
  OutputDir out(fs::path(out_root) / sc.output);
  Json results = Json::object();
  Checks checks;
  switch (sc.kind) {
    case ScenarioKind::strategy_compare: strategy_compare(sc, out, results, checks); break;
    case ScenarioKind::repr_ablation: repr_ablation(sc, out, results, checks); break;
    case ScenarioKind::error_propagation: error_propagation(sc, out, results, checks); break;
    case ScenarioKind::throughput: throughput(sc, results, checks); break;
    case ScenarioKind::rtg_unit: rtg_unit(sc, out, results, checks); break;
  }

  ScenarioOutcome o;
  o.checks_passed = checks.all();
  o.files = out.files();
  o.files.push_back("report.json");
  Json& rep = o.report;
  rep["status"] = o.checks_passed ? "ok" : "checks_failed";
  rep["scenario"] = sc.name;
  rep["kind"] = to_string(sc.kind);
  rep["config"] = fs::path(sc.path).filename().string();
  rep["config_hash"] = hash_hex(sc.config_hash);
  rep["seed"] = sc.seed;
  rep["checks"] = checks.json();
  rep["results"] = results;
  rep["files"] = o.files;
  out.text("report.json", rep.dump(2) + "\n");
  return o;
}

Json error_record(const std::exception_ptr& e) {
  Json j;
  j["status"] = "error";
  try {
    std::rethrow_exception(e);
  } catch (const ParseError& x) {
    j["error"] = "parse_error";
    j["file"] = x.file();
    j["line"] = x.line();
    j["message"] = x.message();
  } catch (const FileNotFound& x) {
    j["error"] = "file_not_found";
    j["path"] = x.path();
    j["message"] = x.what();
  } catch (const InvalidInput& x) {
    j["error"] = "invalid_input";
    j["message"] = x.what();
  } catch (const SourceExhausted& x) {
    j["error"] = "source_exhausted";
    j["message"] = x.what();
  } catch (const std::exception& x) {
    j["error"] = "runtime_error";
    j["message"] = x.what();
  } catch (...) {
    j["error"] = "unknown";
    j["message"] = "non-standard exception";
  }
  return j;
}

std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace chunkrt
