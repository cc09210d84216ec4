#include "chunkrt/exec_strategies.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>

#include "chunkrt/clock.hpp"
#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

constexpr double kTimeEps = 1e-12;
/// Step for one-sided numerical rates of command sources at a switch.
constexpr double kRateStep = 1e-6;

double chunk_tau(const ChunkRecord& r, double t) { return t - r.time_shift - r.chunk.t_obs; }

bool covers(const ChunkRecord& r, double t) {
  const double tau = chunk_tau(r, t);
  return tau >= -kTimeEps && tau <= r.chunk.duration() + kTimeEps;
}

WholeBodyAction chunk_at(const ChunkRecord& r, double t) { return sample_chunk(r.chunk, chunk_tau(r, t)); }

double max_of(const ChannelValues& v) { return *std::max_element(v.begin(), v.end()); }

/// Signed per-channel rate between two commands, rotations as world-frame
/// rotation vectors; scalar channels use the first component only.
std::array<Vec3, kMetricChannels> rates(const WholeBodyAction& a, const WholeBodyAction& b, double dt) {
  std::array<Vec3, kMetricChannels> r;
  for (auto& v : r) v.setZero();
  auto put = [&](std::size_t c, double d) { r[c][0] = d / dt; };
  put(0, b.base.x - a.base.x);
  put(1, b.base.y - a.base.y);
  put(2, wrap_angle(b.base.yaw - a.base.yaw));
  for (std::size_t j = 0; j < 4; ++j) put(3 + j, b.torso[j] - a.torso[j]);
  for (std::size_t j = 0; j < 3; ++j) put(7 + j, b.ee_left.p[j] - a.ee_left.p[j]);
  r[10] = so3_log(b.ee_left.r * a.ee_left.r.transpose()) / dt;
  put(11, b.grip_left - a.grip_left);
  for (std::size_t j = 0; j < 3; ++j) put(12 + j, b.ee_right.p[j] - a.ee_right.p[j]);
  r[15] = so3_log(b.ee_right.r * a.ee_right.r.transpose()) / dt;
  put(16, b.grip_right - a.grip_right);
  for (std::size_t j = 0; j < 2; ++j) put(17 + j, b.head[j] - a.head[j]);
  return r;
}

/// Jump between an outgoing source (left limit) and an incoming one (right
/// limit) at time t.
template <class Old, class New>
Transition measure_switch(double t, Old&& old_src, New&& new_src) {
  Transition tr;
  tr.t = t;
  const WholeBodyAction a = old_src(t), b = new_src(t);
  tr.position_jump = max_of(channel_change(a, b));
  const auto va = rates(old_src(t - kRateStep), a, kRateStep);
  const auto vb = rates(b, new_src(t + kRateStep), kRateStep);
  for (std::size_t c = 0; c < kMetricChannels; ++c) tr.velocity_jump = std::max(tr.velocity_jump, (va[c] - vb[c]).norm());
  return tr;
}

/// Length of the part of [a, b] inside [lo, hi].
double overlap(double a, double b, double lo, double hi) { return std::max(0.0, std::min(b, hi) - std::max(a, lo)); }

class Simulator {
 public:
  Simulator(StrategyKind s, const ChunkProvider& src, const ExecConfig& cfg)
      : s_(s), src_(src), cfg_(cfg), t_begin_(src.t_begin()), t_end_(t_begin_ + cfg.duration),
        start_state_(src.start_state()) {
    res_.strategy = s;
    if (s == StrategyKind::rtg) {
      RtgConfig rc = cfg.rtg;
      if (rc.v_max.empty()) rc.v_max = whole_body_velocity_limits(cfg.limits);
      engine_.emplace(whole_body_layout(), rc, clock_);
    }
  }

  RunResult run() {
    if (s_ == StrategyKind::synchronous)
      run_sync();
    else
      run_async();
    finish_metrics();
    return std::move(res_);
  }

 private:
  std::optional<ChunkRecord> request(double wall, double t_obs, const WholeBodyAction& observed) {
    if (!src_.can_serve(t_obs)) {
      res_.metrics.truncated = true;
      return std::nullopt;
    }
    auto [chunk, t1] = src_.next_chunk(t_obs, observed);
    ChunkRecord r;
    r.chunk = to_absolute(chunk);
    r.t_request = wall;
    r.t1 = t1;
    r.arrival = wall + t1;
    r.time_shift = 0.0;
    return r;
  }

  void emit(double t, const WholeBodyAction& a, bool held) {
    res_.executed.t.push_back(t);
    res_.executed.frames.push_back(a);
    res_.held.push_back(held);
    last_cmd_ = a;
  }

  // ---- synchronous ----

  void run_sync() {
    const double horizon = cfg_.sync_horizon > 0.0 ? cfg_.sync_horizon : src_.chunk_duration();
    if (horizon > src_.chunk_duration() + kTimeEps) throw InvalidInput("sync_horizon exceeds the chunk duration");
    struct Segment {
      std::size_t chunk;
      double start, end;
    };
    std::vector<Segment> segs;
    double wall = t_begin_, task = t_begin_;
    WholeBodyAction observed = start_state_;
    while (wall < t_end_ - kTimeEps) {
      auto r = request(wall, task, observed);
      if (!r) break;
      if (r->arrival > t_end_) break;
      r->time_shift = r->arrival - r->chunk.t_obs;
      const double start = r->arrival;
      const double end = start + horizon;
      observed = sample_chunk(r->chunk, horizon);
      res_.chunks.push_back(std::move(*r));
      segs.push_back({res_.chunks.size() - 1, start, end});
      if (segs.size() > 1) {
        res_.metrics.total_pause_time += start - wall;
        ++res_.metrics.pause_count;
      }
      wall = end;
      task += horizon;
    }
    if (segs.empty()) throw InvalidInput("the chunk source cannot serve the first observation");
    // The run ends with the last segment that could start in time.
    const double stop = std::min(t_end_, segs.back().end);

    for (std::size_t k = 1; k < segs.size(); ++k) {
      const ChunkRecord& prev = res_.chunks[segs[k - 1].chunk];
      const ChunkRecord& next = res_.chunks[segs[k].chunk];
      const WholeBodyAction hold = sample_chunk(prev.chunk, chunk_tau(prev, segs[k - 1].end));
      auto old_src = [&](double) { return hold; };
      auto new_src = [&](double t) { return chunk_at(next, t); };
      res_.transitions.push_back(measure_switch(segs[k].start, old_src, new_src));
    }

    std::size_t seg = 0;
    for (std::size_t k = 0;; ++k) {
      const double t = segs.front().start + static_cast<double>(k) * cfg_.control_dt;
      if (t > stop + kTimeEps) break;
      while (seg + 1 < segs.size() && t >= segs[seg + 1].start - kTimeEps) ++seg;
      const Segment& sg = segs[seg];
      if (t <= sg.end + kTimeEps && t >= sg.start - kTimeEps) {
        emit(t, chunk_at(res_.chunks[sg.chunk], t), false);
        latest_ = sg.chunk;
      } else {
        emit(t, last_cmd_, true);
      }
      track(t);
    }
  }

  // ---- asynchronous modes ----

  WholeBodyAction fused(double t, std::size_t n, std::optional<std::size_t> skip = {}) const {
    std::vector<const ChunkRecord*> buf;
    for (std::size_t i = 0; i < n; ++i)
      if (i != skip) buf.push_back(&res_.chunks[i]);
    return history_fusion_action(buf, t, cfg_.fusion_decay);
  }

  bool any_cover(double t, std::size_t n) const {
    for (std::size_t i = 0; i < n; ++i)
      if (covers(res_.chunks[i], t)) return true;
    return false;
  }

  /// The state the robot follows from an arrival at T on, which is what
  /// the next observation sees.
  WholeBodyAction observed_after(double T) const {
    if (s_ == StrategyKind::rtg) {
      const auto traj = engine_->trajectory();
      if (!traj) return start_state_;
      return from_channels(engine_->sample(std::max(T, traj->t_start())).frame);
    }
    const std::size_t n = res_.chunks.size();
    if (s_ == StrategyKind::async_naive) return chunk_at(res_.chunks[n - 1], T);
    if (any_cover(T, n)) return fused(T, n);
    return have_cmd_ ? last_cmd_ : start_state_;
  }

  void apply_arrival(ChunkRecord r) {
    const double T = r.arrival;
    const std::size_t n = res_.chunks.size();
    if (s_ == StrategyKind::rtg) {
      clock_.set(T);
      const TelemetryRecord rec = engine_->ingest(to_channel_chunk(r.chunk));
      r.accepted = rec.accepted();
      res_.telemetry.push_back(rec);
      if (r.accepted) {
        const auto traj = engine_->trajectory();
        if (have_traj_) {
          res_.transitions.push_back({T + rec.t2_budget, rec.splice_position_jump, rec.splice_velocity_jump});
          authority_.push_back({T + rec.t2_budget, traj->t_end()});
        } else {
          authority_.push_back({traj->t_start(), traj->t_end()});
        }
        have_traj_ = true;
      }
      res_.chunks.push_back(std::move(r));
      if (res_.chunks.back().accepted) latest_ = res_.chunks.size() - 1;
      return;
    }
    if (s_ == StrategyKind::async_naive && n > 0) {
      const ChunkRecord& old = res_.chunks[n - 1];
      res_.transitions.push_back(
          measure_switch(T, [&](double t) { return chunk_at(old, t); }, [&](double t) { return chunk_at(r, t); }));
    }
    if (s_ == StrategyKind::async_history_fusion && any_cover(T, n)) {
      std::vector<const ChunkRecord*> with;
      for (std::size_t i = 0; i < n; ++i) with.push_back(&res_.chunks[i]);
      with.push_back(&r);
      res_.transitions.push_back(measure_switch(
          T, [&](double t) { return fused(t, n); },
          [&](double t) { return history_fusion_action(with, t, cfg_.fusion_decay); }));
    }
    res_.chunks.push_back(std::move(r));
    latest_ = res_.chunks.size() - 1;
  }

  std::pair<WholeBodyAction, bool> command(double t) const {
    const std::size_t n = res_.chunks.size();
    switch (s_) {
      case StrategyKind::async_naive: {
        const ChunkRecord& c = res_.chunks[n - 1];
        return {chunk_at(c, t), !covers(c, t) && chunk_tau(c, t) > 0.0};
      }
      case StrategyKind::async_history_fusion:
        if (any_cover(t, n)) return {fused(t, n), false};
        return {last_cmd_, true};
      default: {
        const RtgSample smp = engine_->sample(t);
        return {from_channels(smp.frame), smp.exhausted};
      }
    }
  }

  void run_async() {
    auto pending = request(t_begin_, t_begin_, start_state_);
    if (!pending) throw InvalidInput("the chunk source cannot serve the first observation");
    const double t0 = pending->arrival + cfg_.rtg.t2_budget;
    double stop = t_end_;
    for (std::size_t k = 0;; ++k) {
      const double t = t0 + static_cast<double>(k) * cfg_.control_dt;
      if (t > stop + kTimeEps) break;
      while (pending && pending->arrival <= t) {
        const double T = pending->arrival;
        apply_arrival(std::move(*pending));
        pending = T < t_end_ ? request(T, T, observed_after(T)) : std::nullopt;
      }
      if (s_ == StrategyKind::rtg && !have_traj_) throw InvalidInput("the first chunk was rejected");
      const auto [cmd, held] = command(t);
      if (held && res_.metrics.truncated && !pending) {
        stop = t;
        break;
      }
      emit(t, cmd, held);
      have_cmd_ = true;
      track(t);
    }
    const double run_end = std::min(stop, t0 + std::floor((stop - t0) / cfg_.control_dt + 1e-9) * cfg_.control_dt);
    if (s_ == StrategyKind::async_history_fusion) add_fusion_expiries(t0, run_end);
    async_pauses(t0, run_end);
  }

  /// A chunk leaving the fusion buffer also moves the average.
  void add_fusion_expiries(double t0, double run_end) {
    const std::size_t n = res_.chunks.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double E = res_.chunks[i].chunk.t_obs + res_.chunks[i].chunk.duration();
      if (E < t0 || E > run_end) continue;
      std::size_t arrived = 0;
      while (arrived < n && res_.chunks[arrived].arrival <= E) ++arrived;
      bool others = false;
      for (std::size_t j = 0; j < arrived; ++j)
        if (j != i && covers(res_.chunks[j], E + kRateStep)) others = true;
      if (!others) continue;
      res_.transitions.push_back(measure_switch(
          E, [&](double t) { return fused(t, arrived); }, [&](double t) { return fused(t, arrived, i); }));
    }
    std::sort(res_.transitions.begin(), res_.transitions.end(),
              [](const Transition& a, const Transition& b) { return a.t < b.t; });
  }

  void async_pauses(double t0, double run_end) {
    // Held intervals between content end and the next authority switch.
    std::vector<std::pair<double, double>> spans;  // (authority start, content end)
    if (s_ == StrategyKind::rtg) {
      spans = authority_;
    } else if (s_ == StrategyKind::async_naive) {
      for (const auto& c : res_.chunks) spans.push_back({c.arrival, c.chunk.t_obs + c.chunk.duration()});
    } else {
      // Fusion holds only where no chunk covers: walk the union of coverage.
      std::vector<std::pair<double, double>> iv;
      for (const auto& c : res_.chunks) iv.push_back({c.arrival, c.chunk.t_obs + c.chunk.duration()});
      std::sort(iv.begin(), iv.end());
      for (const auto& [a, b] : iv) {
        if (!spans.empty() && a <= spans.back().second) {
          spans.back().second = std::max(spans.back().second, b);
        } else {
          spans.push_back({a, b});
        }
      }
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
      const double next = i + 1 < spans.size() ? spans[i + 1].first : run_end;
      const double gap = overlap(std::max(spans[i].second, spans[i].first), next, t0, run_end);
      if (gap > kTimeEps) {
        res_.metrics.total_pause_time += gap;
        ++res_.metrics.pause_count;
      }
    }
  }

  // ---- metrics ----

  void track(double t) {
    if (!latest_) return;
    const ChunkRecord& c = res_.chunks[*latest_];
    if (!covers(c, t)) return;
    const auto d = channel_change(res_.executed.frames.back(), chunk_at(c, t));
    for (std::size_t i = 0; i < kMetricChannels; ++i) track_sq_[i] += d[i] * d[i];
    ++track_n_;
  }

  void finish_metrics() {
    RunMetrics& m = res_.metrics;
    const auto& f = res_.executed.frames;
    for (std::size_t k = 1; k < f.size(); ++k) {
      const auto d = channel_change(f[k - 1], f[k]);
      for (std::size_t c = 0; c < kMetricChannels; ++c) m.max_velocity[c] = std::max(m.max_velocity[c], d[c] / cfg_.control_dt);
    }
    m.transitions = res_.transitions.size();
    for (const auto& tr : res_.transitions) {
      m.mean_boundary_discontinuity += tr.position_jump;
      m.max_boundary_discontinuity = std::max(m.max_boundary_discontinuity, tr.position_jump);
      m.max_velocity_discontinuity = std::max(m.max_velocity_discontinuity, tr.velocity_jump);
    }
    if (m.transitions > 0) m.mean_boundary_discontinuity /= static_cast<double>(m.transitions);
    if (track_n_ > 0) {
      for (std::size_t c = 0; c < kMetricChannels; ++c) m.tracking_rms[c] = std::sqrt(track_sq_[c] / static_cast<double>(track_n_));
      m.tracking_rms_mean = aggregate(m.tracking_rms);
    }
    m.chunks = res_.chunks.size();
    for (const auto& c : res_.chunks) {
      if (!c.accepted) ++m.rejected;
      m.latency_mean += c.t1;
      m.latency_max = std::max(m.latency_max, c.t1);
    }
    if (m.chunks > 0) m.latency_mean /= static_cast<double>(m.chunks);
  }

  StrategyKind s_;
  const ChunkProvider& src_;
  const ExecConfig& cfg_;
  double t_begin_;
  double t_end_;
  WholeBodyAction start_state_;
  RunResult res_;
  WholeBodyAction last_cmd_;
  bool have_cmd_ = false;
  std::optional<std::size_t> latest_;
  ChannelValues track_sq_{};
  std::size_t track_n_ = 0;

  VirtualClock clock_;
  std::optional<RtgEngine> engine_;
  bool have_traj_ = false;
  std::vector<std::pair<double, double>> authority_;
};

}  // namespace

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::synchronous: return "synchronous";
    case StrategyKind::async_naive: return "async_naive";
    case StrategyKind::async_history_fusion: return "async_history_fusion";
    case StrategyKind::rtg: return "rtg";
  }
  return "unknown";
}

StrategyKind strategy_from_string(const std::string& s) {
  for (StrategyKind k : all_strategies())
    if (to_string(k) == s) return k;
  throw InvalidInput("unknown strategy '" + s + "'");
}

const std::vector<StrategyKind>& all_strategies() {
  static const std::vector<StrategyKind> all = {StrategyKind::synchronous, StrategyKind::async_naive,
                                                StrategyKind::async_history_fusion, StrategyKind::rtg};
  return all;
}

void ExecConfig::validate() const {
  if (!(control_dt > 0.0)) throw InvalidInput("control_dt must be positive");
  if (!(duration > 0.0)) throw InvalidInput("duration must be positive");
  if (!(fusion_decay >= 0.0)) throw InvalidInput("fusion decay must be >= 0");
}

RunResult run(StrategyKind strategy, const ChunkProvider& source, const ExecConfig& cfg) {
  cfg.validate();
  return Simulator(strategy, source, cfg).run();
}

std::vector<std::size_t> boundary_ticks(const RunResult& r) {
  std::vector<std::size_t> out;
  const auto& ts = r.executed.t;
  for (const auto& tr : r.transitions) {
    const auto k = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), tr.t - kTimeEps) - ts.begin());
    if (k > 0 && k < ts.size() && (out.empty() || out.back() != k)) out.push_back(k);
  }
  return out;
}

WholeBodyAction history_fusion_action(const std::vector<const ChunkRecord*>& buffer, double t, double m) {
  std::vector<WholeBodyAction> preds;
  for (const ChunkRecord* r : buffer)
    if (covers(*r, t)) preds.push_back(chunk_at(*r, t));
  if (preds.empty()) throw NoAction("no buffered chunk covers t = " + std::to_string(t));
  if (preds.size() == 1) return preds.front();

  std::vector<double> w(preds.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = std::exp(-m * static_cast<double>(i)));
  for (double& x : w) x /= total;

  const WholeBodyAction& newest = preds.back();
  WholeBodyAction out;
  out.base = {0.0, 0.0, 0.0};
  double dyaw = 0.0;
  Vec3 dl = Vec3::Zero(), dr = Vec3::Zero();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const WholeBodyAction& p = preds[i];
    out.base.x += w[i] * p.base.x;
    out.base.y += w[i] * p.base.y;
    dyaw += w[i] * wrap_angle(p.base.yaw - newest.base.yaw);
    for (std::size_t j = 0; j < 4; ++j) out.torso[j] += w[i] * p.torso[j];
    for (std::size_t j = 0; j < 2; ++j) out.head[j] += w[i] * p.head[j];
    out.ee_left.p += w[i] * p.ee_left.p;
    out.ee_right.p += w[i] * p.ee_right.p;
    dl += w[i] * so3_log(newest.ee_left.r.transpose() * p.ee_left.r);
    dr += w[i] * so3_log(newest.ee_right.r.transpose() * p.ee_right.r);
    out.grip_left += w[i] * p.grip_left;
    out.grip_right += w[i] * p.grip_right;
  }
  out.base.yaw = wrap_angle(newest.base.yaw + dyaw);
  out.ee_left.r = (newest.ee_left.r * so3_exp(dl)).renormalized();
  out.ee_right.r = (newest.ee_right.r * so3_exp(dr)).renormalized();
  out.grip_left = std::clamp(out.grip_left, 0.0, 1.0);
  out.grip_right = std::clamp(out.grip_right, 0.0, 1.0);
  return out;
}

WholeBodyAction history_fusion_action(const std::vector<ActionChunk>& buffer, double t, double m) {
  std::vector<ChunkRecord> recs(buffer.size());
  std::vector<const ChunkRecord*> ptrs;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    recs[i].chunk = to_absolute(buffer[i]);
    ptrs.push_back(&recs[i]);
  }
  return history_fusion_action(ptrs, t, m);
}

std::string metrics_csv_header() {
  std::ostringstream os;
  os << "strategy";
  for (const auto& n : metric_channel_names()) os << ",max_velocity_" << n;
  os << ",total_pause_time,pause_count,transitions,mean_boundary_discontinuity,max_boundary_discontinuity,"
        "max_velocity_discontinuity,tracking_rms_mean,chunks,rejected,latency_mean,latency_max,truncated";
  return os.str();
}

std::string metrics_csv_row(const RunResult& r) {
  const RunMetrics& m = r.metrics;
  std::ostringstream os;
  os << to_string(r.strategy);
  for (double v : m.max_velocity) os << ',' << format_double(v);
  os << ',' << format_double(m.total_pause_time) << ',' << m.pause_count << ',' << m.transitions << ','
     << format_double(m.mean_boundary_discontinuity) << ',' << format_double(m.max_boundary_discontinuity) << ','
     << format_double(m.max_velocity_discontinuity) << ',' << format_double(m.tracking_rms_mean) << ',' << m.chunks
     << ',' << m.rejected << ',' << format_double(m.latency_mean) << ',' << format_double(m.latency_max) << ','
     << (m.truncated ? 1 : 0);
  return os.str();
}

void write_metrics_csv(std::ostream& os, const std::vector<RunResult>& runs) {
  os << metrics_csv_header() << '\n';
  for (const auto& r : runs) os << metrics_csv_row(r) << '\n';
}

}  // namespace chunkrt
