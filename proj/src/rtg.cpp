#include "chunkrt/rtg.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "chunkrt/errors.hpp"
#include "chunkrt/trajectory_csv.hpp"

namespace chunkrt {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Piece = ExecutingTrajectory::Piece;

/// Peak |B(s)| of the quadratic Bezier with control values a, b, c on [0, 1].
double bezier_peak(double a, double b, double c) {
  double peak = std::max(std::abs(a), std::abs(c));
  const double den = a - 2.0 * b + c;
  if (den != 0.0) {
    const double s = (a - b) / den;
    if (s > 0.0 && s < 1.0) peak = std::max(peak, std::abs((1 - s) * (1 - s) * a + 2 * s * (1 - s) * b + s * s * c));
  }
  return peak;
}

std::size_t limit_index(const ChannelLayout& layout, Index coord) {
  const auto c = static_cast<std::size_t>(coord);
  return c < layout.scalars() ? c : layout.scalars() + (c - layout.scalars()) / 3;
}

void check_chunk(const ChannelChunk& chunk, const ChannelLayout& layout) {
  if (chunk.frames.size() < 2) throw InvalidInput("chunk needs at least two frames");
  if (!(chunk.dt > 0.0)) throw InvalidInput("chunk dt must be positive");
  if (!std::isfinite(chunk.t_obs)) throw InvalidInput("chunk timestamp is not finite");
  for (const auto& f : chunk.frames)
    if (static_cast<std::size_t>(f.scalar.size()) != layout.scalars() || f.rot.size() != layout.rotations())
      throw InvalidInput("chunk frame does not match the channel layout");
}

/// Trajectory pieces still needed after `from`, cut at `t_s`, with a hold
/// piece bridging any gap between an exhausted trajectory and the splice.
std::vector<Piece> keep_until(const ExecutingTrajectory& cur, double from, double t_s) {
  std::vector<Piece> out;
  const auto& pcs = cur.pieces();
  for (std::size_t i = 0; i < pcs.size(); ++i) {
    const Piece& p = pcs[i];
    if (p.t_end <= from && i + 1 < pcs.size()) continue;
    if (p.t_begin >= t_s) break;
    Piece q = p;
    q.t_end = std::min(q.t_end, t_s);
    out.push_back(std::move(q));
  }
  if (cur.t_end() < t_s) {
    const Piece& last = pcs.back();
    const auto e = cur.eval(cur.t_end());
    Piece hold;
    hold.t_begin = hold.t0 = cur.t_end();
    hold.t_end = t_s;
    hold.h = t_s - cur.t_end();
    hold.x.resize(2, e.x.size());
    hold.x.row(0) = e.x.transpose();
    hold.x.row(1) = e.x.transpose();
    hold.m = MatrixXd::Zero(2, e.x.size());
    hold.anchor = last.anchor;
    out.push_back(std::move(hold));
  }
  return out;
}

IngestOutcome blend(const ChannelChunk& chunk, double arrival, const ExecutingTrajectory* current,
                    const ChannelLayout& layout, const RtgConfig& cfg) {
  cfg.validate(layout);
  check_chunk(chunk, layout);

  TelemetryRecord rec;
  rec.t_obs = chunk.t_obs;
  rec.t_arrival = arrival;
  rec.t1 = arrival - chunk.t_obs;
  rec.t2_budget = cfg.t2_budget;
  if (rec.t1 < 0.0) throw InvalidInput("chunk arrives before its observation time");
  auto reject = [&rec](IngestStatus s) {
    rec.status = s;
    return IngestOutcome{nullptr, rec};
  };

  // Discard the prefix that inference and blending have already consumed.
  const double lead = rec.t1 + cfg.t2_budget;
  const double t_e = chunk.duration();
  if (lead >= t_e) return reject(IngestStatus::stale);
  const double h = cfg.dt_opt > 0.0 ? cfg.dt_opt : chunk.dt;
  const int K = static_cast<int>(std::floor((t_e - lead) / h + 1e-9));
  if (K < 1) return reject(IngestStatus::window_too_short);
  const int n = K + 1;
  const double t_s = chunk.t_obs + lead;
  const auto S = static_cast<Index>(layout.scalars());
  const auto R = layout.rotations();
  const auto Q = static_cast<Index>(layout.coords());

  std::vector<ChannelFrame> targets;
  targets.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) targets.push_back(sample_channels(chunk, layout, lead + k * h));

  std::vector<Rotation> anchors(R);
  MatrixXd old_x = MatrixXd::Zero(n, Q);
  VectorXd p_s, v_s;
  double t_f = t_s;
  if (current) {
    if (t_s < current->t_start()) return reject(IngestStatus::out_of_domain);
    const auto at = current->eval(t_s);
    for (std::size_t r = 0; r < R; ++r) {
      anchors[r] = at.piece->anchor[r];
      const Vec3 phi = at.x.segment<3>(S + 3 * static_cast<Index>(r));
      if (phi.norm() > cfg.reanchor_angle) anchors[r] = at.piece->anchor[r] * so3_exp(phi);
    }
    const auto splice = current->eval_in_chart(t_s, anchors);
    p_s = splice.x;
    v_s = splice.v;
    for (int k = 0; k < n; ++k) old_x.row(k) = current->eval_in_chart(t_s + k * h, anchors).x.transpose();
    t_f = std::clamp(t_s + cfg.t_f_fraction * (current->t_end() - t_s), t_s, std::max(t_s, current->t_end()));
  } else {
    for (std::size_t r = 0; r < R; ++r) anchors[r] = targets.front().rot[r];
  }

  MatrixXd new_x(n, Q);
  for (int k = 0; k < n; ++k) {
    for (Index c = 0; c < S; ++c) {
      double v = targets[static_cast<std::size_t>(k)].scalar[c];
      if (layout.angular[static_cast<std::size_t>(c)]) {
        const double ref = current ? old_x(k, c) : (k > 0 ? new_x(k - 1, c) : v);
        v = ref + wrap_angle(v - ref);
      }
      new_x(k, c) = v;
    }
    for (std::size_t r = 0; r < R; ++r) {
      const Index c = S + 3 * static_cast<Index>(r);
      new_x.row(k).segment<3>(c) =
          so3_log(anchors[r].transpose() * targets[static_cast<std::size_t>(k)].rot[r]).transpose();
      if (new_x.row(k).segment<3>(c).norm() > cfg.max_swing ||
          (current && old_x.row(k).segment<3>(c).norm() > cfg.max_swing))
        return reject(IngestStatus::rotation_swing);
    }
  }

  BlendWeights bw{VectorXd::Zero(n), VectorXd::Ones(n)};
  if (current) bw = blend_weights(n, h, t_s, t_f, cfg.tau > 0.0 ? cfg.tau : (t_f - t_s) / 3.0);

  std::vector<QpSolution> sols(static_cast<std::size_t>(Q));
  std::exception_ptr error;
  auto solve_coord = [&](Index c) {
    BlendWindow w;
    w.dt = h;
    w.old_target = old_x.col(c);
    w.new_target = new_x.col(c);
    w.w1 = bw.w1;
    w.w2 = bw.w2;
    w.v_max = cfg.v_max[limit_index(layout, c)] - cfg.bound_margin;
    w.w_acc = cfg.w_acc;
    if (current) w.splice = SpliceState{p_s[c], v_s[c]};
    QpSolver solver(cfg.qp);
    sols[static_cast<std::size_t>(c)] = solver.solve(blend_window_qp(w));
  };
  if (cfg.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (Index c = 0; c < Q; ++c) {
      try {
        solve_coord(c);
      } catch (...) {
#pragma omp critical(chunkrt_rtg_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (Index c = 0; c < Q; ++c) solve_coord(c);
  }

  for (const auto& s : sols) {
    rec.qp_iterations = std::max(rec.qp_iterations, s.iterations);
    if (s.status == QpStatus::infeasible) return reject(IngestStatus::infeasible);
    if (s.status == QpStatus::max_iters) return reject(IngestStatus::solver_failed);
  }

  Piece pc;
  pc.t_begin = pc.t0 = t_s;
  pc.t_end = t_s + K * h;
  pc.h = h;
  pc.x.resize(n, Q);
  pc.m.resize(n, Q);
  pc.anchor = anchors;
  for (Index c = 0; c < Q; ++c) {
    VectorXd x = sols[static_cast<std::size_t>(c)].x;
    std::optional<double> first;
    if (current) {
      x[0] = p_s[c];
      first = v_s[c];
    }
    pc.x.col(c) = x;
    pc.m.col(c) = knot_slopes(x, h, first);
  }

  for (Index c = 0; c < Q; ++c) {
    const double lim = cfg.v_max[limit_index(layout, c)];
    for (int k = 0; k < K; ++k) {
      const double mk = pc.m(k, c), mk1 = pc.m(k + 1, c);
      const double mid = 3.0 * (pc.x(k + 1, c) - pc.x(k, c)) / h - mk - mk1;
      const double peak = bezier_peak(mk, mid, mk1);
      rec.max_velocity_ratio = std::max(rec.max_velocity_ratio, peak / lim);
      if (peak > lim + 1e-10) return reject(IngestStatus::velocity_check);
    }
  }

  std::vector<Piece> pieces;
  if (current) pieces = keep_until(*current, arrival, t_s);
  pieces.push_back(std::move(pc));
  auto traj = std::make_shared<const ExecutingTrajectory>(layout.scalars(), R, std::move(pieces));

  if (current) {
    const auto before = current->eval_in_chart(t_s, anchors);
    const auto after = traj->eval_in_chart(t_s, anchors);
    rec.splice_position_jump = (after.x - before.x).lpNorm<Eigen::Infinity>();
    rec.splice_velocity_jump = (after.v - before.v).lpNorm<Eigen::Infinity>();
  }
  rec.status = IngestStatus::accepted;
  return {std::move(traj), rec};
}

}  // namespace

QpSettings RtgConfig::default_qp() {
  QpSettings s;
  s.tol_primal = 1e-9;
  s.tol_dual = 1e-9;
  return s;
}

void RtgConfig::validate(const ChannelLayout& layout) const {
  if (v_max.size() != layout.limit_count())
    throw InvalidInput("expected " + std::to_string(layout.limit_count()) + " velocity limits, got " +
                       std::to_string(v_max.size()));
  for (double v : v_max)
    if (!(std::isfinite(v) && v > 10.0 * bound_margin)) throw InvalidInput("velocity limits must be positive");
  if (!(dt_opt >= 0.0)) throw InvalidInput("dt_opt must be non-negative");
  if (!(w_acc >= 0.0)) throw InvalidInput("w_acc must be non-negative");
  if (!std::isfinite(tau)) throw InvalidInput("tau must be finite");
  if (!(t_f_fraction > 0.0 && t_f_fraction <= 1.0)) throw InvalidInput("t_f fraction must lie in (0, 1]");
  if (!(control_rate > 0.0 && ingest_rate > 0.0)) throw InvalidInput("rates must be positive");
  if (!(t2_budget >= 0.0)) throw InvalidInput("t2 budget must be non-negative");
  if (!(bound_margin >= 0.0)) throw InvalidInput("bound margin must be non-negative");
}

IngestOutcome ingest_initial_chunk(const ChannelChunk& chunk, double arrival, const ChannelLayout& layout,
                                   const RtgConfig& cfg) {
  return blend(chunk, arrival, nullptr, layout, cfg);
}

IngestOutcome ingest_chunk(const ChannelChunk& chunk, double arrival, const ExecutingTrajectory& current,
                           const ChannelLayout& layout, const RtgConfig& cfg) {
  return blend(chunk, arrival, &current, layout, cfg);
}

std::string to_string(IngestStatus s) {
  switch (s) {
    case IngestStatus::accepted: return "accepted";
    case IngestStatus::stale: return "stale";
    case IngestStatus::window_too_short: return "window_too_short";
    case IngestStatus::infeasible: return "infeasible";
    case IngestStatus::solver_failed: return "solver_failed";
    case IngestStatus::velocity_check: return "velocity_check";
    case IngestStatus::rotation_swing: return "rotation_swing";
    case IngestStatus::t2_overrun: return "t2_overrun";
    case IngestStatus::out_of_domain: return "out_of_domain";
  }
  return "unknown";
}

std::string telemetry_csv_header() {
  return "t_obs,t_arrival,t1,t2_budget,t2_measured,status,accepted,max_velocity_ratio,"
         "splice_position_jump,splice_velocity_jump,qp_iterations";
}

std::string telemetry_csv_row(const TelemetryRecord& r) {
  std::ostringstream os;
  os << format_double(r.t_obs) << ',' << format_double(r.t_arrival) << ',' << format_double(r.t1) << ','
     << format_double(r.t2_budget) << ',' << format_double(r.t2_measured) << ',' << to_string(r.status) << ','
     << (r.accepted() ? 1 : 0) << ',' << format_double(r.max_velocity_ratio) << ','
     << format_double(r.splice_position_jump) << ',' << format_double(r.splice_velocity_jump) << ','
     << r.qp_iterations;
  return os.str();
}

RtgEngine::RtgEngine(ChannelLayout layout, RtgConfig cfg, const Clock& clock)
    : layout_(std::move(layout)), cfg_(std::move(cfg)), clock_(clock) {
  cfg_.validate(layout_);
}

TelemetryRecord RtgEngine::ingest(const ChannelChunk& chunk) {
  std::lock_guard<std::mutex> serial(ingest_mu_);
  const double arrival = clock_.now();
  const auto cur = trajectory();
  IngestOutcome out = cur ? ingest_chunk(chunk, arrival, *cur, layout_, cfg_)
                          : ingest_initial_chunk(chunk, arrival, layout_, cfg_);
  out.record.t2_measured = clock_.now() - arrival;
  // Past the budget the splice instant may already have been sampled.
  if (out.trajectory && out.record.t2_measured > cfg_.t2_budget) {
    out.record.status = IngestStatus::t2_overrun;
    out.trajectory.reset();
  }
  if (out.trajectory) {
    std::lock_guard<std::mutex> lock(publish_mu_);
    current_ = std::move(out.trajectory);
    ++generation_;
  }
  telemetry_.push_back(out.record);
  return out.record;
}

RtgSample RtgEngine::sample(double t) const {
  const auto traj = trajectory();
  if (!traj) throw InvalidInput("no trajectory has been accepted yet");
  return chunkrt::sample(*traj, t);
}

std::shared_ptr<const ExecutingTrajectory> RtgEngine::trajectory() const {
  std::lock_guard<std::mutex> lock(publish_mu_);
  return current_;
}

std::vector<TelemetryRecord> RtgEngine::telemetry() const {
  std::lock_guard<std::mutex> lock(ingest_mu_);
  return telemetry_;
}

std::uint64_t RtgEngine::generation() const {
  std::lock_guard<std::mutex> lock(publish_mu_);
  return generation_;
}

std::size_t RtgEngine::rejected(IngestStatus s) const {
  std::lock_guard<std::mutex> lock(ingest_mu_);
  return static_cast<std::size_t>(
      std::count_if(telemetry_.begin(), telemetry_.end(), [s](const TelemetryRecord& r) { return r.status == s; }));
}

}  // namespace chunkrt
