#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chunkrt/channels.hpp"
#include "chunkrt/clock.hpp"
#include "chunkrt/parallel.hpp"
#include "chunkrt/qp_solver.hpp"

namespace chunkrt {

struct RtgConfig {
  /// Optimization grid step; 0 uses the chunk's dt.
  double dt_opt = 0.0;
  /// One limit per layout scalar, then one per rotation (applied to each
  /// tangent component).
  std::vector<double> v_max;
  double w_acc = 1e-2;
  /// Decay constant of the old-trajectory weight; <= 0 picks (t_f - t_s) / 3.
  double tau = 0.0;
  /// t_f = t_s + fraction * (old end - t_s).
  double t_f_fraction = 0.5;
  double control_rate = 250.0;
  double ingest_rate = 20.0;
  /// Time reserved for blending; the splice happens this long after arrival.
  double t2_budget = 0.01;
  /// Velocity rows use v_max - margin so solver round-off stays below v_max.
  double bound_margin = 5e-10;
  /// Orientation charts are re-centred at the splice once the current chart
  /// coordinate exceeds this angle.
  double reanchor_angle = 1.5;
  /// Windows whose orientations stray further than this from the chart
  /// centre are rejected.
  double max_swing = 2.9;
  QpSettings qp = default_qp();
  Exec exec = Exec::parallel;

  static QpSettings default_qp();
  void validate(const ChannelLayout& layout) const;
};

/// Position and velocity of the executing trajectory at the splice instant.
struct SpliceState {
  double position = 0.0;
  double velocity = 0.0;
};

/// One scalar channel's blend problem on the grid t_s + k dt, k = 0..K.
struct BlendWindow {
  double dt = 0.1;
  Eigen::VectorXd old_target;  ///< ignored where w1 = 0
  Eigen::VectorXd new_target;
  Eigen::VectorXd w1;
  Eigen::VectorXd w2;
  double v_max = 1.0;
  double w_acc = 1e-2;
  /// Present when blending into an executing trajectory.
  std::optional<SpliceState> splice;
};

/// Builds 1/2 x^T H x + g^T x (equal to the blend cost up to a constant)
/// with rows: the splice equality (if any), |x_{k+1} - x_k| / dt <= v_max,
/// and the middle velocity control point of each Hermite segment bounded by
/// v_max, which bounds the spline's velocity everywhere on the segment.
QpProblem blend_window_qp(const BlendWindow& w);

/// Hermite knot slopes for knots x on spacing dt: the splice velocity (or a
/// forward difference) at the first knot, central differences inside, a
/// backward difference at the last.
Eigen::VectorXd knot_slopes(const Eigen::VectorXd& x, double dt, std::optional<double> first_slope);

struct BlendWeights {
  Eigen::VectorXd w1;
  Eigen::VectorXd w2;
};

/// w1 = exp(-(t - t_s) / tau) up to t_f and 0 after; w2 = 1 - w1.
BlendWeights blend_weights(int knots, double dt, double t_s, double t_f, double tau);

/// Piecewise cubic Hermite trajectory over the channel layout. Each piece
/// holds knots and slopes for all coordinates; rotations are stored as
/// tangent coordinates about the piece's anchor rotations.
class ExecutingTrajectory {
 public:
  struct Piece {
    double t_begin = 0.0;
    double t_end = 0.0;
    double t0 = 0.0;  ///< time of knot 0
    double h = 0.1;
    Eigen::MatrixXd x;  ///< knots x coordinates
    Eigen::MatrixXd m;  ///< slopes, same shape
    std::vector<Rotation> anchor;
  };
  struct Eval {
    Eigen::VectorXd x;
    Eigen::VectorXd v;
    const Piece* piece = nullptr;
  };

  ExecutingTrajectory(std::size_t scalars, std::size_t rotations, std::vector<Piece> pieces);

  double t_start() const { return pieces_.front().t_begin; }
  double t_end() const { return pieces_.back().t_end; }
  std::size_t scalars() const { return scalars_; }
  std::size_t rotations() const { return rotations_; }
  const std::vector<Piece>& pieces() const { return pieces_; }

  /// Coordinates and their time derivatives in the owning piece's chart.
  /// Times past the end hold the last value with zero velocity; times before
  /// the start throw InvalidInput.
  Eval eval(double t) const;
  /// Same, re-expressed about the given anchors.
  Eval eval_in_chart(double t, const std::vector<Rotation>& anchors) const;
  ChannelFrame frame(double t) const;

 private:
  std::size_t scalars_;
  std::size_t rotations_;
  std::vector<Piece> pieces_;
};

struct RtgSample {
  ChannelFrame frame;
  /// Set when t is past the trajectory end and the last frame is held.
  bool exhausted = false;
};

RtgSample sample(const ExecutingTrajectory& traj, double t);

enum class IngestStatus {
  accepted,
  stale,             ///< t1 + t2 >= chunk duration
  window_too_short,  ///< less than one grid step left after the discard
  infeasible,        ///< the blend QP has no solution
  solver_failed,     ///< iteration limit reached
  velocity_check,    ///< returned spline exceeds a limit (should not happen)
  rotation_swing,    ///< orientation too far from the chart centre
  t2_overrun,        ///< blending took longer than its budget
  out_of_domain      ///< splice instant before the executing trajectory
};

std::string to_string(IngestStatus s);

/// One row per ingest.
struct TelemetryRecord {
  double t_obs = 0.0;
  double t_arrival = 0.0;
  double t1 = 0.0;
  double t2_budget = 0.0;
  double t2_measured = 0.0;
  IngestStatus status = IngestStatus::accepted;
  /// Largest spline velocity over the new piece relative to its limit.
  double max_velocity_ratio = 0.0;
  double splice_position_jump = 0.0;
  double splice_velocity_jump = 0.0;
  int qp_iterations = 0;  ///< maximum over channels

  bool accepted() const { return status == IngestStatus::accepted; }
};

std::string telemetry_csv_header();
std::string telemetry_csv_row(const TelemetryRecord& r);

struct IngestOutcome {
  /// The new trajectory when accepted, else null.
  std::shared_ptr<const ExecutingTrajectory> trajectory;
  TelemetryRecord record;
};

/// First chunk: smoothing plus unit-weight tracking, no splice. The domain
/// starts at t_obs + t1 + t2 with t1 = arrival - t_obs.
IngestOutcome ingest_initial_chunk(const ChannelChunk& chunk, double arrival, const ChannelLayout& layout,
                                   const RtgConfig& cfg);

/// Blends a chunk into `current`. The result keeps `current` verbatim up to
/// the splice instant arrival + t2 and follows the blend afterwards.
IngestOutcome ingest_chunk(const ChannelChunk& chunk, double arrival, const ExecutingTrajectory& current,
                           const ChannelLayout& layout, const RtgConfig& cfg);

/// Two-rate front end. Ingest calls are serialized; sample() may run on a
/// different thread and only takes a lock long enough to copy the published
/// trajectory pointer, so it never waits for a blend in progress.
class RtgEngine {
 public:
  RtgEngine(ChannelLayout layout, RtgConfig cfg, const Clock& clock);

  /// Arrival time and t2 are read from the clock.
  TelemetryRecord ingest(const ChannelChunk& chunk);
  /// Throws InvalidInput before the first accepted chunk.
  RtgSample sample(double t) const;

  std::shared_ptr<const ExecutingTrajectory> trajectory() const;
  std::vector<TelemetryRecord> telemetry() const;
  std::uint64_t generation() const;
  std::size_t rejected(IngestStatus s) const;

  const ChannelLayout& layout() const { return layout_; }
  const RtgConfig& config() const { return cfg_; }

 private:
  ChannelLayout layout_;
  RtgConfig cfg_;
  const Clock& clock_;

  mutable std::mutex publish_mu_;
  std::shared_ptr<const ExecutingTrajectory> current_;
  std::uint64_t generation_ = 0;

  mutable std::mutex ingest_mu_;
  std::vector<TelemetryRecord> telemetry_;
};

}  // namespace chunkrt
