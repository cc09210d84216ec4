#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "chunkrt/pose_math.hpp"

namespace chunkrt {

enum class Arm { left, right };

enum class ReprTag { absolute_world, robot_delta, egocentric_delta };

std::string to_string(ReprTag tag);
ReprTag repr_from_string(const std::string& s);

/// Where robot-frame deltas take their base orientation from.
enum class RobotFrameAnchor { instantaneous, episode_start };

struct PlanarPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose to_pose() const;
};

/// One command frame: base, torso, both end-effectors with grippers, head.
struct WholeBodyAction {
  PlanarPose base;
  std::array<double, 4> torso{};
  Pose ee_left;
  Pose ee_right;
  double grip_left = 0.0;
  double grip_right = 0.0;
  std::array<double, 2> head{};

  const Pose& ee(Arm arm) const { return arm == Arm::left ? ee_left : ee_right; }
  Pose& ee(Arm arm) { return arm == Arm::left ? ee_left : ee_right; }
};

/// Throws InvalidInput if grip values leave [0, 1] or any scalar is non-finite.
void validate(const WholeBodyAction& a);

WholeBodyAction interpolate(const WholeBodyAction& a, const WholeBodyAction& b, double s);

/// Uniformly sampled policy output. Frame i is stamped t_obs + i * dt. Delta
/// representations chain from `anchor`, the observed state at t_obs: frame 0
/// is the delta anchor -> first action, frame i the delta from action i-1.
/// Gripper values stay absolute in every representation.
struct ActionChunk {
  double t_obs = 0.0;
  double dt = 0.1;
  std::vector<WholeBodyAction> frames;
  ReprTag repr = ReprTag::absolute_world;
  WholeBodyAction anchor;
  RobotFrameAnchor robot_anchor = RobotFrameAnchor::instantaneous;

  double duration() const { return frames.empty() ? 0.0 : (frames.size() - 1) * dt; }
  double time_of(std::size_t i) const { return t_obs + static_cast<double>(i) * dt; }
};

void validate(const ActionChunk& chunk);

/// Re-expresses an absolute chunk in `tag`, chaining from `anchor`.
ActionChunk to_repr(const ActionChunk& absolute, ReprTag tag, const WholeBodyAction& anchor,
                    RobotFrameAnchor robot_anchor = RobotFrameAnchor::instantaneous);
/// Recovers absolute frames from a chunk in any representation.
ActionChunk to_absolute(const ActionChunk& chunk);

/// Linear interpolation of an absolute chunk at chunk-local time tau. Times
/// outside [0, duration] clamp to the end frames.
WholeBodyAction sample_chunk(const ActionChunk& absolute, double tau);

// Pose-sequence conversions.

std::vector<Pose> to_egocentric_delta(const std::vector<Pose>& absolute);
std::vector<Pose> apply_egocentric_delta(const Pose& start, const std::vector<Pose>& deltas);

/// Deltas relative to the robot base. With `instantaneous`, step k uses
/// base[k]; with `episode_start` every step uses base[0].
std::vector<Pose> to_robot_delta(const std::vector<Pose>& absolute, const std::vector<Pose>& base,
                                 RobotFrameAnchor anchor = RobotFrameAnchor::instantaneous);
std::vector<Pose> apply_robot_delta(const Pose& start, const std::vector<Pose>& deltas,
                                    const std::vector<Pose>& base,
                                    RobotFrameAnchor anchor = RobotFrameAnchor::instantaneous);

// Metrics.

/// Per-channel comparison layout: scalar joints and planar base as-is, EE
/// positions per axis, EE orientations as one geodesic-angle channel.
inline constexpr std::size_t kMetricChannels = 19;
const std::array<std::string, kMetricChannels>& metric_channel_names();
/// Indices of the EE channels (positions and orientations, both arms).
const std::vector<std::size_t>& ee_metric_channels();

using ChannelValues = std::array<double, kMetricChannels>;

/// |b - a| per metric channel (yaw wrapped, orientations by geodesic angle).
ChannelValues channel_change(const WholeBodyAction& a, const WholeBodyAction& b);

struct TrajectoryStats {
  ChannelValues mean_step_change{};
  /// Absent when no boundary was supplied.
  std::optional<ChannelValues> mean_boundary_change;
  /// Variance of the per-step change magnitude.
  ChannelValues variance{};
};

/// A boundary index b marks the pair (b-1, b) as straddling two chunks.
TrajectoryStats trajectory_stats(const std::vector<WholeBodyAction>& traj,
                                 const std::vector<std::size_t>& chunk_boundaries);

/// Weighted mean over channels; weights default to uniform. Channels with zero
/// weight are ignored.
double aggregate(const ChannelValues& values, const std::optional<ChannelValues>& weights = {});
double aggregate_over(const ChannelValues& values, const std::vector<std::size_t>& channels);

struct CompactnessSummary {
  std::vector<double> per_step_variance;
  double mean_variance = 0.0;
};

/// Resamples every trajectory to `common_length` frames (0 = shortest input),
/// converts one arm's EE track to `tag`, and reports the cross-trajectory
/// variance (trace of the covariance of the 6-vector p, log R) per step.
CompactnessSummary repr_compactness(const std::vector<std::vector<WholeBodyAction>>& trajs,
                                    ReprTag tag, Arm arm, std::size_t common_length = 0);

std::vector<WholeBodyAction> resample(const std::vector<WholeBodyAction>& traj, std::size_t length);

}  // namespace chunkrt
