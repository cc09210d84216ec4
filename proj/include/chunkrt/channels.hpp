#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "chunkrt/action_model.hpp"
#include "chunkrt/pose_math.hpp"

namespace chunkrt {

/// Generic command frame: plain scalars plus rotations. The RTG engine works
/// on this layout so whole-body actions and synthetic benchmark chunks share
/// one code path.
struct ChannelFrame {
  Eigen::VectorXd scalar;
  std::vector<Rotation> rot;
};

struct ChannelLayout {
  std::vector<std::string> scalar_names;
  /// Per scalar: true if the value is an angle that wraps at +-pi.
  std::vector<bool> angular;
  std::vector<std::string> rotation_names;

  std::size_t scalars() const { return scalar_names.size(); }
  std::size_t rotations() const { return rotation_names.size(); }
  /// Number of scalar QP channels: one per scalar, three per rotation.
  std::size_t coords() const { return scalars() + 3 * rotations(); }
  /// Number of velocity limits: one per scalar, one per rotation.
  std::size_t limit_count() const { return scalars() + rotations(); }

  static ChannelLayout plain(std::size_t scalars);
};

/// Uniformly sampled chunk in channel form, always absolute.
struct ChannelChunk {
  double t_obs = 0.0;
  double dt = 0.1;
  std::vector<ChannelFrame> frames;

  double duration() const { return frames.empty() ? 0.0 : static_cast<double>(frames.size() - 1) * dt; }
};

/// Linear interpolation at chunk-local time tau, geodesic for rotations and
/// shortest-way for angular scalars. Clamps outside [0, duration].
ChannelFrame sample_channels(const ChannelChunk& chunk, const ChannelLayout& layout, double tau);

// Whole-body mapping: 17 scalars (base x, y, yaw; torso 1-4; left EE
// position; right EE position; grips; head 1-2) and 2 rotations (left, right).

const ChannelLayout& whole_body_layout();
ChannelFrame to_channels(const WholeBodyAction& a);
/// Wraps angular scalars back to (-pi, pi].
WholeBodyAction from_channels(const ChannelFrame& f);
/// Converts to absolute first when needed.
ChannelChunk to_channel_chunk(const ActionChunk& chunk);

struct WholeBodyLimits {
  double base_linear = 0.3;   ///< m/s, per axis
  double base_yaw = 0.5;      ///< rad/s
  double torso = 0.5;         ///< rad/s
  double ee_linear = 0.25;    ///< m/s, per axis
  double ee_angular = 0.6;    ///< rad/s, per tangent component
  double grip = 1.0;          ///< 1/s
  double head = 0.8;          ///< rad/s
};

/// One limit per scalar, then one per rotation, in whole_body_layout() order.
std::vector<double> whole_body_velocity_limits(const WholeBodyLimits& lim);

}  // namespace chunkrt
