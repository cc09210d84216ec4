#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "chunkrt/action_model.hpp"
#include "chunkrt/parallel.hpp"
#include "chunkrt/pose_math.hpp"

namespace chunkrt {

class ConfigDoc;

enum class JointType { revolute, prismatic };
enum class BodySegment { base, torso, arm_left, arm_right, head };

struct JointDesc {
  std::string name;
  JointType type = JointType::revolute;
  Vec3 axis = Vec3::UnitZ();
  /// Fixed transform from the parent joint's moving frame to this joint.
  Pose origin;
  int parent = -1;
  BodySegment segment = BodySegment::base;
};

struct EndEffectorDesc {
  Arm arm = Arm::left;
  int parent = -1;
  Pose tool;
};

using JointState = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Kinematic tree with joints listed parent-first. The whole-body layout is a
/// planar base (prismatic x, prismatic y, revolute yaw), a 4-joint torso, and
/// two 7-joint arms plus a 2-joint head hanging off the torso.
class ChainModel {
 public:
  ChainModel(std::string name, std::vector<JointDesc> joints, std::vector<EndEffectorDesc> ees);

  static ChainModel load(const std::string& path);
  static ChainModel from_config(const ConfigDoc& doc);
  /// Planar serial chain of revolute-z joints with the given link lengths
  /// along x. The single end-effector is registered as the left arm.
  static ChainModel planar(const std::vector<double>& link_lengths);

  const std::string& name() const { return name_; }
  std::size_t dof() const { return joints_.size(); }
  const std::vector<JointDesc>& joints() const { return joints_; }
  const EndEffectorDesc& end_effector(Arm arm) const;
  bool has_end_effector(Arm arm) const;

  /// Joint indices from the root to the end-effector's parent, root first.
  std::vector<std::size_t> path_to(Arm arm) const;
  std::vector<std::size_t> joints_in(BodySegment seg) const;

 private:
  std::string name_;
  std::vector<JointDesc> joints_;
  std::vector<EndEffectorDesc> ees_;
};

std::string to_string(BodySegment seg);

/// World pose of the selected end-effector.
Pose fk(const ChainModel& model, const JointState& q, Arm ee);

/// World-frame pose of each joint on the path, after its origin offset and
/// before its own motion. Same order as path_to().
std::vector<Pose> joint_frames(const ChainModel& model, const JointState& q, Arm ee);

/// Central differences with step 1e-6. Rows 0-2: position; rows 3-5: the
/// world-frame rotation increment log(R(q+h) R(q-h)^T) / 2h.
Jacobian numeric_jacobian(const ChainModel& model, const JointState& q, Arm ee);

/// Error twist (position error, log(R_target R^T)) in the world frame.
Eigen::Matrix<double, 6, 1> pose_error(const Pose& current, const Pose& target);

/// One damped-least-squares step: q + J^T (J J^T + lambda^2 I)^-1 e.
JointState dls_ik_step(const ChainModel& model, const JointState& q, Arm ee, const Pose& target,
                       double damping);

struct ErrorPropagationResult {
  double rms_position_error = 0.0;
  std::vector<double> per_trial_mean_sq;
};

/// Monte-Carlo RMS of ||fk(q + eps) - fk(q)|| over trials x trajectory
/// points. eps is Gaussian with `sigma` on the scoped joints and zero
/// elsewhere. Trial k draws all joints from a stream seeded by (seed, k), so
/// two scopes with the same seed see identical noise on shared joints.
ErrorPropagationResult error_propagation_experiment(const ChainModel& model,
                                                    const std::vector<JointState>& reference,
                                                    double sigma,
                                                    const std::vector<std::size_t>& scope,
                                                    std::size_t trials, std::uint64_t seed, Arm ee,
                                                    Exec exec = Exec::parallel);

}  // namespace chunkrt
