#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace chunkrt {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Element of SO(3) stored as an orthonormal 3x3 matrix with det = +1.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Validates orthonormality and handedness to 1e-9; throws InvalidInput otherwise.
  static Rotation from_matrix(const Mat3& m);
  /// Projects an arbitrary near-rotation onto SO(3) (polar decomposition).
  static Rotation nearest(const Mat3& m);

  const Mat3& matrix() const { return m_; }
  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation transpose() const;

  /// Frobenius norm of m^T m - I.
  double orthonormality_residual() const;
  /// Re-orthonormalizes when the residual exceeds 1e-9; no-op otherwise.
  Rotation renormalized() const;

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : m_(m) {}
  friend Rotation so3_exp(const Vec3& w);
  Mat3 m_;
};

struct Pose {
  Vec3 p = Vec3::Zero();
  Rotation r;

  static Pose identity() { return {}; }
  Vec3 transform(const Vec3& x) const { return r * x + p; }
};

struct Twist {
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& t);

Rotation so3_exp(const Vec3& w);
/// Rotation vector with norm in [0, pi]. Angles within 1e-4 of pi switch to
/// the symmetric-part axis extraction.
Vec3 so3_log(const Rotation& r);
/// Right Jacobian of the exponential map: exp(w + dw) ~ exp(w) exp(Jr(w) dw).
Mat3 so3_right_jacobian(const Vec3& w);
Mat3 hat(const Vec3& w);

/// Angle of the relative rotation a^T b, in [0, pi].
double geodesic_angle(const Rotation& a, const Rotation& b);

Rotation rot_x(double angle);
Rotation rot_y(double angle);
Rotation rot_z(double angle);

/// Linear position blend and geodesic rotation blend, s in [0, 1].
Pose interpolate(const Pose& a, const Pose& b, double s);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

bool approx_equal(const Pose& a, const Pose& b, double tol);

}  // namespace chunkrt
