#include "chunkrt/pose_math.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

constexpr double kTol = 1e-9;
constexpr double kNearPi = 1e-4;

Vec3 vee_skew(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

}  // namespace

Rotation Rotation::from_matrix(const Mat3& m) {
  if (!m.allFinite()) throw InvalidInput("rotation has non-finite entries");
  const double resid = (m.transpose() * m - Mat3::Identity()).norm();
  if (resid > kTol) throw InvalidInput("rotation is not orthonormal");
  if (std::abs(m.determinant() - 1.0) > kTol) throw InvalidInput("rotation determinant is not +1");
  return Rotation(m, Unchecked{});
}

Rotation Rotation::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
  return Rotation(u * v.transpose(), Unchecked{});
}

Rotation Rotation::operator*(const Rotation& other) const {
  return Rotation(m_ * other.m_, Unchecked{});
}

Rotation Rotation::transpose() const { return Rotation(m_.transpose(), Unchecked{}); }

double Rotation::orthonormality_residual() const {
  return (m_.transpose() * m_ - Mat3::Identity()).norm();
}

Rotation Rotation::renormalized() const {
  if (orthonormality_residual() <= kTol) return *this;
  return nearest(m_);
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.r * b.p + a.p, (a.r * b.r).renormalized()};
}

Pose inverse(const Pose& t) {
  Rotation rt = t.r.transpose();
  return {-(rt * t.p), rt};
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

Rotation so3_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = hat(w);
  double a, b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Rotation(Mat3::Identity() + a * k + b * k * k, Rotation::Unchecked{});
}

Vec3 so3_log(const Rotation& r) {
  const Mat3& m = r.matrix();
  const Vec3 s = vee_skew(m);
  const double sin_t = s.norm();
  const double cos_t = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_t, cos_t);

  if (theta < 1e-8) return s;
  if (theta < std::numbers::pi - kNearPi) return (theta / sin_t) * s;

  // Near pi the skew part vanishes; recover the axis from B = (R + R^T)/2,
  // whose rank-one part (B - cos I) / (1 - cos) is a a^T.
  const Mat3 outer = (0.5 * (m + m.transpose()) - cos_t * Mat3::Identity()) / (1.0 - cos_t);
  Eigen::Index j;
  outer.diagonal().maxCoeff(&j);
  Vec3 axis = outer.col(j) / std::sqrt(std::max(outer(j, j), 1e-300));
  axis.normalize();
  if (axis.dot(s) < 0) axis = -axis;
  return theta * axis;
}

Mat3 so3_right_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = hat(w);
  if (theta2 < 1e-12) return Mat3::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta2 * k +
         (theta - std::sin(theta)) / (theta2 * theta) * k * k;
}

double geodesic_angle(const Rotation& a, const Rotation& b) {
  const Mat3 rel = a.matrix().transpose() * b.matrix();
  const double sin_t = vee_skew(rel).norm();
  const double cos_t = 0.5 * (rel.trace() - 1.0);
  return std::atan2(sin_t, cos_t);
}

Rotation rot_x(double angle) { return so3_exp(Vec3(angle, 0, 0)); }
Rotation rot_y(double angle) { return so3_exp(Vec3(0, angle, 0)); }
Rotation rot_z(double angle) { return so3_exp(Vec3(0, 0, angle)); }

Pose interpolate(const Pose& a, const Pose& b, double s) {
  const Vec3 rel = so3_log(a.r.transpose() * b.r);
  return {(1.0 - s) * a.p + s * b.p, a.r * so3_exp(s * rel)};
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w <= 0) w += two_pi;
  return w - std::numbers::pi;
}

bool approx_equal(const Pose& a, const Pose& b, double tol) {
  return (a.p - b.p).lpNorm<Eigen::Infinity>() <= tol &&
         (a.r.matrix() - b.r.matrix()).lpNorm<Eigen::Infinity>() <= tol;
}

}  // namespace chunkrt
