#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "chunkrt/errors.hpp"
#include "chunkrt/pose_math.hpp"
#include "oracles/quat_log.hpp"

using namespace chunkrt;
using std::numbers::pi;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

Vec3 random_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  Vec3 d(n(rng), n(rng), n(rng));
  return d.normalized() * radius * u(rng);
}

Pose random_pose(std::mt19937_64& rng) {
  return {random_vec(rng, 2.0), so3_exp(random_ball(rng, pi - 0.05))};
}

bool is_valid(const Rotation& r) {
  return r.orthonormality_residual() <= 1e-9 && std::abs(r.matrix().determinant() - 1.0) <= 1e-9;
}

}  // namespace

TEST_CASE("compose: worked example and identities") {
  const Pose a{Vec3(1, 0, 0), rot_z(pi / 2)};
  const Pose b{Vec3(1, 0, 0), Rotation()};
  const Pose ab = compose(a, b);
  // Rz(90) maps (1,0,0) to (0,1,0); plus a.p.
  CHECK((ab.p - Vec3(1, 1, 0)).norm() < 1e-12);
  CHECK((ab.r.matrix() - rot_z(pi / 2).matrix()).norm() < 1e-12);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const Pose t = random_pose(rng);
    CHECK(approx_equal(compose(t, inverse(t)), Pose::identity(), 1e-9));
    CHECK(approx_equal(compose(Pose::identity(), t), t, 1e-12));
  }
}

TEST_CASE("inverse") {
  CHECK(approx_equal(inverse(Pose::identity()), Pose::identity(), 0.0));
  const Pose t{Vec3(1, 2, 3), Rotation()};
  CHECK((inverse(t).p - Vec3(-1, -2, -3)).norm() == 0.0);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose r = random_pose(rng);
    CHECK(approx_equal(inverse(inverse(r)), r, 1e-12));
  }
}

TEST_CASE("group laws hold on random triples") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose l = compose(compose(a, b), c);
    const Pose r = compose(a, compose(b, c));
    CHECK(approx_equal(l, r, 1e-9));
    CHECK(is_valid(l.r));
  }
}

TEST_CASE("so3_exp") {
  CHECK((so3_exp(Vec3::Zero()).matrix() - Mat3::Identity()).norm() == 0.0);
  Mat3 quarter;
  quarter << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((so3_exp(Vec3(0, 0, pi / 2)).matrix() - quarter).norm() < 1e-15);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = random_ball(rng, pi - 0.1);
    const Rotation r = so3_exp(w);
    REQUIRE(is_valid(r));
    CHECK((so3_log(r) - w).norm() < 1e-9);
    CHECK(std::abs(geodesic_angle(Rotation(), r) - w.norm()) < 1e-9);
  }
}

TEST_CASE("so3_log") {
  CHECK(so3_log(Rotation()).norm() == 0.0);
  CHECK((so3_log(rot_z(pi / 2)) - Vec3(0, 0, pi / 2)).norm() < 1e-15);

  SUBCASE("near pi matches the quaternion oracle") {
    const double angle = pi - 1e-6;
    const Vec3 w = so3_log(rot_x(angle));
    const auto ref = oracle::quat_log(rot_x(angle).matrix());
    CHECK(std::abs(w.norm() - angle) < 1e-6);
    CHECK(std::abs(w.x() - static_cast<double>(ref[0])) < 1e-6);
    CHECK(w.allFinite());
  }
  SUBCASE("random axes in the switch band stay finite and round trip") {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> n;
    for (int i = 0; i < 500; ++i) {
      const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
      const double angle = pi - std::pow(10.0, -1.0 - 8.0 * (i / 500.0));
      const Rotation r = so3_exp(angle * axis);
      const Vec3 w = so3_log(r);
      REQUIRE(w.allFinite());
      CHECK(w.norm() <= pi + 1e-12);
      CHECK((so3_exp(w).matrix() - r.matrix()).norm() < 1e-9);
      const auto ref = oracle::quat_log(r.matrix());
      CHECK(std::abs(w.norm() - std::sqrt(static_cast<double>(ref[0] * ref[0] + ref[1] * ref[1] + ref[2] * ref[2]))) < 1e-7);
    }
  }
  SUBCASE("exactly pi") {
    const Vec3 w = so3_log(rot_y(pi));
    CHECK(std::abs(w.norm() - pi) < 1e-12);
    CHECK(std::abs(std::abs(w.y()) - pi) < 1e-12);
  }
}

TEST_CASE("geodesic_angle") {
  std::mt19937_64 rng(23);
  const Rotation r = so3_exp(random_ball(rng, 2.0));
  CHECK(geodesic_angle(r, r) < 1e-12);
  CHECK(std::abs(geodesic_angle(Rotation(), rot_z(pi / 2)) - pi / 2) < 1e-15);
  for (int i = 0; i < 200; ++i) {
    const Rotation a = so3_exp(random_ball(rng, pi)), b = so3_exp(random_ball(rng, pi));
    const double ab = geodesic_angle(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= pi);
    CHECK(std::abs(ab - geodesic_angle(b, a)) < 1e-12);
  }
}

TEST_CASE("right Jacobian matches finite differences") {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 50; ++i) {
    const Vec3 w = random_ball(rng, 2.5);
    const Mat3 jr = so3_right_jacobian(w);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      Vec3 dw = Vec3::Zero();
      dw[k] = h;
      const Vec3 fd = so3_log(so3_exp(w).transpose() * so3_exp(w + dw)) / h;
      CHECK((fd - jr.col(k)).norm() < 1e-5);
    }
  }
}

TEST_CASE("from_matrix rejects non-rotations") {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 1.001;
  CHECK_THROWS_AS(Rotation::from_matrix(m), InvalidInput);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  CHECK_THROWS_AS(Rotation::from_matrix(reflect), InvalidInput);
}

TEST_CASE("renormalization after long composition chains") {
  std::mt19937_64 rng(31);
  Rotation r;
  for (int i = 0; i < 100000; ++i) r = (r * so3_exp(random_ball(rng, 0.3))).renormalized();
  CHECK(r.orthonormality_residual() <= 1e-9);
  Mat3 drift = rot_z(0.3).matrix();
  drift(0, 1) += 1e-6;
  CHECK(Rotation::nearest(drift).orthonormality_residual() < 1e-12);
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(pi) == doctest::Approx(pi));
  CHECK(wrap_angle(-pi) == doctest::Approx(pi));
  CHECK(wrap_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
  CHECK(wrap_angle(0.25) == doctest::Approx(0.25));
}
