#include <doctest.h>

#include <Eigen/SVD>
#include <random>
#include <sstream>

#include "chunkrt/config.hpp"
#include "chunkrt/errors.hpp"
#include "chunkrt/kinematics.hpp"
#include "oracles/screw_jacobian.hpp"

using namespace chunkrt;
using Eigen::VectorXd;

namespace {

constexpr double kPi = 3.14159265358979323846;

const ChainModel& whole_body() {
  static const ChainModel m = ChainModel::load(std::string(CHUNKRT_DATA_DIR) + "/models/whole_body.model");
  return m;
}

VectorXd random_q(std::mt19937_64& rng, std::size_t n, double spread = 0.8) {
  std::uniform_real_distribution<double> u(-spread, spread);
  VectorXd q(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = u(rng);
  return q;
}

std::vector<std::size_t> concat(std::initializer_list<std::vector<std::size_t>> parts) {
  std::vector<std::size_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

TEST_CASE("default model layout") {
  const auto& m = whole_body();
  CHECK(m.dof() == 23);
  CHECK(m.joints_in(BodySegment::base).size() == 3);
  CHECK(m.joints_in(BodySegment::torso).size() == 4);
  CHECK(m.joints_in(BodySegment::arm_left).size() == 7);
  CHECK(m.joints_in(BodySegment::arm_right).size() == 7);
  CHECK(m.joints_in(BodySegment::head).size() == 2);
  for (const auto& j : m.joints()) CHECK(std::abs(j.axis.norm() - 1.0) <= 1e-9);
}

TEST_CASE("home pose of the default model") {
  const auto& m = whole_body();
  const VectorXd q = VectorXd::Zero(23);
  // Chest 0.35 + 0.4 + 0.4 + 0.15, shoulder +0.2 up and 0.2 out, upper arm
  // 0.28 down, forearm 0.25 forward, tool 0.1 forward.
  const Pose l = fk(m, q, Arm::left), r = fk(m, q, Arm::right);
  CHECK((l.p - Vec3(0.35, 0.2, 1.22)).norm() < 1e-12);
  CHECK((r.p - Vec3(0.35, -0.2, 1.22)).norm() < 1e-12);
  CHECK(geodesic_angle(l.r, Rotation()) < 1e-12);
  CHECK(geodesic_angle(r.r, Rotation()) < 1e-12);
  CHECK_THROWS_AS(fk(m, VectorXd::Zero(22), Arm::left), InvalidInput);
}

TEST_CASE("planar chains") {
  const auto two = ChainModel::planar({1.0, 1.0});
  VectorXd q(2);
  q << 0, 0;
  CHECK((fk(two, q, Arm::left).p - Vec3(2, 0, 0)).norm() < 1e-15);
  q << kPi / 2, 0;
  CHECK((fk(two, q, Arm::left).p - Vec3(0, 2, 0)).norm() < 1e-15);
  const auto file = ChainModel::load(std::string(CHUNKRT_DATA_DIR) + "/models/planar_2link.model");
  q << 0.3, -1.1;
  CHECK(approx_equal(fk(file, q, Arm::left), fk(two, q, Arm::left), 1e-15));
}

TEST_CASE("FK composes along the chain") {
  std::mt19937_64 rng(1);
  const auto& m = whole_body();
  for (int rep = 0; rep < 20; ++rep) {
    const VectorXd q = random_q(rng, m.dof());
    for (Arm arm : {Arm::left, Arm::right}) {
      const auto w = oracle::walk(m, q, arm);
      const Pose p = fk(m, q, arm);
      CHECK((p.p - w.ee.topRightCorner<3, 1>()).norm() < 1e-12);
      CHECK((p.r.matrix() - w.ee.topLeftCorner<3, 3>()).norm() < 1e-12);
      const auto frames = joint_frames(m, q, arm);
      const auto path = m.path_to(arm);
      REQUIRE(frames.size() == path.size());
      for (std::size_t k = 0; k < path.size(); ++k)
        CHECK((frames[k].p - w.joint_frame[path[k]].topRightCorner<3, 1>()).norm() < 1e-12);
    }
  }
}

TEST_CASE("numeric Jacobian simple cases") {
  const auto one = ChainModel::planar({1.0});
  const auto j = numeric_jacobian(one, VectorXd::Zero(1), Arm::left);
  Eigen::Matrix<double, 6, 1> expect;
  expect << 0, 1, 0, 0, 0, 1;
  CHECK((j.col(0) - expect).norm() < 1e-9);

  const auto& m = whole_body();
  const auto jw = numeric_jacobian(m, VectorXd::Zero(23), Arm::left);
  for (std::size_t jj : {0u, 1u}) CHECK(jw.block<3, 1>(3, jj).norm() == 0.0);
  for (std::size_t jj : m.joints_in(BodySegment::arm_right)) CHECK(jw.col(static_cast<Eigen::Index>(jj)).norm() == 0.0);
}

TEST_CASE("numeric Jacobian matches the screw-axis oracle") {
  std::mt19937_64 rng(2);
  const auto& m = whole_body();
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const VectorXd q = random_q(rng, m.dof(), 1.5);
    for (Arm arm : {Arm::left, Arm::right}) {
      const auto diff = numeric_jacobian(m, q, arm) - oracle::screw_jacobian(m, q, arm);
      worst = std::max(worst, diff.lpNorm<Eigen::Infinity>());
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("DLS step examples") {
  const auto one = ChainModel::planar({1.0});
  const VectorXd q0 = VectorXd::Zero(1);
  CHECK((dls_ik_step(one, q0, Arm::left, fk(one, q0, Arm::left), 1e-3) - q0).norm() == 0.0);

  VectorXd q1(1);
  q1 << 0.1;
  const Pose target = fk(one, q1, Arm::left);
  CHECK(dls_ik_step(one, q0, Arm::left, target, 1e-3)[0] == doctest::Approx(0.1).epsilon(1e-2));
  CHECK(std::abs(dls_ik_step(one, q0, Arm::left, target, 1e-3)[0] - 0.1) <= 1e-3);
  CHECK_THROWS_AS(dls_ik_step(one, q0, Arm::left, target, 0.0), InvalidInput);
}

TEST_CASE("DLS step stays bounded at a singular stretch") {
  const auto two = ChainModel::planar({1.0, 1.0});
  const VectorXd q = VectorXd::Zero(2);
  for (double lambda : {1e-3, 1e-2, 0.1}) {
    Pose target = fk(two, q, Arm::left);
    target.p += Vec3(0.05, 0.02, 0.0);
    const auto e = pose_error(fk(two, q, Arm::left), target);
    const VectorXd step = dls_ik_step(two, q, Arm::left, target, lambda) - q;
    // sigma / (sigma^2 + lambda^2) peaks at 1 / (2 lambda).
    CHECK(step.norm() <= e.norm() / (2.0 * lambda) + 1e-12);
    // Fully stretched: no joint moves the tip radially.
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(oracle::screw_jacobian(two, q, Arm::left).topRows(2));
    CHECK(svd.singularValues().minCoeff() < 1e-12);
  }
}

TEST_CASE("DLS iteration converges for nearby targets") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto& m = whole_body();
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd q = random_q(rng, m.dof(), 0.5);
    Pose target = fk(m, q, Arm::left);
    target.p += 0.05 * Vec3(g(rng), g(rng), g(rng)).normalized() * std::abs(std::tanh(g(rng)));
    const double before = (fk(m, q, Arm::left).p - target.p).norm();
    int it = 0;
    for (; it < 100 && (fk(m, q, Arm::left).p - target.p).norm() >= 1e-6; ++it)
      q = dls_ik_step(m, q, Arm::left, target, 1e-3);
    CAPTURE(before);
    CHECK((fk(m, q, Arm::left).p - target.p).norm() < 1e-6);
  }
}

TEST_CASE("error propagation") {
  const auto& m = whole_body();
  std::mt19937_64 rng(4);
  std::vector<VectorXd> ref;
  for (int k = 0; k < 5; ++k) ref.push_back(random_q(rng, m.dof(), 0.4));
  const auto arm = m.joints_in(BodySegment::arm_left);
  const auto all = concat({m.joints_in(BodySegment::base), m.joints_in(BodySegment::torso), arm});

  CHECK(error_propagation_experiment(m, ref, 0.0, all, 10, 1, Arm::left).rms_position_error == 0.0);
  CHECK(error_propagation_experiment(m, ref, 0.01, {}, 10, 1, Arm::left).rms_position_error == 0.0);
  CHECK_THROWS_AS(error_propagation_experiment(m, ref, -1.0, all, 10, 1, Arm::left), InvalidInput);

  const auto distal = error_propagation_experiment(m, ref, 0.01, arm, 1000, 7, Arm::left);
  const auto with_torso =
      error_propagation_experiment(m, ref, 0.01, concat({m.joints_in(BodySegment::torso), arm}), 1000, 7, Arm::left);
  const auto full = error_propagation_experiment(m, ref, 0.01, all, 1000, 7, Arm::left);
  CHECK(full.rms_position_error > distal.rms_position_error);
  CHECK(distal.rms_position_error <= with_torso.rms_position_error);
  CHECK(with_torso.rms_position_error <= full.rms_position_error);

  const auto serial = error_propagation_experiment(m, ref, 0.01, all, 200, 9, Arm::left, Exec::serial);
  const auto parallel = error_propagation_experiment(m, ref, 0.01, all, 200, 9, Arm::left, Exec::parallel);
  CHECK(serial.rms_position_error == parallel.rms_position_error);
  CHECK(serial.per_trial_mean_sq == parallel.per_trial_mean_sq);
}

TEST_CASE("model files report line-precise errors") {
  std::istringstream bad("[model]\nname = x\n[joint a]\ntype = revolute\naxis = 0 0 2\n[end_effector left]\nparent = a\n");
  try {
    ChainModel::from_config(ConfigDoc::parse(bad, "bad.model"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  std::istringstream typo("[model]\nname = x\n[joint a]\ntype = hinge\naxis = 0 0 1\n");
  try {
    ChainModel::from_config(ConfigDoc::parse(typo, "typo.model"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(ChainModel::load("/nonexistent/none.model"), FileNotFound);
}
