// Regenerates the synthetic reference trajectories in data/trajectories.
//
//   make_fixtures <output dir>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>

#include "chunkrt/trajectory_csv.hpp"

using namespace chunkrt;

namespace {

constexpr double kRate = 50.0;
constexpr double kDuration = 30.0;

template <class F>
TimedTrajectory tabulate(F&& frame_at) {
  TimedTrajectory out;
  const int n = static_cast<int>(kDuration * kRate);
  for (int i = 0; i <= n; ++i) {
    const double t = i / kRate;
    out.t.push_back(t);
    out.frames.push_back(frame_at(t));
  }
  return out;
}

// Seated reach toward a table: both arms sweep arcs in front of the torso,
// the right arm wider, grippers cycling once per reach.
WholeBodyAction tabletop_reach(double t) {
  const double w = 2.0 * std::numbers::pi / 10.0;
  const double s = std::sin(w * t);
  WholeBodyAction a;
  a.base = {0.05 * std::sin(2.0 * std::numbers::pi * t / kDuration), 0.0, 0.0};
  a.torso = {0.0, 0.1 + 0.05 * std::sin(0.5 * w * t), -0.05, 0.0};
  const Rotation forward = rot_y(std::numbers::pi / 2);
  a.ee_right.p = Vec3(0.45 + 0.15 * s, -0.2 + 0.10 * std::sin(2.0 * w * t), 1.0 + 0.08 * (1.0 - std::cos(w * t)));
  a.ee_right.r = forward * rot_y(0.3 * s) * rot_z(0.2 * std::sin(0.5 * w * t));
  a.ee_left.p = Vec3(0.40 + 0.06 * std::sin(w * t + 1.0), 0.22, 1.02 + 0.03 * std::sin(w * t));
  a.ee_left.r = forward * rot_x(0.1 * std::sin(w * t + 1.0));
  a.grip_right = 0.5 + 0.4 * std::sin(w * t + 1.0);
  a.grip_left = 0.2;
  a.head = {0.2 * s, -0.3 + 0.1 * s};
  return a;
}

// Whole-body pick from the floor: the base creeps forward and turns, the
// torso folds while the right hand descends to near the ground and rises.
WholeBodyAction ground_pick(double t) {
  const double w = 2.0 * std::numbers::pi / 12.0;
  const double squat = 0.5 * (1.0 - std::cos(w * t));
  const double slow = 2.0 * std::numbers::pi * t / kDuration;
  WholeBodyAction a;
  a.base = {0.3 * 0.5 * (1.0 - std::cos(slow)), 0.05 * std::sin(slow), 0.3 * std::sin(slow)};
  a.torso = {0.5 * squat, 0.8 * squat, -0.4 * squat, 0.1 * std::sin(slow)};
  const Rotation down = rot_y(std::numbers::pi / 2) * rot_y(0.9 * squat);
  a.ee_right.p = Vec3(0.5 + 0.1 * squat + a.base.x, -0.25 + a.base.y, 1.0 - 0.7 * squat);
  a.ee_right.r = rot_z(a.base.yaw) * down;
  a.ee_left.p = Vec3(0.3 + a.base.x, 0.25 + a.base.y, 1.1 - 0.3 * squat);
  a.ee_left.r = rot_z(a.base.yaw) * rot_y(std::numbers::pi / 2);
  a.grip_right = 0.1 + 0.8 * squat;
  a.grip_left = 0.0;
  a.head = {0.1 * std::sin(slow), -0.2 - 0.5 * squat};
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <output dir>\n";
    return 2;
  }
  const std::filesystem::path dir(argv[1]);
  std::filesystem::create_directories(dir);
  write_trajectory_csv((dir / "tabletop_reach.csv").string(), tabulate(tabletop_reach));
  write_trajectory_csv((dir / "ground_pick.csv").string(), tabulate(ground_pick));
  std::cout << "wrote " << (dir / "tabletop_reach.csv").string() << " and " << (dir / "ground_pick.csv").string()
            << "\n";
  return 0;
}
