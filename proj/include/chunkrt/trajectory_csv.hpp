#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "chunkrt/action_model.hpp"

namespace chunkrt {

struct TimedTrajectory {
  std::vector<double> t;
  std::vector<WholeBodyAction> frames;
};

/// Fixed column order: t, base_x, base_y, base_yaw, torso_1..4, eeL_px..pz,
/// eeL_r11..r33 (row-major), grip_left, eeR_px..pz, eeR_r11..r33, grip_right,
/// head_1, head_2. The header row is mandatory.
const std::vector<std::string>& trajectory_csv_columns();

void write_trajectory_csv(std::ostream& os, const TimedTrajectory& traj);
void write_trajectory_csv(const std::string& path, const TimedTrajectory& traj);

/// Throws ParseError (with line) on malformed content, FileNotFound if absent.
TimedTrajectory read_trajectory_csv(std::istream& is, const std::string& source = "<stream>");
TimedTrajectory read_trajectory_csv(const std::string& path);

/// Shortest round-trip decimal form; keeps CSV output bitwise reproducible.
std::string format_double(double v);

}  // namespace chunkrt
