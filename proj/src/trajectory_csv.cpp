#include "chunkrt/trajectory_csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

void append_pose_columns(std::vector<std::string>& cols, const std::string& prefix) {
  for (const char* a : {"px", "py", "pz"}) cols.push_back(prefix + "_" + a);
  for (int r = 1; r <= 3; ++r)
    for (int c = 1; c <= 3; ++c) cols.push_back(prefix + "_r" + std::to_string(r) + std::to_string(c));
}

std::vector<double> flatten(double t, const WholeBodyAction& a) {
  std::vector<double> v{t, a.base.x, a.base.y, a.base.yaw};
  v.insert(v.end(), a.torso.begin(), a.torso.end());
  auto pose = [&v](const Pose& p) {
    for (int i = 0; i < 3; ++i) v.push_back(p.p[i]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) v.push_back(p.r.matrix()(r, c));
  };
  pose(a.ee_left);
  v.push_back(a.grip_left);
  pose(a.ee_right);
  v.push_back(a.grip_right);
  v.insert(v.end(), a.head.begin(), a.head.end());
  return v;
}

}  // namespace

const std::vector<std::string>& trajectory_csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"t", "base_x", "base_y", "base_yaw", "torso_1", "torso_2", "torso_3", "torso_4"};
    append_pose_columns(c, "eeL");
    c.push_back("grip_left");
    append_pose_columns(c, "eeR");
    c.push_back("grip_right");
    c.push_back("head_1");
    c.push_back("head_2");
    return c;
  }();
  return cols;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trajectory_csv(std::ostream& os, const TimedTrajectory& traj) {
  const auto& cols = trajectory_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (std::size_t k = 0; k < traj.frames.size(); ++k) {
    const auto row = flatten(traj.t[k], traj.frames[k]);
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const TimedTrajectory& traj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_trajectory_csv(os, traj);
}

TimedTrajectory read_trajectory_csv(std::istream& is, const std::string& source) {
  const auto& cols = trajectory_csv_columns();
  std::string line;
  int lineno = 0;
  if (!std::getline(is, line)) throw ParseError(source, 1, "missing header row");
  ++lineno;
  {
    std::stringstream ss(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      if (i >= cols.size() || cell != cols[i])
        throw ParseError(source, lineno, "unexpected header column '" + cell + "'");
      ++i;
    }
    if (i != cols.size()) throw ParseError(source, lineno, "header has too few columns");
  }

  TimedTrajectory traj;
  std::vector<double> row(cols.size());
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t i = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      if (i >= cols.size()) throw ParseError(source, lineno, "too many columns");
      auto [ptr, ec] = std::from_chars(p, comma, row[i]);
      if (ec != std::errc() || ptr != comma)
        throw ParseError(source, lineno, "bad number in column '" + cols[i] + "'");
      ++i;
      p = comma + 1;
      if (comma == end) break;
    }
    if (i != cols.size()) throw ParseError(source, lineno, "expected " + std::to_string(cols.size()) + " columns");

    WholeBodyAction a;
    std::size_t c = 1;
    a.base = {row[c], row[c + 1], row[c + 2]};
    c += 3;
    for (auto& v : a.torso) v = row[c++];
    auto pose = [&]() {
      Pose out;
      out.p = Vec3(row[c], row[c + 1], row[c + 2]);
      c += 3;
      Mat3 m;
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) m(r, k) = row[c++];
      try {
        out.r = Rotation::from_matrix(m);
      } catch (const InvalidInput& e) {
        throw ParseError(source, lineno, e.what());
      }
      return out;
    };
    a.ee_left = pose();
    a.grip_left = row[c++];
    a.ee_right = pose();
    a.grip_right = row[c++];
    a.head = {row[c], row[c + 1]};
    try {
      validate(a);
    } catch (const InvalidInput& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (!traj.t.empty() && !(row[0] > traj.t.back()))
      throw ParseError(source, lineno, "timestamps must be strictly increasing");
    traj.t.push_back(row[0]);
    traj.frames.push_back(a);
  }
  return traj;
}

TimedTrajectory read_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileNotFound(path);
  return read_trajectory_csv(is, path);
}

}  // namespace chunkrt
