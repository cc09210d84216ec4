#include "chunkrt/action_model.hpp"

#include <algorithm>
#include <cmath>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

Pose robot_delta_step(const Pose& from, const Pose& to, const Rotation& base) {
  const Rotation bt = base.transpose();
  return {bt * (to.p - from.p), bt * to.r * from.r.transpose() * base};
}

Pose apply_robot_delta_step(const Pose& from, const Pose& delta, const Rotation& base) {
  return {from.p + base * delta.p, (base * delta.r * base.transpose() * from.r).renormalized()};
}

Pose delta_pose(const Pose& from, const Pose& to, ReprTag tag, const Rotation& base) {
  if (tag == ReprTag::egocentric_delta) return compose(inverse(from), to);
  return robot_delta_step(from, to, base);
}

Pose apply_delta_pose(const Pose& from, const Pose& delta, ReprTag tag, const Rotation& base) {
  if (tag == ReprTag::egocentric_delta) return compose(from, delta);
  return apply_robot_delta_step(from, delta, base);
}

Rotation base_rotation(const WholeBodyAction& prev, const WholeBodyAction& anchor,
                       RobotFrameAnchor which) {
  return rot_z(which == RobotFrameAnchor::instantaneous ? prev.base.yaw : anchor.base.yaw);
}

WholeBodyAction delta_frame(const WholeBodyAction& prev, const WholeBodyAction& cur, ReprTag tag,
                            const Rotation& base) {
  WholeBodyAction d;
  d.base = {cur.base.x - prev.base.x, cur.base.y - prev.base.y,
            wrap_angle(cur.base.yaw - prev.base.yaw)};
  for (std::size_t j = 0; j < 4; ++j) d.torso[j] = cur.torso[j] - prev.torso[j];
  for (std::size_t j = 0; j < 2; ++j) d.head[j] = cur.head[j] - prev.head[j];
  d.ee_left = delta_pose(prev.ee_left, cur.ee_left, tag, base);
  d.ee_right = delta_pose(prev.ee_right, cur.ee_right, tag, base);
  d.grip_left = cur.grip_left;
  d.grip_right = cur.grip_right;
  return d;
}

WholeBodyAction apply_delta_frame(const WholeBodyAction& prev, const WholeBodyAction& d,
                                  ReprTag tag, const Rotation& base) {
  WholeBodyAction cur;
  cur.base = {prev.base.x + d.base.x, prev.base.y + d.base.y,
              wrap_angle(prev.base.yaw + d.base.yaw)};
  for (std::size_t j = 0; j < 4; ++j) cur.torso[j] = prev.torso[j] + d.torso[j];
  for (std::size_t j = 0; j < 2; ++j) cur.head[j] = prev.head[j] + d.head[j];
  cur.ee_left = apply_delta_pose(prev.ee_left, d.ee_left, tag, base);
  cur.ee_right = apply_delta_pose(prev.ee_right, d.ee_right, tag, base);
  cur.grip_left = d.grip_left;
  cur.grip_right = d.grip_right;
  return cur;
}

Eigen::Matrix<double, 6, 1> tangent6(const Pose& t) {
  Eigen::Matrix<double, 6, 1> v;
  v << t.p, so3_log(t.r);
  return v;
}

}  // namespace

std::string to_string(ReprTag tag) {
  switch (tag) {
    case ReprTag::absolute_world: return "absolute_world";
    case ReprTag::robot_delta: return "robot_delta";
    case ReprTag::egocentric_delta: return "egocentric_delta";
  }
  return "unknown";
}

ReprTag repr_from_string(const std::string& s) {
  if (s == "absolute_world") return ReprTag::absolute_world;
  if (s == "robot_delta") return ReprTag::robot_delta;
  if (s == "egocentric_delta") return ReprTag::egocentric_delta;
  throw InvalidInput("unknown representation '" + s + "'");
}

Pose PlanarPose::to_pose() const { return {Vec3(x, y, 0.0), rot_z(yaw)}; }

void validate(const WholeBodyAction& a) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(a.base.x) || !finite(a.base.y) || !finite(a.base.yaw))
    throw InvalidInput("base command is not finite");
  if (!std::all_of(a.torso.begin(), a.torso.end(), finite) ||
      !std::all_of(a.head.begin(), a.head.end(), finite))
    throw InvalidInput("joint command is not finite");
  if (!a.ee_left.p.allFinite() || !a.ee_right.p.allFinite())
    throw InvalidInput("end-effector position is not finite");
  for (double g : {a.grip_left, a.grip_right})
    if (!(g >= 0.0 && g <= 1.0)) throw InvalidInput("grip value outside [0, 1]");
}

WholeBodyAction interpolate(const WholeBodyAction& a, const WholeBodyAction& b, double s) {
  auto lerp = [s](double x, double y) { return x + s * (y - x); };
  WholeBodyAction out;
  out.base = {lerp(a.base.x, b.base.x), lerp(a.base.y, b.base.y),
              wrap_angle(a.base.yaw + s * wrap_angle(b.base.yaw - a.base.yaw))};
  for (std::size_t j = 0; j < 4; ++j) out.torso[j] = lerp(a.torso[j], b.torso[j]);
  for (std::size_t j = 0; j < 2; ++j) out.head[j] = lerp(a.head[j], b.head[j]);
  out.ee_left = interpolate(a.ee_left, b.ee_left, s);
  out.ee_right = interpolate(a.ee_right, b.ee_right, s);
  out.grip_left = lerp(a.grip_left, b.grip_left);
  out.grip_right = lerp(a.grip_right, b.grip_right);
  return out;
}

void validate(const ActionChunk& chunk) {
  if (!(chunk.dt > 0.0)) throw InvalidInput("chunk dt must be positive");
  if (chunk.frames.empty()) throw InvalidInput("chunk has no frames");
  if (!std::isfinite(chunk.t_obs)) throw InvalidInput("chunk timestamp is not finite");
}

ActionChunk to_repr(const ActionChunk& absolute, ReprTag tag, const WholeBodyAction& anchor,
                    RobotFrameAnchor robot_anchor) {
  if (absolute.repr != ReprTag::absolute_world)
    throw InvalidInput("to_repr expects an absolute chunk");
  ActionChunk out = absolute;
  out.repr = tag;
  out.anchor = anchor;
  out.robot_anchor = robot_anchor;
  if (tag == ReprTag::absolute_world) return out;
  const WholeBodyAction* prev = &anchor;
  for (std::size_t i = 0; i < absolute.frames.size(); ++i) {
    const Rotation base = base_rotation(*prev, anchor, robot_anchor);
    out.frames[i] = delta_frame(*prev, absolute.frames[i], tag, base);
    prev = &absolute.frames[i];
  }
  return out;
}

ActionChunk to_absolute(const ActionChunk& chunk) {
  if (chunk.repr == ReprTag::absolute_world) return chunk;
  ActionChunk out = chunk;
  out.repr = ReprTag::absolute_world;
  WholeBodyAction prev = chunk.anchor;
  for (std::size_t i = 0; i < chunk.frames.size(); ++i) {
    const Rotation base = base_rotation(prev, chunk.anchor, chunk.robot_anchor);
    out.frames[i] = apply_delta_frame(prev, chunk.frames[i], chunk.repr, base);
    prev = out.frames[i];
  }
  return out;
}

WholeBodyAction sample_chunk(const ActionChunk& absolute, double tau) {
  const auto& f = absolute.frames;
  if (f.empty()) throw InvalidInput("cannot sample an empty chunk");
  if (tau <= 0.0 || f.size() == 1) return f.front();
  const double pos = tau / absolute.dt;
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= f.size()) return f.back();
  return interpolate(f[i], f[i + 1], pos - static_cast<double>(i));
}

std::vector<Pose> to_egocentric_delta(const std::vector<Pose>& absolute) {
  if (absolute.size() < 2) throw InvalidInput("need at least two poses");
  std::vector<Pose> out;
  out.reserve(absolute.size() - 1);
  for (std::size_t k = 0; k + 1 < absolute.size(); ++k)
    out.push_back(compose(inverse(absolute[k]), absolute[k + 1]));
  return out;
}

std::vector<Pose> apply_egocentric_delta(const Pose& start, const std::vector<Pose>& deltas) {
  std::vector<Pose> out{start};
  out.reserve(deltas.size() + 1);
  for (const Pose& d : deltas) out.push_back(compose(out.back(), d));
  return out;
}

std::vector<Pose> to_robot_delta(const std::vector<Pose>& absolute, const std::vector<Pose>& base,
                                 RobotFrameAnchor anchor) {
  if (absolute.size() != base.size()) throw InvalidInput("EE and base trajectories differ in length");
  if (absolute.size() < 2) throw InvalidInput("need at least two poses");
  std::vector<Pose> out;
  out.reserve(absolute.size() - 1);
  for (std::size_t k = 0; k + 1 < absolute.size(); ++k) {
    const Rotation& rb = anchor == RobotFrameAnchor::instantaneous ? base[k].r : base[0].r;
    out.push_back(robot_delta_step(absolute[k], absolute[k + 1], rb));
  }
  return out;
}

std::vector<Pose> apply_robot_delta(const Pose& start, const std::vector<Pose>& deltas,
                                    const std::vector<Pose>& base, RobotFrameAnchor anchor) {
  if (base.size() < deltas.size()) throw InvalidInput("base trajectory shorter than deltas");
  std::vector<Pose> out{start};
  out.reserve(deltas.size() + 1);
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const Rotation& rb = anchor == RobotFrameAnchor::instantaneous ? base[k].r : base[0].r;
    out.push_back(apply_robot_delta_step(out.back(), deltas[k], rb));
  }
  return out;
}

const std::array<std::string, kMetricChannels>& metric_channel_names() {
  static const std::array<std::string, kMetricChannels> names = {
      "base_x",  "base_y",  "base_yaw", "torso_1", "torso_2",    "torso_3", "torso_4",
      "eeL_px",  "eeL_py",  "eeL_pz",   "eeL_rot", "grip_left",  "eeR_px",  "eeR_py",
      "eeR_pz",  "eeR_rot", "grip_right", "head_1", "head_2"};
  return names;
}

const std::vector<std::size_t>& ee_metric_channels() {
  static const std::vector<std::size_t> ch = {7, 8, 9, 10, 12, 13, 14, 15};
  return ch;
}

ChannelValues channel_change(const WholeBodyAction& a, const WholeBodyAction& b) {
  ChannelValues c{};
  c[0] = std::abs(b.base.x - a.base.x);
  c[1] = std::abs(b.base.y - a.base.y);
  c[2] = std::abs(wrap_angle(b.base.yaw - a.base.yaw));
  for (std::size_t j = 0; j < 4; ++j) c[3 + j] = std::abs(b.torso[j] - a.torso[j]);
  for (std::size_t j = 0; j < 3; ++j) c[7 + j] = std::abs(b.ee_left.p[j] - a.ee_left.p[j]);
  c[10] = geodesic_angle(a.ee_left.r, b.ee_left.r);
  c[11] = std::abs(b.grip_left - a.grip_left);
  for (std::size_t j = 0; j < 3; ++j) c[12 + j] = std::abs(b.ee_right.p[j] - a.ee_right.p[j]);
  c[15] = geodesic_angle(a.ee_right.r, b.ee_right.r);
  c[16] = std::abs(b.grip_right - a.grip_right);
  c[17] = std::abs(b.head[0] - a.head[0]);
  c[18] = std::abs(b.head[1] - a.head[1]);
  return c;
}

TrajectoryStats trajectory_stats(const std::vector<WholeBodyAction>& traj,
                                 const std::vector<std::size_t>& chunk_boundaries) {
  if (traj.size() < 2) throw InvalidInput("trajectory_stats needs at least two frames");
  for (std::size_t b : chunk_boundaries)
    if (b == 0 || b >= traj.size()) throw InvalidInput("chunk boundary index out of range");

  const std::size_t steps = traj.size() - 1;
  std::vector<ChannelValues> changes(steps);
  for (std::size_t k = 0; k < steps; ++k) changes[k] = channel_change(traj[k], traj[k + 1]);

  TrajectoryStats stats;
  for (std::size_t c = 0; c < kMetricChannels; ++c) {
    double sum = 0.0;
    for (const auto& ch : changes) sum += ch[c];
    const double mean = sum / static_cast<double>(steps);
    double var = 0.0;
    for (const auto& ch : changes) var += (ch[c] - mean) * (ch[c] - mean);
    stats.mean_step_change[c] = mean;
    stats.variance[c] = var / static_cast<double>(steps);
  }
  if (!chunk_boundaries.empty()) {
    ChannelValues b{};
    for (std::size_t idx : chunk_boundaries)
      for (std::size_t c = 0; c < kMetricChannels; ++c) b[c] += changes[idx - 1][c];
    for (double& v : b) v /= static_cast<double>(chunk_boundaries.size());
    stats.mean_boundary_change = b;
  }
  return stats;
}

double aggregate(const ChannelValues& values, const std::optional<ChannelValues>& weights) {
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < kMetricChannels; ++c) {
    const double w = weights ? (*weights)[c] : 1.0;
    num += w * values[c];
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

double aggregate_over(const ChannelValues& values, const std::vector<std::size_t>& channels) {
  ChannelValues w{};
  for (std::size_t c : channels) w[c] = 1.0;
  return aggregate(values, w);
}

std::vector<WholeBodyAction> resample(const std::vector<WholeBodyAction>& traj, std::size_t length) {
  if (traj.empty() || length == 0) throw InvalidInput("cannot resample an empty trajectory");
  if (length == 1 || traj.size() == 1) return std::vector<WholeBodyAction>(length, traj.front());
  std::vector<WholeBodyAction> out;
  out.reserve(length);
  const double scale = static_cast<double>(traj.size() - 1) / static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(i) * scale;
    const auto k = std::min(static_cast<std::size_t>(std::floor(pos)), traj.size() - 2);
    out.push_back(interpolate(traj[k], traj[k + 1], pos - static_cast<double>(k)));
  }
  return out;
}

CompactnessSummary repr_compactness(const std::vector<std::vector<WholeBodyAction>>& trajs,
                                    ReprTag tag, Arm arm, std::size_t common_length) {
  if (trajs.size() < 2) throw InvalidInput("compactness needs at least two trajectories");
  std::size_t len = common_length;
  if (len == 0) {
    len = trajs.front().size();
    for (const auto& t : trajs) len = std::min(len, t.size());
  }
  if (len < 2) throw InvalidInput("trajectories too short for comparison");

  std::vector<std::vector<Eigen::Matrix<double, 6, 1>>> series;
  series.reserve(trajs.size());
  for (const auto& raw : trajs) {
    const auto traj = resample(raw, len);
    std::vector<Pose> ee, base;
    for (const auto& f : traj) {
      ee.push_back(f.ee(arm));
      base.push_back(f.base.to_pose());
    }
    std::vector<Pose> rep;
    switch (tag) {
      case ReprTag::absolute_world: rep = ee; break;
      case ReprTag::egocentric_delta: rep = to_egocentric_delta(ee); break;
      case ReprTag::robot_delta: rep = to_robot_delta(ee, base); break;
    }
    std::vector<Eigen::Matrix<double, 6, 1>> v;
    v.reserve(rep.size());
    for (const Pose& p : rep) v.push_back(tangent6(p));
    series.push_back(std::move(v));
  }
  const std::size_t steps = series.front().size();
  for (const auto& s : series)
    if (s.size() != steps) throw InvalidInput("trajectory lengths differ after resampling");

  CompactnessSummary out;
  out.per_step_variance.resize(steps);
  const double n = static_cast<double>(series.size());
  for (std::size_t k = 0; k < steps; ++k) {
    // Shifted by the first series so identical inputs give exactly zero.
    const Eigen::Matrix<double, 6, 1> ref = series.front()[k];
    Eigen::Matrix<double, 6, 1> mean = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& s : series) mean += s[k] - ref;
    mean /= n;
    double var = 0.0;
    for (const auto& s : series) var += ((s[k] - ref) - mean).squaredNorm();
    out.per_step_variance[k] = var / n;
    out.mean_variance += out.per_step_variance[k];
  }
  out.mean_variance /= static_cast<double>(steps);
  return out;
}

}  // namespace chunkrt
