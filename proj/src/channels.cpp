#include "chunkrt/channels.hpp"

#include <cmath>

#include "chunkrt/errors.hpp"

namespace chunkrt {

ChannelLayout ChannelLayout::plain(std::size_t scalars) {
  ChannelLayout l;
  for (std::size_t i = 0; i < scalars; ++i) l.scalar_names.push_back("ch" + std::to_string(i));
  l.angular.assign(scalars, false);
  return l;
}

ChannelFrame sample_channels(const ChannelChunk& chunk, const ChannelLayout& layout, double tau) {
  const auto& f = chunk.frames;
  if (f.empty()) throw InvalidInput("cannot sample an empty chunk");
  if (tau <= 0.0 || f.size() == 1) return f.front();
  const double pos = tau / chunk.dt;
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= f.size()) return f.back();
  const double s = pos - static_cast<double>(i);
  const ChannelFrame& a = f[i];
  const ChannelFrame& b = f[i + 1];
  ChannelFrame out;
  out.scalar.resize(a.scalar.size());
  for (Eigen::Index c = 0; c < a.scalar.size(); ++c) {
    const double d = layout.angular[static_cast<std::size_t>(c)] ? wrap_angle(b.scalar[c] - a.scalar[c])
                                                                 : b.scalar[c] - a.scalar[c];
    out.scalar[c] = a.scalar[c] + s * d;
  }
  out.rot.reserve(a.rot.size());
  for (std::size_t r = 0; r < a.rot.size(); ++r)
    out.rot.push_back(a.rot[r] * so3_exp(s * so3_log(a.rot[r].transpose() * b.rot[r])));
  return out;
}

const ChannelLayout& whole_body_layout() {
  static const ChannelLayout layout = [] {
    ChannelLayout l;
    l.scalar_names = {"base_x", "base_y",  "base_yaw", "torso_1", "torso_2",    "torso_3",
                      "torso_4", "eeL_px", "eeL_py",   "eeL_pz",  "eeR_px",     "eeR_py",
                      "eeR_pz",  "grip_left", "grip_right", "head_1", "head_2"};
    l.angular.assign(l.scalar_names.size(), false);
    l.angular[2] = true;
    l.rotation_names = {"eeL_rot", "eeR_rot"};
    return l;
  }();
  return layout;
}

ChannelFrame to_channels(const WholeBodyAction& a) {
  ChannelFrame f;
  f.scalar.resize(17);
  f.scalar << a.base.x, a.base.y, a.base.yaw, a.torso[0], a.torso[1], a.torso[2], a.torso[3], a.ee_left.p,
      a.ee_right.p, a.grip_left, a.grip_right, a.head[0], a.head[1];
  f.rot = {a.ee_left.r, a.ee_right.r};
  return f;
}

WholeBodyAction from_channels(const ChannelFrame& f) {
  if (f.scalar.size() != 17 || f.rot.size() != 2) throw InvalidInput("frame does not match the whole-body layout");
  WholeBodyAction a;
  const auto& s = f.scalar;
  a.base = {s[0], s[1], wrap_angle(s[2])};
  for (int j = 0; j < 4; ++j) a.torso[static_cast<std::size_t>(j)] = s[3 + j];
  a.ee_left = {s.segment<3>(7), f.rot[0]};
  a.ee_right = {s.segment<3>(10), f.rot[1]};
  a.grip_left = s[13];
  a.grip_right = s[14];
  a.head = {s[15], s[16]};
  return a;
}

ChannelChunk to_channel_chunk(const ActionChunk& chunk) {
  const ActionChunk abs = chunk.repr == ReprTag::absolute_world ? chunk : to_absolute(chunk);
  ChannelChunk out;
  out.t_obs = abs.t_obs;
  out.dt = abs.dt;
  out.frames.reserve(abs.frames.size());
  for (const auto& f : abs.frames) out.frames.push_back(to_channels(f));
  return out;
}

std::vector<double> whole_body_velocity_limits(const WholeBodyLimits& lim) {
  return {lim.base_linear, lim.base_linear, lim.base_yaw, lim.torso,      lim.torso,     lim.torso,
          lim.torso,       lim.ee_linear,   lim.ee_linear, lim.ee_linear, lim.ee_linear, lim.ee_linear,
          lim.ee_linear,   lim.grip,        lim.grip,     lim.head,       lim.head,      lim.ee_angular,
          lim.ee_angular};
}

}  // namespace chunkrt
