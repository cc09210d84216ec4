#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "chunkrt/errors.hpp"
#include "chunkrt/rtg.hpp"

namespace chunkrt {
namespace {

using Eigen::Index;
using Eigen::VectorXd;

void eval_piece(const ExecutingTrajectory::Piece& pc, double t, VectorXd& x, VectorXd& v) {
  const Index K = pc.x.rows() - 1;
  const double u = (t - pc.t0) / pc.h;
  Index k = static_cast<Index>(std::floor(u));
  k = std::clamp<Index>(k, 0, K - 1);
  const double s = u - static_cast<double>(k);
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double d00 = (6 * s2 - 6 * s) / pc.h, d10 = 3 * s2 - 4 * s + 1, d01 = (6 * s - 6 * s2) / pc.h,
               d11 = 3 * s2 - 2 * s;
  const auto x0 = pc.x.row(k), x1 = pc.x.row(k + 1), m0 = pc.m.row(k), m1 = pc.m.row(k + 1);
  x = (h00 * x0 + h10 * pc.h * m0 + h01 * x1 + h11 * pc.h * m1).transpose();
  v = (d00 * x0 + d10 * m0 + d01 * x1 + d11 * m1).transpose();
}

}  // namespace

ExecutingTrajectory::ExecutingTrajectory(std::size_t scalars, std::size_t rotations, std::vector<Piece> pieces)
    : scalars_(scalars), rotations_(rotations), pieces_(std::move(pieces)) {
  if (pieces_.empty()) throw InvalidInput("trajectory needs at least one piece");
  const auto cols = static_cast<Index>(scalars + 3 * rotations);
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const Piece& p = pieces_[i];
    if (p.x.rows() < 2 || p.x.cols() != cols || p.m.rows() != p.x.rows() || p.m.cols() != cols)
      throw InvalidInput("trajectory piece has wrong shape");
    if (p.anchor.size() != rotations) throw InvalidInput("trajectory piece has wrong anchor count");
    if (!(p.t_end >= p.t_begin)) throw InvalidInput("trajectory piece has negative length");
    if (i > 0 && p.t_begin != pieces_[i - 1].t_end) throw InvalidInput("trajectory pieces are not contiguous");
  }
}

ExecutingTrajectory::Eval ExecutingTrajectory::eval(double t) const {
  if (t < t_start()) throw InvalidInput("sample time precedes the trajectory");
  Eval e;
  if (t >= t_end()) {
    const Piece& last = pieces_.back();
    eval_piece(last, last.t_end, e.x, e.v);
    e.v.setZero();
    e.piece = &last;
    return e;
  }
  // Last piece whose t_begin <= t.
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                             [](double tt, const Piece& p) { return tt < p.t_begin; });
  const Piece& pc = *std::prev(it);
  eval_piece(pc, t, e.x, e.v);
  e.piece = &pc;
  return e;
}

ExecutingTrajectory::Eval ExecutingTrajectory::eval_in_chart(double t, const std::vector<Rotation>& anchors) const {
  Eval e = eval(t);
  for (std::size_t r = 0; r < rotations_; ++r) {
    const Rotation& from = e.piece->anchor[r];
    if (anchors[r].matrix() == from.matrix()) continue;
    const auto c = static_cast<Index>(scalars_ + 3 * r);
    const Vec3 phi = e.x.segment<3>(c), phid = e.v.segment<3>(c);
    const Vec3 psi = so3_log(anchors[r].transpose() * from * so3_exp(phi));
    // Same body rate in both charts: Jr(psi) psi_dot = Jr(phi) phi_dot.
    const Vec3 psid = so3_right_jacobian(psi).partialPivLu().solve(so3_right_jacobian(phi) * phid);
    e.x.segment<3>(c) = psi;
    e.v.segment<3>(c) = psid;
  }
  return e;
}

ChannelFrame ExecutingTrajectory::frame(double t) const {
  const Eval e = eval(t);
  ChannelFrame f;
  f.scalar = e.x.head(static_cast<Index>(scalars_));
  f.rot.reserve(rotations_);
  for (std::size_t r = 0; r < rotations_; ++r)
    f.rot.push_back(e.piece->anchor[r] * so3_exp(e.x.segment<3>(static_cast<Index>(scalars_ + 3 * r))));
  return f;
}

RtgSample sample(const ExecutingTrajectory& traj, double t) {
  return {traj.frame(t), t > traj.t_end()};
}

}  // namespace chunkrt
