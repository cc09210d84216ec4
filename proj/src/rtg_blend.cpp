#include <array>
#include <cmath>

#include "chunkrt/errors.hpp"
#include "chunkrt/rtg.hpp"

namespace chunkrt {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Adds weight * (a^T x + c)^2 for a sparse row a given as (index, coeff) pairs.
template <std::size_t N>
void add_square(MatrixXd& h, VectorXd& g, double weight, const std::array<std::pair<Index, double>, N>& a,
                double c) {
  for (const auto& [i, ai] : a) {
    for (const auto& [j, aj] : a) h(i, j) += 2.0 * weight * ai * aj;
    g[i] += 2.0 * weight * c * ai;
  }
}

}  // namespace

QpProblem blend_window_qp(const BlendWindow& w) {
  const Index n = w.new_target.size();
  if (n < 2) throw InvalidInput("blend window needs at least two knots");
  if (w.old_target.size() != n || w.w1.size() != n || w.w2.size() != n)
    throw InvalidInput("blend window arrays differ in length");
  if (!(w.dt > 0.0)) throw InvalidInput("blend window dt must be positive");
  if (!(w.v_max > 0.0)) throw InvalidInput("velocity limit must be positive");
  if (w.w_acc < 0.0) throw InvalidInput("acceleration weight must be non-negative");

  const Index K = n - 1;
  const double inv_dt = 1.0 / w.dt;
  const double inv_dt2 = inv_dt * inv_dt;

  QpProblem p;
  p.H = MatrixXd::Zero(n, n);
  p.g = VectorXd::Zero(n);
  p.bandwidth = 2;

  if (w.w_acc > 0.0) {
    for (Index k = 1; k < K; ++k)
      add_square<3>(p.H, p.g, w.w_acc, {{{k - 1, inv_dt2}, {k, -2.0 * inv_dt2}, {k + 1, inv_dt2}}}, 0.0);
    // Ghost knot one step before the splice, on the old trajectory's tangent.
    if (w.splice) {
      const double ghost = w.splice->position - w.splice->velocity * w.dt;
      add_square<2>(p.H, p.g, w.w_acc, {{{0, -2.0 * inv_dt2}, {1, inv_dt2}}}, ghost * inv_dt2);
    }
  }
  for (Index k = 0; k < n; ++k) {
    if (w.w1[k] != 0.0) {
      p.H(k, k) += 2.0 * w.w1[k];
      p.g[k] -= 2.0 * w.w1[k] * w.old_target[k];
    }
    if (w.w2[k] != 0.0) {
      p.H(k, k) += 2.0 * w.w2[k];
      p.g[k] -= 2.0 * w.w2[k] * w.new_target[k];
    }
  }

  const Index eq = w.splice ? 1 : 0;
  const Index m = eq + 2 * K;
  p.A = MatrixXd::Zero(m, n);
  p.l = VectorXd::Constant(m, -w.v_max);
  p.u = VectorXd::Constant(m, w.v_max);
  if (w.splice) {
    p.A(0, 0) = 1.0;
    p.l[0] = p.u[0] = w.splice->position;
  }
  for (Index k = 0; k < K; ++k) {
    const Index r = eq + k;
    p.A(r, k) = -inv_dt;
    p.A(r, k + 1) = inv_dt;
  }
  // Middle control point of segment k's velocity: 3 d_k - m_k - m_{k+1}.
  for (Index k = 0; k < K; ++k) {
    const Index r = eq + K + k;
    p.A(r, k) += -3.0 * inv_dt;
    p.A(r, k + 1) += 3.0 * inv_dt;
    if (k == 0) {
      if (w.splice) {
        p.l[r] += w.splice->velocity;
        p.u[r] += w.splice->velocity;
      } else {
        p.A(r, 0) += inv_dt;
        p.A(r, 1) -= inv_dt;
      }
    } else {
      p.A(r, k - 1) += 0.5 * inv_dt;
      p.A(r, k + 1) -= 0.5 * inv_dt;
    }
    if (k + 1 == K) {
      p.A(r, K - 1) += inv_dt;
      p.A(r, K) -= inv_dt;
    } else {
      p.A(r, k) += 0.5 * inv_dt;
      p.A(r, k + 2) -= 0.5 * inv_dt;
    }
  }
  return p;
}

VectorXd knot_slopes(const VectorXd& x, double dt, std::optional<double> first_slope) {
  const Index n = x.size();
  if (n < 2) throw InvalidInput("need at least two knots");
  VectorXd m(n);
  m[0] = first_slope ? *first_slope : (x[1] - x[0]) / dt;
  for (Index k = 1; k + 1 < n; ++k) m[k] = (x[k + 1] - x[k - 1]) / (2.0 * dt);
  m[n - 1] = (x[n - 1] - x[n - 2]) / dt;
  return m;
}

BlendWeights blend_weights(int knots, double dt, double t_s, double t_f, double tau) {
  if (knots < 1) throw InvalidInput("need at least one knot");
  BlendWeights bw{VectorXd::Zero(knots), VectorXd::Ones(knots)};
  for (int k = 0; k < knots; ++k) {
    const double t = t_s + k * dt;
    double w1 = 0.0;
    if (k == 0) w1 = 1.0;
    else if (tau > 0.0 && t <= t_f + 1e-12) w1 = std::exp(-(t - t_s) / tau);
    bw.w1[k] = w1;
    bw.w2[k] = 1.0 - w1;
  }
  return bw;
}

}  // namespace chunkrt
