#include "chunkrt/qp_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "chunkrt/banded.hpp"
#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoEqScale = 1e3;
constexpr double kRhoFree = 1e-6;
constexpr double kPolishDelta = 1e-7;
constexpr int kPolishRefine = 5;
constexpr double kScaleMin = 1e-4;
constexpr double kScaleMax = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoRefactorRatio = 5.0;

bool is_equality(double l, double u) {
  return std::isfinite(l) && std::isfinite(u) && u - l <= 1e-12 * std::max(1.0, std::abs(l));
}

/// Row-compressed copy of A: row i stores its nonzeros from start[i] on.
/// Keeps products O(nnz) for the banded constraint matrices RTG builds.
struct RowSpans {
  std::vector<Index> start;
  std::vector<VectorXd> vals;
  Index cols = 0;
  Index max_span = 0;

  explicit RowSpans(const MatrixXd& a) : start(a.rows()), vals(a.rows()), cols(a.cols()) {
    for (Index i = 0; i < a.rows(); ++i) {
      Index first = 0, last = -1;
      for (Index j = 0; j < a.cols(); ++j)
        if (a(i, j) != 0.0) {
          if (last < 0) first = j;
          last = j;
        }
      start[i] = first;
      vals[i] = last < 0 ? VectorXd() : VectorXd(a.row(i).segment(first, last - first + 1).transpose());
      max_span = std::max(max_span, last - first + 1);
    }
  }

  void mul(const VectorXd& x, VectorXd& out) const {
    out.resize(static_cast<Index>(start.size()));
    for (std::size_t i = 0; i < start.size(); ++i)
      out[static_cast<Index>(i)] = vals[i].size() ? vals[i].dot(x.segment(start[i], vals[i].size())) : 0.0;
  }
  void mul_t(const VectorXd& y, VectorXd& out) const {
    out.setZero(cols);
    for (std::size_t i = 0; i < start.size(); ++i)
      if (vals[i].size()) out.segment(start[i], vals[i].size()) += y[static_cast<Index>(i)] * vals[i];
  }
};

int band_of(const MatrixXd& h) {
  int bw = 0;
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < i; ++j)
      if (h(i, j) != 0.0) bw = std::max(bw, static_cast<int>(i - j));
  return bw;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

}  // namespace

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::solved: return "solved";
    case QpStatus::max_iters: return "max_iters";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

void QpProblem::validate() const {
  const Index nn = H.rows();
  if (H.cols() != nn) throw InvalidInput("H must be square");
  if (g.size() != nn) throw InvalidInput("g has wrong length");
  if (A.cols() != nn && A.rows() > 0) throw InvalidInput("A has wrong column count");
  if (l.size() != A.rows() || u.size() != A.rows()) throw InvalidInput("bounds have wrong length");
  if (!H.allFinite() || !g.allFinite() || !A.allFinite()) throw InvalidInput("problem data not finite");
  if (nn > 0 && (H - H.transpose()).lpNorm<Eigen::Infinity>() > 1e-12)
    throw InvalidInput("H is not symmetric");
  for (Index i = 0; i < l.size(); ++i) {
    if (std::isnan(l[i]) || std::isnan(u[i])) throw InvalidInput("bound is NaN");
    if (l[i] > u[i]) throw InvalidInput("lower bound exceeds upper bound in row " + std::to_string(i));
  }
}

double QpProblem::objective(const VectorXd& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }

KktResiduals kkt_residuals(const QpProblem& p, const VectorXd& x, const VectorXd& y) {
  if (x.size() != p.n() || y.size() != p.m()) throw InvalidInput("kkt_residuals: dimension mismatch");
  KktResiduals r;
  const VectorXd ax = p.m() ? VectorXd(p.A * x) : VectorXd();
  for (Index i = 0; i < p.m(); ++i) {
    r.primal = std::max({r.primal, ax[i] - p.u[i], p.l[i] - ax[i]});
    if (y[i] > 0.0)
      r.comp_slack = std::max(r.comp_slack, std::isfinite(p.u[i]) ? y[i] * std::abs(p.u[i] - ax[i]) : y[i]);
    else if (y[i] < 0.0)
      r.comp_slack = std::max(r.comp_slack, std::isfinite(p.l[i]) ? -y[i] * std::abs(ax[i] - p.l[i]) : -y[i]);
  }
  VectorXd stat = p.H * x + p.g;
  if (p.m()) stat += p.A.transpose() * y;
  r.dual = inf_norm(stat);
  return r;
}

struct QpSolver::Impl {
  const QpProblem& p;
  const QpSettings& s;

  // Scaled data: Hs = c D H D, gs = c D g, As = E A D, ls = E l, us = E u.
  MatrixXd hs;
  VectorXd gs, ls, us, d, e, rho;
  MatrixXd as_dense;
  double c = 1.0;
  bool banded = false;
  int band = 0;
  BandedCholesky band_llt;
  Eigen::LLT<MatrixXd> dense_llt;

  Impl(const QpProblem& prob, const QpSettings& settings) : p(prob), s(settings) {}

  /// Ruiz equilibration followed by cost scaling. Works on the nonzeros of
  /// H and A only; the blend problems are banded.
  void scale() {
    const Index n = p.n(), m = p.m();
    d = VectorXd::Ones(n);
    e = VectorXd::Ones(m);
    hs = p.H;
    gs = p.g;
    as_dense = p.A;
    c = 1.0;
    if (!s.scaling) return;
    auto clampv = [](double v) { return std::clamp(v, kScaleMin, kScaleMax); };

    struct Nz {
      Index i, j;
      double v;
    };
    std::vector<Nz> hn, an;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (hs(i, j) != 0.0) hn.push_back({i, j, hs(i, j)});
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < m; ++i)
        if (as_dense(i, j) != 0.0) an.push_back({i, j, as_dense(i, j)});

    VectorXd dd(n), ee(m), col(n), row(m);
    for (int it = 0; it < s.scaling_iters; ++it) {
      col.setZero();
      row.setZero();
      for (const Nz& z : hn) col[z.j] = std::max(col[z.j], std::abs(z.v));
      for (const Nz& z : an) {
        col[z.j] = std::max(col[z.j], std::abs(z.v));
        row[z.i] = std::max(row[z.i], std::abs(z.v));
      }
      for (Index j = 0; j < n; ++j) dd[j] = col[j] < kScaleMin ? 1.0 : 1.0 / std::sqrt(clampv(col[j]));
      for (Index i = 0; i < m; ++i) ee[i] = row[i] < kScaleMin ? 1.0 : 1.0 / std::sqrt(clampv(row[i]));
      for (Nz& z : hn) z.v = z.v * dd[z.i] * dd[z.j];
      for (Nz& z : an) z.v = z.v * ee[z.i] * dd[z.j];
      gs.array() *= dd.array();
      d = d.cwiseProduct(dd);
      e = e.cwiseProduct(ee);

      col.setZero();
      for (const Nz& z : hn) col[z.j] = std::max(col[z.j], std::abs(z.v));
      const double mean_col = n ? col.sum() / static_cast<double>(n) : 0.0;
      double gamma = std::max(mean_col, inf_norm(gs));
      gamma = gamma < kScaleMin ? 1.0 : 1.0 / clampv(gamma);
      for (Nz& z : hn) z.v *= gamma;
      gs *= gamma;
      c *= gamma;
    }
    for (const Nz& z : hn) hs(z.i, z.j) = z.v;
    for (const Nz& z : an) as_dense(z.i, z.j) = z.v;
  }

  double rho_base = 0.1;

  void set_rho(double base) {
    rho_base = std::clamp(base, kRhoMin, kRhoMax);
    for (Index i = 0; i < p.m(); ++i) {
      if (!std::isfinite(p.l[i]) && !std::isfinite(p.u[i])) rho[i] = kRhoFree;
      else if (is_equality(p.l[i], p.u[i])) rho[i] = kRhoEqScale * rho_base;
      else rho[i] = rho_base;
    }
  }

  void scale_bounds() {
    const Index m = p.m();
    ls.resize(m);
    us.resize(m);
    rho.resize(m);
    for (Index i = 0; i < m; ++i) {
      ls[i] = std::isfinite(p.l[i]) ? e[i] * p.l[i] : -kInf;
      us[i] = std::isfinite(p.u[i]) ? e[i] * p.u[i] : kInf;
    }
    set_rho(s.rho);
  }

  void check_psd() {
    MatrixXd shifted = p.H;
    shifted.diagonal().array() += s.sigma;
    bool ok;
    if (banded) {
      BandedCholesky chk;
      ok = chk.factor(shifted, band_of(p.H));
    } else {
      ok = Eigen::LLT<MatrixXd>(shifted).info() == Eigen::Success;
    }
    if (!ok) throw InvalidInput("H is not positive semidefinite");
  }

  void factor(const RowSpans& rows) {
    MatrixXd k = hs;
    k.diagonal().array() += s.sigma;
    for (std::size_t i = 0; i < rows.start.size(); ++i) {
      const VectorXd& v = rows.vals[i];
      if (!v.size()) continue;
      k.block(rows.start[i], rows.start[i], v.size(), v.size()).noalias() +=
          rho[static_cast<Index>(i)] * v * v.transpose();
    }
    bool ok;
    if (banded) {
      ok = band_llt.factor(k, band);
    } else {
      dense_llt.compute(k);
      ok = dense_llt.info() == Eigen::Success;
    }
    if (!ok) throw InvalidInput("KKT system could not be factorized (H not positive semidefinite?)");
  }

  void kkt_solve(VectorXd& rhs) const {
    if (banded) band_llt.solve_in_place(rhs);
    else rhs = dense_llt.solve(rhs);
  }

  void unscale(const VectorXd& xs, const VectorXd& ys, VectorXd& x, VectorXd& y) const {
    x = d.cwiseProduct(xs);
    y = e.cwiseProduct(ys) / c;
  }

  /// Solves the equality-constrained problem on the active set guessed from
  /// (z, y). Returns nullopt when the guess is inconsistent.
  std::optional<QpSolution> polish(const VectorXd& z, const VectorXd& y) const {
    const Index n = p.n();
    std::vector<Index> act;
    std::vector<double> bound;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (Index i = 0; i < p.m(); ++i) {
      const bool eq = std::isfinite(ls[i]) && std::isfinite(us[i]) && is_equality(p.l[i], p.u[i]);
      const bool lower = z[i] - ls[i] < -y[i];
      const bool upper = us[i] - z[i] < y[i];
      if (!eq && !lower && !upper) continue;
      act.push_back(i);
      if (eq) {
        bound.push_back(ls[i]);
        side.push_back(0);
      } else if (lower) {
        if (!std::isfinite(ls[i])) return std::nullopt;
        bound.push_back(ls[i]);
        side.push_back(-1);
      } else {
        if (!std::isfinite(us[i])) return std::nullopt;
        bound.push_back(us[i]);
        side.push_back(1);
      }
    }
    const Index k = static_cast<Index>(act.size());
    MatrixXd kkt = MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = hs;
    for (Index r = 0; r < k; ++r) {
      kkt.block(n + r, 0, 1, n) = as_dense.row(act[static_cast<std::size_t>(r)]);
      kkt.block(0, n + r, n, 1) = as_dense.row(act[static_cast<std::size_t>(r)]).transpose();
    }
    VectorXd rhs(n + k);
    rhs.head(n) = -gs;
    for (Index r = 0; r < k; ++r) rhs[n + r] = bound[static_cast<std::size_t>(r)];

    MatrixXd reg = kkt;
    reg.diagonal().head(n).array() += kPolishDelta;
    reg.diagonal().tail(k).array() -= kPolishDelta;
    Eigen::PartialPivLU<MatrixXd> lu(reg);
    VectorXd sol = lu.solve(rhs);
    for (int it = 0; it < kPolishRefine; ++it) sol += lu.solve(rhs - kkt * sol);
    if (!sol.allFinite()) return std::nullopt;

    VectorXd ys = VectorXd::Zero(p.m());
    for (Index r = 0; r < k; ++r) {
      const double yr = sol[n + r];
      const int sd = side[static_cast<std::size_t>(r)];
      if ((sd < 0 && yr > 0.0) || (sd > 0 && yr < 0.0)) return std::nullopt;
      ys[act[static_cast<std::size_t>(r)]] = yr;
    }
    QpSolution out;
    unscale(sol.head(n), ys, out.x, out.y);
    const KktResiduals res = kkt_residuals(p, out.x, out.y);
    out.primal_residual = res.primal;
    out.dual_residual = res.dual;
    out.polished = true;
    out.status = QpStatus::solved;
    if (res.primal > s.tol_primal || res.dual > s.tol_dual) return std::nullopt;
    return out;
  }
};

QpSolution QpSolver::solve(const QpProblem& p, const QpSolution* warm) {
  p.validate();
  const Index n = p.n(), m = p.m();
  Impl im(p, settings_);
  const QpSettings& s = settings_;

  if (p.bandwidth >= 0 && band_of(p.H) <= p.bandwidth) im.banded = true;
  im.check_psd();
  im.scale();
  im.scale_bounds();
  const RowSpans rows(im.as_dense);
  if (im.banded) im.band = std::max<int>(p.bandwidth, static_cast<int>(rows.max_span) - 1);
  im.factor(rows);

  VectorXd x = VectorXd::Zero(n), z(m), y = VectorXd::Zero(m);
  if (warm && warm->x.size() == n && warm->y.size() == m) {
    x = warm->x.cwiseQuotient(im.d);
    y = im.c * warm->y.cwiseQuotient(im.e);
  }
  rows.mul(x, z);
  z = z.cwiseMax(im.ls).cwiseMin(im.us);

  QpSolution sol;
  VectorXd rhs(n), tmp(n), xt(n), zt(m), zh(m), z_new(m), y_prev(m), ax(m);
  std::vector<char> last_polish_sig;

  auto finish = [&](QpStatus status, int iters) {
    sol.status = status;
    sol.iterations = iters;
    im.unscale(x, y, sol.x, sol.y);
    const KktResiduals r = kkt_residuals(p, sol.x, sol.y);
    sol.primal_residual = r.primal;
    sol.dual_residual = r.dual;
    return sol;
  };

  for (int k = 1; k <= s.max_iters; ++k) {
    y_prev = y;
    // x-update through the cached factorization.
    rows.mul_t(im.rho.cwiseProduct(z) - y, tmp);
    rhs = s.sigma * x - im.gs + tmp;
    im.kkt_solve(rhs);
    xt = rhs;
    rows.mul(xt, zt);
    x = s.alpha * xt + (1.0 - s.alpha) * x;
    zh = s.alpha * zt + (1.0 - s.alpha) * z;
    z_new = (zh + y.cwiseQuotient(im.rho)).cwiseMax(im.ls).cwiseMin(im.us);
    y += im.rho.cwiseProduct(zh - z_new);
    z = z_new;

    if (k % s.check_every != 0 && k != s.max_iters) continue;

    rows.mul(x, ax);
    const double r_prim = m ? (ax - z).cwiseQuotient(im.e).lpNorm<Eigen::Infinity>() : 0.0;
    rows.mul_t(y, tmp);
    const double r_dual = inf_norm((im.hs * x + im.gs + tmp).cwiseQuotient(im.d)) / im.c;

    // Rebalance rho from the scaled, normalized residual ratio.
    if (m && s.adaptive_rho && k % s.adaptive_rho_every == 0) {
      const VectorXd hx = im.hs * x;
      const double prim_den = std::max({inf_norm(ax), inf_norm(z), 1e-12});
      const double dual_den = std::max({inf_norm(hx), inf_norm(tmp), inf_norm(im.gs), 1e-12});
      const double sp = inf_norm(ax - z) / prim_den;
      const double sd = inf_norm(hx + im.gs + tmp) / dual_den;
      if (sp > 0.0 && sd > 0.0) {
        const double proposal = std::clamp(im.rho_base * std::sqrt(sp / sd), kRhoMin, kRhoMax);
        if (proposal > kRhoRefactorRatio * im.rho_base || proposal * kRhoRefactorRatio < im.rho_base) {
          im.set_rho(proposal);
          im.factor(rows);
        }
      }
    }

    if (!x.allFinite() || !y.allFinite()) return finish(QpStatus::infeasible, k);
    if (inf_norm(x.cwiseProduct(im.d)) > s.divergence_limit ||
        inf_norm(y.cwiseProduct(im.e)) / im.c > s.divergence_limit)
      return finish(QpStatus::infeasible, k);

    // Primal infeasibility certificate on the multiplier increment.
    if (m) {
      const VectorXd dy = (y - y_prev).cwiseProduct(im.e);
      const double dyn = inf_norm(dy);
      if (dyn > 1e-12) {
        rows.mul_t(y - y_prev, tmp);
        const double aty = inf_norm(tmp.cwiseQuotient(im.d));
        double support = 0.0;
        bool bounded = true;
        for (Index i = 0; i < m; ++i) {
          if (dy[i] > 1e-14 * dyn) {
            if (!std::isfinite(p.u[i])) bounded = false;
            else support += p.u[i] * dy[i];
          } else if (dy[i] < -1e-14 * dyn) {
            if (!std::isfinite(p.l[i])) bounded = false;
            else support += p.l[i] * dy[i];
          }
        }
        if (bounded && aty <= s.infeasibility_tol * dyn && support < -s.infeasibility_tol * dyn)
          return finish(QpStatus::infeasible, k);
      }
    }

    const bool converged = r_prim <= s.tol_primal && r_dual <= s.tol_dual;
    if (s.polish && (converged || (r_prim <= s.polish_trigger && r_dual <= s.polish_trigger))) {
      std::vector<char> sig(static_cast<std::size_t>(m));
      for (Index i = 0; i < m; ++i)
        sig[static_cast<std::size_t>(i)] =
            static_cast<char>((z[i] - im.ls[i] < -y[i]) ? 1 : (im.us[i] - z[i] < y[i]) ? 2 : 0);
      if (converged || sig != last_polish_sig) {
        last_polish_sig = sig;
        if (auto pol = im.polish(z, y)) {
          if (!converged || (pol->primal_residual <= r_prim && pol->dual_residual <= r_dual)) {
            pol->iterations = k;
            return *pol;
          }
        }
      }
    }
    if (converged) return finish(QpStatus::solved, k);
  }
  return finish(QpStatus::max_iters, s.max_iters);
}

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings) {
  QpSolver solver(settings);
  return solver.solve(p);
}

void write_qp(std::ostream& os, const QpProblem& p) {
  os.precision(17);
  os << "qp " << p.n() << ' ' << p.m() << ' ' << p.bandwidth << '\n';
  auto dump = [&os](const char* tag, const auto& mat) {
    os << tag;
    for (Index i = 0; i < mat.rows(); ++i)
      for (Index j = 0; j < mat.cols(); ++j) os << ' ' << mat(i, j);
    os << '\n';
  };
  dump("H", p.H);
  dump("g", p.g);
  dump("A", p.A);
  dump("l", p.l);
  dump("u", p.u);
}

QpProblem read_qp(std::istream& is) {
  std::string tag;
  Index n = 0, m = 0;
  QpProblem p;
  if (!(is >> tag >> n >> m >> p.bandwidth) || tag != "qp" || n < 0 || m < 0)
    throw InvalidInput("bad QP dump header");
  auto read_into = [&is](const char* expect, auto& mat) {
    std::string t;
    if (!(is >> t) || t != expect) throw InvalidInput(std::string("expected block ") + expect);
    for (Index i = 0; i < mat.rows(); ++i)
      for (Index j = 0; j < mat.cols(); ++j) {
        std::string tok;
        if (!(is >> tok)) throw InvalidInput("truncated QP dump");
        mat(i, j) = std::stod(tok);
      }
  };
  p.H.resize(n, n);
  p.g.resize(n);
  p.A.resize(m, n);
  p.l.resize(m);
  p.u.resize(m);
  read_into("H", p.H);
  read_into("g", p.g);
  read_into("A", p.A);
  read_into("l", p.l);
  read_into("u", p.u);
  return p;
}

}  // namespace chunkrt
