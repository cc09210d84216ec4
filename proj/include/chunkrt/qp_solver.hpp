#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace chunkrt {

/// minimize 1/2 x^T H x + g^T x  subject to  l <= A x <= u.
/// Equalities use l_i = u_i; one-sided rows use +-infinity.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
  /// Declared half-bandwidth of H; negative means dense. The solver adds the
  /// row spans of A to size the band of its factorization.
  int bandwidth = -1;

  Eigen::Index n() const { return H.rows(); }
  Eigen::Index m() const { return A.rows(); }

  /// Throws InvalidInput on inconsistent sizes, asymmetric H, l > u, or
  /// non-finite H, g, A.
  void validate() const;
  double objective(const Eigen::VectorXd& x) const;
};

enum class QpStatus { solved, max_iters, infeasible };
std::string to_string(QpStatus s);

struct QpSolution {
  Eigen::VectorXd x;
  /// Multipliers with H x + g + A^T y = 0; y_i > 0 at an upper bound, < 0 at a lower one.
  Eigen::VectorXd y;
  QpStatus status = QpStatus::max_iters;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool polished = false;
};

struct QpSettings {
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  int max_iters = 4000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool scaling = true;
  int scaling_iters = 10;
  bool polish = true;
  /// Residuals below which an early polish is attempted.
  double polish_trigger = 1e-3;
  int check_every = 5;
  bool adaptive_rho = true;
  int adaptive_rho_every = 25;  ///< must be a multiple of check_every
  double divergence_limit = 1e10;
  double infeasibility_tol = 1e-7;
};

struct KktResiduals {
  double primal = 0.0;      ///< max(0, Ax - u, l - Ax), infinity norm
  double dual = 0.0;        ///< ||H x + g + A^T y||_inf
  double comp_slack = 0.0;  ///< max_i |y_i| * distance of A_i x to the bound y_i points at
};

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Operator-splitting (ADMM) solver. Factorizes H + sigma I + A^T R A once per
/// problem and reuses it for every iteration; uses a banded Cholesky when the
/// problem declares a bandwidth. Holds workspace, so an instance is not
/// thread-safe; use one instance per worker.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  /// Starts from `warm` when given (x, y in the unscaled problem), else from zero.
  QpSolution solve(const QpProblem& p, const QpSolution* warm = nullptr);

  const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

 private:
  struct Impl;
  QpSettings settings_;
};

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings = {});

/// Plain-text dump of (H, g, A, l, u) for offline reproduction:
///   qp n m bandwidth
///   H <n*n row-major values>
///   g ... / A ... / l ... / u ...
void write_qp(std::ostream& os, const QpProblem& p);
QpProblem read_qp(std::istream& is);

}  // namespace chunkrt
