#pragma once

#include <Eigen/Core>

namespace chunkrt {

/// Cholesky factorization L L^T of a symmetric positive-definite matrix whose
/// nonzeros lie within `bandwidth` of the diagonal. Storage is (bw+1) x n:
/// column j holds L(j, j-bw .. j).
class BandedCholesky {
 public:
  /// Reads the lower band of `a`. Returns false if a pivot is not positive.
  bool factor(const Eigen::MatrixXd& a, int bandwidth);
  void solve_in_place(Eigen::VectorXd& x) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = b;
    solve_in_place(x);
    return x;
  }
  int bandwidth() const { return bw_; }

 private:
  double& at(Eigen::Index i, Eigen::Index j) { return band_(bw_ + j - i, i); }
  double at(Eigen::Index i, Eigen::Index j) const { return band_(bw_ + j - i, i); }

  Eigen::MatrixXd band_;
  int bw_ = 0;
  Eigen::Index n_ = 0;
};

}  // namespace chunkrt
