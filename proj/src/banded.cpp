#include "chunkrt/banded.hpp"

#include <algorithm>
#include <cmath>

namespace chunkrt {

// at(i, j) with i >= j >= i - bw addresses L(i, j).
bool BandedCholesky::factor(const Eigen::MatrixXd& a, int bandwidth) {
  n_ = a.rows();
  bw_ = std::max(0, bandwidth);
  band_.setZero(bw_ + 1, n_);
  for (Eigen::Index i = 0; i < n_; ++i)
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - bw_); j <= i; ++j) at(i, j) = a(i, j);

  for (Eigen::Index j = 0; j < n_; ++j) {
    double d = at(j, j);
    for (Eigen::Index k = std::max<Eigen::Index>(0, j - bw_); k < j; ++k) d -= at(j, k) * at(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    at(j, j) = ljj;
    const Eigen::Index last = std::min(n_ - 1, j + bw_);
    for (Eigen::Index i = j + 1; i <= last; ++i) {
      double s = at(i, j);
      for (Eigen::Index k = std::max<Eigen::Index>(0, i - bw_); k < j; ++k) s -= at(i, k) * at(j, k);
      at(i, j) = s / ljj;
    }
  }
  return true;
}

void BandedCholesky::solve_in_place(Eigen::VectorXd& x) const {
  for (Eigen::Index i = 0; i < n_; ++i) {
    double s = x[i];
    for (Eigen::Index k = std::max<Eigen::Index>(0, i - bw_); k < i; ++k) s -= at(i, k) * x[k];
    x[i] = s / at(i, i);
  }
  for (Eigen::Index i = n_ - 1; i >= 0; --i) {
    double s = x[i];
    const Eigen::Index last = std::min(n_ - 1, i + bw_);
    for (Eigen::Index k = i + 1; k <= last; ++k) s -= at(k, i) * x[k];
    x[i] = s / at(i, i);
  }
}

}  // namespace chunkrt
