#pragma once

#include <Eigen/Core>
#include <vector>

namespace chunkrt {

/// DDPM noise schedule indexed t = 1..T. Storage is zero-based, so alphas()[t-1]
/// holds alpha_t.
class NoiseSchedule {
 public:
  /// Linear beta from beta_start to beta_end over T steps.
  static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
  /// Any alphas in (0, 1); alpha_bar is their running product.
  static NoiseSchedule from_alphas(std::vector<double> alphas);

  int steps() const { return static_cast<int>(alphas_.size()); }
  double alpha(int t) const;
  double alpha_bar(int t) const;
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// z_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps.
Eigen::VectorXd forward_noise(const Eigen::VectorXd& x, int t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& sched);

/// Inverse of forward_noise given the noise. Throws DegenerateSchedule when
/// abar_t is too small for the inversion to mean anything.
Eigen::VectorXd reconstruct(const Eigen::VectorXd& z, int t, const Eigen::VectorXd& eps,
                            const NoiseSchedule& sched);

/// Mean squared error.
double loss_target(const Eigen::VectorXd& eps_true, const Eigen::VectorXd& eps_pred);

}  // namespace chunkrt
