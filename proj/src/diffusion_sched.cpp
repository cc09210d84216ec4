#include "chunkrt/diffusion_sched.hpp"

#include <cmath>
#include <limits>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

constexpr double kDegenerateAlphaBar = 1e2 * std::numeric_limits<double>::epsilon();

void check_step(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps())
    throw InvalidInput("diffusion step " + std::to_string(t) + " outside 1.." + std::to_string(s.steps()));
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw InvalidInput("schedule needs at least one step");
  std::vector<double> alphas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    alphas[static_cast<std::size_t>(i)] = 1.0 - (beta_start + frac * (beta_end - beta_start));
  }
  return from_alphas(std::move(alphas));
}

NoiseSchedule NoiseSchedule::from_alphas(std::vector<double> alphas) {
  if (alphas.empty()) throw InvalidInput("schedule needs at least one step");
  NoiseSchedule s;
  s.alpha_bars_.reserve(alphas.size());
  double prod = 1.0;
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
    prod *= a;
    s.alpha_bars_.push_back(prod);
  }
  s.alphas_ = std::move(alphas);
  return s;
}

double NoiseSchedule::alpha(int t) const {
  check_step(t, *this);
  return alphas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_step(t, *this);
  return alpha_bars_[static_cast<std::size_t>(t - 1)];
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& x, int t, const Eigen::VectorXd& eps,
                              const NoiseSchedule& sched) {
  if (x.size() != eps.size()) throw InvalidInput("forward_noise: x and eps differ in size");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd reconstruct(const Eigen::VectorXd& z, int t, const Eigen::VectorXd& eps,
                            const NoiseSchedule& sched) {
  if (z.size() != eps.size()) throw InvalidInput("reconstruct: z and eps differ in size");
  const double ab = sched.alpha_bar(t);
  if (ab <= kDegenerateAlphaBar) throw DegenerateSchedule(t, ab);
  return (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

double loss_target(const Eigen::VectorXd& eps_true, const Eigen::VectorXd& eps_pred) {
  if (eps_true.size() != eps_pred.size()) throw InvalidInput("loss_target: size mismatch");
  if (eps_true.size() == 0) return 0.0;
  return (eps_true - eps_pred).squaredNorm() / static_cast<double>(eps_true.size());
}

}  // namespace chunkrt
