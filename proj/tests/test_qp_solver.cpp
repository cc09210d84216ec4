#include <doctest.h>

#include <Eigen/LU>
#include <algorithm>
#include <limits>
#include <random>
#include <sstream>

#include "chunkrt/errors.hpp"
#include "chunkrt/qp_solver.hpp"
#include "oracles/qp_projected_gradient.hpp"
#include "qp_fixtures.hpp"

using namespace chunkrt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

QpProblem make(MatrixXd H, VectorXd g, MatrixXd A, VectorXd l, VectorXd u) {
  return {std::move(H), std::move(g), std::move(A), std::move(l), std::move(u)};
}

QpProblem unconstrained_example() {
  return make(MatrixXd::Identity(2, 2), VectorXd::Map(std::vector<double>{-2, -4}.data(), 2),
              MatrixXd(0, 2), VectorXd(0), VectorXd(0));
}

}  // namespace

TEST_CASE("unconstrained minimum") {
  const auto sol = solve_qp(unconstrained_example());
  REQUIRE(sol.status == QpStatus::solved);
  CHECK((sol.x - VectorXd::Map(std::vector<double>{2, 4}.data(), 2)).norm() < 1e-9);
}

TEST_CASE("active bound: minimize (x-3)^2 s.t. x <= 2") {
  const auto p = make(MatrixXd::Constant(1, 1, 2.0), VectorXd::Constant(1, -6.0), MatrixXd::Ones(1, 1),
                      VectorXd::Constant(1, -inf), VectorXd::Constant(1, 2.0));
  const auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::solved);
  CHECK(sol.x[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(sol.y[0] > 0.0);
}

TEST_CASE("projection onto a half-space") {
  const auto p = make(2.0 * MatrixXd::Identity(2, 2), VectorXd::Constant(2, -2.0), MatrixXd::Ones(1, 2),
                      VectorXd::Constant(1, -inf), VectorXd::Constant(1, 1.0));
  const auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::solved);
  CHECK(std::abs(sol.x[0] - 0.5) < 1e-9);
  CHECK(std::abs(sol.x[1] - 0.5) < 1e-9);
}

TEST_CASE("random strictly convex problems match the projected-gradient oracle") {
  std::mt19937_64 rng(2024);
  int solved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const QpProblem p = fixtures::random_strictly_convex_qp(rng);
    const auto ref = oracle::projected_gradient_qp(p.H, p.g, p.A, p.l, p.u);
    REQUIRE(ref.converged);
    const auto sol = solve_qp(p);
    CAPTURE(trial);
    REQUIRE(sol.status == QpStatus::solved);
    ++solved;
    CHECK((sol.x - ref.x).lpNorm<Eigen::Infinity>() <= 1e-5);
    const auto r = kkt_residuals(p, sol.x, sol.y);
    CHECK(r.primal <= 1e-8);
    CHECK(r.dual <= 1e-8);
    CHECK(r.comp_slack <= 1e-6);
  }
  CHECK(solved == 100);
}

TEST_CASE("objective at the solution beats random feasible points") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 20; ++trial) {
    const QpProblem p = fixtures::random_strictly_convex_qp(rng);
    const auto sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::solved);
    // Sample along the null space of the equality rows so equalities stay exact.
    std::vector<Eigen::Index> eq;
    for (Eigen::Index i = 0; i < p.m(); ++i)
      if (p.l[i] == p.u[i]) eq.push_back(i);
    MatrixXd basis = MatrixXd::Identity(p.n(), p.n());
    if (!eq.empty()) {
      MatrixXd aeq(static_cast<Eigen::Index>(eq.size()), p.n());
      for (std::size_t k = 0; k < eq.size(); ++k) aeq.row(static_cast<Eigen::Index>(k)) = p.A.row(eq[k]);
      basis = Eigen::FullPivLU<MatrixXd>(aeq).kernel();
    }
    const double fstar = p.objective(sol.x);
    int checked = 0;
    for (int s = 0; s < 1000; ++s) {
      VectorXd coeff(basis.cols());
      for (Eigen::Index j = 0; j < coeff.size(); ++j) coeff[j] = gauss(rng);
      const VectorXd cand = sol.x + basis * coeff * std::pow(10.0, -3.0 + 3.0 * (s % 10) / 10.0);
      const VectorXd ax = p.A * cand;
      bool feasible = true;
      for (Eigen::Index i = 0; i < p.m(); ++i)
        if (ax[i] > p.u[i] + 1e-12 || ax[i] < p.l[i] - 1e-12) feasible = false;
      if (!feasible) continue;
      ++checked;
      CHECK(fstar <= p.objective(cand) + 1e-9);
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("kkt_residuals") {
  const auto p = unconstrained_example();
  VectorXd x(2);
  x << 2, 4;
  const VectorXd y(0);
  auto r = kkt_residuals(p, x, y);
  CHECK(r.primal <= 1e-10);
  CHECK(r.dual <= 1e-10);
  CHECK(r.comp_slack <= 1e-10);

  x[0] += 0.1;
  r = kkt_residuals(p, x, y);
  CHECK(r.dual >= 0.05);

  const auto zero = make(MatrixXd::Zero(3, 3), VectorXd::Zero(3), MatrixXd(0, 3), VectorXd(0), VectorXd(0));
  r = kkt_residuals(zero, VectorXd::Constant(3, 1.7), VectorXd(0));
  CHECK(r.primal == 0.0);
  CHECK(r.dual == 0.0);
  CHECK(r.comp_slack == 0.0);

  CHECK_THROWS_AS(kkt_residuals(p, VectorXd::Zero(3), y), InvalidInput);
}

TEST_CASE("infeasible constraints are reported, not iterated forever") {
  SUBCASE("contradictory bounds on one variable") {
    MatrixXd A(2, 1);
    A << 1, 1;
    VectorXd l(2), u(2);
    l << 1, -inf;
    u << inf, 0;
    const auto sol = solve_qp(make(MatrixXd::Identity(1, 1), VectorXd::Zero(1), A, l, u));
    CHECK(sol.status == QpStatus::infeasible);
  }
  SUBCASE("conflicting equalities") {
    MatrixXd A(2, 2);
    A << 1, 1, 1, 1;
    VectorXd l(2);
    l << 0, 1;
    const auto sol = solve_qp(make(MatrixXd::Identity(2, 2), VectorXd::Zero(2), A, l, l));
    CHECK(sol.status == QpStatus::infeasible);
  }
}

TEST_CASE("invalid problems") {
  MatrixXd H(2, 2);
  H << 1, 0, 0, -1;
  CHECK_THROWS_AS(solve_qp(make(H, VectorXd::Zero(2), MatrixXd(0, 2), VectorXd(0), VectorXd(0))),
                  InvalidInput);
  MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(solve_qp(make(asym, VectorXd::Zero(2), MatrixXd(0, 2), VectorXd(0), VectorXd(0))),
                  InvalidInput);
  CHECK_THROWS_AS(solve_qp(make(MatrixXd::Identity(1, 1), VectorXd::Zero(1), MatrixXd::Ones(1, 1),
                                VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 0.0))),
                  InvalidInput);
}

TEST_CASE("banded path agrees with the dense path") {
  const int n = 30;
  MatrixXd D = MatrixXd::Zero(n - 2, n);
  for (int k = 0; k + 2 < n; ++k) {
    D(k, k) = 1;
    D(k, k + 1) = -2;
    D(k, k + 2) = 1;
  }
  QpProblem p;
  p.H = 50.0 * D.transpose() * D + MatrixXd::Identity(n, n);
  VectorXd target(n);
  for (int k = 0; k < n; ++k) target[k] = k < n / 2 ? 0.0 : 1.0;
  p.g = -target;
  p.A = MatrixXd::Zero(n - 1, n);
  for (int k = 0; k + 1 < n; ++k) {
    p.A(k, k) = -1;
    p.A(k, k + 1) = 1;
  }
  p.l = VectorXd::Constant(n - 1, -0.05);
  p.u = VectorXd::Constant(n - 1, 0.05);
  const auto dense = solve_qp(p);
  p.bandwidth = 2;
  const auto banded = solve_qp(p);
  REQUIRE(dense.status == QpStatus::solved);
  REQUIRE(banded.status == QpStatus::solved);
  CHECK((dense.x - banded.x).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((p.A * banded.x).maxCoeff() <= 0.05 + 1e-8);
}

TEST_CASE("deterministic output") {
  std::mt19937_64 rng(5);
  const auto p = fixtures::random_strictly_convex_qp(rng);
  const auto a = solve_qp(p), b = solve_qp(p);
  CHECK(a.iterations == b.iterations);
  CHECK((a.x.array() == b.x.array()).all());
  CHECK((a.y.array() == b.y.array()).all());
}

TEST_CASE("warm start does not increase iterations on slowly drifting problems") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  std::vector<double> cold_medians, warm_medians;
  for (int seq = 0; seq < 50; ++seq) {
    QpProblem p = fixtures::random_strictly_convex_qp(rng);
    QpSolver cold, warm;
    QpSolution prev = warm.solve(p);
    std::vector<int> ci, wi;
    for (int step = 0; step < 10; ++step) {
      for (Eigen::Index i = 0; i < p.g.size(); ++i) p.g[i] *= 1.0 + jitter(rng);
      for (Eigen::Index i = 0; i < p.m(); ++i) {
        const double f = 1.0 + jitter(rng);
        if (std::isfinite(p.l[i])) p.l[i] *= f;
        if (std::isfinite(p.u[i])) p.u[i] *= f;
      }
      const auto c = cold.solve(p);
      const auto w = warm.solve(p, &prev);
      ci.push_back(c.iterations);
      wi.push_back(w.iterations);
      prev = w;
    }
    std::sort(ci.begin(), ci.end());
    std::sort(wi.begin(), wi.end());
    cold_medians.push_back(ci[ci.size() / 2]);
    warm_medians.push_back(wi[wi.size() / 2]);
  }
  std::sort(cold_medians.begin(), cold_medians.end());
  std::sort(warm_medians.begin(), warm_medians.end());
  CHECK(warm_medians[25] <= cold_medians[25]);
}

TEST_CASE("QP text dump round trips") {
  std::mt19937_64 rng(8);
  const auto p = fixtures::random_strictly_convex_qp(rng);
  std::stringstream ss;
  write_qp(ss, p);
  const auto q = read_qp(ss);
  CHECK((p.H - q.H).norm() == 0.0);
  CHECK((p.g - q.g).norm() == 0.0);
  for (Eigen::Index i = 0; i < p.m(); ++i) {
    CHECK(p.l[i] == q.l[i]);
    CHECK(p.u[i] == q.u[i]);
  }
}
