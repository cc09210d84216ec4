#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "chunkrt/errors.hpp"
#include "chunkrt/rtg.hpp"
#include "oracles/qp_projected_gradient.hpp"

using namespace chunkrt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ChannelChunk scalar_chunk(double t_obs, double dt, const std::vector<double>& values) {
  ChannelChunk c;
  c.t_obs = t_obs;
  c.dt = dt;
  for (double v : values) {
    ChannelFrame f;
    f.scalar = VectorXd::Constant(1, v);
    c.frames.push_back(f);
  }
  return c;
}

std::vector<double> line(std::size_t n, double start, double step) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = start + step * static_cast<double>(i);
  return v;
}

RtgConfig scalar_config(double v_max) {
  RtgConfig cfg;
  cfg.v_max = {v_max};
  return cfg;
}

/// Largest 1 kHz finite-difference speed of scalar channel c over [t0, t1].
double max_fd_speed(const ExecutingTrajectory& traj, double t0, double t1, Eigen::Index c = 0) {
  const double h = 1e-3;
  double worst = 0.0;
  double prev = traj.frame(t0).scalar[c];
  for (int k = 1; t0 + k * h <= t1; ++k) {
    const double cur = traj.frame(t0 + k * h).scalar[c];
    worst = std::max(worst, std::abs(cur - prev) / h);
    prev = cur;
  }
  return worst;
}

oracle::PgResult oracle_solve(const QpProblem& p) { return oracle::projected_gradient_qp(p.H, p.g, p.A, p.l, p.u); }

}  // namespace

TEST_CASE("constant initial chunk gives a constant trajectory") {
  const auto layout = ChannelLayout::plain(1);
  const auto out = ingest_initial_chunk(scalar_chunk(0.0, 0.1, std::vector<double>(32, 0.7)), 0.09, layout,
                                        scalar_config(0.5));
  REQUIRE(out.record.accepted());
  const auto& traj = *out.trajectory;
  CHECK(traj.t_start() == doctest::Approx(0.1));
  CHECK(traj.t_end() == doctest::Approx(3.1));
  for (double t = traj.t_start(); t <= traj.t_end(); t += 0.0137) CHECK(std::abs(traj.frame(t).scalar[0] - 0.7) < 1e-12);
}

TEST_CASE("straight-line chunk within limits is followed at the knots") {
  const auto layout = ChannelLayout::plain(1);
  const auto chunk = scalar_chunk(0.0, 0.1, line(32, 0.2, 0.03));  // 0.3 per second
  const auto cfg = scalar_config(0.5);
  const auto out = ingest_initial_chunk(chunk, 0.09, layout, cfg);
  REQUIRE(out.record.accepted());
  const auto& pc = out.trajectory->pieces().back();
  for (Eigen::Index k = 0; k < pc.x.rows(); ++k) {
    const double t = pc.t0 + k * pc.h;
    CHECK(std::abs(pc.x(k, 0) - (0.2 + 0.3 * t)) <= 1e-6);
  }
  // Same window through the oracle.
  BlendWindow w;
  w.dt = 0.1;
  w.new_target = pc.x.col(0);
  for (Eigen::Index k = 0; k < pc.x.rows(); ++k) w.new_target[k] = 0.2 + 0.3 * (pc.t0 + k * pc.h);
  w.old_target = VectorXd::Zero(w.new_target.size());
  w.w1 = VectorXd::Zero(w.new_target.size());
  w.w2 = VectorXd::Ones(w.new_target.size());
  w.v_max = 0.5;
  const auto ref = oracle_solve(blend_window_qp(w));
  REQUIRE(ref.converged);
  CHECK((ref.x - pc.x.col(0)).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("a jump beyond the limit is smoothed under the velocity bound") {
  const auto layout = ChannelLayout::plain(1);
  std::vector<double> v(32, 0.0);
  for (std::size_t i = 16; i < v.size(); ++i) v[i] = 0.5;  // 5 m/s over one step
  const auto out = ingest_initial_chunk(scalar_chunk(0.0, 0.1, v), 0.05, layout, scalar_config(0.4));
  REQUIRE(out.record.accepted());
  const auto& traj = *out.trajectory;
  CHECK(max_fd_speed(traj, traj.t_start(), traj.t_end()) <= 0.4 + 1e-9);
  CHECK(out.record.max_velocity_ratio <= 1.0 + 1e-9);
  CHECK(out.record.max_velocity_ratio > 0.9);
}

TEST_CASE("chunk validation") {
  const auto layout = ChannelLayout::plain(1);
  CHECK_THROWS_AS(ingest_initial_chunk(scalar_chunk(0.0, 0.1, {1.0}), 0.0, layout, scalar_config(1.0)), InvalidInput);
  CHECK_THROWS_AS(ingest_initial_chunk(scalar_chunk(0.0, 0.1, {1.0, 2.0}), 0.0, ChannelLayout::plain(2),
                                       scalar_config(1.0)),
                  InvalidInput);
  auto bad = scalar_config(1.0);
  bad.v_max.push_back(1.0);
  CHECK_THROWS_AS(ingest_initial_chunk(scalar_chunk(0.0, 0.1, {1.0, 2.0}), 0.0, layout, bad), InvalidInput);
}

TEST_CASE("identical chunk leaves a straight trajectory unchanged") {
  const auto layout = ChannelLayout::plain(1);
  const auto cfg = scalar_config(0.5);
  const auto first = ingest_initial_chunk(scalar_chunk(0.0, 0.1, line(32, 0.0, 0.02)), 0.09, layout, cfg);
  REQUIRE(first.record.accepted());
  const auto& old = *first.trajectory;
  // The new chunk restates the executing trajectory from t_obs = 0.33.
  std::vector<double> again;
  for (int i = 0; i < 32; ++i) again.push_back(0.2 * (0.33 + 0.1 * i));
  const auto next = ingest_chunk(scalar_chunk(0.33, 0.1, again), 0.45, old, layout, cfg);
  REQUIRE(next.record.accepted());
  double worst = 0.0;
  for (double t = 0.45; t <= old.t_end(); t += 0.001)
    worst = std::max(worst, std::abs(next.trajectory->frame(t).scalar[0] - old.frame(t).scalar[0]));
  CHECK(worst <= 1e-8);
}

TEST_CASE("offset chunk blends toward the new target") {
  const auto layout = ChannelLayout::plain(1);
  auto cfg = scalar_config(2.0);
  cfg.tau = 0.1;
  // The default smoothing corner (w_acc^(1/4) ~ 0.3 s) is comparable to the
  // whole window, so the end-point bound is stated for light smoothing.
  cfg.w_acc = 1e-6;
  const auto first = ingest_initial_chunk(scalar_chunk(0.0, 0.05, std::vector<double>(40, 0.0)), 0.04, layout, cfg);
  REQUIRE(first.record.accepted());
  // Window: lead 0.05, duration 0.55, so t_s = 0.35 and the blend spans 0.5 s.
  const auto next =
      ingest_chunk(scalar_chunk(0.3, 0.05, std::vector<double>(12, 0.1)), 0.34, *first.trajectory, layout, cfg);
  REQUIRE(next.record.accepted());
  const auto& pc = next.trajectory->pieces().back();
  CHECK(pc.t_begin == doctest::Approx(0.35));
  CHECK(pc.t_end == doctest::Approx(0.85));
  CHECK(pc.x(0, 0) == 0.0);
  for (Eigen::Index k = 1; k < pc.x.rows(); ++k) CHECK(pc.x(k, 0) >= pc.x(k - 1, 0) - 1e-12);
  double prev = 0.0;
  for (double t = pc.t_begin; t <= pc.t_end; t += 0.001) {
    const double v = next.trajectory->frame(t).scalar[0];
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  CHECK(std::abs(pc.x(pc.x.rows() - 1, 0) - 0.1) <= std::exp(-0.5 / 0.1) * 0.1 + 1e-3);

  // Independent solve of the same window.
  const int n = static_cast<int>(pc.x.rows());
  const double t_f = 0.35 + 0.5 * (first.trajectory->t_end() - 0.35);
  const auto bw = blend_weights(n, 0.05, 0.35, t_f, 0.1);
  BlendWindow w;
  w.dt = 0.05;
  w.old_target = VectorXd::Zero(n);
  w.new_target = VectorXd::Constant(n, 0.1);
  w.w1 = bw.w1;
  w.w2 = bw.w2;
  w.v_max = 2.0;
  w.w_acc = cfg.w_acc;
  w.splice = SpliceState{0.0, 0.0};
  const auto ref = oracle_solve(blend_window_qp(w));
  REQUIRE(ref.converged);
  CHECK((ref.x - pc.x.col(0)).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("stale chunks are rejected and change nothing") {
  const auto layout = ChannelLayout::plain(1);
  auto cfg = scalar_config(0.5);
  cfg.t2_budget = 0.01;
  const auto first = ingest_initial_chunk(scalar_chunk(0.0, 0.1, line(32, 0.0, 0.01)), 0.09, layout, cfg);
  REQUIRE(first.record.accepted());
  // Duration 0.3; t1 + t2 = 0.31.
  const auto chunk = scalar_chunk(0.5, 0.1, {1.0, 1.0, 1.0, 1.0});
  const auto late = ingest_chunk(chunk, 0.8, *first.trajectory, layout, cfg);
  CHECK(late.record.status == IngestStatus::stale);
  CHECK(late.trajectory == nullptr);

  VirtualClock clock(0.09);
  RtgEngine engine(layout, cfg, clock);
  REQUIRE(engine.ingest(scalar_chunk(0.0, 0.1, line(32, 0.0, 0.01))).accepted());
  std::vector<double> before;
  for (double t = 0.1; t < 3.2; t += 0.004) before.push_back(engine.sample(t).frame.scalar[0]);
  clock.set(0.8);
  CHECK(engine.ingest(chunk).status == IngestStatus::stale);
  CHECK(engine.rejected(IngestStatus::stale) == 1);
  std::size_t i = 0;
  for (double t = 0.1; t < 3.2; t += 0.004) CHECK(engine.sample(t).frame.scalar[0] == before[i++]);
}

TEST_CASE("sampling") {
  const auto layout = ChannelLayout::plain(1);
  std::vector<double> v(32);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.3 * static_cast<double>(i));
  const auto out = ingest_initial_chunk(scalar_chunk(0.0, 0.1, v), 0.1, layout, scalar_config(0.5));
  REQUIRE(out.record.accepted());
  const auto& traj = *out.trajectory;
  const auto& pc = traj.pieces().back();
  for (Eigen::Index k = 0; k < pc.x.rows(); ++k) CHECK(std::abs(traj.frame(pc.t0 + k * pc.h).scalar[0] - pc.x(k, 0)) <= 1e-12);
  CHECK_THROWS_AS(sample(traj, traj.t_start() - 0.01), InvalidInput);
  const auto held = sample(traj, traj.t_end() + 1.0);
  CHECK(held.exhausted);
  CHECK(held.frame.scalar[0] == traj.frame(traj.t_end()).scalar[0]);
  CHECK_FALSE(sample(traj, traj.t_end()).exhausted);

  double worst = 0.0;
  for (double t = traj.t_start(); t + 0.004 <= traj.t_end(); t += 0.004)
    worst = std::max(worst, std::abs(traj.frame(t + 0.004).scalar[0] - traj.frame(t).scalar[0]));
  CHECK(worst <= 0.5 / 250.0 + 1e-9);
  CHECK(max_fd_speed(traj, traj.t_start(), traj.t_end()) <= 0.5 + 1e-9);
}

TEST_CASE("blend_window_qp structure") {
  SUBCASE("W1 = 1 removes the new target") {
    BlendWindow a;
    a.dt = 0.1;
    a.old_target = (VectorXd(4) << 0.1, 0.2, 0.4, 0.3).finished();
    a.new_target = (VectorXd(4) << 1, 2, 3, 4).finished();
    a.w1 = VectorXd::Ones(4);
    a.w2 = VectorXd::Zero(4);
    a.splice = SpliceState{0.1, 0.5};
    BlendWindow b = a;
    b.new_target = VectorXd::Constant(4, -7.0);
    const auto pa = blend_window_qp(a), pb = blend_window_qp(b);
    CHECK(pa.H == pb.H);
    CHECK(pa.g == pb.g);
    CHECK(pa.A == pb.A);
    CHECK(pa.l == pb.l);
    CHECK(pa.u == pb.u);
  }
  SUBCASE("no smoothing and slack limits give the pointwise weighted average") {
    BlendWindow w;
    w.dt = 0.1;
    w.w_acc = 0.0;
    w.v_max = 100.0;
    w.old_target = (VectorXd(5) << 0, 0.1, 0.2, 0.3, 0.4).finished();
    w.new_target = (VectorXd(5) << 0.5, 0.4, 0.45, 0.5, 0.6).finished();
    w.w1 = (VectorXd(5) << 0.9, 0.7, 0.5, 0.2, 0.0).finished();
    w.w2 = VectorXd::Ones(5) - w.w1;
    const auto sol = solve_qp(blend_window_qp(w));
    REQUIRE(sol.status == QpStatus::solved);
    for (Eigen::Index k = 0; k < 5; ++k) {
      // argmin_x w1 (x - a)^2 + w2 (x - b)^2 for each point alone.
      const double expect = (w.w1[k] * w.old_target[k] + w.w2[k] * w.new_target[k]) / (w.w1[k] + w.w2[k]);
      CHECK(std::abs(sol.x[k] - expect) <= 1e-9);
      CHECK(sol.x[k] >= std::min(w.old_target[k], w.new_target[k]) - 1e-12);
      CHECK(sol.x[k] <= std::max(w.old_target[k], w.new_target[k]) + 1e-12);
    }
  }
  SUBCASE("three knots match the hand expansion") {
    BlendWindow w;
    w.dt = 0.5;
    w.w_acc = 0.25;
    w.v_max = 1.0;
    w.old_target = (VectorXd(3) << 1, 2, 3).finished();
    w.new_target = (VectorXd(3) << 4, 5, 6).finished();
    w.w1 = (VectorXd(3) << 1, 0.5, 0).finished();
    w.w2 = (VectorXd(3) << 0, 0.5, 1).finished();
    w.splice = SpliceState{1.0, 0.4};
    const auto p = blend_window_qp(w);
    // Cost: 0.25 * [((x0 - 2 x1 + x2) / 0.25)^2 + ((g - 2 x0 + x1) / 0.25)^2]
    //       + (x0 - 1)^2 + 0.5 (x1 - 2)^2 + 0.5 (x1 - 5)^2 + (x2 - 6)^2,
    // g = 1 - 0.4 * 0.5 = 0.8. Acceleration rows scale by 0.25 / 0.0625 = 4.
    MatrixXd H(3, 3);
    H << 2 * 4 * (1 + 4) + 2, 2 * 4 * (-2 - 2), 2 * 4 * 1,  //
        2 * 4 * (-2 - 2), 2 * 4 * (4 + 1) + 2, 2 * 4 * (-2),  //
        2 * 4 * 1, 2 * 4 * (-2), 2 * 4 * 1 + 2;
    VectorXd g(3);
    g << 2 * 4 * 0.8 * (-2) - 2 * 1, 2 * 4 * 0.8 * 1 - (2 * 0.5 * 2 + 2 * 0.5 * 5), -2 * 6;
    CHECK((p.H - H).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((p.g - g).lpNorm<Eigen::Infinity>() <= 1e-12);
    // Rows: splice, two chord limits, two control-point limits.
    MatrixXd A(5, 3);
    A << 1, 0, 0,  //
        -2, 2, 0,  //
        0, -2, 2,  //
        // 3 d0 - v_s - (x2 - x0) / (2 dt), constant moved to the bounds
        -6 + 1, 6, -1,  //
        // 3 d1 - (x2 - x0) / (2 dt) - (x2 - x1) / dt
        1, -6 + 2, 6 - 1 - 2;
    CHECK((p.A - A).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(p.l[0] == 1.0);
    CHECK(p.u[0] == 1.0);
    CHECK(p.l[3] == doctest::Approx(-1.0 + 0.4));
    CHECK(p.u[3] == doctest::Approx(1.0 + 0.4));
    CHECK(p.u[4] == 1.0);
    CHECK(p.bandwidth == 2);
  }
}

TEST_CASE("knot slopes and weights") {
  const VectorXd x = (VectorXd(4) << 0, 1, 4, 9).finished();
  const VectorXd m = knot_slopes(x, 1.0, std::nullopt);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 2.0);
  CHECK(m[2] == 4.0);
  CHECK(m[3] == 5.0);
  CHECK(knot_slopes(x, 1.0, 0.25)[0] == 0.25);
  const auto w = blend_weights(5, 0.1, 1.0, 1.25, 0.1);
  CHECK(w.w1[0] == 1.0);
  CHECK(w.w1[1] == doctest::Approx(std::exp(-1.0)));
  CHECK(w.w1[2] == doctest::Approx(std::exp(-2.0)));
  CHECK(w.w1[3] == 0.0);
  CHECK(w.w2[3] == 1.0);
}

TEST_CASE("chunk sequence: continuity, velocity bound, serial equals parallel") {
  ChannelLayout layout = ChannelLayout::plain(3);
  layout.angular[2] = true;
  layout.rotation_names = {"rot"};
  RtgConfig cfg;
  cfg.v_max = {0.3, 0.2, 0.5, 0.4};
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.05);

  auto make_chunk = [&](double t_obs) {
    ChannelChunk c;
    c.t_obs = t_obs;
    c.dt = 0.1;
    const double off[3] = {noise(rng), noise(rng), noise(rng)};
    for (int i = 0; i < 32; ++i) {
      const double t = t_obs + 0.1 * i;
      ChannelFrame f;
      f.scalar = Eigen::Vector3d(0.2 * std::sin(t) + off[0], 0.1 * t + off[1], wrap_angle(3.0 + 0.4 * t + off[2]));
      f.rot = {so3_exp(Vec3(0.3 * std::sin(0.5 * t), 0.2 * t / 10.0, 0.1) + Vec3::Constant(off[0]))};
      c.frames.push_back(f);
    }
    return c;
  };

  std::vector<ChannelChunk> chunks;
  for (int i = 0; i < 30; ++i) chunks.push_back(make_chunk(0.15 * i));

  auto run = [&](Exec exec) {
    RtgConfig c = cfg;
    c.exec = exec;
    std::shared_ptr<const ExecutingTrajectory> traj;
    std::vector<std::shared_ptr<const ExecutingTrajectory>> history;
    for (const auto& ch : chunks) {
      const double arrival = ch.t_obs + 0.1;
      const auto out = traj ? ingest_chunk(ch, arrival, *traj, layout, c) : ingest_initial_chunk(ch, arrival, layout, c);
      CAPTURE(ch.t_obs);
      REQUIRE(out.record.accepted());
      CHECK(out.record.splice_position_jump <= 1e-6);
      CHECK(out.record.splice_velocity_jump <= 1e-6);
      traj = out.trajectory;
      history.push_back(traj);
    }
    return history;
  };
  const auto par = run(Exec::parallel);
  const auto ser = run(Exec::serial);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i]->pieces().back().x == ser[i]->pieces().back().x);
    CHECK(par[i]->pieces().back().m == ser[i]->pieces().back().m);
  }

  // Stitch what would be executed: each trajectory from its own start to the next splice.
  double worst_ratio[3] = {0, 0, 0};
  double worst_rot = 0.0;
  for (std::size_t i = 0; i < par.size(); ++i) {
    const auto& tr = *par[i];
    const double t0 = tr.pieces().back().t_begin;
    const double t1 = i + 1 < par.size() ? par[i + 1]->pieces().back().t_begin : tr.t_end();
    for (double t = t0; t + 1e-3 <= t1; t += 1e-3) {
      const auto a = tr.frame(t), b = tr.frame(t + 1e-3);
      for (int c = 0; c < 3; ++c) worst_ratio[c] = std::max(worst_ratio[c], std::abs(b.scalar[c] - a.scalar[c]) / 1e-3 / cfg.v_max[static_cast<std::size_t>(c)]);
      worst_rot = std::max(worst_rot, geodesic_angle(a.rot[0], b.rot[0]) / 1e-3);
    }
  }
  for (double r : worst_ratio) CHECK(r <= 1.0 + 1e-9);
  CHECK(worst_rot <= std::sqrt(3.0) * 0.4 + 1e-9);
}

TEST_CASE("constant orientation stays constant") {
  ChannelLayout layout;
  layout.rotation_names = {"r"};
  RtgConfig cfg;
  cfg.v_max = {0.5};
  const Rotation fixed = so3_exp(Vec3(0.4, -1.0, 2.0));
  ChannelChunk c;
  c.dt = 0.1;
  for (int i = 0; i < 32; ++i) c.frames.push_back({Eigen::VectorXd(0), {fixed}});
  auto out = ingest_initial_chunk(c, 0.1, layout, cfg);
  REQUIRE(out.record.accepted());
  auto traj = out.trajectory;
  for (int j = 1; j < 5; ++j) {
    c.t_obs = 0.2 * j;
    out = ingest_chunk(c, c.t_obs + 0.1, *traj, layout, cfg);
    REQUIRE(out.record.accepted());
    traj = out.trajectory;
  }
  for (double t = traj->t_start(); t <= traj->t_end(); t += 0.01)
    CHECK((traj->frame(t).rot[0].matrix() - fixed.matrix()).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("infeasible blends keep the old trajectory") {
  const auto layout = ChannelLayout::plain(1);
  auto fast = scalar_config(1.0);
  const auto first = ingest_initial_chunk(scalar_chunk(0.0, 0.1, line(32, 0.0, 0.09)), 0.09, layout, fast);
  REQUIRE(first.record.accepted());
  // Tighter limit than the executing speed: the splice velocity alone breaks it.
  auto slow = scalar_config(0.1);
  const auto out = ingest_chunk(scalar_chunk(0.3, 0.1, line(32, 0.27, 0.09)), 0.4, *first.trajectory, layout, slow);
  CHECK_FALSE(out.record.accepted());
  CHECK(out.trajectory == nullptr);
  CHECK((out.record.status == IngestStatus::infeasible || out.record.status == IngestStatus::velocity_check));
}

TEST_CASE("engine publishes whole trajectories to concurrent readers") {
  const auto layout = ChannelLayout::plain(2);
  RtgConfig cfg;
  cfg.v_max = {0.5, 0.5};
  VirtualClock clock(0.05);
  RtgEngine engine(layout, cfg, clock);
  CHECK_THROWS_AS(engine.sample(0.1), InvalidInput);

  auto chunk_at = [](double t_obs, double level) {
    ChannelChunk c;
    c.t_obs = t_obs;
    c.dt = 0.1;
    for (int i = 0; i < 32; ++i) c.frames.push_back({Eigen::Vector2d(level, -level), {}});
    return c;
  };
  REQUIRE(engine.ingest(chunk_at(0.0, 0.0)).accepted());

  std::atomic<bool> stop{false};
  std::atomic<long> reads{0}, bad{0};
  std::thread reader([&] {
    while (!stop.load()) {
      const auto s = engine.sample(0.2 + 0.001 * static_cast<double>(reads % 1000));
      // Every published trajectory keeps the two channels mirrored.
      if (std::abs(s.frame.scalar[0] + s.frame.scalar[1]) > 1e-12) ++bad;
      ++reads;
    }
  });
  for (int i = 1; i <= 40; ++i) {
    clock.set(0.05 + 0.001 * i);
    engine.ingest(chunk_at(0.001 * i, 0.01 * (i % 5)));
  }
  while (reads.load() < 1000) std::this_thread::yield();
  stop = true;
  reader.join();
  CHECK(bad.load() == 0);
  CHECK(engine.generation() >= 2);
  CHECK(engine.telemetry().size() == 41);
  CHECK(telemetry_csv_row(engine.telemetry().front()).find("accepted") != std::string::npos);
}
