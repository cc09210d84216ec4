#include "chunkrt/policy_emulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

using Coords = std::array<double, kNoiseCoords>;

Coords coords_of(const WholeBodyAction& a, const Rotation& left_ref, const Rotation& right_ref) {
  const ChannelFrame f = to_channels(a);
  Coords c{};
  for (Eigen::Index i = 0; i < f.scalar.size(); ++i) c[static_cast<std::size_t>(i)] = f.scalar[i];
  const Vec3 l = so3_log(left_ref.transpose() * a.ee_left.r);
  const Vec3 r = so3_log(right_ref.transpose() * a.ee_right.r);
  for (int j = 0; j < 3; ++j) {
    c[17 + j] = l[j];
    c[20 + j] = r[j];
  }
  return c;
}

/// Reference coordinates over its whole span at spacing dt, in `repr`.
std::vector<Coords> repr_coords(const ChunkSourceConfig& cfg) {
  const auto& ref = *cfg.reference;
  ActionChunk abs;
  abs.t_obs = ref.t_begin();
  abs.dt = cfg.dt;
  for (std::size_t i = 0;; ++i) {
    const double t = ref.t_begin() + static_cast<double>(i) * cfg.dt;
    if (t > ref.t_end() + 1e-12) break;
    abs.frames.push_back(ref.at(std::min(t, ref.t_end())));
  }
  std::vector<Coords> out;
  if (cfg.repr == ReprTag::absolute_world) {
    const Rotation l0 = abs.frames.front().ee_left.r;
    const Rotation r0 = abs.frames.front().ee_right.r;
    for (const auto& f : abs.frames) out.push_back(coords_of(f, l0, r0));
    return out;
  }
  const ActionChunk d = to_repr(abs, cfg.repr, abs.frames.front(), cfg.robot_anchor);
  const Rotation id;
  // Frame 0 is the identity step from the anchor; it carries no scale.
  for (std::size_t i = 1; i < d.frames.size(); ++i) out.push_back(coords_of(d.frames[i], id, id));
  return out;
}

std::mt19937_64 stream(std::uint64_t seed, double t_obs, std::uint64_t which) {
  const auto bits = std::bit_cast<std::uint64_t>(t_obs);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(bits), static_cast<std::uint32_t>(bits >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

double truncated_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const double z = n(rng);
    if (std::abs(z) <= 4.0) return z;
  }
}

Coords draw(std::mt19937_64& rng, const NoiseSigma& sigma) {
  Coords c{};
  for (std::size_t i = 0; i < kNoiseCoords; ++i) c[i] = sigma[i] * truncated_normal(rng);
  return c;
}

}  // namespace

ReferenceTrajectory::ReferenceTrajectory(TimedTrajectory traj) : traj_(std::move(traj)) {
  if (traj_.t.size() < 2 || traj_.t.size() != traj_.frames.size())
    throw InvalidInput("reference trajectory needs at least two timed frames");
  for (std::size_t i = 1; i < traj_.t.size(); ++i)
    if (!(traj_.t[i] > traj_.t[i - 1])) throw InvalidInput("reference timestamps must increase strictly");
}

ReferenceTrajectory ReferenceTrajectory::load(const std::string& csv_path) {
  return ReferenceTrajectory(read_trajectory_csv(csv_path));
}

WholeBodyAction ReferenceTrajectory::at(double t) const {
  if (!(t >= t_begin() - 1e-12 && t <= t_end() + 1e-12))
    throw SourceExhausted("reference has no sample at t = " + std::to_string(t));
  const auto& ts = traj_.t;
  if (t <= ts.front()) return traj_.frames.front();
  if (t >= ts.back()) return traj_.frames.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
  const std::size_t lo = hi - 1;
  if (ts[lo] == t) return traj_.frames[lo];
  return interpolate(traj_.frames[lo], traj_.frames[hi], (t - ts[lo]) / (ts[hi] - ts[lo]));
}

std::string to_string(NoiseMode m) { return m == NoiseMode::per_step ? "per_step" : "per_chunk_offset"; }

NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "per_step") return NoiseMode::per_step;
  if (s == "per_chunk_offset") return NoiseMode::per_chunk_offset;
  throw InvalidInput("unknown noise mode '" + s + "'");
}

double LatencyModel::sample(std::mt19937_64& rng) const {
  double base = lo;
  if (kind == Kind::uniform) base = std::uniform_real_distribution<double>(lo, hi)(rng);
  return base + comm_delay + wait_delay;
}

void LatencyModel::validate() const {
  if (!(lo >= 0.0) || !(comm_delay >= 0.0) || !(wait_delay >= 0.0)) throw InvalidInput("latencies must be >= 0");
  if (kind == Kind::uniform && !(hi >= lo)) throw InvalidInput("uniform latency needs hi >= lo");
}

void ChunkSourceConfig::validate() const {
  if (!reference) throw InvalidInput("chunk source has no reference trajectory");
  if (chunk_len < 2) throw InvalidInput("chunk_len must be at least 2");
  if (!(dt > 0.0)) throw InvalidInput("chunk dt must be positive");
  for (double s : sigma)
    if (!(s >= 0.0)) throw InvalidInput("noise sigma must be >= 0");
  latency.validate();
}

ChunkSource::ChunkSource(ChunkSourceConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (std::any_of(cfg_.sigma.begin(), cfg_.sigma.end(), [](double s) { return s > 0.0; })) {
    const auto coords = repr_coords(cfg_);
    for (std::size_t i = 0; i < kNoiseCoords; ++i) {
      double lo = coords.front()[i];
      double hi = lo;
      for (const auto& c : coords) {
        lo = std::min(lo, c[i]);
        hi = std::max(hi, c[i]);
      }
      abs_sigma_[i] = cfg_.sigma[i] * (hi - lo);
    }
  }
}

std::array<double, kNoiseCoords> ChunkSource::noise_draw(double t_obs, std::size_t frame) const {
  auto rng = stream(cfg_.seed, t_obs, 0);
  Coords c = draw(rng, abs_sigma_);
  if (cfg_.noise_mode == NoiseMode::per_step)
    for (std::size_t i = 0; i < frame; ++i) c = draw(rng, abs_sigma_);
  return c;
}

std::pair<ActionChunk, double> ChunkSource::next_chunk(double t_obs, const std::optional<WholeBodyAction>& observed) const {
  if (!can_serve(t_obs))
    throw SourceExhausted("reference does not cover a chunk observed at t = " + std::to_string(t_obs));
  ActionChunk abs;
  abs.t_obs = t_obs;
  abs.dt = cfg_.dt;
  abs.frames.reserve(cfg_.chunk_len);
  for (std::size_t i = 0; i < cfg_.chunk_len; ++i) abs.frames.push_back(cfg_.reference->at(abs.time_of(i)));

  const WholeBodyAction ref_state = cfg_.reference->at(t_obs);
  ActionChunk chunk = to_repr(abs, cfg_.repr, ref_state, cfg_.robot_anchor);

  if (std::any_of(abs_sigma_.begin(), abs_sigma_.end(), [](double s) { return s > 0.0; })) {
    auto rng = stream(cfg_.seed, t_obs, 0);
    Coords xi = draw(rng, abs_sigma_);
    for (std::size_t i = 0; i < chunk.frames.size(); ++i) {
      if (i > 0 && cfg_.noise_mode == NoiseMode::per_step) xi = draw(rng, abs_sigma_);
      chunk.frames[i] = perturb(chunk.frames[i], xi);
    }
  }
  if (observed) chunk.anchor = *observed;

  auto lat_rng = stream(cfg_.seed, t_obs, 1);
  return {std::move(chunk), cfg_.latency.sample(lat_rng)};
}

WholeBodyAction perturb(const WholeBodyAction& a, const std::array<double, kNoiseCoords>& xi) {
  ChannelFrame f = to_channels(a);
  for (Eigen::Index i = 0; i < f.scalar.size(); ++i) f.scalar[i] += xi[static_cast<std::size_t>(i)];
  f.scalar[13] = std::clamp(f.scalar[13], 0.0, 1.0);
  f.scalar[14] = std::clamp(f.scalar[14], 0.0, 1.0);
  f.rot[0] = (f.rot[0] * so3_exp(Vec3(xi[17], xi[18], xi[19]))).renormalized();
  f.rot[1] = (f.rot[1] * so3_exp(Vec3(xi[20], xi[21], xi[22]))).renormalized();
  return from_channels(f);
}

}  // namespace chunkrt
