#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "chunkrt/action_model.hpp"
#include "chunkrt/channels.hpp"
#include "chunkrt/trajectory_csv.hpp"

namespace chunkrt {

/// Time-indexed whole-body reference, linearly interpolated between rows.
class ReferenceTrajectory {
 public:
  explicit ReferenceTrajectory(TimedTrajectory traj);
  static ReferenceTrajectory load(const std::string& csv_path);

  double t_begin() const { return traj_.t.front(); }
  double t_end() const { return traj_.t.back(); }
  bool covers(double t0, double t1) const { return t0 >= t_begin() && t1 <= t_end() + 1e-12; }
  /// Throws SourceExhausted outside [t_begin, t_end].
  WholeBodyAction at(double t) const;
  const TimedTrajectory& data() const { return traj_; }

 private:
  TimedTrajectory traj_;
};

enum class NoiseMode { per_step, per_chunk_offset };

std::string to_string(NoiseMode m);
NoiseMode noise_mode_from_string(const std::string& s);

/// Inference latency t1 = draw + comm_delay + wait_delay, where the draw is
/// constant (lo) or uniform on [lo, hi].
struct LatencyModel {
  enum class Kind { constant, uniform };
  Kind kind = Kind::constant;
  double lo = 0.15;
  double hi = 0.15;
  double comm_delay = 0.0;
  double wait_delay = 0.0;

  double mean() const { return (kind == Kind::constant ? lo : 0.5 * (lo + hi)) + comm_delay + wait_delay; }
  double sample(std::mt19937_64& rng) const;
  void validate() const;
};

/// Number of noise coordinates: the 17 whole-body scalars plus three tangent
/// components per end-effector rotation, in whole_body_layout() order.
inline constexpr std::size_t kNoiseCoords = 23;
using NoiseSigma = std::array<double, kNoiseCoords>;

struct ChunkSourceConfig {
  std::shared_ptr<const ReferenceTrajectory> reference;
  std::size_t chunk_len = 32;
  double dt = 0.1;
  ReprTag repr = ReprTag::absolute_world;
  RobotFrameAnchor robot_anchor = RobotFrameAnchor::instantaneous;
  NoiseMode noise_mode = NoiseMode::per_step;
  /// Relative noise level: each coordinate's standard deviation is sigma
  /// times the range that coordinate spans over the reference when expressed
  /// in `repr` at spacing dt. Gaussian, truncated at 4 sigma.
  NoiseSigma sigma{};
  LatencyModel latency;
  std::uint64_t seed = 0;

  void set_sigma(double s) { sigma.fill(s); }
  void validate() const;
};

/// Anything the executor can pull chunks from.
class ChunkProvider {
 public:
  virtual ~ChunkProvider() = default;
  /// Time of the first possible observation and the robot state there.
  virtual double t_begin() const = 0;
  virtual WholeBodyAction start_state() const = 0;
  virtual double chunk_duration() const = 0;
  virtual bool can_serve(double t_obs) const = 0;
  /// A chunk observed at t_obs plus its simulated inference latency t1.
  virtual std::pair<ActionChunk, double> next_chunk(double t_obs,
                                                    const std::optional<WholeBodyAction>& observed = {}) const = 0;
};

/// Deterministic chunk generator standing in for a learned policy.
class ChunkSource final : public ChunkProvider {
 public:
  explicit ChunkSource(ChunkSourceConfig cfg);

  const ChunkSourceConfig& config() const { return cfg_; }
  /// Absolute noise standard deviation per coordinate.
  const NoiseSigma& absolute_sigma() const { return abs_sigma_; }

  double t_begin() const override { return cfg_.reference->t_begin(); }
  WholeBodyAction start_state() const override { return cfg_.reference->at(t_begin()); }
  double chunk_duration() const override { return static_cast<double>(cfg_.chunk_len - 1) * cfg_.dt; }
  bool can_serve(double t_obs) const override { return cfg_.reference->covers(t_obs, t_obs + chunk_duration()); }

  /// Reference sampled at t_obs + i dt, re-expressed in the configured
  /// representation and perturbed. Delta chunks are encoded against the
  /// reference at t_obs and anchored on `observed` when given (the robot's
  /// state at t_obs), else on the reference. The draw depends only on
  /// (seed, t_obs). Throws SourceExhausted when the reference ends early.
  std::pair<ActionChunk, double> next_chunk(double t_obs,
                                            const std::optional<WholeBodyAction>& observed = {}) const override;

  /// The per-chunk offset (or first per-step draw) used for t_obs, for tests.
  std::array<double, kNoiseCoords> noise_draw(double t_obs, std::size_t frame) const;

 private:
  ChunkSourceConfig cfg_;
  NoiseSigma abs_sigma_{};
};

/// Adds the 23-coordinate perturbation to a frame: scalars additively (grip
/// clamped to [0, 1]), rotations by right multiplication with exp(xi).
WholeBodyAction perturb(const WholeBodyAction& a, const std::array<double, kNoiseCoords>& xi);

}  // namespace chunkrt
