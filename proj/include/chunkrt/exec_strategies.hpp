#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "chunkrt/action_model.hpp"
#include "chunkrt/channels.hpp"
#include "chunkrt/policy_emulator.hpp"
#include "chunkrt/rtg.hpp"

namespace chunkrt {

enum class StrategyKind { synchronous, async_naive, async_history_fusion, rtg };

std::string to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& s);
const std::vector<StrategyKind>& all_strategies();

struct ExecConfig {
  double control_dt = 0.004;
  /// Run length in simulated seconds, counted from the first observation.
  double duration = 20.0;
  /// Synchronous mode executes this much of each chunk before observing
  /// again; <= 0 executes the whole chunk.
  double sync_horizon = 0.0;
  /// History-fusion decay m in w_i = exp(-m i), i = 0 for the oldest chunk.
  double fusion_decay = 0.1;
  WholeBodyLimits limits;
  /// Used by the rtg strategy; an empty v_max is filled from `limits`.
  RtgConfig rtg;

  void validate() const;
};

/// One chunk as the executor saw it, always stored in absolute form.
struct ChunkRecord {
  ActionChunk chunk;
  double t_request = 0.0;  ///< wall time of the observation
  double arrival = 0.0;    ///< wall time the chunk became available
  double t1 = 0.0;
  /// Wall time minus chunk time while the chunk executes (non-zero only
  /// for synchronous runs, where the task clock stops during pauses).
  double time_shift = 0.0;
  bool accepted = true;  ///< false for chunks the rtg engine rejected
};

/// A switch of command authority and the jump it caused, measured between
/// the outgoing and incoming command sources at the same instant.
struct Transition {
  double t = 0.0;
  double position_jump = 0.0;  ///< max over metric channels
  double velocity_jump = 0.0;  ///< per second, max over metric channels
};

struct RunMetrics {
  /// Largest control-rate finite-difference speed per metric channel.
  ChannelValues max_velocity{};
  double total_pause_time = 0.0;
  std::size_t pause_count = 0;
  std::size_t transitions = 0;
  double mean_boundary_discontinuity = 0.0;
  double max_boundary_discontinuity = 0.0;
  double max_velocity_discontinuity = 0.0;
  /// RMS per metric channel of executed minus latest chunk, over ticks
  /// where the latest chunk covers the tick.
  ChannelValues tracking_rms{};
  /// Uniform mean of tracking_rms over channels.
  double tracking_rms_mean = 0.0;
  std::size_t chunks = 0;
  std::size_t rejected = 0;
  double latency_mean = 0.0;
  double latency_max = 0.0;
  /// Set when the chunk source ran out before the run ended.
  bool truncated = false;
};

struct RunResult {
  StrategyKind strategy = StrategyKind::rtg;
  /// Commands at the control rate.
  TimedTrajectory executed;
  /// Per tick: true when the command was held for lack of chunk content.
  std::vector<bool> held;
  std::vector<ChunkRecord> chunks;
  std::vector<Transition> transitions;
  std::vector<TelemetryRecord> telemetry;  ///< rtg only
  RunMetrics metrics;
};

/// Index of the first executed tick at or after each transition.
std::vector<std::size_t> boundary_ticks(const RunResult& r);

/// Simulates one strategy against `source` under a virtual clock. Inference
/// runs back to back in the asynchronous modes (a new observation is taken
/// as soon as the previous chunk arrives) and only while the robot waits in
/// synchronous mode.
RunResult run(StrategyKind strategy, const ChunkProvider& source, const ExecConfig& cfg);

/// Exponentially weighted average over the chunks (absolute, oldest first)
/// that cover wall time t, each shifted by its time_shift. Orientations
/// and yaw are averaged in tangent coordinates about the newest prediction.
/// Throws NoAction when no chunk covers t.
WholeBodyAction history_fusion_action(const std::vector<const ChunkRecord*>& buffer, double t, double m);

/// Stand-alone form over bare chunks with zero time shift.
WholeBodyAction history_fusion_action(const std::vector<ActionChunk>& buffer, double t, double m);

// Report writers.

void write_metrics_csv(std::ostream& os, const std::vector<RunResult>& runs);
std::string metrics_csv_header();
std::string metrics_csv_row(const RunResult& r);

}  // namespace chunkrt
