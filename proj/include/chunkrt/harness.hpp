#pragma once

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunkrt/exec_strategies.hpp"
#include "chunkrt/parallel.hpp"
#include "chunkrt/scenario.hpp"

namespace chunkrt {

using Json = nlohmann::ordered_json;

struct LatencyStats {
  std::size_t samples = 0;
  double median = 0.0;
  double p99 = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Order statistics of a set of durations in seconds. p99 is the smallest
/// sample with at least 99% of samples at or below it.
LatencyStats latency_stats(std::vector<double> seconds);

struct ThroughputResult {
  std::size_t chunk_len = 0;
  std::size_t channels = 0;
  LatencyStats ingest;
  std::size_t accepted = 0;
};

/// Wall-clock cost of RtgEngine::ingest on synthetic chunks (dt 0.1 s, one
/// chunk every 0.05 s, 0.04 s latency, unit velocity limits). The first
/// chunk is ingested before timing starts. Requires repetitions >= 100.
ThroughputResult throughput_bench(std::size_t chunk_len, std::size_t channels, std::size_t repetitions,
                                  std::uint64_t seed = 0, Exec exec = Exec::parallel);

/// Wall-clock cost of RtgEngine::sample at uniformly drawn times on a
/// trajectory built as in throughput_bench.
LatencyStats sample_latency_bench(std::size_t chunk_len, std::size_t channels, std::size_t queries,
                                  std::uint64_t seed = 0);

/// Compiler, thread count and CPU model, for throughput reports.
Json machine_info();

/// Every configured strategy against one seeded source, in config order.
std::vector<RunResult> run_strategy_compare(const StrategyCompareParams& p, std::uint64_t seed);

/// Largest control-rate speed minus its limit over the executed command, in
/// the RTG coordinates (scalars with wrapped yaw differences; rotations by
/// geodesic angle against sqrt(3) times the per-component limit).
double velocity_excess(const RunResult& r, const WholeBodyLimits& limits);

/// Boundary-change metric used by the representation study: the mean change
/// across chunk boundaries, averaged over the end-effector channels.
double boundary_change_metric(const RunResult& r);

struct ScenarioOutcome {
  Json report;
  /// Written files, relative to the scenario's output directory.
  std::vector<std::string> files;
  bool checks_passed = true;
};

/// Runs the scenario and writes its reports under out_root / scenario.output.
/// Every report embeds the config hash and seed.
ScenarioOutcome run_scenario(const Scenario& sc, const std::string& out_root);

/// Machine-readable description of a failure: {"status": "error",
/// "error": kind, "message": ..., plus "file"/"line" for parse errors and
/// "path" for missing files}.
Json error_record(const std::exception_ptr& e);

std::string hash_hex(std::uint64_t h);

}  // namespace chunkrt
