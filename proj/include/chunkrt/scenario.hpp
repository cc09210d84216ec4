#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "chunkrt/exec_strategies.hpp"
#include "chunkrt/kinematics.hpp"
#include "chunkrt/policy_emulator.hpp"

namespace chunkrt {

enum class ScenarioKind { strategy_compare, repr_ablation, error_propagation, throughput, rtg_unit };

std::string to_string(ScenarioKind k);

struct StrategyCompareParams {
  std::string reference_path;
  ChunkSourceConfig source;  ///< seed is filled in per run
  ExecConfig exec;
  std::vector<StrategyKind> strategies;
  /// Number of consecutive seeds (starting at the scenario seed) for the
  /// per-seed summary; dense outputs are written for the first only.
  std::size_t seeds = 1;
  std::size_t overlay_channel = 0;
  double overlay_span = 4.0;
};

struct ReprVariant {
  std::string label;
  ReprTag repr = ReprTag::absolute_world;
  NoiseMode noise = NoiseMode::per_step;
  double sigma = 0.0;
};

struct ReprAblationParams {
  std::vector<std::string> reference_paths;
  std::vector<std::shared_ptr<const ReferenceTrajectory>> references;

  bool roundtrip = false;
  std::size_t roundtrip_steps = 500;
  double roundtrip_tolerance = 1e-8;
  double offset_tolerance = 1e-9;

  bool smoothness = false;
  ChunkSourceConfig source;  ///< reference, repr, noise and seed set per run
  ExecConfig exec;
  std::vector<ReprVariant> variants;
  std::size_t seeds = 10;
  /// Expect median(numerator) >= min_ratio * median(denominator).
  std::string ratio_numerator;
  std::string ratio_denominator;
  double min_ratio = 3.0;

  bool compactness = false;
  /// Each reference is cut into segments of this length for the study.
  double segment = 5.0;
  std::size_t common_length = 0;
};

struct ScopeSpec {
  std::string label;
  std::vector<BodySegment> segments;
};

struct ErrorPropagationParams {
  std::string model_path;
  std::shared_ptr<const ChainModel> model;
  Arm arm = Arm::left;
  double sigma = 0.01;
  std::size_t trials = 1000;
  std::size_t points = 5;
  double spread = 0.4;
  std::size_t seeds = 20;
  std::vector<ScopeSpec> scopes;
  /// Expect rms(wider) > rms(narrower), with the paired per-seed difference
  /// positive for at least min_fraction of seeds.
  std::string wider;
  std::string narrower;
  double min_fraction = 0.95;
};

struct ThroughputParams {
  std::vector<std::size_t> chunk_lens{32};
  std::size_t channels = 20;
  std::size_t repetitions = 200;
  std::size_t sample_queries = 20000;
  bool scaling = true;
  double max_median = 5e-3;
  double max_sample_p99 = 50e-6;
  double max_scaling_ratio = 2.5;
};

struct RtgUnitParams {
  std::size_t channels = 1;
  std::size_t chunk_len = 32;
  double dt = 0.1;
  std::size_t chunks = 6;
  double t1 = 0.15;
  double slope = 0.05;
  /// Chunk k is offset by +offset for even k and -offset for odd k.
  double offset = 0.1;
  double v_max = 0.3;
  double control_dt = 0.004;
  RtgConfig rtg;
};

struct Scenario {
  std::string path;
  std::string name;
  ScenarioKind kind = ScenarioKind::strategy_compare;
  std::uint64_t seed = 0;
  /// Report directory, relative to the --out root.
  std::string output;
  std::uint64_t config_hash = 0;

  // Only the member matching `kind` is populated.
  StrategyCompareParams strategy_compare;
  ReprAblationParams repr_ablation;
  ErrorPropagationParams error_propagation;
  ThroughputParams throughput;
  RtgUnitParams rtg_unit;
};

/// Relative fixture paths are tried against the scenario file's directory,
/// then against the data root (CHUNKRT_DATA_DIR at build time, overridable
/// with the CHUNKRT_DATA environment variable).
std::string default_data_root();

/// Parses and validates a scenario. Every failure is a ParseError pointing
/// at the offending line, except missing fixtures (FileNotFound).
Scenario parse_scenario(std::istream& is, const std::string& source, const std::string& base_dir,
                        const std::string& data_root);
Scenario load_scenario(const std::string& path, const std::string& data_root = default_data_root());

}  // namespace chunkrt
