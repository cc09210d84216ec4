// Command-line entry point: run or validate scenario files, or time the
// RTG ingest path on synthetic chunks.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "chunkrt/harness.hpp"

namespace fs = std::filesystem;
using namespace chunkrt;

namespace {

constexpr int kExitError = 1;
constexpr int kExitChecksFailed = 3;

std::mutex print_mu;

void print_line(std::ostream& os, const Json& j) {
  std::lock_guard<std::mutex> lock(print_mu);
  os << j.dump() << std::endl;
}

/// Reports an error on stderr and, when an output root is known, as
/// error.json inside it.
void report_error(const std::exception_ptr& e, const std::string& config, const std::string& out_root) {
  Json rec = error_record(e);
  if (!config.empty()) rec["config"] = config;
  print_line(std::cerr, rec);
  if (!out_root.empty()) {
    std::error_code ec;
    fs::create_directories(out_root, ec);
    std::ofstream os(fs::path(out_root) / "error.json");
    if (os) os << rec.dump(2) << '\n';
  }
}

Scenario load_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
  Scenario sc = load_scenario(path);
  if (seed) sc.seed = *seed;
  return sc;
}

int cmd_run(const std::vector<std::string>& configs, const std::string& out_root,
            const std::optional<std::uint64_t>& seed, unsigned jobs) {
  std::atomic<std::size_t> next{0};
  std::atomic<int> worst{0};
  auto bump = [&](int code) {
    int cur = worst.load();
    while (code > cur && !worst.compare_exchange_weak(cur, code)) {
    }
  };
  auto worker = [&] {
    for (std::size_t i; (i = next++) < configs.size();) {
      const std::string& path = configs[i];
      try {
        const Scenario sc = load_with_seed(path, seed);
        const ScenarioOutcome o = run_scenario(sc, out_root);
        print_line(std::cout, Json{{"status", o.report["status"]},
                                   {"scenario", sc.name},
                                   {"config_hash", hash_hex(sc.config_hash)},
                                   {"seed", sc.seed},
                                   {"output", (fs::path(out_root) / sc.output).string()},
                                   {"checks", o.report["checks"]}});
        if (!o.checks_passed) bump(kExitChecksFailed);
      } catch (...) {
        report_error(std::current_exception(), path, out_root);
        bump(kExitError);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < n; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  // An error outranks failed checks.
  const int w = worst.load();
  return w == kExitError || w == 0 ? w : kExitChecksFailed;
}

int cmd_validate(const std::vector<std::string>& configs, const std::string& out_root,
                 const std::optional<std::uint64_t>& seed) {
  int code = 0;
  for (const auto& path : configs) {
    try {
      const Scenario sc = load_with_seed(path, seed);
      print_line(std::cout, Json{{"status", "valid"},
                                 {"scenario", sc.name},
                                 {"kind", to_string(sc.kind)},
                                 {"config_hash", hash_hex(sc.config_hash)},
                                 {"seed", sc.seed}});
    } catch (...) {
      report_error(std::current_exception(), path, out_root);
      code = kExitError;
    }
  }
  return code;
}

int cmd_bench(std::size_t chunk_len, std::size_t channels, std::size_t repetitions, std::size_t queries,
              std::uint64_t seed, bool serial, const std::string& out_root) {
  try {
    const auto r = throughput_bench(chunk_len, channels, repetitions, seed, serial ? Exec::serial : Exec::parallel);
    const auto s = sample_latency_bench(chunk_len, channels, queries, seed);
    auto stats = [](const LatencyStats& x) {
      return Json{{"samples", x.samples}, {"median", x.median}, {"p99", x.p99}, {"mean", x.mean}};
    };
    Json j{{"status", "ok"},
           {"chunk_len", chunk_len},
           {"channels", channels},
           {"exec", serial ? "serial" : "parallel"},
           {"seed", seed},
           {"accepted", r.accepted},
           {"ingest", stats(r.ingest)},
           {"sample", stats(s)},
           {"machine", machine_info()}};
    print_line(std::cout, j);
    if (!out_root.empty()) {
      fs::create_directories(out_root);
      std::ofstream(fs::path(out_root) / "bench.json") << j.dump(2) << '\n';
    }
    return 0;
  } catch (...) {
    report_error(std::current_exception(), "", out_root);
    return kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action-chunk execution experiments: strategy comparisons, representation studies and RTG timing."};
  app.require_subcommand(1);

  std::string out_root = "out";
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  std::vector<std::string> configs;

  auto* run = app.add_subcommand("run", "Run scenario files and write their reports");
  run->add_option("configs", configs, "Scenario files")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_root, "Output root; each scenario writes to <out>/<output>");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--jobs", jobs, "Scenarios to run concurrently")->check(CLI::PositiveNumber);

  std::string validate_out;
  auto* validate = app.add_subcommand("validate", "Parse and check scenario files without running them");
  validate->add_option("configs", configs, "Scenario files")->required();
  validate->add_option("--out", validate_out, "Write error.json here on failure");
  validate->add_option("--seed", seed, "Override the scenario seed");

  std::size_t chunk_len = 32, channels = 20, repetitions = 200, queries = 20000;
  std::uint64_t bench_seed = 0;
  bool serial = false;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "Time RTG ingest and sample on synthetic chunks");
  bench->add_option("--chunk-len", chunk_len, "Frames per chunk")->check(CLI::Range(2, 100000));
  bench->add_option("--channels", channels, "Scalar channels")->check(CLI::Range(1, 100000));
  bench->add_option("--repetitions", repetitions, "Timed ingests (>= 100)")->check(CLI::Range(100, 100000000));
  bench->add_option("--queries", queries, "Timed sample() calls")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "Seed for the synthetic chunks");
  bench->add_flag("--serial", serial, "Use the serial per-channel loop instead of OpenMP");
  bench->add_option("--out", bench_out, "Also write bench.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*run) return cmd_run(configs, out_root, seed, jobs);
  if (*validate) return cmd_validate(configs, validate_out, seed);
  return cmd_bench(chunk_len, channels, repetitions, queries, bench_seed, serial, bench_out);
}
