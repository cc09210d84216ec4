#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chunkrt/errors.hpp"
#include "chunkrt/harness.hpp"

using namespace chunkrt;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = CHUNKRT_SCENARIO_DIR;
const std::string kData = CHUNKRT_DATA_DIR;

Scenario parse(const std::string& text) {
  std::istringstream is(text);
  return parse_scenario(is, "test.cfg", kScenarios, kData);
}

/// Line of the ParseError raised by parsing `text`, or -1.
int error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("chunkrt_test_" + name);
  fs::remove_all(d);
  return d;
}

const char* kRtgUnit = R"([scenario]
name = unit
kind = rtg_unit
seed = 3

[rtg_unit]
channels = 2
chunks = 6
t1 = 0.15
offset = 0.1
v_max = 0.3
)";

}  // namespace

TEST_CASE("empty config is a parse error at line 1") {
  CHECK(error_line("") == 1);
  CHECK(error_line("# only a comment\n") == 1);
}

TEST_CASE("scenario errors point at the offending line") {
  CHECK(error_line("[scenario]\nname = x\nkind = nonsense\n") == 3);
  CHECK(error_line("[scenario]\nname = x\n") == 1);
  CHECK(error_line("[scenario]\nname = x\nkind = rtg_unit\ncolour = red\n") == 4);
  CHECK(error_line("[scenario]\nname = x\nkind = rtg_unit\n[rtg_unit]\nv_max = -1\n") == 5);
  CHECK(error_line("[scenario]\nname = x\nkind = throughput\n[throughput]\nrepetitions = 10\n") == 5);
  CHECK(error_line("[scenario]\nname = x\nkind = throughput\n[throughput]\n\n[rtg]\n") == 6);
  CHECK(error_line("[scenario]\nname = x\nkind = strategy_compare\n[source]\nreference = "
                   "trajectories/tabletop_reach.csv\n[exec]\nstrategies = rtg teleport\n") == 7);
  CHECK(error_line("[scenario]\nname = x\nkind = strategy_compare\n[source]\nreference = "
                   "trajectories/tabletop_reach.csv\nsigma = 0.1 0.2\n") == 6);
  CHECK(error_line("[scenario]\nname = x\nkind = error_propagation\n[error_propagation]\nmodel = "
                   "models/whole_body.model\ncompare = a b\n[scope a]\nsegments = arm\n") == 6);
  CHECK(error_line("[scenario]\nname = x\nkind = repr_ablation\n[repr_ablation]\nreferences = "
                   "trajectories/tabletop_reach.csv\nstudies = smoothness\n[source]\n[variant v]\nrepr = "
                   "polar\nnoise_mode = per_step\n") == 9);
  CHECK(error_line("[scenario]\nname = x\nkind = rtg_unit\noutput = ../escape\n") == 4);
}

TEST_CASE("missing fixtures raise FileNotFound") {
  CHECK_THROWS_AS(parse("[scenario]\nname = x\nkind = strategy_compare\n[source]\nreference = nowhere.csv\n"),
                  FileNotFound);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.cfg"), FileNotFound);
}

TEST_CASE("shipped scenarios validate") {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(kScenarios)) {
    if (entry.path().extension() != ".cfg") continue;
    CAPTURE(entry.path().string());
    const Scenario sc = load_scenario(entry.path().string(), kData);
    CHECK(sc.name == entry.path().stem().string());
    CHECK(sc.config_hash != 0);
    ++n;
  }
  CHECK(n == 6);
  const Scenario fig9 = load_scenario(kScenarios + "/fig9_compare.cfg", kData);
  REQUIRE(fig9.kind == ScenarioKind::strategy_compare);
  CHECK(fig9.strategy_compare.source.chunk_len == 32);
  CHECK(fig9.strategy_compare.source.dt == 0.1);
  CHECK(fig9.strategy_compare.strategies.size() == 4);
  CHECK(fig9.strategy_compare.seeds == 10);
  // About 7 Hz effective ingest.
  CHECK(1.0 / fig9.strategy_compare.source.latency.mean() == doctest::Approx(7.0).epsilon(0.01));
}

TEST_CASE("latency statistics") {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  const auto s = latency_stats(v);
  CHECK(s.samples == 100);
  CHECK(s.median == 50.5);
  CHECK(s.p99 == 99.0);
  CHECK(s.mean == 50.5);
  CHECK(s.min == 1.0);
  CHECK(s.max == 100.0);
  const auto odd = latency_stats({3.0, 1.0, 2.0});
  CHECK(odd.median == 2.0);
  CHECK(odd.p99 == 3.0);
}

TEST_CASE("throughput bench boundaries") {
  const auto minimal = throughput_bench(2, 3, 100);
  CHECK(minimal.ingest.samples == 100);
  CHECK(minimal.ingest.median >= 0.0);
  const auto normal = throughput_bench(32, 4, 100, 0, Exec::serial);
  CHECK(normal.accepted == 100);
  CHECK_THROWS_AS(throughput_bench(32, 4, 99), InvalidInput);
  CHECK(sample_latency_bench(32, 4, 1000).samples == 1000);
}

TEST_CASE("rtg_unit scenario end to end") {
  const Scenario sc = parse(kRtgUnit);
  const fs::path a = fresh_dir("unit_a"), b = fresh_dir("unit_b");
  const auto oa = run_scenario(sc, a.string());
  const auto ob = run_scenario(sc, b.string());
  CHECK(oa.checks_passed);
  CHECK(oa.report["seed"] == 3);
  CHECK(oa.report["config_hash"] == hash_hex(sc.config_hash));
  CHECK(oa.report["results"]["accepted"] == 6);
  for (const auto& f : oa.files) {
    CAPTURE(f);
    CHECK(fs::exists(a / "unit" / f));
    CHECK(slurp(a / "unit" / f) == slurp(b / "unit" / f));
  }
  // Consecutive chunks disagree by 0.2, yet the executed channel moves
  // no faster than its limit.
  CHECK(oa.report["results"]["max_finite_difference_velocity"].get<double>() <= 0.3 + 1e-9);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("error records") {
  const auto rec = error_record(std::make_exception_ptr(ParseError("f.cfg", 7, "bad value")));
  CHECK(rec["status"] == "error");
  CHECK(rec["error"] == "parse_error");
  CHECK(rec["file"] == "f.cfg");
  CHECK(rec["line"] == 7);
  CHECK(error_record(std::make_exception_ptr(FileNotFound("x.csv")))["error"] == "file_not_found");
  CHECK(error_record(std::make_exception_ptr(std::runtime_error("boom")))["error"] == "runtime_error");
  CHECK(hash_hex(0xabc) == "0000000000000abc");
}

TEST_CASE("command line: empty config exits nonzero with a parse-error record") {
  const fs::path dir = fresh_dir("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "empty.cfg").close();
  const std::string cmd = std::string("\"") + CHUNKRT_CLI + "\" run \"" + (dir / "empty.cfg").string() +
                          "\" --out \"" + (dir / "out").string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  CHECK(status != 0);
  const Json rec = Json::parse(slurp(dir / "out" / "error.json"));
  CHECK(rec["error"] == "parse_error");
  CHECK(rec["line"] == 1);
  CHECK(Json::parse(slurp(dir / "stderr.txt"))["error"] == "parse_error");

  const std::string validate = std::string("\"") + CHUNKRT_CLI + "\" validate \"" + kScenarios +
                               "/rtg_unit.cfg\" > \"" + (dir / "validate.txt").string() + "\"";
  CHECK(std::system(validate.c_str()) == 0);
  CHECK(Json::parse(slurp(dir / "validate.txt"))["status"] == "valid");
  fs::remove_all(dir);
}
