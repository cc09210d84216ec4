// Serial reference loops against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "chunkrt/harness.hpp"
#include "chunkrt/kinematics.hpp"

using namespace chunkrt;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(1) ? Exec::parallel : Exec::serial; }

void BM_RtgIngest(benchmark::State& st) {
  const auto channels = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) {
    const auto r = throughput_bench(32, channels, 100, 0, exec_of(st));
    benchmark::DoNotOptimize(r.accepted);
    st.SetIterationTime(r.ingest.mean * static_cast<double>(r.ingest.samples));
  }
  st.SetItemsProcessed(st.iterations() * 100);
  st.SetLabel(exec_of(st) == Exec::parallel ? "openmp" : "serial");
}
BENCHMARK(BM_RtgIngest)
    ->ArgsProduct({{10, 20, 40}, {0, 1}})
    ->ArgNames({"channels", "parallel"})
    ->UseManualTime()
    ->Unit(benchmark::kMillisecond);

void BM_ErrorPropagation(benchmark::State& st) {
  static const ChainModel model = ChainModel::load(std::string(CHUNKRT_DATA_DIR) + "/models/whole_body.model");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.4);
  std::vector<JointState> reference(5, JointState::Zero(static_cast<Eigen::Index>(model.dof())));
  for (auto& q : reference)
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = g(rng);
  const auto scope = model.path_to(Arm::left);
  const auto trials = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) {
    const auto r = error_propagation_experiment(model, reference, 0.01, scope, trials, 7, Arm::left, exec_of(st));
    benchmark::DoNotOptimize(r);
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * 5);
  st.SetLabel(exec_of(st) == Exec::parallel ? "openmp" : "serial");
}
BENCHMARK(BM_ErrorPropagation)
    ->ArgsProduct({{200, 1000}, {0, 1}})
    ->ArgNames({"trials", "parallel"})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
