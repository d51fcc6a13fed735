// Serial reference against the OpenMP kernels for run execution and bound
// estimation. Worker count follows CLB_WORKERS.

#include <benchmark/benchmark.h>

#include "clb/bounds.hpp"
#include "clb/experiment.hpp"
#include "clb/numerics.hpp"

using namespace clb;

namespace {

ExperimentConfig bench_config() {
  return parse_config(R"({
    "seed": 1,
    "data": {"T": 5, "n": 100},
    "buffer": {"m": 16},
    "estimation": {"runs": 64, "blocks": 8, "bootstrap": 100},
    "output": {"dir": ""}
  })");
}

const std::vector<RunRecord>& bench_runs() {
  static const auto runs = execute_runs(bench_config(), Execution::serial).runs;
  return runs;
}

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

void BM_ExecuteRuns(benchmark::State& state) {
  const auto cfg = bench_config();
  for (auto _ : state) benchmark::DoNotOptimize(execute_runs(cfg, mode(state)));
  state.SetLabel(state.range(0) ? "parallel" : "serial");
}
BENCHMARK(BM_ExecuteRuns)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ComputeBounds(benchmark::State& state) {
  const auto& runs = bench_runs();
  const auto cfg = bench_config().estimation.search;
  for (auto _ : state) benchmark::DoNotOptimize(compute_bounds(runs, cfg, mode(state)));
  state.SetLabel(state.range(0) ? "parallel" : "serial");
}
BENCHMARK(BM_ComputeBounds)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_LogdetGram(benchmark::State& state) {
  const auto rows = state.range(0), cols = state.range(1);
  RngStream rng(3);
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(logdet_cov_gram(a, 0.1));
}
BENCHMARK(BM_LogdetGram)->Args({16, 1000})->Args({1000, 16})->Args({256, 256});

}  // namespace

int main(int argc, char** argv) {
  apply_worker_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
