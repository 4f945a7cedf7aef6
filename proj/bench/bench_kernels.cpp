// Serial against parallel for the four OpenMP kernels. Arg 0 runs the serial
// reference, arg 1 the parallel kernel.

#include <benchmark/benchmark.h>

#include "pidb/bounds.hpp"
#include "pidb/io.hpp"
#include "pidb/mc.hpp"
#include "pidb/nlp.hpp"
#include "pidb/oracle.hpp"

#ifndef PIDB_DATA_DIR
#define PIDB_DATA_DIR "data"
#endif

using namespace pidb;

namespace {

const std::string kData = PIDB_DATA_DIR;

Execution mode(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

const TrialSummary& empa() {
  static const auto trial = load_trial(kData + "/empa.json");
  return trial;
}

void BM_Multistart(benchmark::State& state) {
  const auto sys = build_system(empa(), {"placebo"});
  const auto target = Target::mean(sys, "placebo", CellIndex(3, 1));
  SolverConfig config;
  config.n_starts = 32;
  config.execution = mode(state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(multistart_bound(sys, target, Direction::Lower, config));
  }
}

void BM_Oracle(benchmark::State& state) {
  const auto trial = load_truth(kData + "/truth_synthetic.json");
  const auto sys = build_system(implied_summary(trial), {"treated"});
  OracleBudget budget;
  budget.n_samples = 1L << 18;
  budget.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(oracle_bounds(sys, budget));
}

void BM_CertifiedTable(benchmark::State& state) {
  const auto sys = build_system(empa(), {"empagliflozin", "placebo"});
  BoundsConfig config;
  config.execution = mode(state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(contrast_table(sys, "empagliflozin", "placebo",
                                            ContrastKind::Difference, config));
  }
}

void BM_Simulation(benchmark::State& state) {
  const auto truth = load_truth(kData + "/truth_synthetic.json");
  StudyConfig config;
  config.reps = 20;
  config.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(imprecision_study(truth, config));
}

}  // namespace

BENCHMARK(BM_Multistart)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Oracle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CertifiedTable)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Simulation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
