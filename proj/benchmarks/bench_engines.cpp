#include <benchmark/benchmark.h>

#include "chainimp/chains.hpp"
#include "chainimp/diagnostics.hpp"
#include "chainimp/experiments.hpp"
#include "chainimp/jointgauss.hpp"

using namespace chainimp;

static void BM_IterativeSweepBivariate(benchmark::State& state) {
  RngStream rng(1);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp1(200, 80, 80, data_rng);
  const auto specs = exp1_specs(LinearPrior::jeffreys);
  ChainState cs = init_state(dm, rng);
  for (auto _ : state) {
    iterative_sweep(cs, specs, rng);
    benchmark::DoNotOptimize(cs.data.data());
  }
}
BENCHMARK(BM_IterativeSweepBivariate);

static void BM_IterativeSweepSevenVar(benchmark::State& state) {
  RngStream rng(2);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp2(1000, data_rng);
  const auto specs = exp2_specs();
  ChainState cs = init_state(dm, rng);
  for (auto _ : state) {
    iterative_sweep(cs, specs, rng);
    benchmark::DoNotOptimize(cs.data.data());
  }
}
BENCHMARK(BM_IterativeSweepSevenVar);

static void BM_DaSweepSevenVar(benchmark::State& state) {
  RngStream rng(3);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp2(1000, data_rng);
  ChainState cs = init_state(dm, rng);
  for (auto _ : state) {
    da_sweep(cs, rng);
    benchmark::DoNotOptimize(cs.data.data());
  }
}
BENCHMARK(BM_DaSweepSevenVar);

static void BM_KsTwoSample(benchmark::State& state) {
  RngStream rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(n), b(n);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  for (auto _ : state) {
    const KsResult ks = ks_two_sample(a, b);
    benchmark::DoNotOptimize(ks.statistic);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KsTwoSample)->Range(1 << 12, 1 << 18)->Complexity();

static void BM_EmObservedMle(benchmark::State& state) {
  RngStream rng(5);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp2(1000, data_rng);
  for (auto _ : state) {
    const GaussParams p = em_observed_mle(dm);
    benchmark::DoNotOptimize(p.mu.data());
  }
}
BENCHMARK(BM_EmObservedMle);

BENCHMARK_MAIN();
