// OpenMP kernels against their serial references.

#include "rh/hinf.hpp"
#include "rh/stability_certifier.hpp"
#include "rh/thermal_plant.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

rh::LtiSystem random_system(int n, int m, int p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  auto rnd = [&](int r, int c) {
    rh::Mat M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = N(rng);
    return M;
  };
  const rh::Mat X = rnd(n, n);
  const rh::Mat A = -(X.transpose() * X / n + 0.1 * rh::Mat::Identity(n, n));
  return {A, rnd(n, m), rnd(p, n), rh::Mat::Zero(p, m)};
}

void BM_HinfParallel(benchmark::State& st) {
  const auto s = random_system(static_cast<int>(st.range(0)), 3, 6, 1);
  for (auto _ : st) benchmark::DoNotOptimize(rh::hinf_norm(s).gamma);
}

void BM_HinfSerial(benchmark::State& st) {
  const auto s = random_system(static_cast<int>(st.range(0)), 3, 6, 1);
  for (auto _ : st) benchmark::DoNotOptimize(rh::hinf_norm_serial(s).gamma);
}

void BM_CzParallel(benchmark::State& st) {
  rh::PlantConfig c;
  for (auto _ : st) benchmark::DoNotOptimize(rh::assemble_cz(c).data());
}

void BM_CzSerial(benchmark::State& st) {
  rh::PlantConfig c;
  for (auto _ : st) benchmark::DoNotOptimize(rh::assemble_cz_serial(c).data());
}

rh::Excitation excitation() {
  rh::Excitation e;
  e.amplitude = {1.0, 0.1, 0.1};
  e.on_time = 200.0;
  e.dt = 1.0;
  return e;
}

void BM_SweepParallel(benchmark::State& st) {
  const auto s = random_system(200, 3, 6, 2);
  for (auto _ : st) benchmark::DoNotOptimize(rh::empirical_sweep(s, excitation(), 1600.0, 16).decaying);
}

void BM_SweepSerial(benchmark::State& st) {
  const auto s = random_system(200, 3, 6, 2);
  for (auto _ : st) benchmark::DoNotOptimize(rh::empirical_sweep_serial(s, excitation(), 1600.0, 16).decaying);
}

}  // namespace

BENCHMARK(BM_HinfParallel)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HinfSerial)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CzParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CzSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
