#include <benchmark/benchmark.h>

#include <random>

#include "spi/phasing.hpp"

using namespace spi;

namespace {

Volume bench_intensity(int m) {
  Volume v(m);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.1, 4.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = uni(rng);
  return v;
}

PhaseIterate bench_iterate(int m) {
  PhaseIterate psi;
  psi.rho = CVolume(m);
  psi.bg = Volume(m);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < psi.rho.size(); ++i) psi.rho[i] = {uni(rng), uni(rng)};
  for (std::size_t i = 0; i < psi.bg.size(); ++i) psi.bg[i] = uni(rng);
  return psi;
}

} // namespace

static void BM_ProjectModulus(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const Volume I = bench_intensity(m);
  const IntensityConstraint c = IntensityConstraint::make(I, 3.0, m / 2.0 - 1.0);
  PhaseIterate psi = bench_iterate(m);
  Fft3 fft(m);
  for (auto _ : state) {
    psi = project_modulus(psi, c, fft);
    benchmark::DoNotOptimize(psi.rho.data().data());
  }
}
BENCHMARK(BM_ProjectModulus)->Arg(33)->Arg(65)->Unit(benchmark::kMillisecond);

static void BM_ProjectSupport(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const RadialBins bins = RadialBins::make(m);
  PhaseIterate psi = bench_iterate(m);
  for (auto _ : state) {
    PhaseIterate out = project_support(psi, m * m, bins);
    benchmark::DoNotOptimize(out.rho.data().data());
  }
}
BENCHMARK(BM_ProjectSupport)->Arg(33)->Arg(65)->Unit(benchmark::kMillisecond);

static void BM_DmIteration(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const Volume I = bench_intensity(m);
  const IntensityConstraint c = IntensityConstraint::make(I, 3.0, m / 2.0 - 1.0);
  PhaseIterate psi = bench_iterate(m);
  Fft3 fft(m);
  for (auto _ : state) {
    psi = dm_iteration(psi, c, m * m, fft);
    benchmark::DoNotOptimize(psi.rho.data().data());
  }
}
BENCHMARK(BM_DmIteration)->Arg(33)->Arg(65)->Unit(benchmark::kMillisecond);
