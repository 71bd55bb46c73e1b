#include <benchmark/benchmark.h>

#include <random>

#include "spi/metrics.hpp"

using namespace spi;

namespace {

Volume noisy_volume(int m, std::uint64_t seed) {
  Volume v(m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 5.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = uni(rng);
  return v;
}

} // namespace

static void BM_CcHalf(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const Volume a = noisy_volume(m, 1), b = noisy_volume(m, 2);
  for (auto _ : state) {
    ShellCurve c = cc_half(a, b);
    benchmark::DoNotOptimize(c.value.data());
  }
}
BENCHMARK(BM_CcHalf)->Arg(33)->Arg(65)->Unit(benchmark::kMillisecond);

static void BM_AlignRotation(benchmark::State& state) {
  const int m = 33;
  Volume a(m);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-8.0, 8.0);
  for (int blob = 0; blob < 6; ++blob) {
    const Vec3 c{pos(rng), pos(rng), pos(rng)};
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Vec3 d = a.coords_of(i) - c;
      a[i] += std::exp(-0.25 * d.norm2());
    }
  }
  for (auto _ : state) {
    RotAlignResult r = align_rotation(a, a, 2.0, 14.0, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(r.cc);
  }
}
BENCHMARK(BM_AlignRotation)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_Prtf(benchmark::State& state) {
  const int m = 33;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ph(0.0, 6.283185307179586);
  std::vector<CVolume> stack(32, CVolume(m));
  for (auto& f : stack)
    for (std::size_t i = 0; i < f.size(); ++i)
      f[i] = {std::cos(ph(rng)), std::sin(ph(rng))};
  for (auto _ : state) {
    ShellCurve c = prtf_from_fourier(stack);
    benchmark::DoNotOptimize(c.value.data());
  }
}
BENCHMARK(BM_Prtf)->Unit(benchmark::kMillisecond);
