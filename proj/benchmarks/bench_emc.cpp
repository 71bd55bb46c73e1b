#include <benchmark/benchmark.h>

#include <random>

#include "spi/emc.hpp"
#include "spi/phantom.hpp"
#include "spi/rng.hpp"
#include "spi/simulate.hpp"

using namespace spi;

namespace {

struct EmcFixture {
  DetectorModel det;
  GroundTruthIntensity truth;
  FrameSet frames;
  RotationSet rot;
  int grid;

  static const EmcFixture& get() {
    static const EmcFixture f = [] {
      EmcFixture fx;
      fx.grid = 43;
      ExperimentGeometry g;
      g.detector_distance_mm = 60.0;
      g.wavelength_angstrom = 7.75;
      g.pixel_size_mm = 0.3;
      g.detector_shape[0] = g.detector_shape[1] = 28;
      const double chord = 0.12; // rough corner chord for this geometry
      g.ewald_radius_voxels = 19.5 / chord;
      g.central_stop_radius_px = 0.0;
      std::vector<MaskClass> mask(g.num_pixels(), MaskClass::kUseAll);
      fx.det = build_detector(g, mask);
      // keep the corner inside the grid whatever the chord estimate was
      while (fx.det.max_q() > fx.grid / 2 - 1) {
        g.ewald_radius_voxels *= 0.95;
        fx.det = build_detector(g, mask);
      }
      PhantomParams pp;
      pp.outer_radius = 0.2 * fx.grid;
      pp.shell_thickness = 1.5;
      pp.gap_thickness = 1.2;
      Phantom ph = make_phantom(fx.grid, pp);
      fx.truth = make_ground_truth(ph.density, {});
      const double fl = fluence_for_mean_photons(fx.truth, fx.det, 1000.0);
      fx.frames = simulate_dataset(fx.truth, fx.det, 400, fl, FluenceDistribution{0.2},
                                   7, 0)
                      .frames;
      fx.rot = sample_rotations(2);
      return fx;
    }();
    return f;
  }
};

} // namespace

static void BM_Expand(benchmark::State& state) {
  const auto& fx = EmcFixture::get();
  std::mt19937_64 rng(1);
  std::size_t r = 0;
  for (auto _ : state) {
    auto w = expand(fx.truth.intensity, fx.det, fx.rot.quaternions[r % fx.rot.size()]);
    benchmark::DoNotOptimize(w.data());
    ++r;
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(fx.det.num_pixels()));
}
BENCHMARK(BM_Expand);

static void BM_EStep(benchmark::State& state) {
  const auto& fx = EmcFixture::get();
  const std::vector<double> scales(fx.frames.size(), 1.0);
  for (auto _ : state) {
    auto pdos = e_step(fx.frames, fx.truth.intensity, fx.det, fx.rot, scales, 0.5,
                       static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(pdos.data());
  }
  state.SetItemsProcessed(state.iterations() * fx.frames.size() * fx.rot.size());
}
BENCHMARK(BM_EStep)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_Compress(benchmark::State& state) {
  const auto& fx = EmcFixture::get();
  const std::vector<double> scales(fx.frames.size(), 1.0);
  const auto pdos = e_step(fx.frames, fx.truth.intensity, fx.det, fx.rot, scales, 0.5, 0);
  for (auto _ : state) {
    Volume v = compress(fx.frames, pdos, scales, fx.det, fx.rot, fx.grid);
    benchmark::DoNotOptimize(v.data().data());
  }
  state.SetItemsProcessed(state.iterations() * fx.rot.size() * fx.det.num_pixels());
}
BENCHMARK(BM_Compress)->Unit(benchmark::kMillisecond);

static void BM_SampleRotations(benchmark::State& state) {
  for (auto _ : state) {
    RotationSet set = sample_rotations(static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(set.quaternions.data());
  }
}
BENCHMARK(BM_SampleRotations)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
