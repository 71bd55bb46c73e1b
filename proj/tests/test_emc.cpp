#include <doctest.h>

#include <random>

#include "spi/emc.hpp"
#include "spi/rng.hpp"
#include "spi/simulate.hpp"
#include "test_helpers.hpp"

using namespace spi;

namespace {

struct Scene {
  DetectorModel det;
  Phantom phantom;
  GroundTruthIntensity truth;
  int grid;
};

Scene make_scene(int n_px = 16, double corner_q = 9.0, int grid = 23) {
  Scene s{test::synthetic_detector(n_px, corner_q), make_phantom(grid, test::default_phantom(grid)),
          {}, grid};
  s.truth = make_ground_truth(s.phantom.density, {});
  return s;
}

FrameSet frames_from(const Scene& s, const std::vector<Quat>& rots, double fluence,
                     std::uint64_t seed) {
  FrameSet set;
  set.num_pixels = s.det.num_pixels();
  auto rng = make_engine(seed);
  for (std::size_t i = 0; i < rots.size(); ++i)
    set.frames.push_back(simulate_frame(s.truth, s.det, rots[i], fluence, rng, i));
  return set;
}

} // namespace

TEST_CASE("expand of a uniform model is c * pixel_weight") {
  const DetectorModel det = test::synthetic_detector(16, 7.0, 2.0);
  Volume model(19);
  for (std::size_t i = 0; i < model.size(); ++i) model[i] = 3.25;
  std::mt19937_64 rng(1);
  const auto w = expand(model, det, test::random_rotation(rng));
  for (std::size_t p = 0; p < det.num_pixels(); ++p) {
    if (det.mask_class[p] == MaskClass::kIgnore)
      CHECK(w[p] == 0.0);
    else
      CHECK(w[p] == doctest::Approx(3.25 * det.pixel_weight[p]).epsilon(1e-9));
  }
}

TEST_CASE("expand is equivariant under lattice-exact rotations") {
  const Scene s = make_scene();
  // rotate the model by +90 deg about z: model'(x,y,z) = model(y,-x,z)
  Volume rotated(s.grid);
  const int c = rotated.center();
  for (int x = -c; x <= c; ++x)
    for (int y = -c; y <= c; ++y)
      for (int z = -c; z <= c; ++z)
        rotated.at(x + c, y + c, z + c) = s.truth.intensity.at(y + c, -x + c, z + c);

  const Quat qz = Quat::from_axis_angle({0, 0, 1}, 3.14159265358979323846 / 2.0);
  std::mt19937_64 rng(2);
  const Quat r = test::random_rotation(rng);

  const auto w1 = expand(s.truth.intensity, s.det, r);
  const auto w2 = expand(rotated, s.det, (qz * r).normalized());
  for (std::size_t p = 0; p < w1.size(); ++p)
    CHECK(w2[p] == doctest::Approx(w1[p]).epsilon(1e-10));
}

TEST_CASE("merge then expand reproduces a tomogram within 5% relative L2") {
  // well-oversampled setting: ~4 voxels per speckle
  Scene s;
  s.grid = 33;
  s.det = test::synthetic_detector(24, 13.0);
  PhantomParams pp = test::default_phantom(33);
  pp.outer_radius = 4.0;
  pp.shell_thickness = 0.8;
  pp.gap_thickness = 0.6;
  s.phantom = make_phantom(s.grid, pp);
  s.truth = make_ground_truth(s.phantom.density, {});
  std::mt19937_64 rng(3);
  const Quat r0 = test::random_rotation(rng);
  const auto w0 = expand(s.truth.intensity, s.det, r0);

  // noiseless frame: counts = round(鋭 * W); keep them integral and bright
  const double gain = 50.0;
  std::vector<std::uint32_t> counts(s.det.num_pixels());
  for (std::size_t p = 0; p < counts.size(); ++p)
    counts[p] = static_cast<std::uint32_t>(std::lround(gain * w0[p]));
  FrameSet set;
  set.num_pixels = s.det.num_pixels();
  set.frames.push_back(frame_from_counts(counts, 0));

  std::vector<Pdo> pdos(1);
  pdos[0].index = {0};
  pdos[0].prob = {1.0};
  RotationSet rot;
  rot.quaternions = {r0};
  rot.weights = {1.0};

  std::size_t zero_voxels = 0;
  const Volume merged = compress(set, pdos, {1.0}, s.det, rot, s.grid, &zero_voxels);
  CHECK(zero_voxels > 0); // single slice cannot fill the ball

  // expand(merge(tomogram)) returns the tomogram up to interpolation error:
  // the merged value is counts/weight = gain*I, expand multiplies weight back
  const auto back = expand(merged, s.det, r0);
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < back.size(); ++p) {
    const double want = double(counts[p]); // = gain * W within rounding
    num += (back[p] - want) * (back[p] - want);
    den += want * want;
  }
  CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("frame log likelihood: empty frame, algebra, 1D optimum at scale 1") {
  const DetectorModel det = test::synthetic_detector(8, 4.0);
  const std::size_t n = det.num_pixels();

  std::vector<double> w(n);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> cnt(0, 6);
  std::vector<std::uint32_t> counts(n);
  for (std::size_t p = 0; p < n; ++p) {
    counts[p] = cnt(rng);
    w[p] = double(counts[p]); // K = W exactly
  }
  const SparseFrame empty{};
  double sum_w = 0.0;
  for (std::size_t p = 0; p < n; ++p)
    if (det.mask_class[p] == MaskClass::kUseAll) sum_w += w[p];
  CHECK(frame_log_likelihood(empty, w, det, 2.0) == doctest::Approx(-2.0 * sum_w));

  const SparseFrame f = frame_from_counts(counts, 0);
  // golden-section search oracle: the Poisson ML scale given K = W is 1
  auto ll = [&](double s) { return frame_log_likelihood(f, w, det, s); };
  double lo = 0.05, hi = 8.0;
  const double gr = 0.61803398874989484;
  double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
  for (int it = 0; it < 80; ++it) {
    if (ll(a) > ll(b))
      hi = b;
    else
      lo = a;
    a = hi - gr * (hi - lo);
    b = lo + gr * (hi - lo);
  }
  CHECK(0.5 * (lo + hi) == doctest::Approx(1.0).epsilon(1e-4));

  // scaling W by t changes the value by sum K log t - (t-1) scale sum W
  std::vector<double> w3 = w;
  for (double& v : w3) v *= 3.0;
  double k_total = 0.0;
  for (std::size_t p = 0; p < n; ++p)
    if (det.mask_class[p] == MaskClass::kUseAll) k_total += counts[p];
  const double lhs = frame_log_likelihood(f, w3, det, 2.0);
  const double rhs = frame_log_likelihood(f, w, det, 2.0) +
                     k_total * std::log(3.0) - 2.0 * 2.0 * sum_w;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("e_step: flat annealing limit recovers the quadrature weights") {
  const Scene s = make_scene();
  const RotationSet rot = sample_rotations(1);
  const FrameSet set = frames_from(s, {Quat::identity()}, 0.5, 5);
  const auto pdos = e_step(set, s.truth.intensity, s.det, rot, {1.0}, 1e-9, 2);
  REQUIRE(pdos.size() == 1);
  CHECK(pdos[0].sum() == doctest::Approx(1.0).epsilon(1e-9));
  REQUIRE(pdos[0].index.size() == rot.size());
  for (std::size_t i = 0; i < pdos[0].index.size(); ++i)
    CHECK(pdos[0].prob[i] ==
          doctest::Approx(rot.weights[pdos[0].index[i]]).epsilon(1e-4));
}

TEST_CASE("e_step: dominant orientation takes >0.99 of the mass at beta=1") {
  // An icosahedral particle on a flat Ewald slice leaves the orientation
  // genuinely ambiguous (point-group twins), so this uses an asymmetric
  // object on a strongly curved detector.
  GroundTruthIntensity truth;
  truth.intensity = {};
  const int grid = 27;
  truth.intensity = make_ground_truth(test::asymmetric_truth(grid, 21), {}).intensity;
  const DetectorModel det = test::synthetic_detector(24, 10.0, 0.0, 8.0);

  const RotationSet rot = sample_rotations(2);
  const double fluence = fluence_for_mean_photons(truth, det, 2000.0);
  FrameSet set;
  set.num_pixels = det.num_pixels();
  auto rng = make_engine(6);
  set.frames.push_back(
      simulate_frame(truth, det, rot.quaternions[137], fluence, rng, 0));

  // scale = generating fluence (the model is the unit-fluence truth)
  const auto pdos = e_step(set, truth.intensity, det, rot, {fluence}, 1.0, 2);
  REQUIRE(pdos.size() == 1);
  double at_truth = 0.0;
  for (std::size_t i = 0; i < pdos[0].index.size(); ++i)
    if (pdos[0].index[i] == 137) at_truth = pdos[0].prob[i];
  CHECK(at_truth > 0.99);
}

TEST_CASE("e_step normalization and scale/model gauge invariance") {
  const Scene s = make_scene();
  const RotationSet rot = sample_rotations(1);
  std::vector<Quat> draws;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) draws.push_back(test::random_rotation(rng));
  const double fluence = fluence_for_mean_photons(s.truth, s.det, 400.0);
  const FrameSet set = frames_from(s, draws, fluence, 8);

  std::vector<double> scales(set.size(), 1.0);
  const auto p1 = e_step(set, s.truth.intensity, s.det, rot, scales, 0.5, 2);
  for (const auto& p : p1) CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));

  // multiply all scales by 4 and divide the model by 4: PDOs bit-identical
  Volume quarter(s.grid);
  for (std::size_t i = 0; i < quarter.size(); ++i)
    quarter[i] = s.truth.intensity[i] / 4.0;
  std::vector<double> scaled(set.size(), 4.0);
  const auto p2 = e_step(set, quarter, s.det, rot, scaled, 0.5, 2);
  for (std::size_t d = 0; d < p1.size(); ++d) {
    REQUIRE(p1[d].index == p2[d].index);
    for (std::size_t i = 0; i < p1[d].prob.size(); ++i)
      CHECK(p1[d].prob[i] == p2[d].prob[i]);
  }
}

TEST_CASE("update_scales: closed form, empty frames, synthetic recovery") {
  const Scene s = make_scene(16, 9.0, 23);
  const RotationSet rot = sample_rotations(2);

  // delta PDO: scale collapses to K / sum W
  const double fluence = fluence_for_mean_photons(s.truth, s.det, 1000.0);
  FrameSet one = frames_from(s, {rot.quaternions[11]}, 2.0 * fluence, 9);
  std::vector<Pdo> delta(1);
  delta[0].index = {11};
  delta[0].prob = {1.0};
  const auto w = expand(s.truth.intensity, s.det, rot.quaternions[11]);
  double sum_w = 0.0, k = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p)
    if (s.det.mask_class[p] == MaskClass::kUseAll) sum_w += w[p];
  k = double(one.frames[0].total_photons());
  auto scales = update_scales(one, delta, s.truth.intensity, s.det, rot, 2);
  CHECK(scales[0] == doctest::Approx(k / sum_w).epsilon(1e-9));

  // empty frame flagged with scale 0
  one.frames.push_back(SparseFrame{});
  delta.push_back(delta[0]);
  scales = update_scales(one, delta, s.truth.intensity, s.det, rot, 2);
  CHECK(scales[1] == 0.0);

  // frames at true scale 2.0 recover it within 5% given the true model
  std::vector<Quat> draws(60, Quat::identity());
  for (std::size_t i = 0; i < draws.size(); ++i) draws[i] = rot.quaternions[7 * i % rot.size()];
  FrameSet many = frames_from(s, draws, 2.0 * fluence, 10);
  const auto pdos = e_step(many, s.truth.intensity, s.det, rot,
                           std::vector<double>(many.size(), 1.0), 1.0, 2);
  // gauge: the model here is the unit-fluence truth, so "2 * fluence" is the
  // expected ML scale
  const auto rec = update_scales(many, pdos, s.truth.intensity, s.det, rot, 2);
  double mean = 0.0;
  for (double v : rec) mean += v;
  mean /= double(rec.size());
  CHECK(mean == doctest::Approx(2.0 * fluence).epsilon(0.05));
}

TEST_CASE("compress: single frame with delta PDO lands on one Ewald slice") {
  const Scene s = make_scene(16, 9.0, 23);
  std::mt19937_64 rng(11);
  const Quat r0 = test::random_rotation(rng);
  RotationSet rot;
  rot.quaternions = {r0};
  rot.weights = {1.0};

  const double fluence = fluence_for_mean_photons(s.truth, s.det, 3000.0);
  const FrameSet set = frames_from(s, {r0}, fluence, 12);
  std::vector<Pdo> pdos(1);
  pdos[0].index = {0};
  pdos[0].prob = {1.0};

  std::size_t zeros = 0;
  const Volume merged = compress(set, pdos, {1.0}, s.det, rot, s.grid, &zeros);

  // gather back along the slice: the merged values reproduce K/weight
  const auto back = expand(merged, s.det, r0);
  double num = 0.0, den = 0.0;
  std::vector<double> dense(s.det.num_pixels(), 0.0);
  for (std::uint32_t p : set.frames[0].one_photon_pixels) dense[p] = 1.0;
  for (const auto& [p, c] : set.frames[0].multi_photon_pixels) dense[p] = double(c);
  for (std::size_t p = 0; p < dense.size(); ++p) {
    num += (back[p] - dense[p]) * (back[p] - dense[p]);
    den += dense[p] * dense[p];
  }
  CHECK(std::sqrt(num / den) < 0.2); // interpolation + photon granularity

  // everything off the slice has zero weight and is recorded as such
  CHECK(zeros > merged.size() / 2);
}

TEST_CASE("compress output satisfies Friedel symmetry exactly") {
  const Scene s = make_scene();
  const RotationSet rot = sample_rotations(1);
  std::vector<Quat> draws;
  std::mt19937_64 rng(13);
  for (int i = 0; i < 20; ++i) draws.push_back(test::random_rotation(rng));
  const double fluence = fluence_for_mean_photons(s.truth, s.det, 500.0);
  const FrameSet set = frames_from(s, draws, fluence, 14);
  std::vector<double> ones(set.size(), 1.0);
  const auto pdos = e_step(set, s.truth.intensity, s.det, rot, ones, 0.01, 2);
  const Volume merged = compress(set, pdos, ones, s.det, rot, s.grid);

  const int m = merged.edge();
  for (int x = 0; x < m; ++x)
    for (int y = 0; y < m; ++y)
      for (int z = 0; z < m; ++z)
        CHECK(merged.at(x, y, z) == merged.at(m - 1 - x, m - 1 - y, m - 1 - z));
}

TEST_CASE("compress from an isotropic model stays isotropic per shell") {
  const Scene s = make_scene(16, 9.0, 23);
  // isotropic truth: radial Gaussian intensity
  GroundTruthIntensity iso;
  iso.intensity = Volume(s.grid);
  for (std::size_t i = 0; i < iso.intensity.size(); ++i) {
    const double r = iso.intensity.radius_of(i);
    iso.intensity[i] = 200.0 * std::exp(-0.5 * r * r / 16.0);
  }
  std::vector<Quat> draws;
  std::mt19937_64 rng(15);
  for (int i = 0; i < 200; ++i) draws.push_back(test::random_rotation(rng));
  FrameSet set;
  set.num_pixels = s.det.num_pixels();
  auto frng = make_engine(16);
  for (std::size_t i = 0; i < draws.size(); ++i)
    set.frames.push_back(simulate_frame(iso, s.det, draws[i], 1.0, frng, i));

  // uniform PDOs over a coarse grid
  const RotationSet rot = sample_rotations(1);
  std::vector<Pdo> pdos(set.size());
  for (auto& p : pdos) {
    for (std::uint32_t r = 0; r < rot.size(); ++r) {
      p.index.push_back(r);
      p.prob.push_back(rot.weights[r]);
    }
  }
  const Volume merged =
      compress(set, pdos, std::vector<double>(set.size(), 1.0), s.det, rot, s.grid);

  const RadialBins bins = RadialBins::make(s.grid);
  const int r_max = s.grid / 2;
  for (int shell = 3; shell < r_max - 1; ++shell) {
    double sum = 0.0, sum2 = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < merged.size(); ++i) {
      if (bins.shell_of[i] != shell || merged[i] == 0.0) continue;
      sum += merged[i];
      sum2 += merged[i] * merged[i];
      ++n;
    }
    REQUIRE(n > 10);
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    CHECK(sd / mean < 0.25); // shell-wise sampling noise only
  }
}

TEST_CASE("beta schedule: start, interval steps, cap at 1") {
  EmcConfig cfg;
  cfg.beta_start = 0.001;
  cfg.beta_factor = 1.41421356;
  cfg.beta_interval = 10;
  CHECK(beta_at(cfg, 1) == doctest::Approx(0.001));
  CHECK(beta_at(cfg, 10) == doctest::Approx(0.001));
  CHECK(beta_at(cfg, 11) == doctest::Approx(0.001 * 1.41421356));
  CHECK(beta_at(cfg, 21) == doctest::Approx(0.001 * 2.0));
  CHECK(beta_at(cfg, 500) == 1.0);
  cfg.beta_interval = 0;
  CHECK_THROWS_AS(beta_at(cfg, 1), ConfigError);
}

TEST_CASE("run_emc: smoke run is deterministic across worker counts") {
  const Scene s = make_scene(12, 6.0, 17);
  std::vector<Quat> draws;
  std::mt19937_64 rng(17);
  for (int i = 0; i < 40; ++i) draws.push_back(test::random_rotation(rng));
  const double fluence = fluence_for_mean_photons(s.truth, s.det, 150.0);
  FrameSet set = frames_from(s, draws, fluence, 18);
  set.frames.push_back(SparseFrame{}); // must be skipped, not fatal

  EmcConfig cfg;
  cfg.num_div = 1;
  cfg.num_iter = 6;
  cfg.grid_size = s.grid;
  cfg.beta_start = 0.01;
  cfg.seed = 99;
  cfg.log_file.clear();
  const RotationSet rot = sample_rotations(cfg.num_div);

  const EmcResult a = run_emc(set, s.det, rot, cfg, 1);
  const EmcResult b = run_emc(set, s.det, rot, cfg, 4);
  REQUIRE(a.intensity.size() == b.intensity.size());
  for (std::size_t i = 0; i < a.intensity.size(); ++i) {
    CHECK(a.intensity[i] == b.intensity[i]);
    CHECK(a.intensity[i] >= 0.0);
  }
  CHECK(a.skipped_frames.size() == 1);
  CHECK(a.kept_frames.size() == 40);
  CHECK(a.trace.size() == 6);
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].mean_log_likelihood == b.trace[i].mean_log_likelihood);
}
