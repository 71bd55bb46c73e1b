#include "spi/simulate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "spi/fft.hpp"
#include "spi/parallel.hpp"
#include "spi/rng.hpp"
#include "spi/rotations.hpp"

namespace spi {

GroundTruthIntensity make_ground_truth(const Volume& density, const RadialBackground& bg) {
  const int m = density.edge();
  CVolume rho(m, density.voxel_size());
  for (std::size_t i = 0; i < density.size(); ++i) rho[i] = density[i];
  CVolume F;
  Fft3 fft(m);
  fft.forward(rho, F);

  GroundTruthIntensity truth;
  truth.background = bg;
  truth.intensity = Volume(m, density.voxel_size());
  for (std::size_t i = 0; i < F.size(); ++i) {
    const double q = truth.intensity.radius_of(i);
    truth.intensity[i] = std::norm(F[i]) + bg.intensity(q);
  }
  return truth;
}

namespace {

// Quadrature over orientations of the expected frame photon count at unit
// fluence. The num_div=2 grid is plenty for a mean.
double mean_counts_per_frame(const Volume& intensity, const DetectorModel& det) {
  static const RotationSet quad = sample_rotations(2);
  double total = 0.0;
  for (std::size_t r = 0; r < quad.size(); ++r) {
    const Mat3 rot = quad.quaternions[r].to_matrix();
    double frame = 0.0;
    for (std::size_t p = 0; p < det.num_pixels(); ++p) {
      if (det.mask_class[p] == MaskClass::kIgnore) continue;
      const double v = trilinear_sample(intensity, rot.apply(det.pixel_q[p]));
      if (v > 0.0) frame += det.pixel_weight[p] * v;
    }
    total += quad.weights[r] * frame;
  }
  return total;
}

} // namespace

double background_amplitude_for_fraction(const Volume& particle_intensity,
                                         const DetectorModel& det, double fraction,
                                         double sigma) {
  if (fraction <= 0.0) return 0.0;
  if (fraction >= 1.0) throw ConfigError("background fraction must be < 1");
  const double particle = mean_counts_per_frame(particle_intensity, det);
  // Background photons at unit amplitude: isotropic, no orientation average needed.
  double bg_unit = 0.0;
  for (std::size_t p = 0; p < det.num_pixels(); ++p) {
    if (det.mask_class[p] == MaskClass::kIgnore) continue;
    const double q = det.pixel_q[p].norm();
    bg_unit += det.pixel_weight[p] * std::exp(-0.5 * q * q / (sigma * sigma));
  }
  if (bg_unit <= 0.0) throw ConfigError("background fraction requested but detector sees none");
  // fraction = A*bg_unit / (A*bg_unit + particle)
  return fraction * particle / ((1.0 - fraction) * bg_unit);
}

double expected_pixel_counts(const GroundTruthIntensity& truth, const DetectorModel& det,
                             std::size_t pixel, const Quat& rotation,
                             double fluence_scale) {
  const double v =
      trilinear_sample(truth.intensity, rotate_q(det.pixel_q[pixel], rotation));
  return v > 0.0 ? fluence_scale * det.pixel_weight[pixel] * v : 0.0;
}

SparseFrame simulate_frame(const GroundTruthIntensity& truth, const DetectorModel& det,
                           const Quat& rotation, double fluence_scale,
                           std::mt19937_64& rng, std::uint64_t frame_id,
                           std::size_t* clamped) {
  if (fluence_scale <= 0.0) throw ConfigError("fluence_scale must be positive");
  if (std::abs(rotation.norm() - 1.0) > 1e-9)
    throw ConfigError("rotation quaternion not unit norm");

  SparseFrame f;
  f.frame_id = frame_id;
  const Mat3 rot = rotation.to_matrix();
  for (std::size_t p = 0; p < det.num_pixels(); ++p) {
    if (det.mask_class[p] == MaskClass::kIgnore) continue;
    double v = trilinear_sample(truth.intensity, rot.apply(det.pixel_q[p]));
    if (v < 0.0) {
      if (clamped) ++*clamped;
      v = 0.0;
    }
    const double lam = fluence_scale * det.pixel_weight[p] * v;
    if (lam <= 0.0) continue;
    std::poisson_distribution<std::uint32_t> pois(lam);
    const std::uint32_t k = pois(rng);
    if (k == 1)
      f.one_photon_pixels.push_back(static_cast<std::uint32_t>(p));
    else if (k >= 2)
      f.multi_photon_pixels.emplace_back(static_cast<std::uint32_t>(p), k);
  }
  return f;
}

SimulatedDataset simulate_dataset(const GroundTruthIntensity& truth,
                                  const DetectorModel& det, int n_frames,
                                  double mean_fluence_scale,
                                  const FluenceDistribution& fluence,
                                  std::uint64_t seed, int workers) {
  if (n_frames < 0) throw ConfigError("n_frames must be >= 0");
  SimulatedDataset ds;
  ds.frames.num_pixels = static_cast<std::uint32_t>(det.num_pixels());
  ds.frames.stream_seed = seed;
  ds.frames.frames.resize(n_frames);
  ds.orientations.resize(n_frames);
  ds.fluences.resize(n_frames);

  if (workers <= 0) workers = default_workers();
  parallel_for(static_cast<std::size_t>(n_frames), workers, [&](std::size_t d) {
    auto rng = make_engine(derive_seed(seed, Stage::kSimulate, d));
    // Haar-uniform orientation: normalized 4D gaussian.
    std::normal_distribution<double> gauss(0.0, 1.0);
    Quat q{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
    q = q.normalized();
    const double scale = mean_fluence_scale * fluence.sample(rng);
    ds.orientations[d] = q;
    ds.fluences[d] = scale;
    ds.frames.frames[d] = simulate_frame(truth, det, q, scale, rng, d);
  });
  return ds;
}

double fluence_for_mean_photons(const GroundTruthIntensity& truth,
                                const DetectorModel& det, double mean_photons) {
  const double at_unit = mean_counts_per_frame(truth.intensity, det);
  if (at_unit <= 0.0) throw ConfigError("ground truth yields no photons on this detector");
  return mean_photons / at_unit;
}

void write_orientation_log(const SimulatedDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FormatError(path + ": cannot open for writing");
  f.precision(17);
  for (std::size_t d = 0; d < ds.orientations.size(); ++d) {
    const Quat& q = ds.orientations[d];
    f << ds.frames.frames[d].frame_id << ' ' << q.w << ' ' << q.x << ' ' << q.y
      << ' ' << q.z << ' ' << ds.fluences[d] << '\n';
  }
}

OrientationLog read_orientation_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError(path + ": cannot open");
  OrientationLog log;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::uint64_t id;
    Quat q;
    double flu;
    if (!(ss >> id >> q.w >> q.x >> q.y >> q.z >> flu))
      throw FormatError(path + ": malformed orientation line: " + line);
    log.frame_ids.push_back(id);
    log.orientations.push_back(q);
    log.fluences.push_back(flu);
  }
  return log;
}

} // namespace spi
