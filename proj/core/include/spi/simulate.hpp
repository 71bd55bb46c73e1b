#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spi/detector.hpp"
#include "spi/frames.hpp"
#include "spi/phantom.hpp"
#include "spi/volume.hpp"

namespace spi {

// Isotropic instrument-background model: b(q)^2 = amplitude * exp(-q^2 / 2 sigma^2),
// q in voxel units.
struct RadialBackground {
  double amplitude = 0.0; // intensity units
  double sigma = 1.0;     // voxels

  double intensity(double q) const {
    return amplitude <= 0.0 ? 0.0 : amplitude * std::exp(-0.5 * q * q / (sigma * sigma));
  }
};

// Oriented-particle intensity plus isotropic background on the merge grid.
// intensity = |DFT(density)|^2 + b(|q|)^2 at every voxel by construction.
struct GroundTruthIntensity {
  Volume intensity;
  RadialBackground background;
};

GroundTruthIntensity make_ground_truth(const Volume& density,
                                       const RadialBackground& bg = {});

// Background amplitude that makes the isotropic term contribute `fraction`
// of the expected photons on the non-ignored pixels of `det`.
double background_amplitude_for_fraction(const Volume& particle_intensity,
                                         const DetectorModel& det, double fraction,
                                         double sigma);

// Expected photon count at one pixel for a given orientation and fluence.
double expected_pixel_counts(const GroundTruthIntensity& truth,
                             const DetectorModel& det, std::size_t pixel,
                             const Quat& rotation, double fluence_scale);

// Poisson draw of one frame. IGNORE pixels record nothing. Negative
// interpolated intensities are clamped to zero and counted in *clamped.
SparseFrame simulate_frame(const GroundTruthIntensity& truth, const DetectorModel& det,
                           const Quat& rotation, double fluence_scale,
                           std::mt19937_64& rng, std::uint64_t frame_id = 0,
                           std::size_t* clamped = nullptr);

// Per-frame relative fluence factors. Lognormal with unit mean; spread is the
// standard deviation of the underlying normal (0.3 = roughly +-30%).
struct FluenceDistribution {
  double spread = 0.3;
  double sample(std::mt19937_64& rng) const {
    if (spread <= 0.0) return 1.0;
    std::normal_distribution<double> n(0.0, spread);
    const double g = n(rng);
    return std::exp(g - 0.5 * spread * spread); // unit mean
  }
};

struct SimulatedDataset {
  FrameSet frames;
  std::vector<Quat> orientations; // hidden truth, continuous (not grid) draws
  std::vector<double> fluences;   // hidden truth, absolute scale per frame
};

// Frames drawn in parallel with per-frame derived streams; output is
// identical for a fixed seed regardless of the worker count.
SimulatedDataset simulate_dataset(const GroundTruthIntensity& truth,
                                  const DetectorModel& det, int n_frames,
                                  double mean_fluence_scale,
                                  const FluenceDistribution& fluence,
                                  std::uint64_t seed, int workers = 0);

// Fluence scale that yields the target mean photons per frame over
// orientations (uses the rotation-averaged intensity; exact for the
// isotropic part, Monte-Carlo-free).
double fluence_for_mean_photons(const GroundTruthIntensity& truth,
                                const DetectorModel& det, double mean_photons);

// Hidden orientation log (.quat): text, one "frame_id w x y z fluence" line
// per frame. Kept separate from the data files; evaluation only.
void write_orientation_log(const SimulatedDataset& ds, const std::string& path);
struct OrientationLog {
  std::vector<std::uint64_t> frame_ids;
  std::vector<Quat> orientations;
  std::vector<double> fluences;
};
OrientationLog read_orientation_log(const std::string& path);

} // namespace spi
