#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spi/config.hpp"
#include "spi/detector.hpp"
#include "spi/frames.hpp"
#include "spi/rotations.hpp"
#include "spi/volume.hpp"

namespace spi {

// Sparse probability distribution over orientation indices for one frame.
// Entries sum to 1; entries below 1e-10 of the maximum are pruned.
struct Pdo {
  std::vector<std::uint32_t> index;
  std::vector<double> prob;

  double sum() const {
    double s = 0.0;
    for (double p : prob) s += p;
    return s;
  }
  std::uint32_t argmax() const;
};

enum class Interp { kTrilinear, kNearest };

// Predicted detector intensities for one orientation:
// W(pixel) = pixel_weight * sample(model, R q_pixel); IGNORE pixels get 0.
std::vector<double> expand(const Volume& model, const DetectorModel& det,
                           const Quat& rotation, Interp interp = Interp::kTrilinear);

// Poisson log likelihood over USE_ALL pixels, constant terms in K dropped:
// sum_p [K_p log(scale W_p) - scale W_p].
double frame_log_likelihood(const SparseFrame& frame, const std::vector<double>& w,
                            const DetectorModel& det, double scale);

// One E-step: Pdo_d(r) proportional to weight_r * exp(beta (ll_dr - max_r ll_dr)).
std::vector<Pdo> e_step(const FrameSet& frames, const Volume& model,
                        const DetectorModel& det, const RotationSet& rotations,
                        const std::vector<double>& scales, double beta,
                        int workers = 0);

// Poisson maximum-likelihood scales given the PDOs:
// scale_d = K_d / sum_r Pdo_d(r) sum_use W_r. Frames with no USE_ALL photons
// get scale 0 (callers exclude them).
std::vector<double> update_scales(const FrameSet& frames, const std::vector<Pdo>& pdos,
                                  const Volume& model, const DetectorModel& det,
                                  const RotationSet& rotations, int workers = 0);

// M-step merge. Tomograms T_r = sum_d P K_d / sum_d P scale_d are divided by
// the pixel weight and scattered into the grid; USE_ALL and MERGE_ONLY pixels
// participate. Voxels with zero accumulated weight are zero; their count is
// reported through *zero_weight_voxels. The output satisfies I(q) = I(-q).
Volume compress(const FrameSet& frames, const std::vector<Pdo>& pdos,
                const std::vector<double>& scales, const DetectorModel& det,
                const RotationSet& rotations, int grid_size,
                std::size_t* zero_weight_voxels = nullptr,
                Interp interp = Interp::kTrilinear, int workers = 0);

struct EmcIterationStats {
  int iteration = 0;
  double beta = 0.0;
  double rms_change = 0.0;
  double mean_log_likelihood = 0.0; // observed-data, beta = 1
  double argmax_entropy = 0.0;
  double top_orientation_fraction = 0.0; // frames covered by the top 1% rotations
  bool collapse = false;
  std::size_t zero_weight_voxels = 0;
};

struct EmcResult {
  Volume intensity;
  std::vector<double> scales;             // per kept frame
  std::vector<std::size_t> kept_frames;   // indices into the input set
  std::vector<std::size_t> skipped_frames; // frames with no USE_ALL photons
  std::vector<EmcIterationStats> trace;
  bool collapse_flagged = false;

  double final_log_likelihood() const {
    return trace.empty() ? 0.0 : trace.back().mean_log_likelihood;
  }
};

// Annealing exponent for a 1-based iteration index.
double beta_at(const EmcConfig& cfg, int iteration);

// Full reconstruction loop: e_step -> update_scales -> compress per
// iteration, annealed beta, per-iteration diagnostics appended to
// cfg.log_file (empty = no log). Deterministic for a fixed seed regardless
// of the worker count.
EmcResult run_emc(const FrameSet& frames, const DetectorModel& det,
                  const RotationSet& rotations, const EmcConfig& cfg,
                  int workers = 0);

} // namespace spi
