#pragma once

#include <string>
#include <vector>

#include "spi/detector.hpp"
#include "spi/frames.hpp"
#include "spi/volume.hpp"

namespace spi {

// Per-shell curve over unit-voxel-thick radial bins. q values are physical
// (voxel_size units) shell centers (s + 0.5) * voxel_size.
struct ShellCurve {
  std::vector<double> q;
  std::vector<double> value;
  std::vector<std::int64_t> count; // voxels (or contributing voxels) per shell
  double voxel_size = 1.0;

  std::size_t size() const { return q.size(); }
};

// Fourier shell correlation between two complex volumes:
// Re[ sum F1 F2* ] / sqrt(sum |F1|^2 sum |F2|^2), per shell, up to the grid
// sphere radius.
ShellCurve fsc(const CVolume& f1, const CVolume& f2);

// FSC of two real-space densities (transforms internally).
ShellCurve fsc_densities(const CVolume& rho1, const CVolume& rho2);

// Shell-wise Pearson correlation of two intensity volumes (mean subtracted
// within each shell).
ShellCurve cc_half(const Volume& i1, const Volume& i2);

// Phase retrieval transfer function over a stack of aligned solutions:
// per voxel |mean of unit phasors| (solutions with zero amplitude at that
// voxel are excluded from its mean), then averaged over each shell.
ShellCurve prtf_from_fourier(const std::vector<CVolume>& fouriers);
ShellCurve prtf(const std::vector<CVolume>& aligned_densities);

// Half-bit information threshold for a shell with n independent voxels.
double half_bit_threshold(double n_voxels);

struct Threshold {
  enum class Kind { kFixed, kHalfBit } kind = Kind::kFixed;
  double value = 0.5;

  static Threshold fixed(double v) { return {Kind::kFixed, v}; }
  static Threshold half_bit() { return {Kind::kHalfBit, 0.0}; }
};

struct CrossingResult {
  bool crossed = false;
  int first_shell = -1;     // first shell strictly below the threshold curve
  int last_shell = -1;      // first shell after which it never recovers
  double q_first = 0.0;     // physical q at the first crossing
  double q_last = 0.0;
  double resolution_first = 0.0; // full-period d = 1/q
  double resolution_last = 0.0;
};

// First q where the curve falls below the threshold curve; shell 0 is
// excluded (its q -> 0 makes 1/q meaningless). "beyond range" = not crossed.
CrossingResult threshold_crossing(const ShellCurve& curve, const Threshold& thr);

struct RotAlignResult {
  Quat rotation = Quat::identity();
  Volume aligned;      // moving volume resampled onto the reference frame
  double cc = 0.0;     // pooled Pearson over the radius range
  bool degenerate = false; // correlation flat in rotation (isotropic inputs)
};

// Coarse-to-fine search over rotations maximizing the pooled Pearson
// correlation between ref and rotated(moving) over voxels with
// rmin <= |q| <= rmax.
RotAlignResult align_rotation(const Volume& ref, const Volume& moving, double rmin,
                              double rmax, int workers = 0);

// Per-pixel photon totals across frames (virtual powder pattern).
std::vector<double> powder_sum(const FrameSet& frames);

struct Histogram {
  std::vector<double> edges;  // nbins + 1
  std::vector<std::int64_t> counts;
  double bimodality = 0.0; // (skewness^2 + 1) / kurtosis
};

// Histogram of |rho| over in-support voxels.
Histogram density_histogram(const CVolume& rho, const std::vector<std::uint8_t>& support,
                            int nbins);

// Two-column text table (q value), plus optional per-shell counts.
void write_curve(const ShellCurve& curve, const std::string& path,
                 const std::string& header = "");

} // namespace spi
