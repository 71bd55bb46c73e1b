#pragma once

#include <cstdint>
#include <vector>

#include "spi/config.hpp"
#include "spi/fft.hpp"
#include "spi/volume.hpp"

namespace spi {

// Phase-retrieval iterate: complex real-space density plus the reciprocal
// space background magnitude (square root of the isotropic background
// intensity). Both grids share one edge length.
struct PhaseIterate {
  CVolume rho;
  Volume bg;
};

// Measured-intensity constraint. FREE voxels (central ball of radius
// inner_radius, everything beyond outer_radius) are never rescaled.
struct IntensityConstraint {
  Volume i_meas;
  std::vector<std::uint8_t> constrained; // 1 = rescaled by the modulus projection
  RadialBins bins;
  double inner_radius = 6.0;
  double outer_radius = 0.0;

  // outer_radius <= 0 selects the default: grid sphere radius minus 7 (a
  // truncated half-speckle at the sphere edge causes ringing otherwise).
  static IntensityConstraint make(const Volume& i_meas, double inner_radius = 6.0,
                                  double outer_radius = 0.0);
};

// I_calc = |DFT(rho)|^2 + B^2, voxel-wise.
Volume calc_intensity(const PhaseIterate& psi, Fft3& fft);

// Modulus projection: on constrained voxels both the Fourier density and the
// background are rescaled by sqrt(I_meas / I_calc). When I_calc is zero with
// nonzero I_meas the measured magnitude goes to the background (it has no
// phase to invent); with the background disabled it goes to the density at
// zero phase.
PhaseIterate project_modulus(const PhaseIterate& psi, const IntensityConstraint& c,
                             Fft3& fft, bool background_enabled = true);

// Support projection: keep the voxel_number largest |rho|^2 voxels (ties at
// the boundary broken by lowest linear index), zero the rest; replace B by
// its radial shell average.
PhaseIterate project_support(const PhaseIterate& psi, long voxel_number,
                             const RadialBins& bins);

// Distance between iterates in the constraint metric:
// sqrt( M^3 sum|drho|^2 + sum dB^2 )  (Fourier-side L2 via Parseval).
double iterate_distance(const PhaseIterate& a, const PhaseIterate& b);

// One error-reduction step P_M(P_S(x)). If err is non-null it receives
// ||P_M(x') - P_S(x')|| / ||sqrt(I_meas)||, the relative distance between
// the two constraint projections at the new iterate.
PhaseIterate er_iteration(const PhaseIterate& psi, const IntensityConstraint& c,
                          long voxel_number, Fft3& fft, bool background_enabled = true,
                          double* err = nullptr);

// One difference-map step with relaxation parameter beta:
//   f_M(x) = (1 - 1/beta) P_M(x) + (1/beta) x
//   f_S(x) = (1 + 1/beta) P_S(x) - (1/beta) x
//   x' = x + beta [ P_M(f_S(x)) - P_S(f_M(x)) ]
// If err is non-null it receives the relative difference-map residual
// ||P_M(f_S(x)) - P_S(f_M(x))|| / ||sqrt(I_meas)||.
PhaseIterate dm_iteration(const PhaseIterate& psi, const IntensityConstraint& c,
                          long voxel_number, Fft3& fft, double beta = 0.7,
                          bool background_enabled = true, double* err = nullptr);

// Deterministic initial iterate for a repeat: rho real uniform(0, max), B
// uniform(0, mean sqrt(I_meas)) (zero when the background is disabled).
PhaseIterate initial_iterate(const IntensityConstraint& c, const PhasingConfig& cfg,
                             int repeat);

struct PhasingResult {
  std::vector<PhaseIterate> solutions;          // final iterate per repeat
  std::vector<std::vector<double>> error_trace; // per repeat, per iteration
  IntensityConstraint constraint;
};

// Multi-start phasing: every repeat runs the parsed iteration plan from its
// own random start. Repeats execute in parallel; results are identical for a
// fixed seed regardless of the worker count.
PhasingResult run_phasing(const Volume& i_meas, const PhasingConfig& cfg,
                          int workers = 0);

struct AlignmentInfo {
  Vec3 integer_shift;
  Vec3 subvoxel_shift;
  double phase_removed = 0.0;
  bool inverted = false;
};

// Aligns solutions in place: (1) cyclic translation moving the |rho|-weighted
// centroid to the origin voxel (integer roll plus a Fourier phase ramp for
// the subvoxel residual), (2) global phase removal, (3) central-inversion
// disambiguation against the first solution.
std::vector<AlignmentInfo> align_solutions(std::vector<PhaseIterate>& solutions);

struct AveragedSolution {
  CVolume rho; // voxel-wise complex mean
  Volume bg;   // mean background magnitude
};

AveragedSolution average_solutions(const std::vector<PhaseIterate>& aligned);

} // namespace spi
