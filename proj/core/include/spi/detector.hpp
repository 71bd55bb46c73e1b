#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spi/errors.hpp"
#include "spi/vec3.hpp"

namespace spi {

// Three-class pixel mask. USE_ALL pixels enter orientation likelihoods and
// the 3D merge; MERGE_ONLY pixels enter the merge but not the likelihoods;
// IGNORE pixels are skipped everywhere.
enum class MaskClass : std::uint8_t { kUseAll = 0, kMergeOnly = 1, kIgnore = 2 };

struct ExperimentGeometry {
  double detector_distance_mm = 0.0;
  double wavelength_angstrom = 0.0;
  double pixel_size_mm = 0.0;
  int detector_shape[2] = {0, 0}; // (nx, ny)
  double ewald_radius_voxels = 0.0;
  double central_stop_radius_px = 0.0;

  void validate() const;

  std::size_t num_pixels() const {
    return static_cast<std::size_t>(detector_shape[0]) * detector_shape[1];
  }

  // Reciprocal-space size of one voxel, 1/(lambda * ewald_rad), in 1/nm.
  double voxel_size_inv_nm() const {
    return 10.0 / (wavelength_angstrom * ewald_radius_voxels);
  }
};

// Per-pixel reciprocal-space samples (voxel units, Ewald-curved), relative
// sensitivities (solid angle x polarization, 1 at the beam center), and mask.
struct DetectorModel {
  int shape[2] = {0, 0};
  double voxel_size = 1.0; // 1/nm
  std::vector<Vec3> pixel_q;
  std::vector<double> pixel_weight;
  std::vector<MaskClass> mask_class;

  std::size_t num_pixels() const { return pixel_q.size(); }

  // Largest |q| over non-ignored pixels.
  double max_q() const;

  // Smallest odd grid edge that holds every non-ignored pixel with a full
  // trilinear footprint.
  int suggested_grid_size() const;
};

// Maps every pixel onto the Ewald sphere. `mask` must have one entry per
// pixel in row-major (x, y) order; pixels closer to the beam axis than the
// central stop are demoted from USE_ALL to MERGE_ONLY.
DetectorModel build_detector(const ExperimentGeometry& geom,
                             const std::vector<MaskClass>& mask);

// Detector file: see docs/formats.md for the byte layout.
void write_detector(const DetectorModel& det, const std::string& path);
DetectorModel read_detector(const std::string& path);

// Mask file: one byte per pixel, row-major, values {0, 1, 2}.
std::vector<MaskClass> read_mask(const std::string& path, std::size_t num_pixels);
void write_mask(const std::vector<MaskClass>& mask, const std::string& path);

} // namespace spi
