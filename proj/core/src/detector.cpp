#include "spi/detector.hpp"

#include <cmath>
#include <fstream>

namespace spi {

void ExperimentGeometry::validate() const {
  if (detector_distance_mm <= 0.0) throw ConfigError("detd must be positive");
  if (wavelength_angstrom <= 0.0) throw ConfigError("lambda must be positive");
  if (pixel_size_mm <= 0.0) throw ConfigError("pixsize must be positive");
  if (detector_shape[0] < 1 || detector_shape[1] < 1)
    throw ConfigError("detsize must be two positive integers");
  if (ewald_radius_voxels <= 0.0) throw ConfigError("ewald_rad must be positive");
  if (central_stop_radius_px < 0.0) throw ConfigError("stoprad must be nonnegative");
}

double DetectorModel::max_q() const {
  double m = 0.0;
  for (std::size_t i = 0; i < pixel_q.size(); ++i) {
    if (mask_class[i] == MaskClass::kIgnore) continue;
    m = std::max(m, pixel_q[i].norm());
  }
  return m;
}

int DetectorModel::suggested_grid_size() const {
  // Trilinear footprint needs one voxel of margin beyond ceil(max_q).
  const int half = static_cast<int>(std::ceil(max_q())) + 1;
  return 2 * half + 1;
}

DetectorModel build_detector(const ExperimentGeometry& geom,
                             const std::vector<MaskClass>& mask) {
  geom.validate();
  const std::size_t n = geom.num_pixels();
  if (mask.size() != n)
    throw ConfigError("mask size does not match detector shape");

  DetectorModel det;
  det.shape[0] = geom.detector_shape[0];
  det.shape[1] = geom.detector_shape[1];
  det.voxel_size = geom.voxel_size_inv_nm();
  det.pixel_q.resize(n);
  det.pixel_weight.resize(n);
  det.mask_class = mask;

  const double cx = 0.5 * (geom.detector_shape[0] - 1);
  const double cy = 0.5 * (geom.detector_shape[1] - 1);
  const double detd = geom.detector_distance_mm;

  std::size_t i = 0;
  for (int ix = 0; ix < geom.detector_shape[0]; ++ix) {
    for (int iy = 0; iy < geom.detector_shape[1]; ++iy, ++i) {
      const double px = (ix - cx) * geom.pixel_size_mm;
      const double py = (iy - cy) * geom.pixel_size_mm;
      const double norm = std::sqrt(px * px + py * py + detd * detd);
      // Ewald mapping: q = R_ewald * (unit vector to pixel - beam direction).
      det.pixel_q[i] = Vec3{px / norm, py / norm, detd / norm - 1.0} *
                       geom.ewald_radius_voxels;
      // Solid angle relative to the central pixel, times the horizontal
      // polarization factor 1 - (qx/|k|)^2.
      const double cos3 = (detd / norm) * (detd / norm) * (detd / norm);
      const double pol = 1.0 - (px / norm) * (px / norm);
      det.pixel_weight[i] = cos3 * pol;

      const double rpx = std::hypot(double(ix) - cx, double(iy) - cy);
      if (rpx < geom.central_stop_radius_px &&
          det.mask_class[i] == MaskClass::kUseAll)
        det.mask_class[i] = MaskClass::kMergeOnly;
    }
  }
  return det;
}

namespace {
constexpr std::uint32_t kDetMagic = 0x54454453; // "SDET"
constexpr std::uint32_t kDetVersion = 1;
} // namespace

void write_detector(const DetectorModel& det, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  const std::uint32_t hdr[4] = {kDetMagic, kDetVersion,
                                static_cast<std::uint32_t>(det.shape[0]),
                                static_cast<std::uint32_t>(det.shape[1])};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  f.write(reinterpret_cast<const char*>(&det.voxel_size), 8);
  for (std::size_t i = 0; i < det.num_pixels(); ++i) {
    const double rec[4] = {det.pixel_q[i].x, det.pixel_q[i].y, det.pixel_q[i].z,
                           det.pixel_weight[i]};
    f.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    const auto m = static_cast<std::uint8_t>(det.mask_class[i]);
    f.write(reinterpret_cast<const char*>(&m), 1);
  }
  if (!f) throw FormatError(path + ": write failed");
}

DetectorModel read_detector(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  std::uint32_t hdr[4];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!f || hdr[0] != kDetMagic) throw FormatError(path + ": not a detector file");
  if (hdr[1] != kDetVersion)
    throw FormatError(path + ": unsupported detector version");
  DetectorModel det;
  det.shape[0] = static_cast<int>(hdr[2]);
  det.shape[1] = static_cast<int>(hdr[3]);
  f.read(reinterpret_cast<char*>(&det.voxel_size), 8);
  const std::size_t n = static_cast<std::size_t>(det.shape[0]) * det.shape[1];
  det.pixel_q.resize(n);
  det.pixel_weight.resize(n);
  det.mask_class.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double rec[4];
    f.read(reinterpret_cast<char*>(rec), sizeof(rec));
    std::uint8_t m;
    f.read(reinterpret_cast<char*>(&m), 1);
    if (!f) throw FormatError(path + ": truncated detector file");
    if (m > 2) throw FormatError(path + ": invalid mask class");
    det.pixel_q[i] = {rec[0], rec[1], rec[2]};
    det.pixel_weight[i] = rec[3];
    det.mask_class[i] = static_cast<MaskClass>(m);
    if (det.pixel_weight[i] <= 0.0 && det.mask_class[i] != MaskClass::kIgnore)
      throw FormatError(path + ": nonpositive weight on active pixel");
  }
  return det;
}

std::vector<MaskClass> read_mask(const std::string& path, std::size_t num_pixels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  std::vector<std::uint8_t> raw(num_pixels);
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(num_pixels));
  if (!f) throw FormatError(path + ": mask file shorter than detector");
  char extra;
  if (f.read(&extra, 1)) throw FormatError(path + ": mask file longer than detector");
  std::vector<MaskClass> mask(num_pixels);
  for (std::size_t i = 0; i < num_pixels; ++i) {
    if (raw[i] > 2) throw FormatError(path + ": invalid mask value");
    mask[i] = static_cast<MaskClass>(raw[i]);
  }
  return mask;
}

void write_mask(const std::vector<MaskClass>& mask, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  for (MaskClass m : mask) {
    const auto b = static_cast<std::uint8_t>(m);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!f) throw FormatError(path + ": write failed");
}

} // namespace spi
