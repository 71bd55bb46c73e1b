#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "spi/errors.hpp"
#include "spi/vec3.hpp"

namespace spi {

// Cubic M^3 grid, M odd, with the origin at the central voxel. Linear index
// order is C order with z fastest: idx = (ix*M + iy)*M + iz.
template <typename T>
class Grid3 {
public:
  Grid3() = default;

  explicit Grid3(int edge, double voxel_size = 1.0)
      : edge_(edge), voxel_size_(voxel_size) {
    if (edge < 1 || edge % 2 == 0)
      throw ConfigError("grid edge must be a positive odd integer, got " +
                        std::to_string(edge));
    data_.assign(static_cast<std::size_t>(edge) * edge * edge, T{});
  }

  int edge() const { return edge_; }
  int center() const { return edge_ / 2; }
  double voxel_size() const { return voxel_size_; }
  void set_voxel_size(double s) { voxel_size_ = s; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int ix, int iy, int iz) {
    return data_[(static_cast<std::size_t>(ix) * edge_ + iy) * edge_ + iz];
  }
  const T& at(int ix, int iy, int iz) const {
    return data_[(static_cast<std::size_t>(ix) * edge_ + iy) * edge_ + iz];
  }

  std::size_t index_of(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * edge_ + iy) * edge_ + iz;
  }

  // Centered coordinates of a linear index.
  Vec3 coords_of(std::size_t idx) const {
    const int m = edge_;
    const int iz = static_cast<int>(idx % m);
    const int iy = static_cast<int>((idx / m) % m);
    const int ix = static_cast<int>(idx / (static_cast<std::size_t>(m) * m));
    const int c = center();
    return {double(ix - c), double(iy - c), double(iz - c)};
  }

  double radius_of(std::size_t idx) const { return coords_of(idx).norm(); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

private:
  int edge_ = 0;
  double voxel_size_ = 1.0;
  std::vector<T> data_;
};

using Volume = Grid3<double>;
using CVolume = Grid3<std::complex<double>>;

// Trilinear sample at a centered position (voxel units). Positions whose
// 8-voxel footprint leaves the grid contribute 0.
template <typename T>
T trilinear_sample(const Grid3<T>& g, const Vec3& pos) {
  const int m = g.edge();
  const double gx = pos.x + g.center();
  const double gy = pos.y + g.center();
  const double gz = pos.z + g.center();
  const int ix = static_cast<int>(std::floor(gx));
  const int iy = static_cast<int>(std::floor(gy));
  const int iz = static_cast<int>(std::floor(gz));
  if (ix < 0 || iy < 0 || iz < 0 || ix + 1 >= m || iy + 1 >= m || iz + 1 >= m)
    return T{};
  const double fx = gx - ix, fy = gy - iy, fz = gz - iz;
  const double cx[2] = {1.0 - fx, fx};
  const double cy[2] = {1.0 - fy, fy};
  const double cz[2] = {1.0 - fz, fz};
  T acc{};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        acc += g.at(ix + a, iy + b, iz + c) * (cx[a] * cy[b] * cz[c]);
  return acc;
}

// Trilinear scatter of `value` at a centered position, accumulating the same
// weights into `weight_grid` (the merge denominator).
inline void trilinear_scatter(Volume& value_grid, Volume& weight_grid,
                              const Vec3& pos, double value, double weight = 1.0) {
  const int m = value_grid.edge();
  const double gx = pos.x + value_grid.center();
  const double gy = pos.y + value_grid.center();
  const double gz = pos.z + value_grid.center();
  const int ix = static_cast<int>(std::floor(gx));
  const int iy = static_cast<int>(std::floor(gy));
  const int iz = static_cast<int>(std::floor(gz));
  if (ix < 0 || iy < 0 || iz < 0 || ix + 1 >= m || iy + 1 >= m || iz + 1 >= m)
    return;
  const double fx = gx - ix, fy = gy - iy, fz = gz - iz;
  const double cx[2] = {1.0 - fx, fx};
  const double cy[2] = {1.0 - fy, fy};
  const double cz[2] = {1.0 - fz, fz};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double w = weight * cx[a] * cy[b] * cz[c];
        value_grid.at(ix + a, iy + b, iz + c) += w * value;
        weight_grid.at(ix + a, iy + b, iz + c) += w;
      }
}

// Shell index per voxel: floor(|r| in voxels) from the central voxel.
struct RadialBins {
  int edge = 0;
  int num_shells = 0;
  std::vector<std::uint16_t> shell_of; // per linear voxel index
  std::vector<std::int64_t> counts;    // voxels per shell

  static RadialBins make(int edge);
};

// On-disk volume payload kinds.
enum class VolumeKind : std::uint32_t { kReal = 0, kComplex = 1, kNonNegative = 2 };

void write_volume(const Volume& v, const std::string& path,
                  VolumeKind kind = VolumeKind::kReal);
void write_volume(const CVolume& v, const std::string& path);
Volume read_volume(const std::string& path);
CVolume read_complex_volume(const std::string& path);
VolumeKind peek_volume_kind(const std::string& path);

} // namespace spi
