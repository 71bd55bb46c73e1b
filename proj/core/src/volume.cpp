#include "spi/volume.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace spi {

namespace {

constexpr std::uint32_t kVolMagic = 0x4c4f5653; // "SVOL" little-endian
constexpr std::uint32_t kVolVersion = 1;

struct VolHeader {
  std::uint32_t magic;
  std::uint32_t version;
  std::uint32_t kind;
  std::uint32_t edge;
  double voxel_size;
};
static_assert(sizeof(VolHeader) == 24);

void write_header(std::ofstream& f, VolumeKind kind, int edge, double voxel_size) {
  VolHeader h{kVolMagic, kVolVersion, static_cast<std::uint32_t>(kind),
              static_cast<std::uint32_t>(edge), voxel_size};
  f.write(reinterpret_cast<const char*>(&h), sizeof(h));
}

VolHeader read_header(std::ifstream& f, const std::string& path) {
  VolHeader h{};
  f.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!f) throw FormatError(path + ": truncated volume header");
  if (h.magic != kVolMagic) throw FormatError(path + ": not a volume file");
  if (h.version != kVolVersion)
    throw FormatError(path + ": unsupported volume version " + std::to_string(h.version));
  if (h.edge < 1 || h.edge % 2 == 0)
    throw FormatError(path + ": invalid grid edge " + std::to_string(h.edge));
  return h;
}

void check_payload_size(std::ifstream& f, const std::string& path,
                        std::size_t expected_doubles) {
  const auto pos = f.tellg();
  f.seekg(0, std::ios::end);
  const auto end = f.tellg();
  f.seekg(pos);
  const std::size_t have = static_cast<std::size_t>(end - pos);
  if (have != expected_doubles * sizeof(double))
    throw FormatError(path + ": payload size mismatch (file does not match header grid size)");
}

} // namespace

RadialBins RadialBins::make(int edge) {
  RadialBins b;
  b.edge = edge;
  const int c = edge / 2;
  // Largest possible radius is the grid corner.
  const int max_shell = static_cast<int>(std::floor(std::sqrt(3.0) * c)) + 1;
  b.num_shells = max_shell + 1;
  b.shell_of.resize(static_cast<std::size_t>(edge) * edge * edge);
  b.counts.assign(b.num_shells, 0);
  std::size_t idx = 0;
  for (int ix = 0; ix < edge; ++ix)
    for (int iy = 0; iy < edge; ++iy)
      for (int iz = 0; iz < edge; ++iz, ++idx) {
        const double dx = ix - c, dy = iy - c, dz = iz - c;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        const int s = static_cast<int>(std::floor(r));
        b.shell_of[idx] = static_cast<std::uint16_t>(s);
        ++b.counts[s];
      }
  return b;
}

void write_volume(const Volume& v, const std::string& path, VolumeKind kind) {
  if (kind == VolumeKind::kComplex)
    throw ConfigError("real volume cannot be written with complex kind");
  if (kind == VolumeKind::kNonNegative) {
    for (double x : v.data())
      if (x < 0.0)
        throw ConfigError(path + ": negative value in volume declared nonnegative");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  write_header(f, kind, v.edge(), v.voxel_size());
  f.write(reinterpret_cast<const char*>(v.data().data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw FormatError(path + ": write failed");
}

void write_volume(const CVolume& v, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  write_header(f, VolumeKind::kComplex, v.edge(), v.voxel_size());
  f.write(reinterpret_cast<const char*>(v.data().data()),
          static_cast<std::streamsize>(v.size() * 2 * sizeof(double)));
  if (!f) throw FormatError(path + ": write failed");
}

Volume read_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  const VolHeader h = read_header(f, path);
  if (h.kind == static_cast<std::uint32_t>(VolumeKind::kComplex))
    throw FormatError(path + ": complex volume, use read_complex_volume");
  Volume v(static_cast<int>(h.edge), h.voxel_size);
  check_payload_size(f, path, v.size());
  f.read(reinterpret_cast<char*>(v.data().data()),
         static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw FormatError(path + ": truncated payload");
  for (double x : v.data())
    if (!std::isfinite(x)) throw FormatError(path + ": non-finite voxel value");
  if (h.kind == static_cast<std::uint32_t>(VolumeKind::kNonNegative)) {
    for (double x : v.data())
      if (x < 0.0) throw FormatError(path + ": negative value in nonnegative volume");
  }
  return v;
}

CVolume read_complex_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  const VolHeader h = read_header(f, path);
  if (h.kind != static_cast<std::uint32_t>(VolumeKind::kComplex))
    throw FormatError(path + ": not a complex volume");
  CVolume v(static_cast<int>(h.edge), h.voxel_size);
  check_payload_size(f, path, v.size() * 2);
  f.read(reinterpret_cast<char*>(v.data().data()),
         static_cast<std::streamsize>(v.size() * 2 * sizeof(double)));
  if (!f) throw FormatError(path + ": truncated payload");
  return v;
}

VolumeKind peek_volume_kind(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  const VolHeader h = read_header(f, path);
  return static_cast<VolumeKind>(h.kind);
}

} // namespace spi
