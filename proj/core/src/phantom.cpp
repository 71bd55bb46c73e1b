#include "spi/phantom.hpp"

#include <array>
#include <cmath>

#include "spi/errors.hpp"

namespace spi {

namespace {

const std::array<Vec3, 20>& face_normals() {
  // Unit vectors toward the 20 face centers (dodecahedron vertices).
  static const std::array<Vec3, 20> normals = [] {
    std::array<Vec3, 20> n;
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    int i = 0;
    for (int a = -1; a <= 1; a += 2)
      for (int b = -1; b <= 1; b += 2)
        for (int c = -1; c <= 1; c += 2)
          n[i++] = Vec3{double(a), double(b), double(c)}.normalized();
    for (int a = -1; a <= 1; a += 2)
      for (int b = -1; b <= 1; b += 2) {
        n[i++] = Vec3{0.0, a / phi, b * phi}.normalized();
        n[i++] = Vec3{a / phi, b * phi, 0.0}.normalized();
        n[i++] = Vec3{a * phi, 0.0, b / phi}.normalized();
      }
    return n;
  }();
  return normals;
}

// inradius / circumradius of a regular icosahedron
constexpr double kInradiusOverCircum = 0.7946544722917661;

} // namespace

double icosahedral_radius(const Vec3& p) {
  double m = 0.0;
  for (const auto& n : face_normals()) m = std::max(m, p.dot(n));
  return m / kInradiusOverCircum;
}

double icosahedron_volume(double circumradius) {
  const double sqrt5 = std::sqrt(5.0);
  // edge from circumradius, then V = 5(3+sqrt5)/12 a^3
  const double a = 4.0 * circumradius / std::sqrt(10.0 + 2.0 * sqrt5);
  return 5.0 * (3.0 + sqrt5) / 12.0 * a * a * a;
}

Phantom make_phantom(int grid_edge, const PhantomParams& params) {
  if (params.outer_radius <= 0.0) throw ConfigError("phantom outer_radius must be positive");
  if (params.shell_thickness < 0.0 || params.gap_thickness < 0.0)
    throw ConfigError("phantom thicknesses must be nonnegative");
  if (params.shell_thickness + params.gap_thickness > params.outer_radius)
    throw ConfigError("phantom shells thicker than outer radius");
  if (params.core_density < 0.0 || params.shell_density < 0.0 || params.gap_density < 0.0)
    throw ConfigError("phantom densities must be nonnegative");
  if (params.outer_radius > grid_edge / 2 - 2)
    throw ConfigError("phantom does not fit in the grid with a margin");

  Phantom ph;
  ph.params = params;
  ph.density = Volume(grid_edge);

  const int ss = std::max(1, params.supersample);
  const double inv_ss3 = 1.0 / double(ss * ss * ss);
  const double r_shell_in = params.outer_radius - params.shell_thickness;
  const double r_gap_in = r_shell_in - params.gap_thickness;
  const int c = ph.density.center();
  // Only voxels within the bounding sphere can be occupied.
  const int reach = static_cast<int>(std::ceil(params.outer_radius)) + 1;

  for (int ix = -reach; ix <= reach; ++ix)
    for (int iy = -reach; iy <= reach; ++iy)
      for (int iz = -reach; iz <= reach; ++iz) {
        double acc = 0.0;
        for (int sx = 0; sx < ss; ++sx)
          for (int sy = 0; sy < ss; ++sy)
            for (int sz = 0; sz < ss; ++sz) {
              const Vec3 p{ix + (sx + 0.5) / ss - 0.5, iy + (sy + 0.5) / ss - 0.5,
                           iz + (sz + 0.5) / ss - 0.5};
              const double r = icosahedral_radius(p);
              if (r > params.outer_radius) continue;
              if (r > r_shell_in)
                acc += params.shell_density;
              else if (r > r_gap_in)
                acc += params.gap_density;
              else
                acc += params.core_density;
            }
        ph.density.at(c + ix, c + iy, c + iz) = acc * inv_ss3;
      }
  return ph;
}

} // namespace spi
