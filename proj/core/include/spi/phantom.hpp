#pragma once

#include "spi/volume.hpp"

namespace spi {

// Icosahedral double-shell test particle: a dense outer capsid wall, a
// reduced-density gap just inside it, and a filled core. Lengths are in
// voxels; radii are circumradii of the icosahedral surfaces.
struct PhantomParams {
  double outer_radius = 14.0;
  double shell_thickness = 2.0; // outer wall, radial
  double gap_thickness = 2.0;   // low-density region under the wall
  double core_density = 1.0;
  double shell_density = 1.6;
  double gap_density = 0.4;
  int supersample = 2; // per-axis subsamples when voxelizing
};

struct Phantom {
  Volume density;
  PhantomParams params;
};

// Deterministic voxelization on an edge^3 grid. Throws if the particle does
// not fit inside half the grid with a one-voxel margin.
Phantom make_phantom(int grid_edge, const PhantomParams& params);

// Analytic volume of a regular icosahedron with the given circumradius.
double icosahedron_volume(double circumradius);

// Signed icosahedral radial coordinate: max over face planes of the distance
// along the face normal, scaled so the surface of a circumradius-R solid is
// at value R. Inside iff value <= R.
double icosahedral_radius(const Vec3& p);

} // namespace spi
