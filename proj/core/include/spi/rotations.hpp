#pragma once

#include <string>
#include <vector>

#include "spi/vec3.hpp"

namespace spi {

// Quasi-uniform covering of rotation space with quadrature weights.
// Antipodal quaternion pairs are collapsed to one representative.
struct RotationSet {
  std::vector<Quat> quaternions;
  std::vector<double> weights; // > 0, sum to 1
  int num_div = 0;

  std::size_t size() const { return quaternions.size(); }

  // Index of the sample closest in rotation angle (brute force).
  std::size_t nearest(const Quat& q) const;
};

// Deterministic refinement of the 600-cell: each tetrahedral cell is
// subdivided barycentrically num_div times, samples are projected to the
// unit sphere, and each sample is weighted by the volume of its share of
// the surrounding sub-cells. Sample count is 10*num_div*(5*num_div^2 + 1).
RotationSet sample_rotations(int num_div);

// Escape hatch for tests and externally sampled grids: text file with one
// "w x y z [weight]" line per rotation. Missing weights become uniform.
RotationSet read_rotations(const std::string& path);
void write_rotations(const RotationSet& set, const std::string& path);

} // namespace spi
