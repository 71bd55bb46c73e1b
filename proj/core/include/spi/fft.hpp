#pragma once

#include <complex>
#include <vector>

#include "spi/volume.hpp"

namespace spi {

// 3D DFT on centered grids. Forward is the plain unnormalized DFT; inverse
// divides by M^3, so inverse(forward(x)) == x up to rounding. Input and
// output keep the central-voxel origin convention; the cyclic reindexing to
// FFT order happens internally.
//
// Plan creation is serialized internally (FFTW planner is not thread safe);
// each instance owns its buffers, so distinct instances may execute
// concurrently. Plans use FFTW_ESTIMATE to keep the algorithm choice, and
// therefore rounding, reproducible run to run.
class Fft3 {
public:
  explicit Fft3(int edge);
  ~Fft3();

  Fft3(const Fft3&) = delete;
  Fft3& operator=(const Fft3&) = delete;

  int edge() const { return edge_; }

  void forward(const CVolume& in, CVolume& out);
  void inverse(const CVolume& in, CVolume& out);

private:
  void run(const CVolume& in, CVolume& out, bool fwd);

  int edge_ = 0;
  std::size_t n_ = 0;
  std::vector<int> to_fft_;   // per-axis: centered index -> fft index
  std::vector<int> from_fft_; // inverse map
  void* plan_fwd_ = nullptr;
  void* plan_bwd_ = nullptr;
  std::complex<double>* buf_ = nullptr;
};

} // namespace spi
