#include "spi/fft.hpp"

#include <fftw3.h>

#include <mutex>

namespace spi {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
} // namespace

Fft3::Fft3(int edge) : edge_(edge) {
  n_ = static_cast<std::size_t>(edge) * edge * edge;
  to_fft_.resize(edge);
  from_fft_.resize(edge);
  const int half = (edge + 1) / 2; // M odd: centered index c=(M-1)/2 maps to 0
  for (int i = 0; i < edge; ++i) {
    to_fft_[i] = (i + half) % edge;
    from_fft_[to_fft_[i]] = i;
  }
  std::lock_guard<std::mutex> lock(planner_mutex());
  buf_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(n_));
  auto* b = reinterpret_cast<fftw_complex*>(buf_);
  plan_fwd_ = fftw_plan_dft_3d(edge, edge, edge, b, b, FFTW_FORWARD, FFTW_ESTIMATE);
  plan_bwd_ = fftw_plan_dft_3d(edge, edge, edge, b, b, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft3::~Fft3() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  if (plan_bwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
  if (buf_) fftw_free(buf_);
}

void Fft3::run(const CVolume& in, CVolume& out, bool fwd) {
  const int m = edge_;
  if (in.edge() != m) throw ConfigError("Fft3: grid edge mismatch");
  if (out.edge() != m) out = CVolume(m, in.voxel_size());
  out.set_voxel_size(in.voxel_size());

  // centered -> fft order
  for (int ix = 0; ix < m; ++ix) {
    const int jx = to_fft_[ix];
    for (int iy = 0; iy < m; ++iy) {
      const int jy = to_fft_[iy];
      const std::size_t src = (static_cast<std::size_t>(ix) * m + iy) * m;
      const std::size_t dst = (static_cast<std::size_t>(jx) * m + jy) * m;
      for (int iz = 0; iz < m; ++iz) buf_[dst + to_fft_[iz]] = in[src + iz];
    }
  }

  fftw_execute(static_cast<fftw_plan>(fwd ? plan_fwd_ : plan_bwd_));

  const double scale = fwd ? 1.0 : 1.0 / static_cast<double>(n_);
  // fft order -> centered
  for (int jx = 0; jx < m; ++jx) {
    const int ix = from_fft_[jx];
    for (int jy = 0; jy < m; ++jy) {
      const int iy = from_fft_[jy];
      const std::size_t src = (static_cast<std::size_t>(jx) * m + jy) * m;
      const std::size_t dst = (static_cast<std::size_t>(ix) * m + iy) * m;
      for (int jz = 0; jz < m; ++jz) out[dst + from_fft_[jz]] = buf_[src + jz] * scale;
    }
  }
}

void Fft3::forward(const CVolume& in, CVolume& out) { run(in, out, true); }
void Fft3::inverse(const CVolume& in, CVolume& out) { run(in, out, false); }

} // namespace spi
