#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spi/errors.hpp"

namespace spi {

// One diffraction snapshot in sparse form. Pixel indices are strictly
// increasing within each list and no pixel appears in both.
struct SparseFrame {
  std::uint64_t frame_id = 0;
  std::vector<std::uint32_t> one_photon_pixels;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> multi_photon_pixels; // (pixel, count>=2)

  std::uint64_t total_photons() const {
    std::uint64_t t = one_photon_pixels.size();
    for (const auto& [pix, cnt] : multi_photon_pixels) t += cnt;
    return t;
  }

  bool empty() const {
    return one_photon_pixels.empty() && multi_photon_pixels.empty();
  }
};

// A set of frames recorded on one detector. `stream_seed` records the random
// stream that produced the file (0 when not applicable) so reduction steps
// are reproducible from the file alone.
struct FrameSet {
  std::uint32_t num_pixels = 0;
  std::uint64_t stream_seed = 0;
  std::vector<SparseFrame> frames;

  std::size_t size() const { return frames.size(); }

  double mean_photons() const {
    if (frames.empty()) return 0.0;
    double t = 0.0;
    for (const auto& f : frames) t += static_cast<double>(f.total_photons());
    return t / static_cast<double>(frames.size());
  }
};

// Checks the sparse invariants of one frame against a pixel count.
// Throws FormatError on violation.
void validate_frame(const SparseFrame& f, std::uint32_t num_pixels);

// Sorted dense-to-sparse conversion helper: builds a frame from per-pixel
// counts laid out in pixel order.
SparseFrame frame_from_counts(const std::vector<std::uint32_t>& counts,
                              std::uint64_t frame_id);

// .phot container I/O; write_frames followed by read_frames is bit-exact.
void write_frames(const FrameSet& set, const std::string& path);
FrameSet read_frames(const std::string& path);

} // namespace spi
