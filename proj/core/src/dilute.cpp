#include "spi/dilute.hpp"

#include <random>

#include "spi/errors.hpp"
#include "spi/rng.hpp"

namespace spi {

FrameSet thin_photons(const FrameSet& in, double p, std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw ConfigError("thinning probability must be in [0,1]");
  if (p == 1.0) return in;

  FrameSet out;
  out.num_pixels = in.num_pixels;
  out.stream_seed = seed;
  out.frames.resize(in.frames.size());

  for (std::size_t d = 0; d < in.frames.size(); ++d) {
    const SparseFrame& src = in.frames[d];
    SparseFrame& dst = out.frames[d];
    dst.frame_id = src.frame_id;
    if (p == 0.0) continue;

    auto rng = make_engine(derive_seed(seed, Stage::kDilute, d, src.frame_id));
    auto keep = [&](std::uint32_t count) -> std::uint32_t {
      std::binomial_distribution<std::uint32_t> bin(count, p);
      return bin(rng);
    };
    // Merge the two lists in pixel order so the per-pixel draw order is a
    // fixed function of the frame content.
    auto it1 = src.one_photon_pixels.begin();
    auto it2 = src.multi_photon_pixels.begin();
    auto emit = [&](std::uint32_t pix, std::uint32_t kept) {
      if (kept == 1)
        dst.one_photon_pixels.push_back(pix);
      else if (kept >= 2)
        dst.multi_photon_pixels.emplace_back(pix, kept);
    };
    while (it1 != src.one_photon_pixels.end() ||
           it2 != src.multi_photon_pixels.end()) {
      const bool take1 = it2 == src.multi_photon_pixels.end() ||
                         (it1 != src.one_photon_pixels.end() && *it1 < it2->first);
      if (take1) {
        emit(*it1, keep(1));
        ++it1;
      } else {
        emit(it2->first, keep(it2->second));
        ++it2;
      }
    }
  }
  return out;
}

std::pair<FrameSet, FrameSet> split_odd_even(const FrameSet& in) {
  if (in.frames.size() < 2)
    throw ConfigError("odd/even split needs at least two frames");
  FrameSet odd, even;
  odd.num_pixels = even.num_pixels = in.num_pixels;
  odd.stream_seed = even.stream_seed = in.stream_seed;
  for (std::size_t i = 0; i < in.frames.size(); ++i) {
    if (i % 2 == 0)
      odd.frames.push_back(in.frames[i]); // 1st, 3rd, ...
    else
      even.frames.push_back(in.frames[i]); // 2nd, 4th, ...
  }
  return {std::move(odd), std::move(even)};
}

FrameSet random_subset(const FrameSet& in, std::size_t n, std::uint64_t seed) {
  if (n > in.frames.size())
    throw ConfigError("subset size exceeds number of frames");
  auto rng = make_engine(derive_seed(seed, Stage::kSubset, n));

  // Partial Fisher-Yates over indices, then restore original order.
  std::vector<std::size_t> idx(in.frames.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  FrameSet out;
  out.num_pixels = in.num_pixels;
  out.stream_seed = seed;
  out.frames.reserve(n);
  for (std::size_t i : idx) out.frames.push_back(in.frames[i]);
  return out;
}

} // namespace spi
