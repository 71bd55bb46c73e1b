#pragma once

#include <cstdint>
#include <utility>

#include "spi/frames.hpp"

namespace spi {

// Bernoulli thinning: every photon is kept independently with probability p.
// Implemented as one Binomial(count, p) draw per occupied pixel, which is
// distributionally identical to the per-photon loop. Deterministic per seed
// through per-frame derived streams.
FrameSet thin_photons(const FrameSet& in, double p, std::uint64_t seed);

// Interleaved split: frames 1st, 3rd, 5th... and 2nd, 4th, 6th... by position.
// Requires at least two frames.
std::pair<FrameSet, FrameSet> split_odd_even(const FrameSet& in);

// Uniform subset of n frames without replacement, original order preserved.
FrameSet random_subset(const FrameSet& in, std::size_t n, std::uint64_t seed);

} // namespace spi
