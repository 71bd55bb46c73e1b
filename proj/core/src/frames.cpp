#include "spi/frames.hpp"

#include <fstream>

namespace spi {

namespace {

constexpr std::uint32_t kPhotMagic = 0x54485053; // "SPHT" little-endian
constexpr std::uint32_t kPhotVersion = 1;

struct PhotHeader {
  std::uint32_t magic;
  std::uint32_t version;
  std::uint64_t num_frames;
  std::uint32_t num_pixels;
  std::uint32_t reserved;
  std::uint64_t stream_seed;
};
static_assert(sizeof(PhotHeader) == 32);

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw FormatError(path + ": truncated frame file");
  return v;
}

} // namespace

void validate_frame(const SparseFrame& f, std::uint32_t num_pixels) {
  std::uint32_t prev = 0;
  bool first = true;
  for (std::uint32_t p : f.one_photon_pixels) {
    if (!first && p <= prev)
      throw FormatError("frame " + std::to_string(f.frame_id) +
                        ": one-photon pixel indices not strictly increasing");
    if (p >= num_pixels)
      throw FormatError("frame " + std::to_string(f.frame_id) +
                        ": pixel index out of detector range");
    prev = p;
    first = false;
  }
  prev = 0;
  first = true;
  for (const auto& [p, c] : f.multi_photon_pixels) {
    if (!first && p <= prev)
      throw FormatError("frame " + std::to_string(f.frame_id) +
                        ": multi-photon pixel indices not strictly increasing");
    if (p >= num_pixels)
      throw FormatError("frame " + std::to_string(f.frame_id) +
                        ": pixel index out of detector range");
    if (c < 2)
      throw FormatError("frame " + std::to_string(f.frame_id) +
                        ": multi-photon count below 2");
    prev = p;
    first = false;
  }
  // No pixel may appear in both lists.
  auto it1 = f.one_photon_pixels.begin();
  auto it2 = f.multi_photon_pixels.begin();
  while (it1 != f.one_photon_pixels.end() && it2 != f.multi_photon_pixels.end()) {
    if (*it1 == it2->first)
      throw FormatError("frame " + std::to_string(f.frame_id) +
                        ": pixel present in both photon lists");
    if (*it1 < it2->first)
      ++it1;
    else
      ++it2;
  }
}

SparseFrame frame_from_counts(const std::vector<std::uint32_t>& counts,
                              std::uint64_t frame_id) {
  SparseFrame f;
  f.frame_id = frame_id;
  for (std::uint32_t p = 0; p < counts.size(); ++p) {
    if (counts[p] == 1)
      f.one_photon_pixels.push_back(p);
    else if (counts[p] >= 2)
      f.multi_photon_pixels.emplace_back(p, counts[p]);
  }
  return f;
}

void write_frames(const FrameSet& set, const std::string& path) {
  for (const auto& f : set.frames) validate_frame(f, set.num_pixels);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  PhotHeader h{kPhotMagic, kPhotVersion, set.frames.size(), set.num_pixels, 0,
               set.stream_seed};
  put(f, h);

  // Per-frame byte offsets from the start of the record section.
  std::vector<std::uint64_t> offsets;
  offsets.reserve(set.frames.size());
  std::uint64_t off = 0;
  for (const auto& fr : set.frames) {
    offsets.push_back(off);
    off += 8 + 4 + 4; // frame_id, n_one, n_multi
    off += 4 * fr.one_photon_pixels.size();
    off += 8 * fr.multi_photon_pixels.size();
  }
  f.write(reinterpret_cast<const char*>(offsets.data()),
          static_cast<std::streamsize>(offsets.size() * 8));

  for (const auto& fr : set.frames) {
    put(f, fr.frame_id);
    put(f, static_cast<std::uint32_t>(fr.one_photon_pixels.size()));
    put(f, static_cast<std::uint32_t>(fr.multi_photon_pixels.size()));
    f.write(reinterpret_cast<const char*>(fr.one_photon_pixels.data()),
            static_cast<std::streamsize>(fr.one_photon_pixels.size() * 4));
    for (const auto& [pix, cnt] : fr.multi_photon_pixels) {
      put(f, pix);
      put(f, cnt);
    }
  }
  if (!f) throw FormatError(path + ": write failed");
}

FrameSet read_frames(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  const auto h = get<PhotHeader>(f, path);
  if (h.magic != kPhotMagic) throw FormatError(path + ": not a .phot frame file");
  if (h.version != kPhotVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(h.version));

  FrameSet set;
  set.num_pixels = h.num_pixels;
  set.stream_seed = h.stream_seed;
  set.frames.resize(h.num_frames);

  std::vector<std::uint64_t> offsets(h.num_frames);
  f.read(reinterpret_cast<char*>(offsets.data()),
         static_cast<std::streamsize>(offsets.size() * 8));
  if (!f && h.num_frames > 0) throw FormatError(path + ": truncated offset table");

  for (std::uint64_t i = 0; i < h.num_frames; ++i) {
    auto& fr = set.frames[i];
    fr.frame_id = get<std::uint64_t>(f, path);
    const auto n_one = get<std::uint32_t>(f, path);
    const auto n_multi = get<std::uint32_t>(f, path);
    fr.one_photon_pixels.resize(n_one);
    f.read(reinterpret_cast<char*>(fr.one_photon_pixels.data()),
           static_cast<std::streamsize>(std::uint64_t(n_one) * 4));
    fr.multi_photon_pixels.resize(n_multi);
    for (auto& [pix, cnt] : fr.multi_photon_pixels) {
      pix = get<std::uint32_t>(f, path);
      cnt = get<std::uint32_t>(f, path);
    }
    if (!f) throw FormatError(path + ": truncated frame records");
    validate_frame(fr, set.num_pixels);
  }
  return set;
}

} // namespace spi
