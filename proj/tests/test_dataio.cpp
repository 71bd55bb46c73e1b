#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "spi/config.hpp"
#include "spi/frames.hpp"
#include "spi/rng.hpp"
#include "spi/volume.hpp"

using namespace spi;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

FrameSet random_frames(int n, std::uint32_t num_pixels, std::uint64_t seed) {
  FrameSet set;
  set.num_pixels = num_pixels;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> nph(0, 40);
  std::uniform_int_distribution<std::uint32_t> pix(0, num_pixels - 1);
  std::uniform_int_distribution<std::uint32_t> cnt(2, 9);
  for (int i = 0; i < n; ++i) {
    std::vector<std::uint32_t> counts(num_pixels, 0);
    const int k = nph(rng);
    for (int j = 0; j < k; ++j) counts[pix(rng)] += (j % 3 == 0) ? cnt(rng) : 1;
    set.frames.push_back(frame_from_counts(counts, i));
  }
  return set;
}

} // namespace

TEST_CASE("empty frame: zero photons, round-trips") {
  FrameSet set;
  set.num_pixels = 64;
  set.frames.push_back(SparseFrame{});
  CHECK(set.frames[0].total_photons() == 0);

  const std::string path = "t_empty.phot";
  write_frames(set, path);
  const FrameSet back = read_frames(path);
  REQUIRE(back.frames.size() == 1);
  CHECK(back.frames[0].empty());
  CHECK(back.num_pixels == 64);
  std::remove(path.c_str());
}

TEST_CASE("photon bookkeeping: pixel 5 count 1 + pixel 9 count 3 = 4 photons") {
  SparseFrame f;
  f.one_photon_pixels = {5};
  f.multi_photon_pixels = {{9, 3}};
  CHECK(f.total_photons() == 4);
}

TEST_CASE("1000 random frames are byte-identical after write/read/write") {
  const FrameSet set = random_frames(1000, 512, 0xABCDE);
  const std::string p1 = "t_rt1.phot", p2 = "t_rt2.phot";
  write_frames(set, p1);
  const FrameSet back = read_frames(p1);
  write_frames(back, p2);
  CHECK(slurp(p1) == slurp(p2));
  REQUIRE(back.frames.size() == set.frames.size());
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    CHECK(back.frames[i].one_photon_pixels == set.frames[i].one_photon_pixels);
    CHECK(back.frames[i].multi_photon_pixels == set.frames[i].multi_photon_pixels);
  }
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("frame validation rejects malformed inputs") {
  SparseFrame f;
  f.one_photon_pixels = {5, 5}; // not strictly increasing
  CHECK_THROWS_AS(validate_frame(f, 64), FormatError);

  f.one_photon_pixels = {100}; // out of range
  CHECK_THROWS_AS(validate_frame(f, 64), FormatError);

  f.one_photon_pixels = {5};
  f.multi_photon_pixels = {{5, 3}}; // pixel in both lists
  CHECK_THROWS_AS(validate_frame(f, 64), FormatError);

  f.one_photon_pixels = {};
  f.multi_photon_pixels = {{4, 1}}; // count below 2
  CHECK_THROWS_AS(validate_frame(f, 64), FormatError);
}

TEST_CASE("reader rejects a truncated or foreign file") {
  {
    std::ofstream f("t_bad.phot", std::ios::binary);
    f << "not a frame file at all";
  }
  CHECK_THROWS_AS(read_frames("t_bad.phot"), FormatError);
  std::remove("t_bad.phot");
}

TEST_CASE("iteration string: published plan parses in order") {
  const auto plan = parse_iteration_string("100ERA 200DM 200ERA");
  REQUIRE(plan.size() == 3);
  CHECK(plan[0] == std::make_pair(PhaseAlgo::kErrorReduction, 100));
  CHECK(plan[1] == std::make_pair(PhaseAlgo::kDifferenceMap, 200));
  CHECK(plan[2] == std::make_pair(PhaseAlgo::kErrorReduction, 200));

  const auto one = parse_iteration_string("1DM");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == std::make_pair(PhaseAlgo::kDifferenceMap, 1));

  // the ER/DM/ER variant with the shorter tail is equally valid input
  const auto alt = parse_iteration_string("100ERA 200DM 100ERA");
  REQUIRE(alt.size() == 3);
  CHECK(alt[2].second == 100);

  int total = 0;
  for (const auto& [algo, count] : plan) total += count;
  CHECK(total == 500);
}

TEST_CASE("iteration string: unknown algorithm and malformed tokens throw") {
  CHECK_THROWS_AS(parse_iteration_string("100HIO"), ConfigError);
  CHECK_THROWS_AS(parse_iteration_string("ERA"), ConfigError);
  CHECK_THROWS_AS(parse_iteration_string("42"), ConfigError);
  CHECK_THROWS_AS(parse_iteration_string(""), ConfigError);
}

TEST_CASE("volume round-trip preserves header and payload") {
  Volume v(9, 0.125);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = uni(rng);
  write_volume(v, "t_vol.vol", VolumeKind::kNonNegative);
  CHECK(peek_volume_kind("t_vol.vol") == VolumeKind::kNonNegative);
  const Volume back = read_volume("t_vol.vol");
  CHECK(back.edge() == 9);
  CHECK(back.voxel_size() == 0.125);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == v[i]);
  std::remove("t_vol.vol");
}

TEST_CASE("complex volume round-trip") {
  CVolume v(5, 1.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = {uni(rng), uni(rng)};
  write_volume(v, "t_cvol.vol");
  const CVolume back = read_complex_volume("t_cvol.vol");
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == v[i]);
  CHECK_THROWS_AS(read_volume("t_cvol.vol"), FormatError); // kind mismatch
  std::remove("t_cvol.vol");
}

TEST_CASE("volume reader rejects size mismatch") {
  Volume v(7);
  write_volume(v, "t_trunc.vol");
  std::string bytes = slurp("t_trunc.vol");
  bytes.resize(bytes.size() - 16);
  {
    std::ofstream f("t_trunc.vol", std::ios::binary | std::ios::trunc);
    f << bytes;
  }
  CHECK_THROWS_AS(read_volume("t_trunc.vol"), FormatError);
  std::remove("t_trunc.vol");

  CHECK_THROWS_AS(Volume(8), ConfigError); // even edges rejected outright
}

TEST_CASE("INI parser handles the reference config shape") {
  const std::string text =
      "[parameters]\n"
      "detd = 586\n"
      "lambda = 7.75\n"
      "detsize = 260 257\n"
      "pixsize = 0.3\n"
      "stoprad = 40\n"
      "ewald_rad = 650.\n"
      "polarization = x\n"
      "\n"
      "[emc]\n"
      "num_div = 10\n"
      "beta = 0.001\n"
      "beta_schedule = 1.41421356 10\n"
      "need_scaling = 1\n"
      "log_file = EMC.log   # trailing comment\n"
      "\n"
      "[phasing]\n"
      "repeats = 400\n"
      "iters = 100ERA 200DM 200ERA\n"
      "voxel_number = 2000\n"
      "background = True\n";
  const Ini ini = Ini::parse_string(text);
  CHECK(ini.get_double("parameters", "detd") == 586.0);
  CHECK(ini.get("parameters", "polarization") == "x");
  CHECK(ini.get_int("emc", "num_div") == 10);
  CHECK(ini.get("emc", "log_file") == "EMC.log");
  CHECK(ini.get_bool_or("phasing", "background", false));

  const PipelineConfig cfg = load_pipeline_config(ini);
  CHECK(cfg.geometry.geom.detector_shape[0] == 260);
  CHECK(cfg.geometry.geom.detector_shape[1] == 257);
  CHECK(cfg.emc.beta_factor == doctest::Approx(1.41421356));
  CHECK(cfg.emc.beta_interval == 10);
  CHECK(cfg.emc.need_scaling);
  CHECK(cfg.phasing.voxel_number == 2000);
  REQUIRE(cfg.phasing.plan.size() == 3);
  CHECK(cfg.phasing.plan[1].first == PhaseAlgo::kDifferenceMap);

  const Ini again = Ini::parse_string(ini.to_string());
  CHECK(again.get("parameters", "detsize") == "260 257");
}

TEST_CASE("INI parser rejects malformed documents") {
  CHECK_THROWS_AS(Ini::parse_string("[unterminated\nkey = 1\n"), ConfigError);
  CHECK_THROWS_AS(Ini::parse_string("key_outside = 1\n"), ConfigError);
  CHECK_THROWS_AS(Ini::parse_string("[s]\nnovalue\n"), ConfigError);
  const Ini ini = Ini::parse_string("[s]\nk = x\n");
  CHECK_THROWS_AS(ini.get_double("s", "k"), ConfigError);
  CHECK_THROWS_AS(ini.get("s", "missing"), ConfigError);
}

TEST_CASE("fraction strings parse exactly") {
  CHECK(parse_fraction("1") == 1.0);
  CHECK(parse_fraction("1/2") == 0.5);
  CHECK(parse_fraction("1/256") == 1.0 / 256.0);
  CHECK(parse_fraction("0.25") == 0.25);
  CHECK_THROWS_AS(parse_fraction("3/2"), ConfigError);
  CHECK_THROWS_AS(parse_fraction("x/2"), ConfigError);
}

TEST_CASE("derived seeds: stable and distinct across inputs") {
  CHECK(derive_seed(1, Stage::kDilute, 2, 3) == derive_seed(1, Stage::kDilute, 2, 3));
  CHECK(derive_seed(1, Stage::kDilute, 2, 3) != derive_seed(1, Stage::kDilute, 3, 3));
  CHECK(derive_seed(1, Stage::kDilute, 2, 3) != derive_seed(2, Stage::kDilute, 2, 3));
  CHECK(derive_seed(1, Stage::kDilute, 2, 3) != derive_seed(1, Stage::kSubset, 2, 3));
}
