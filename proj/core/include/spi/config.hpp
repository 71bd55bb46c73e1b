#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spi/detector.hpp"
#include "spi/errors.hpp"

namespace spi {

// Minimal INI document: [section] blocks of "key = value" lines, '#' and ';'
// comments. Section and key lookups are case-sensitive.
class Ini {
public:
  static Ini parse_file(const std::string& path);
  static Ini parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;

  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const;
  long get_int(const std::string& section, const std::string& key) const;
  long get_int_or(const std::string& section, const std::string& key,
                  long fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);
  std::string to_string() const;

  const std::vector<std::string>& section_order() const { return order_; }

private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>> key_order_;
};

enum class PhaseAlgo { kErrorReduction, kDifferenceMap };

// "100ERA 200DM 200ERA" -> {(ER,100), (DM,200), (ER,200)}.
// Accepted algorithm tokens: ER, ERA, DM.
std::vector<std::pair<PhaseAlgo, int>> parse_iteration_string(const std::string& s);

// "1", "1/4", "1/256" -> exact double fractions (powers of two stay exact).
double parse_fraction(const std::string& s);

struct GeometryConfig {
  ExperimentGeometry geom;
  std::string in_mask_file;       // optional; empty = all pixels USE_ALL
  std::string out_detector_file;  // for the make-detector path
};

struct SimulateConfig {
  int num_frames = 1000;
  double mean_photons = 2000.0;   // target photons/frame on non-ignored pixels
  double fluence_spread = 0.3;    // lognormal sigma of the relative fluence
  double background_fraction = 0.0; // photon share of the isotropic background
  double background_sigma_frac = 0.35; // background sigma / grid radius
  int grid_size = 0;              // 0 = derived from the detector
  // phantom description
  double outer_radius_frac = 0.22;  // of the grid edge
  double shell_thickness_frac = 0.035;
  double gap_thickness_frac = 0.03;
  double core_density = 1.0;
  double shell_density = 1.6;
  double gap_density = 0.4;
  std::string out_photons_file = "frames.phot";
  std::string out_orientations_file = "frames.quat";
  std::string out_intensity_file = "truth_intensity.vol";
  std::string out_density_file = "truth_density.vol";
};

enum class FrameSelection { kAll, kOddOnly, kEvenOnly };

struct EmcConfig {
  int num_div = 4;
  int num_iter = 60;
  int grid_size = 0; // 0 = derived from the detector
  double beta_start = 0.001;
  double beta_factor = 1.41421356;
  int beta_interval = 10;
  bool need_scaling = true;
  FrameSelection selection = FrameSelection::kAll;
  std::uint64_t seed = 0;
  std::string in_photons_file;
  std::string in_detector_file;
  std::string in_quat_file; // optional explicit rotation list
  std::string output_folder = ".";
  std::string log_file = "EMC.log";
  double pdo_prune_rel = 1e-10;
};

struct PhasingConfig {
  int repeats = 400;
  std::vector<std::pair<PhaseAlgo, int>> plan; // default set in loader
  long voxel_number = 2000;
  bool background = true;
  double inner_mask = 6.0;  // FREE ball radius (voxels)
  double outer_mask = 0.0;  // 0 = auto: grid radius - 7
  double dm_beta = 0.7;
  std::uint64_t seed = 0;
  double init_density_max = 1.0; // rho init: uniform(0, max)
  // B init: uniform(0, init_bg_scale * mean sqrt(I_meas)). Small starts let
  // the density claim the signal first; the background then absorbs only the
  // genuinely isotropic excess.
  double init_bg_scale = 0.1;
};

struct PipelineConfig {
  GeometryConfig geometry;
  SimulateConfig simulate;
  EmcConfig emc;
  PhasingConfig phasing;
  std::vector<std::string> fractions; // "1", "1/4", ... (photon dilution sweep)
  std::vector<long> frame_counts;     // alternate sweep axis (random subsets)
  int replicates = 10;
  std::uint64_t master_seed = 42;
  int workers = 0; // 0 = hardware
  bool exclude_collapsed = false;
  std::string output_folder = "run";
};

PipelineConfig load_pipeline_config(const Ini& ini);
PipelineConfig load_pipeline_config_file(const std::string& path);

} // namespace spi
