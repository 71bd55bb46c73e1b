#include "spi/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace spi {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

} // namespace

Ini Ini::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_string(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

Ini Ini::parse_string(const std::string& text) {
  Ini ini;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      if (!ini.sections_.count(section)) {
        ini.sections_[section] = {};
        ini.order_.push_back(section);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    ini.set(section, key, value);
  }
  return ini;
}

bool Ini::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string Ini::get(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end() || !it->second.count(key))
    throw ConfigError("missing config key [" + section + "] " + key);
  return it->second.at(key);
}

std::string Ini::get_or(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double Ini::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t pos;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": not a number: " + v);
  }
}

double Ini::get_double_or(const std::string& section, const std::string& key,
                          double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

long Ini::get_int(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t pos;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": not an integer: " + v);
  }
}

long Ini::get_int_or(const std::string& section, const std::string& key,
                     long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool Ini::get_bool_or(const std::string& section, const std::string& key,
                      bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("[" + section + "] " + key + ": not a boolean: " + v);
}

void Ini::set(const std::string& section, const std::string& key,
              const std::string& value) {
  if (!sections_.count(section)) order_.push_back(section);
  auto& sec = sections_[section];
  if (!sec.count(key)) key_order_[section].push_back(key);
  sec[key] = value;
}

std::string Ini::to_string() const {
  std::ostringstream out;
  for (const auto& s : order_) {
    out << '[' << s << "]\n";
    auto ko = key_order_.find(s);
    if (ko != key_order_.end())
      for (const auto& k : ko->second)
        out << k << " = " << sections_.at(s).at(k) << '\n';
    out << '\n';
  }
  return out.str();
}

std::vector<std::pair<PhaseAlgo, int>> parse_iteration_string(const std::string& s) {
  std::vector<std::pair<PhaseAlgo, int>> plan;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    std::size_t i = 0;
    while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
    if (i == 0 || i == tok.size())
      throw ConfigError("iteration token must be <count><algorithm>: " + tok);
    const int count = std::stoi(tok.substr(0, i));
    const std::string algo = tok.substr(i);
    if (algo == "ER" || algo == "ERA")
      plan.emplace_back(PhaseAlgo::kErrorReduction, count);
    else if (algo == "DM")
      plan.emplace_back(PhaseAlgo::kDifferenceMap, count);
    else
      throw ConfigError("unknown phasing algorithm token: " + algo);
  }
  if (plan.empty()) throw ConfigError("empty iteration string");
  return plan;
}

double parse_fraction(const std::string& s) {
  const auto slash = s.find('/');
  try {
    if (slash == std::string::npos) {
      const double v = std::stod(s);
      if (v < 0.0 || v > 1.0) throw ConfigError("fraction out of [0,1]: " + s);
      return v;
    }
    const double num = std::stod(s.substr(0, slash));
    const double den = std::stod(s.substr(slash + 1));
    if (den <= 0.0) throw ConfigError("fraction denominator must be positive: " + s);
    const double v = num / den;
    if (v < 0.0 || v > 1.0) throw ConfigError("fraction out of [0,1]: " + s);
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("malformed fraction: " + s);
  }
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

} // namespace

PipelineConfig load_pipeline_config(const Ini& ini) {
  PipelineConfig cfg;

  // [parameters] mirrors the detector geometry block.
  auto& g = cfg.geometry.geom;
  g.detector_distance_mm = ini.get_double_or("parameters", "detd", 586.0);
  g.wavelength_angstrom = ini.get_double_or("parameters", "lambda", 7.75);
  g.pixel_size_mm = ini.get_double_or("parameters", "pixsize", 0.3);
  const auto detsize = split_ws(ini.get_or("parameters", "detsize", "64 64"));
  if (detsize.size() == 1) {
    g.detector_shape[0] = g.detector_shape[1] = std::stoi(detsize[0]);
  } else if (detsize.size() == 2) {
    g.detector_shape[0] = std::stoi(detsize[0]);
    g.detector_shape[1] = std::stoi(detsize[1]);
  } else {
    throw ConfigError("[parameters] detsize: expected one or two integers");
  }
  g.ewald_radius_voxels = ini.get_double_or("parameters", "ewald_rad", 650.0);
  g.central_stop_radius_px = ini.get_double_or("parameters", "stoprad", 0.0);
  cfg.geometry.in_mask_file = ini.get_or("make_detector", "in_mask_file", "");
  cfg.geometry.out_detector_file =
      ini.get_or("make_detector", "out_detector_file", "det.dat");

  auto& s = cfg.simulate;
  s.num_frames = static_cast<int>(ini.get_int_or("simulate", "num_frames", 1000));
  s.mean_photons = ini.get_double_or("simulate", "mean_photons", 2000.0);
  s.fluence_spread = ini.get_double_or("simulate", "fluence_spread", 0.3);
  s.background_fraction = ini.get_double_or("simulate", "background_fraction", 0.0);
  s.background_sigma_frac =
      ini.get_double_or("simulate", "background_sigma_frac", 0.35);
  s.grid_size = static_cast<int>(ini.get_int_or("simulate", "grid_size", 0));
  s.outer_radius_frac = ini.get_double_or("simulate", "outer_radius_frac", 0.22);
  s.shell_thickness_frac =
      ini.get_double_or("simulate", "shell_thickness_frac", 0.035);
  s.gap_thickness_frac = ini.get_double_or("simulate", "gap_thickness_frac", 0.03);
  s.core_density = ini.get_double_or("simulate", "core_density", 1.0);
  s.shell_density = ini.get_double_or("simulate", "shell_density", 1.6);
  s.gap_density = ini.get_double_or("simulate", "gap_density", 0.4);
  s.out_photons_file = ini.get_or("simulate", "out_photons_file", "frames.phot");
  s.out_orientations_file =
      ini.get_or("simulate", "out_orientations_file", "frames.quat");
  s.out_intensity_file =
      ini.get_or("simulate", "out_intensity_file", "truth_intensity.vol");
  s.out_density_file = ini.get_or("simulate", "out_density_file", "truth_density.vol");

  auto& e = cfg.emc;
  e.num_div = static_cast<int>(ini.get_int_or("emc", "num_div", 4));
  e.num_iter = static_cast<int>(ini.get_int_or("emc", "num_iter", 60));
  e.grid_size = static_cast<int>(ini.get_int_or("emc", "grid_size", 0));
  e.beta_start = ini.get_double_or("emc", "beta", 0.001);
  const auto sched = split_ws(ini.get_or("emc", "beta_schedule", "1.41421356 10"));
  if (sched.size() != 2)
    throw ConfigError("[emc] beta_schedule: expected \"factor interval\"");
  e.beta_factor = std::stod(sched[0]);
  e.beta_interval = std::stoi(sched[1]);
  e.need_scaling = ini.get_bool_or("emc", "need_scaling", true);
  const std::string sel = ini.get_or("emc", "selection", "");
  if (sel.empty() || sel == "all")
    e.selection = FrameSelection::kAll;
  else if (sel == "odd_only")
    e.selection = FrameSelection::kOddOnly;
  else if (sel == "even_only")
    e.selection = FrameSelection::kEvenOnly;
  else
    throw ConfigError("[emc] selection: expected odd_only|even_only|all, got " + sel);
  e.seed = static_cast<std::uint64_t>(ini.get_int_or("emc", "seed", 0));
  e.in_photons_file = ini.get_or("emc", "in_photons_file", s.out_photons_file);
  e.in_detector_file =
      ini.get_or("emc", "in_detector_file", cfg.geometry.out_detector_file);
  e.in_quat_file = ini.get_or("emc", "in_quat_file", "");
  e.output_folder = ini.get_or("emc", "output_folder", ".");
  e.log_file = ini.get_or("emc", "log_file", "EMC.log");

  auto& p = cfg.phasing;
  p.repeats = static_cast<int>(ini.get_int_or("phasing", "repeats", 400));
  p.plan = parse_iteration_string(
      ini.get_or("phasing", "iters", "100ERA 200DM 200ERA"));
  p.voxel_number = ini.get_int_or("phasing", "voxel_number", 2000);
  p.background = ini.get_bool_or("phasing", "background", true);
  p.inner_mask = ini.get_double_or("phasing", "inner_mask", 6.0);
  p.outer_mask = ini.get_double_or("phasing", "outer_mask", 0.0);
  p.dm_beta = ini.get_double_or("phasing", "dm_beta", 0.7);
  p.seed = static_cast<std::uint64_t>(ini.get_int_or("phasing", "seed", 0));
  p.init_density_max = ini.get_double_or("phasing", "init_density_max", 1.0);
  p.init_bg_scale = ini.get_double_or("phasing", "init_bg_scale", 0.1);

  for (const auto& tok : split_ws(ini.get_or("pipeline", "fractions", "")))
    cfg.fractions.push_back(tok);
  for (const auto& tok : split_ws(ini.get_or("pipeline", "frame_counts", "")))
    cfg.frame_counts.push_back(std::stol(tok));
  cfg.replicates = static_cast<int>(ini.get_int_or("pipeline", "replicates", 10));
  cfg.master_seed =
      static_cast<std::uint64_t>(ini.get_int_or("pipeline", "master_seed", 42));
  cfg.workers = static_cast<int>(ini.get_int_or("pipeline", "workers", 0));
  cfg.exclude_collapsed = ini.get_bool_or("pipeline", "exclude_collapsed", false);
  cfg.output_folder = ini.get_or("pipeline", "output_folder", "run");

  for (const auto& frac : cfg.fractions) parse_fraction(frac); // validate early
  return cfg;
}

PipelineConfig load_pipeline_config_file(const std::string& path) {
  return load_pipeline_config(Ini::parse_file(path));
}

} // namespace spi
