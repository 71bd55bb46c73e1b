// spi: X-ray single-particle reconstruction toolkit command line.
//
// Subcommands: sim, dilute, split, subset, emc, phase, metrics, pipeline.
// Exit codes: 0 ok, 2 configuration/input error, 3 stage failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "spi/config.hpp"
#include "spi/dilute.hpp"
#include "spi/emc.hpp"
#include "spi/errors.hpp"
#include "spi/metrics.hpp"
#include "spi/parallel.hpp"
#include "spi/phasing.hpp"
#include "spi/pipeline.hpp"
#include "spi/rng.hpp"
#include "spi/simulate.hpp"

namespace fs = std::filesystem;
using namespace spi;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  bool deterministic = false; // results are worker-count independent already;
                              // accepted for interface compatibility
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config)
    cmd->add_option("-c,--config", c.config, "INI configuration file")->required();
  cmd->add_option("--seed", c.seed, "override the stage seed")
      ->each([&c](const std::string&) { c.seed_set = true; });
  cmd->add_option("--workers", c.workers, "worker threads (0 = hardware)");
  cmd->add_flag("--deterministic", c.deterministic,
                "kept for compatibility; output never depends on --workers");
}

PipelineConfig load_cfg(const Common& c) {
  PipelineConfig cfg = load_pipeline_config_file(c.config);
  if (c.workers > 0) cfg.workers = c.workers;
  if (c.seed_set) cfg.master_seed = c.seed;
  return cfg;
}

DetectorModel detector_from_config(const PipelineConfig& cfg) {
  std::vector<MaskClass> mask;
  if (!cfg.geometry.in_mask_file.empty())
    mask = read_mask(cfg.geometry.in_mask_file, cfg.geometry.geom.num_pixels());
  else
    mask.assign(cfg.geometry.geom.num_pixels(), MaskClass::kUseAll);
  return build_detector(cfg.geometry.geom, mask);
}

int run_sim(const Common& c, const std::string& outdir) {
  PipelineConfig cfg = load_cfg(c);
  fs::create_directories(outdir);
  const fs::path out(outdir);

  const DetectorModel det = detector_from_config(cfg);
  const int grid = cfg.simulate.grid_size > 0 ? cfg.simulate.grid_size
                                              : det.suggested_grid_size();
  PhantomParams pp;
  pp.outer_radius = cfg.simulate.outer_radius_frac * grid;
  pp.shell_thickness = cfg.simulate.shell_thickness_frac * grid;
  pp.gap_thickness = cfg.simulate.gap_thickness_frac * grid;
  pp.core_density = cfg.simulate.core_density;
  pp.shell_density = cfg.simulate.shell_density;
  pp.gap_density = cfg.simulate.gap_density;
  Phantom phantom = make_phantom(grid, pp);
  phantom.density.set_voxel_size(det.voxel_size);

  RadialBackground bg;
  if (cfg.simulate.background_fraction > 0.0) {
    GroundTruthIntensity no_bg = make_ground_truth(phantom.density, {});
    bg.sigma = cfg.simulate.background_sigma_frac * (grid / 2);
    bg.amplitude = background_amplitude_for_fraction(
        no_bg.intensity, det, cfg.simulate.background_fraction, bg.sigma);
  }
  const GroundTruthIntensity truth = make_ground_truth(phantom.density, bg);
  const double fluence = fluence_for_mean_photons(truth, det, cfg.simulate.mean_photons);
  const std::uint64_t seed = c.seed_set ? c.seed : cfg.master_seed;

  SimulatedDataset ds =
      simulate_dataset(truth, det, cfg.simulate.num_frames, fluence,
                       FluenceDistribution{cfg.simulate.fluence_spread}, seed,
                       cfg.workers);
  write_detector(det, (out / cfg.geometry.out_detector_file).string());
  write_frames(ds.frames, (out / cfg.simulate.out_photons_file).string());
  write_orientation_log(ds, (out / cfg.simulate.out_orientations_file).string());
  write_volume(truth.intensity, (out / cfg.simulate.out_intensity_file).string(),
               VolumeKind::kNonNegative);
  write_volume(phantom.density, (out / cfg.simulate.out_density_file).string(),
               VolumeKind::kNonNegative);
  std::cout << "simulated " << ds.frames.size() << " frames, mean "
            << ds.frames.mean_photons() << " photons/frame, grid " << grid << "^3\n";
  return 0;
}

int run_emc_cmd(const Common& c, std::string in, std::string det_path,
                std::string out_vol) {
  PipelineConfig cfg = load_cfg(c);
  EmcConfig ec = cfg.emc;
  if (!in.empty()) ec.in_photons_file = in;
  if (!det_path.empty()) ec.in_detector_file = det_path;
  if (c.seed_set) ec.seed = c.seed;
  fs::create_directories(ec.output_folder);
  ec.log_file = (fs::path(ec.output_folder) / ec.log_file).string();

  const DetectorModel det = read_detector(ec.in_detector_file);
  const FrameSet frames = read_frames(ec.in_photons_file);
  const RotationSet rot = ec.in_quat_file.empty() ? sample_rotations(ec.num_div)
                                                  : read_rotations(ec.in_quat_file);
  EmcResult res = run_emc(frames, det, rot, ec, cfg.workers);

  if (out_vol.empty())
    out_vol = (fs::path(ec.output_folder) / "output_intensity.vol").string();
  write_volume(res.intensity, out_vol, VolumeKind::kNonNegative);
  {
    std::ofstream sf(fs::path(ec.output_folder) / "scales.txt");
    sf.precision(12);
    for (std::size_t i = 0; i < res.scales.size(); ++i)
      sf << res.kept_frames[i] << ' ' << res.scales[i] << '\n';
  }
  std::cout << "emc: " << res.kept_frames.size() << " frames, "
            << rot.size() << " rotations, " << res.trace.size() << " iterations"
            << (res.collapse_flagged ? " [orientation collapse flagged]" : "")
            << "\n  intensity -> " << out_vol << '\n';
  return res.collapse_flagged ? 0 : 0;
}

int run_phase_cmd(const Common& c, const std::string& in, const std::string& outdir) {
  PipelineConfig cfg = load_cfg(c);
  PhasingConfig pc = cfg.phasing;
  if (c.seed_set) pc.seed = c.seed;
  fs::create_directories(outdir);
  const fs::path out(outdir);

  const Volume i_meas = read_volume(in);
  PhasingResult pr = run_phasing(i_meas, pc, cfg.workers);
  align_solutions(pr.solutions);
  const AveragedSolution avg = average_solutions(pr.solutions);

  write_volume(avg.rho, (out / "avg_density.vol").string());
  {
    // radial background profile of the averaged B
    const RadialBins bins = RadialBins::make(avg.bg.edge());
    std::vector<double> sum(bins.num_shells, 0.0);
    for (std::size_t i = 0; i < avg.bg.size(); ++i) sum[bins.shell_of[i]] += avg.bg[i];
    std::ofstream bf(out / "background_profile.txt");
    bf.precision(10);
    bf << "# q_voxels B\n";
    for (int s = 0; s < bins.num_shells; ++s)
      if (bins.counts[s] > 0) bf << s + 0.5 << ' ' << sum[s] / bins.counts[s] << '\n';
  }
  {
    std::ofstream ef(out / "error_trace.txt");
    ef.precision(8);
    for (std::size_t r = 0; r < pr.error_trace.size(); ++r) {
      ef << "# repeat " << r << '\n';
      for (std::size_t i = 0; i < pr.error_trace[r].size(); ++i)
        ef << i + 1 << ' ' << pr.error_trace[r][i] << '\n';
    }
  }
  fs::create_directories(out / "solutions");
  std::vector<CVolume> stack;
  for (std::size_t r = 0; r < pr.solutions.size(); ++r) {
    char name[32];
    std::snprintf(name, sizeof(name), "sol_%04zu.vol", r);
    write_volume(pr.solutions[r].rho, (out / "solutions" / name).string());
    stack.push_back(pr.solutions[r].rho);
  }
  if (stack.size() >= 2) {
    const ShellCurve curve = prtf(stack);
    write_curve(curve, (out / "prtf.csv").string(), "q prtf");
    const CrossingResult res =
        threshold_crossing(curve, Threshold::fixed(1.0 / 2.718281828459045));
    if (res.crossed)
      std::cout << "prtf 1/e resolution: " << res.resolution_first
                << " (first), " << res.resolution_last << " (last crossing)\n";
    else
      std::cout << "prtf stays above 1/e out to the grid edge\n";
  }
  std::cout << "phase: " << pr.solutions.size() << " repeats -> " << outdir << '\n';
  return 0;
}

void print_resolution(const char* name, const CrossingResult& r) {
  if (r.crossed)
    std::cout << name << " resolution: " << r.resolution_first
              << " (first crossing), " << r.resolution_last << " (last)\n";
  else
    std::cout << name << " resolution: beyond range (never crosses)\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"X-ray single-particle imaging reconstruction toolkit"};
  app.require_subcommand(1);

  Common c_sim, c_emc, c_phase, c_pipe;
  std::string outdir = ".", in_file, det_file, out_file, in2_file;

  auto* sim = app.add_subcommand("sim", "generate phantom + synthetic sparse frames");
  add_common(sim, c_sim);
  sim->add_option("-o,--outdir", outdir, "output directory");

  // dilute / split / subset operate on .phot files directly
  std::string dil_in, dil_out, dil_frac = "1";
  std::uint64_t dil_seed = 0;
  auto* dil = app.add_subcommand("dilute", "Bernoulli photon thinning");
  dil->add_option("-i,--input", dil_in)->required();
  dil->add_option("-o,--output", dil_out)->required();
  dil->add_option("--fraction", dil_frac, "keep probability, e.g. 1/256")->required();
  dil->add_option("--seed", dil_seed);

  std::string spl_in, spl_odd = "odd.phot", spl_even = "even.phot";
  auto* spl = app.add_subcommand("split", "odd/even interleaved frame split");
  spl->add_option("-i,--input", spl_in)->required();
  spl->add_option("--odd", spl_odd);
  spl->add_option("--even", spl_even);

  std::string sub_in, sub_out;
  long sub_n = 0;
  std::uint64_t sub_seed = 0;
  auto* sub = app.add_subcommand("subset", "uniform random frame subset");
  sub->add_option("-i,--input", sub_in)->required();
  sub->add_option("-o,--output", sub_out)->required();
  sub->add_option("-n,--count", sub_n)->required();
  sub->add_option("--seed", sub_seed);

  auto* emc_cmd = app.add_subcommand("emc", "orientation recovery + 3D merge");
  add_common(emc_cmd, c_emc);
  emc_cmd->add_option("-i,--input", in_file, ".phot frames (overrides config)");
  emc_cmd->add_option("-d,--detector", det_file, "detector file (overrides config)");
  emc_cmd->add_option("-o,--output", out_file, "output intensity .vol");

  std::string phase_out = "phased";
  auto* phase_cmd = app.add_subcommand("phase", "background-aware iterative phasing");
  add_common(phase_cmd, c_phase);
  phase_cmd->add_option("-i,--input", in_file, "merged intensity .vol")->required();
  phase_cmd->add_option("-o,--outdir", phase_out, "output directory");

  // metrics family
  auto* met = app.add_subcommand("metrics", "reconstruction-quality metrics");
  met->require_subcommand(1);
  std::string m1, m2, m_out = "curve.csv";
  double thr_value = 0.5;
  bool do_align = false;
  auto* mcc = met->add_subcommand("cc", "shell-wise Pearson CC between intensities");
  mcc->add_option("-1,--first", m1)->required();
  mcc->add_option("-2,--second", m2)->required();
  mcc->add_option("-o,--output", m_out);
  mcc->add_option("--threshold", thr_value, "fixed cutoff (default 0.5)");
  mcc->add_flag("--align", do_align, "rotationally align second volume first");

  std::string f1, f2, f_out = "fsc.csv";
  auto* mfsc = met->add_subcommand("fsc", "Fourier shell correlation between densities");
  mfsc->add_option("-1,--first", f1)->required();
  mfsc->add_option("-2,--second", f2)->required();
  mfsc->add_option("-o,--output", f_out);

  std::vector<std::string> stack_files;
  std::string p_out = "prtf.csv";
  auto* mprtf = met->add_subcommand("prtf", "phase retrieval transfer function");
  mprtf->add_option("files", stack_files, "aligned solution .vol files")->required();
  mprtf->add_option("-o,--output", p_out);

  std::string pow_in, pow_det, pow_out = "powder.txt";
  auto* mpow = met->add_subcommand("powder", "virtual powder sum image");
  mpow->add_option("-i,--input", pow_in)->required();
  mpow->add_option("-d,--detector", pow_det)->required();
  mpow->add_option("-o,--output", pow_out);

  std::string h_in, h_out = "hist.txt";
  int h_bins = 32;
  long h_n = 2000;
  auto* mhist = met->add_subcommand("hist", "density histogram over the support");
  mhist->add_option("-i,--input", h_in, "complex density .vol")->required();
  mhist->add_option("-o,--output", h_out);
  mhist->add_option("--bins", h_bins);
  mhist->add_option("--voxel-number", h_n, "support size (largest-|rho| voxels)");

  std::string si1, si2, sr1, sr2;
  std::vector<std::string> s_stack;
  auto* msum = met->add_subcommand(
      "summary", "CC1/2, FSC and PRTF resolutions in one block");
  msum->add_option("--i1", si1, "half-1 intensity .vol")->required();
  msum->add_option("--i2", si2, "half-2 intensity .vol")->required();
  msum->add_option("--rho1", sr1, "half-1 averaged density .vol")->required();
  msum->add_option("--rho2", sr2, "half-2 averaged density .vol")->required();
  msum->add_option("--stack", s_stack, "aligned solutions for the PRTF")->required();

  auto* pipe = app.add_subcommand("pipeline", "full sweep experiment with report");
  add_common(pipe, c_pipe);
  pipe->add_option("-o,--outdir", outdir, "output directory (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return run_sim(c_sim, outdir);

    if (dil->parsed()) {
      const FrameSet in = read_frames(dil_in);
      write_frames(thin_photons(in, parse_fraction(dil_frac), dil_seed), dil_out);
      std::cout << "thinned " << in.size() << " frames at " << dil_frac << " -> "
                << dil_out << '\n';
      return 0;
    }
    if (spl->parsed()) {
      const FrameSet in = read_frames(spl_in);
      auto halves = split_odd_even(in);
      write_frames(halves.first, spl_odd);
      write_frames(halves.second, spl_even);
      std::cout << "split " << in.size() << " -> " << halves.first.size() << " + "
                << halves.second.size() << '\n';
      return 0;
    }
    if (sub->parsed()) {
      const FrameSet in = read_frames(sub_in);
      write_frames(random_subset(in, static_cast<std::size_t>(sub_n), sub_seed),
                   sub_out);
      std::cout << "subset " << sub_n << " of " << in.size() << " -> " << sub_out
                << '\n';
      return 0;
    }
    if (emc_cmd->parsed()) return run_emc_cmd(c_emc, in_file, det_file, out_file);
    if (phase_cmd->parsed()) return run_phase_cmd(c_phase, in_file, phase_out);

    if (met->parsed()) {
      if (mcc->parsed()) {
        Volume a = read_volume(m1), b = read_volume(m2);
        if (do_align) {
          const double rmax = 0.9 * (a.edge() / 2);
          RotAlignResult ra = align_rotation(a, b, 2.0, rmax);
          b = std::move(ra.aligned);
          std::cout << "alignment cc: " << ra.cc
                    << (ra.degenerate ? " [degenerate]" : "") << '\n';
        }
        const ShellCurve curve = cc_half(a, b);
        write_curve(curve, m_out, "q cc_half");
        print_resolution("cc", threshold_crossing(curve, Threshold::fixed(thr_value)));
        return 0;
      }
      if (mfsc->parsed()) {
        const ShellCurve curve = fsc_densities(read_complex_volume(f1),
                                               read_complex_volume(f2));
        write_curve(curve, f_out, "q fsc");
        print_resolution("fsc half-bit",
                         threshold_crossing(curve, Threshold::half_bit()));
        return 0;
      }
      if (mprtf->parsed()) {
        std::vector<CVolume> stack;
        for (const auto& p : stack_files) stack.push_back(read_complex_volume(p));
        const ShellCurve curve = prtf(stack);
        write_curve(curve, p_out, "q prtf");
        print_resolution("prtf 1/e", threshold_crossing(
                                         curve, Threshold::fixed(1.0 / 2.718281828459045)));
        return 0;
      }
      if (mpow->parsed()) {
        const FrameSet frames = read_frames(pow_in);
        const DetectorModel det = read_detector(pow_det);
        const std::vector<double> img = powder_sum(frames);
        std::ofstream f(pow_out);
        f.precision(10);
        std::size_t i = 0;
        for (int x = 0; x < det.shape[0]; ++x) {
          for (int y = 0; y < det.shape[1]; ++y, ++i)
            f << img[i] << (y + 1 == det.shape[1] ? '\n' : ' ');
        }
        std::cout << "powder sum of " << frames.size() << " frames -> " << pow_out
                  << '\n';
        return 0;
      }
      if (mhist->parsed()) {
        const CVolume rho = read_complex_volume(h_in);
        std::vector<std::uint32_t> order(rho.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = std::uint32_t(i);
        std::vector<double> mag(rho.size());
        for (std::size_t i = 0; i < rho.size(); ++i) mag[i] = std::norm(rho[i]);
        std::nth_element(order.begin(), order.begin() + h_n, order.end(),
                         [&mag](auto a, auto b) {
                           return mag[a] != mag[b] ? mag[a] > mag[b] : a < b;
                         });
        std::vector<std::uint8_t> support(rho.size(), 0);
        for (long i = 0; i < h_n; ++i) support[order[i]] = 1;
        const Histogram hist = density_histogram(rho, support, h_bins);
        std::ofstream f(h_out);
        f.precision(10);
        f << "# bin_lo bin_hi count  (bimodality " << hist.bimodality << ")\n";
        for (std::size_t b = 0; b < hist.counts.size(); ++b)
          f << hist.edges[b] << ' ' << hist.edges[b + 1] << ' ' << hist.counts[b]
            << '\n';
        std::cout << "bimodality coefficient: " << hist.bimodality << '\n';
        return 0;
      }
      if (msum->parsed()) {
        Volume i1 = read_volume(si1), i2 = read_volume(si2);
        const double rmax = 0.9 * (i1.edge() / 2);
        RotAlignResult ra = align_rotation(i1, i2, 2.0, rmax);
        const ShellCurve cc = cc_half(i1, ra.aligned);
        const ShellCurve f = fsc_densities(read_complex_volume(sr1),
                                           read_complex_volume(sr2));
        std::vector<CVolume> stack;
        for (const auto& p : s_stack) stack.push_back(read_complex_volume(p));
        const ShellCurve pr = prtf(stack);
        std::cout << "== resolution summary (full period, 1/q units) ==\n";
        print_resolution("cc_half @0.5", threshold_crossing(cc, Threshold::fixed(0.5)));
        print_resolution("fsc @half-bit", threshold_crossing(f, Threshold::half_bit()));
        print_resolution("prtf @1/e",
                         threshold_crossing(pr, Threshold::fixed(1.0 / 2.718281828459045)));
        return 0;
      }
    }
    if (pipe->parsed()) {
      PipelineConfig cfg = load_cfg(c_pipe);
      if (pipe->count("-o") || pipe->count("--outdir")) cfg.output_folder = outdir;
      run_pipeline(cfg);
      std::cout << "report -> " << (fs::path(cfg.output_folder) / "report.json").string()
                << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
