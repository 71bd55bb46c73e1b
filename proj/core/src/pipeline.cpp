#include "spi/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "spi/dilute.hpp"
#include "spi/emc.hpp"
#include "spi/metrics.hpp"
#include "spi/parallel.hpp"
#include "spi/phasing.hpp"
#include "spi/rng.hpp"
#include "spi/simulate.hpp"

namespace spi {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t pipeline_seed(std::uint64_t master, Stage stage, int replicate,
                            const std::string& label) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return derive_seed(master, stage, static_cast<std::uint64_t>(replicate), h);
}

namespace {

json curve_json(const ShellCurve& c) {
  json j;
  j["q"] = c.q;
  j["value"] = c.value;
  j["count"] = c.count;
  return j;
}

json crossing_json(const CrossingResult& r) {
  json j;
  j["crossed"] = r.crossed;
  if (r.crossed) {
    j["first_shell"] = r.first_shell;
    j["resolution_first"] = r.resolution_first;
    j["last_shell"] = r.last_shell;
    j["resolution_last"] = r.resolution_last;
  }
  return j;
}

struct HalfOutputs {
  Volume intensity;
  bool collapsed = false;
  AveragedSolution averaged;
  ShellCurve prtf_curve;
  CrossingResult prtf_res;
  double histogram_bimodality = 0.0;
  json histogram;
};

struct ReplicateOutputs {
  json j;
  bool ok = false;
  bool any_collapse = false;
  ShellCurve cc_curve;
  CrossingResult cc_res;
  CrossingResult fsc_res;
};

// Support mask for the density histogram: the voxel_number largest |rho|.
std::vector<std::uint8_t> top_n_support(const CVolume& rho, long n) {
  std::vector<std::uint32_t> order(rho.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = std::uint32_t(i);
  std::vector<double> mag(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) mag[i] = std::norm(rho[i]);
  auto better = [&mag](std::uint32_t a, std::uint32_t b) {
    if (mag[a] != mag[b]) return mag[a] > mag[b];
    return a < b;
  };
  const long k = std::min<long>(n, static_cast<long>(rho.size()) - 1);
  std::nth_element(order.begin(), order.begin() + k, order.end(), better);
  std::vector<std::uint8_t> support(rho.size(), 0);
  for (long i = 0; i < k; ++i) support[order[i]] = 1;
  return support;
}

} // namespace

json run_pipeline(const PipelineConfig& cfg) {
  const int workers = cfg.workers > 0 ? cfg.workers : default_workers();
  fs::create_directories(cfg.output_folder);
  const fs::path out(cfg.output_folder);
  fs::create_directories(out / "curves");
  fs::create_directories(out / "logs");

  json report;
  report["master_seed"] = cfg.master_seed;
  report["replicates"] = cfg.replicates;

  // ---- geometry + detector ----------------------------------------------
  std::vector<MaskClass> mask;
  if (!cfg.geometry.in_mask_file.empty())
    mask = read_mask(cfg.geometry.in_mask_file, cfg.geometry.geom.num_pixels());
  else
    mask.assign(cfg.geometry.geom.num_pixels(), MaskClass::kUseAll);
  const DetectorModel det = build_detector(cfg.geometry.geom, mask);
  const int grid = cfg.simulate.grid_size > 0 ? cfg.simulate.grid_size
                                              : det.suggested_grid_size();
  if (det.max_q() > grid / 2 - 1)
    throw ConfigError("detector corner q exceeds the merge grid");
  write_detector(det, (out / "det.dat").string());

  // ---- ground truth + synthetic frames -----------------------------------
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

  const double fluence =
      fluence_for_mean_photons(truth, det, cfg.simulate.mean_photons);
  const std::uint64_t sim_seed = pipeline_seed(cfg.master_seed, Stage::kSimulate, 0, "sim");
  FluenceDistribution fdist{cfg.simulate.fluence_spread};
  SimulatedDataset base =
      simulate_dataset(truth, det, cfg.simulate.num_frames, fluence, fdist, sim_seed,
                       workers);
  write_frames(base.frames, (out / cfg.simulate.out_photons_file).string());
  write_orientation_log(base, (out / cfg.simulate.out_orientations_file).string());
  write_volume(truth.intensity, (out / cfg.simulate.out_intensity_file).string(),
               VolumeKind::kNonNegative);
  write_volume(phantom.density, (out / cfg.simulate.out_density_file).string(),
               VolumeKind::kNonNegative);

  json sim_j;
  sim_j["num_frames"] = cfg.simulate.num_frames;
  sim_j["grid"] = grid;
  sim_j["mean_photons_target"] = cfg.simulate.mean_photons;
  sim_j["mean_photons_drawn"] = base.frames.mean_photons();
  sim_j["fluence_scale"] = fluence;
  sim_j["background_fraction"] = cfg.simulate.background_fraction;
  sim_j["background_amplitude"] = bg.amplitude;
  sim_j["seed"] = sim_seed;
  report["simulate"] = sim_j;

  // ---- sweep points -------------------------------------------------------
  struct Point {
    std::string axis;
    std::string label;
    double value;
  };
  std::vector<Point> points;
  for (const auto& fr : cfg.fractions)
    points.push_back({"fraction", fr, parse_fraction(fr)});
  for (long n : cfg.frame_counts)
    points.push_back({"frames", "n" + std::to_string(n), double(n)});
  if (points.empty()) points.push_back({"fraction", "1", 1.0});

  const double rmax_align = 0.9 * (grid / 2);

  json sweeps = json::array();
  for (const auto& pt : points) {
    json point_j;
    point_j["axis"] = pt.axis;
    point_j["label"] = pt.label;
    point_j["value"] = pt.value;
    json reps = json::array();

    std::vector<ReplicateOutputs> outputs(cfg.replicates);
    for (int rep = 0; rep < cfg.replicates; ++rep) {
      ReplicateOutputs& ro = outputs[rep];
      json& rj = ro.j;
      rj["replicate"] = rep;
      const std::uint64_t data_seed =
          pipeline_seed(cfg.master_seed, Stage::kDilute, rep, pt.label);
      rj["seed"] = data_seed;
      try {
        FrameSet reduced;
        if (pt.axis == "fraction")
          reduced = thin_photons(base.frames, pt.value, data_seed);
        else
          reduced = random_subset(base.frames, static_cast<std::size_t>(pt.value),
                                  data_seed);
        rj["mean_photons"] = reduced.mean_photons();
        rj["num_frames"] = reduced.frames.size();

        auto halves = split_odd_even(reduced);

        HalfOutputs half_out[2];
        const char* half_name[2] = {"odd", "even"};
        for (int h = 0; h < 2; ++h) {
          EmcConfig ec = cfg.emc;
          ec.grid_size = grid;
          ec.seed = pipeline_seed(cfg.master_seed, Stage::kEmc, rep,
                                  pt.label + "/" + half_name[h]);
          std::string log_name = "emc_" + pt.label + "_r" + std::to_string(rep) +
                                 "_" + half_name[h] + ".log";
          for (char& ch : log_name)
            if (ch == '/') ch = '-'; // labels like 1/4 would split the name
          ec.log_file = (out / "logs" / log_name).string();
          const RotationSet rot = sample_rotations(ec.num_div);
          EmcResult er = run_emc(h == 0 ? halves.first : halves.second, det, rot, ec,
                                 workers);
          half_out[h].intensity = std::move(er.intensity);
          half_out[h].collapsed = er.collapse_flagged;
          rj[std::string("collapse_") + half_name[h]] = er.collapse_flagged;
          rj[std::string("emc_final_loglik_") + half_name[h]] =
              er.final_log_likelihood();
          if (er.collapse_flagged) ro.any_collapse = true;
        }

        // Rotational gauge: align the even-half intensity onto the odd half.
        RotAlignResult ra =
            align_rotation(half_out[0].intensity, half_out[1].intensity, 2.0,
                           rmax_align, workers);
        rj["align_cc"] = ra.cc;
        rj["align_degenerate"] = ra.degenerate;

        ro.cc_curve = cc_half(half_out[0].intensity, ra.aligned);
        ro.cc_res = threshold_crossing(ro.cc_curve, Threshold::fixed(0.5));
        rj["cc"] = curve_json(ro.cc_curve);
        rj["cc_resolution"] = crossing_json(ro.cc_res);

        // Phase both halves in the common frame.
        const Volume* half_I[2] = {&half_out[0].intensity, &ra.aligned};
        for (int h = 0; h < 2; ++h) {
          PhasingConfig pc = cfg.phasing;
          pc.seed = pipeline_seed(cfg.master_seed, Stage::kPhasing, rep,
                                  pt.label + "/" + half_name[h]);
          PhasingResult pr = run_phasing(*half_I[h], pc, workers);
          align_solutions(pr.solutions);
          std::vector<CVolume> stack;
          stack.reserve(pr.solutions.size());
          for (auto& s : pr.solutions) stack.push_back(s.rho);
          if (stack.size() >= 2) {
            half_out[h].prtf_curve = prtf(stack);
            half_out[h].prtf_res = threshold_crossing(
                half_out[h].prtf_curve, Threshold::fixed(1.0 / 2.718281828459045));
            rj[std::string("prtf_") + half_name[h]] =
                curve_json(half_out[h].prtf_curve);
            rj[std::string("prtf_resolution_") + half_name[h]] =
                crossing_json(half_out[h].prtf_res);
          }
          half_out[h].averaged = average_solutions(pr.solutions);
          const auto support =
              top_n_support(half_out[h].averaged.rho, cfg.phasing.voxel_number);
          Histogram hist = density_histogram(half_out[h].averaged.rho, support, 32);
          half_out[h].histogram_bimodality = hist.bimodality;
          rj[std::string("density_bimodality_") + half_name[h]] = hist.bimodality;
        }

        // FSC between the averaged half densities (translation/phase/
        // inversion registered first).
        std::vector<PhaseIterate> pair(2);
        pair[0] = {half_out[0].averaged.rho, half_out[0].averaged.bg};
        pair[1] = {half_out[1].averaged.rho, half_out[1].averaged.bg};
        align_solutions(pair);
        ShellCurve fsc_curve = fsc_densities(pair[0].rho, pair[1].rho);
        ro.fsc_res = threshold_crossing(fsc_curve, Threshold::half_bit());
        rj["fsc"] = curve_json(fsc_curve);
        rj["fsc_resolution"] = crossing_json(ro.fsc_res);

        const std::string tag =
            pt.axis + "_" + pt.label + "_r" + std::to_string(rep);
        std::string safe_tag = tag;
        for (char& ch : safe_tag)
          if (ch == '/') ch = '-';
        write_curve(ro.cc_curve, (out / "curves" / ("cc_" + safe_tag + ".csv")).string(),
                    "q cc_half");
        write_curve(fsc_curve, (out / "curves" / ("fsc_" + safe_tag + ".csv")).string(),
                    "q fsc");
        if (half_out[0].prtf_curve.size() > 0)
          write_curve(half_out[0].prtf_curve,
                      (out / "curves" / ("prtf_" + safe_tag + "_odd.csv")).string(),
                      "q prtf");
        if (half_out[1].prtf_curve.size() > 0)
          write_curve(half_out[1].prtf_curve,
                      (out / "curves" / ("prtf_" + safe_tag + "_even.csv")).string(),
                      "q prtf");

        rj["status"] = "ok";
        ro.ok = true;
      } catch (const std::exception& e) {
        rj["status"] = std::string("failed: ") + e.what();
        ro.ok = false;
      }
      reps.push_back(rj);
    }
    point_j["runs"] = reps;

    // ---- aggregates over replicates (optionally excluding collapses) ----
    json agg;
    auto aggregate_metric = [&](auto getter, const char* name) {
      std::vector<double> vals;
      for (const auto& ro : outputs) {
        if (!ro.ok) continue;
        if (cfg.exclude_collapsed && ro.any_collapse) continue;
        const CrossingResult r = getter(ro);
        if (r.crossed) vals.push_back(r.resolution_first);
      }
      json a;
      a["n"] = vals.size();
      if (!vals.empty()) {
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= double(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        a["mean"] = mean;
        a["std"] = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0.0;
      }
      agg[name] = a;
    };
    aggregate_metric([](const ReplicateOutputs& r) { return r.cc_res; },
                     "cc_resolution");
    aggregate_metric([](const ReplicateOutputs& r) { return r.fsc_res; },
                     "fsc_resolution");

    // mean +- std of the CC curve across usable replicates
    {
      std::vector<const ShellCurve*> curves;
      for (const auto& ro : outputs) {
        if (!ro.ok) continue;
        if (cfg.exclude_collapsed && ro.any_collapse) continue;
        curves.push_back(&ro.cc_curve);
      }
      if (!curves.empty()) {
        const std::size_t n = curves[0]->size();
        std::vector<double> mean(n, 0.0), sd(n, 0.0);
        for (const auto* c : curves)
          for (std::size_t s = 0; s < n; ++s) mean[s] += c->value[s];
        for (std::size_t s = 0; s < n; ++s) mean[s] /= double(curves.size());
        if (curves.size() > 1) {
          for (const auto* c : curves)
            for (std::size_t s = 0; s < n; ++s)
              sd[s] += (c->value[s] - mean[s]) * (c->value[s] - mean[s]);
          for (std::size_t s = 0; s < n; ++s)
            sd[s] = std::sqrt(sd[s] / double(curves.size() - 1));
        }
        json mc;
        mc["q"] = curves[0]->q;
        mc["mean"] = mean;
        mc["std"] = sd;
        agg["cc_curve"] = mc;
      }
    }
    int n_collapsed = 0, n_failed = 0;
    for (const auto& ro : outputs) {
      if (!ro.ok) ++n_failed;
      if (ro.any_collapse) ++n_collapsed;
    }
    agg["collapsed_runs"] = n_collapsed;
    agg["failed_runs"] = n_failed;
    point_j["aggregate"] = agg;
    sweeps.push_back(point_j);
  }
  report["sweeps"] = sweeps;

  std::ofstream rf(out / "report.json");
  if (!rf) throw FormatError((out / "report.json").string() + ": cannot open");
  rf << report.dump(2) << '\n';
  return report;
}

} // namespace spi
