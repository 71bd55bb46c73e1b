#include "spi/emc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "spi/parallel.hpp"
#include "spi/rng.hpp"

namespace spi {

std::uint32_t Pdo::argmax() const {
  std::uint32_t best = 0;
  double bp = -1.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (prob[i] > bp) {
      bp = prob[i];
      best = index[i];
    }
  }
  return best;
}

namespace {

constexpr double kLogFloor = 1e-300; // keeps log() finite on empty model regions

double sample_model(const Volume& model, const Vec3& pos, Interp interp) {
  if (interp == Interp::kTrilinear) return trilinear_sample(model, pos);
  const int m = model.edge();
  const int ix = static_cast<int>(std::lround(pos.x)) + model.center();
  const int iy = static_cast<int>(std::lround(pos.y)) + model.center();
  const int iz = static_cast<int>(std::lround(pos.z)) + model.center();
  if (ix < 0 || iy < 0 || iz < 0 || ix >= m || iy >= m || iz >= m) return 0.0;
  return model.at(ix, iy, iz);
}

// Photon lists flattened for tight E-step loops. "use" lists hold USE_ALL
// pixels only; "merge" lists hold USE_ALL + MERGE_ONLY.
struct CompactFrames {
  std::size_t n_frames = 0;
  std::vector<std::uint32_t> ones_use, multi_use_pix, merge_pix;
  std::vector<double> multi_use_cnt, merge_cnt;
  std::vector<std::size_t> ones_use_off, multi_use_off, merge_off;
  std::vector<double> k_use, k_merge;

  static CompactFrames build(const FrameSet& set, const DetectorModel& det) {
    CompactFrames c;
    c.n_frames = set.frames.size();
    c.ones_use_off.assign(c.n_frames + 1, 0);
    c.multi_use_off.assign(c.n_frames + 1, 0);
    c.merge_off.assign(c.n_frames + 1, 0);
    c.k_use.assign(c.n_frames, 0.0);
    c.k_merge.assign(c.n_frames, 0.0);
    for (std::size_t d = 0; d < c.n_frames; ++d) {
      const SparseFrame& f = set.frames[d];
      validate_frame(f, static_cast<std::uint32_t>(det.num_pixels()));
      for (std::uint32_t p : f.one_photon_pixels) {
        const MaskClass m = det.mask_class[p];
        if (m == MaskClass::kIgnore) continue;
        if (m == MaskClass::kUseAll) {
          c.ones_use.push_back(p);
          c.k_use[d] += 1.0;
        }
        c.merge_pix.push_back(p);
        c.merge_cnt.push_back(1.0);
        c.k_merge[d] += 1.0;
      }
      for (const auto& [p, cnt] : f.multi_photon_pixels) {
        const MaskClass m = det.mask_class[p];
        if (m == MaskClass::kIgnore) continue;
        if (m == MaskClass::kUseAll) {
          c.multi_use_pix.push_back(p);
          c.multi_use_cnt.push_back(cnt);
          c.k_use[d] += cnt;
        }
        c.merge_pix.push_back(p);
        c.merge_cnt.push_back(cnt);
        c.k_merge[d] += cnt;
      }
      c.ones_use_off[d + 1] = c.ones_use.size();
      c.multi_use_off[d + 1] = c.multi_use_pix.size();
      c.merge_off[d + 1] = c.merge_pix.size();
    }
    return c;
  }
};

// One-iteration workspace shared by the public operations and run_emc.
class Engine {
public:
  Engine(const FrameSet& frames, const DetectorModel& det, const RotationSet& rot,
         int grid_size, int workers, double prune_rel)
      : det_(det),
        rot_(rot),
        frames_(CompactFrames::build(frames, det)),
        grid_size_(grid_size > 0 ? grid_size : det.suggested_grid_size()),
        workers_(workers <= 0 ? default_workers() : workers),
        prune_rel_(prune_rel) {
    n_pix_ = det.num_pixels();
    n_rot_ = rot.size();
    matrices_.reserve(n_rot_);
    for (std::size_t r = 0; r < n_rot_; ++r)
      matrices_.push_back(rot.quaternions[r].to_matrix());
    block_ = std::max<std::size_t>(
        8, std::min<std::size_t>(n_rot_, (16u << 20) / (sizeof(double) * n_pix_)));
  }

  int grid_size() const { return grid_size_; }
  const CompactFrames& frames() const { return frames_; }

  // Expands the model into every orientation, filling sum_use W per rotation
  // and the scale-independent likelihood term A(d,r) = sum_photons K log W.
  void expansion_pass(const Volume& model, Interp interp) {
    sumw_use_.assign(n_rot_, 0.0);
    a_.assign(frames_.n_frames * n_rot_, 0.0);

    std::vector<double> wblock(block_ * n_pix_);
    std::vector<double> lwt(block_ * n_pix_); // transposed: [pixel][r_in_block]
    for (std::size_t r0 = 0; r0 < n_rot_; r0 += block_) {
      const std::size_t nb = std::min(block_, n_rot_ - r0);
      parallel_for(nb, workers_, [&](std::size_t j) {
        double* w = wblock.data() + j * n_pix_;
        const Mat3& rm = matrices_[r0 + j];
        double s = 0.0;
        for (std::size_t p = 0; p < n_pix_; ++p) {
          if (det_.mask_class[p] == MaskClass::kIgnore) {
            w[p] = 0.0;
            continue;
          }
          const double v =
              det_.pixel_weight[p] * sample_model(model, rm.apply(det_.pixel_q[p]), interp);
          w[p] = v;
          if (det_.mask_class[p] == MaskClass::kUseAll) s += v;
        }
        sumw_use_[r0 + j] = s;
      });
      // transpose + log, parallel over pixel ranges (disjoint lwt rows)
      parallel_for(n_pix_, workers_, [&](std::size_t p) {
        double* row = lwt.data() + p * nb;
        for (std::size_t j = 0; j < nb; ++j)
          row[j] = std::log(std::max(wblock[j * n_pix_ + p], kLogFloor));
      });
      parallel_for(frames_.n_frames, workers_, [&](std::size_t d) {
        double* acc = a_.data() + d * n_rot_ + r0;
        for (std::size_t i = frames_.ones_use_off[d]; i < frames_.ones_use_off[d + 1];
             ++i) {
          const double* row = lwt.data() + std::size_t(frames_.ones_use[i]) * nb;
          for (std::size_t j = 0; j < nb; ++j) acc[j] += row[j];
        }
        for (std::size_t i = frames_.multi_use_off[d]; i < frames_.multi_use_off[d + 1];
             ++i) {
          const double* row = lwt.data() + std::size_t(frames_.multi_use_pix[i]) * nb;
          const double cnt = frames_.multi_use_cnt[i];
          for (std::size_t j = 0; j < nb; ++j) acc[j] += cnt * row[j];
        }
      });
    }
  }

  // E-step from the cached expansion. Returns per-frame sparse PDOs and the
  // mean observed-data log likelihood (at beta = 1) across frames.
  std::vector<Pdo> pdos(double beta, const std::vector<double>& scales,
                        double* mean_loglik) const {
    std::vector<Pdo> out(frames_.n_frames);
    std::vector<double> ll_obs(frames_.n_frames, 0.0);
    parallel_for(frames_.n_frames, workers_, [&](std::size_t d) {
      const double* a = a_.data() + d * n_rot_;
      const double scale = scales[d];
      const double klogs =
          frames_.k_use[d] > 0.0 ? frames_.k_use[d] * std::log(scale) : 0.0;
      // log likelihoods for this frame
      std::vector<double> ll(n_rot_);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < n_rot_; ++r) {
        ll[r] = a[r] + klogs - scale * sumw_use_[r];
        mx = std::max(mx, ll[r]);
      }
      if (!std::isfinite(mx))
        throw StageError("frame " + std::to_string(d) +
                         ": no orientation has finite likelihood");
      double z1 = 0.0;
      std::vector<double> p(n_rot_);
      for (std::size_t r = 0; r < n_rot_; ++r) {
        p[r] = rot_.weights[r] * std::exp(beta * (ll[r] - mx));
        z1 += rot_.weights[r] * std::exp(ll[r] - mx);
      }
      ll_obs[d] = mx + std::log(z1);
      // prune relative to the peak, then normalize what is kept
      double pmax = 0.0;
      for (std::size_t r = 0; r < n_rot_; ++r) pmax = std::max(pmax, p[r]);
      const double floor = pmax * prune_rel_;
      Pdo& pdo = out[d];
      double kept = 0.0;
      for (std::size_t r = 0; r < n_rot_; ++r) {
        if (p[r] >= floor && p[r] > 0.0) {
          pdo.index.push_back(static_cast<std::uint32_t>(r));
          pdo.prob.push_back(p[r]);
          kept += p[r];
        }
      }
      for (double& v : pdo.prob) v /= kept;
    });
    if (mean_loglik) {
      double s = 0.0;
      for (double v : ll_obs) s += v;
      *mean_loglik = frames_.n_frames ? s / double(frames_.n_frames) : 0.0;
    }
    return out;
  }

  std::vector<double> ml_scales(const std::vector<Pdo>& pdos) const {
    std::vector<double> scales(frames_.n_frames, 0.0);
    parallel_for(frames_.n_frames, workers_, [&](std::size_t d) {
      if (frames_.k_use[d] <= 0.0) return; // flagged by caller
      double denom = 0.0;
      const Pdo& p = pdos[d];
      for (std::size_t i = 0; i < p.index.size(); ++i)
        denom += p.prob[i] * sumw_use_[p.index[i]];
      scales[d] = denom > 0.0 ? frames_.k_use[d] / denom : 0.0;
    });
    return scales;
  }

  Volume merge(const std::vector<Pdo>& pdos, const std::vector<double>& scales,
               std::size_t* zero_weight_voxels, Interp interp) const {
    // Invert the sparse PDOs into per-rotation (frame, prob) lists (CSR).
    std::vector<std::size_t> cnt(n_rot_ + 1, 0);
    for (const auto& p : pdos)
      for (std::uint32_t r : p.index) ++cnt[r + 1];
    for (std::size_t r = 0; r < n_rot_; ++r) cnt[r + 1] += cnt[r];
    std::vector<std::uint32_t> inv_frame(cnt[n_rot_]);
    std::vector<double> inv_prob(cnt[n_rot_]);
    {
      std::vector<std::size_t> fill(cnt.begin(), cnt.end() - 1);
      for (std::size_t d = 0; d < pdos.size(); ++d)
        for (std::size_t i = 0; i < pdos[d].index.size(); ++i) {
          const std::uint32_t r = pdos[d].index[i];
          inv_frame[fill[r]] = static_cast<std::uint32_t>(d);
          inv_prob[fill[r]] = pdos[d].prob[i];
          ++fill[r];
        }
    }

    Volume num(grid_size_), den(grid_size_);
    std::vector<double> tomo(block_ * n_pix_);
    std::vector<double> denom_r(block_);
    for (std::size_t r0 = 0; r0 < n_rot_; r0 += block_) {
      const std::size_t nb = std::min(block_, n_rot_ - r0);
      parallel_for(nb, workers_, [&](std::size_t j) {
        const std::size_t r = r0 + j;
        double* t = tomo.data() + j * n_pix_;
        std::fill(t, t + n_pix_, 0.0);
        double dr = 0.0;
        for (std::size_t i = cnt[r]; i < cnt[r + 1]; ++i) {
          const std::uint32_t d = inv_frame[i];
          const double prob = inv_prob[i];
          dr += prob * scales[d];
          for (std::size_t k = frames_.merge_off[d]; k < frames_.merge_off[d + 1]; ++k)
            t[frames_.merge_pix[k]] += prob * frames_.merge_cnt[k];
        }
        denom_r[j] = dr;
      });
      // Scatter serially in rotation order: voxel sums accumulate in a fixed
      // order, independent of the worker count.
      for (std::size_t j = 0; j < nb; ++j) {
        if (denom_r[j] <= 0.0) continue;
        const double* t = tomo.data() + j * n_pix_;
        const Mat3& rm = matrices_[r0 + j];
        const double inv_dr = 1.0 / denom_r[j];
        for (std::size_t p = 0; p < n_pix_; ++p) {
          if (det_.mask_class[p] == MaskClass::kIgnore) continue;
          const double val = t[p] * inv_dr / det_.pixel_weight[p];
          const Vec3 pos = rm.apply(det_.pixel_q[p]);
          if (interp == Interp::kTrilinear) {
            trilinear_scatter(num, den, pos, val);
          } else {
            const int m = num.edge();
            const int ix = static_cast<int>(std::lround(pos.x)) + num.center();
            const int iy = static_cast<int>(std::lround(pos.y)) + num.center();
            const int iz = static_cast<int>(std::lround(pos.z)) + num.center();
            if (ix >= 0 && iy >= 0 && iz >= 0 && ix < m && iy < m && iz < m) {
              num.at(ix, iy, iz) += val;
              den.at(ix, iy, iz) += 1.0;
            }
          }
        }
      }
    }

    // Friedel pairs share their accumulated counts before normalization, so
    // the output satisfies I(q) = I(-q) exactly.
    const int m = grid_size_;
    Volume model(grid_size_, det_.voxel_size);
    std::size_t zeros = 0;
    for (int ix = 0; ix < m; ++ix)
      for (int iy = 0; iy < m; ++iy)
        for (int iz = 0; iz < m; ++iz) {
          const std::size_t i = num.index_of(ix, iy, iz);
          const std::size_t a = num.index_of(m - 1 - ix, m - 1 - iy, m - 1 - iz);
          if (a < i) continue;
          const double n2 = num[i] + num[a];
          const double d2 = den[i] + den[a];
          const double v = d2 > 0.0 ? n2 / d2 : 0.0;
          if (d2 <= 0.0) zeros += (a == i) ? 1 : 2;
          model[i] = v;
          model[a] = v;
        }
    if (zero_weight_voxels) *zero_weight_voxels = zeros;
    return model;
  }

  const std::vector<double>& sumw_use() const { return sumw_use_; }
  std::size_t n_rot() const { return n_rot_; }

private:
  const DetectorModel& det_;
  const RotationSet& rot_;
  CompactFrames frames_;
  int grid_size_;
  int workers_;
  double prune_rel_;
  std::size_t n_pix_ = 0, n_rot_ = 0, block_ = 0;
  std::vector<Mat3> matrices_;
  std::vector<double> sumw_use_;
  std::vector<double> a_;
};

FrameSet select_frames(const FrameSet& in, FrameSelection sel) {
  if (sel == FrameSelection::kAll) return in;
  FrameSet out;
  out.num_pixels = in.num_pixels;
  out.stream_seed = in.stream_seed;
  for (std::size_t i = 0; i < in.frames.size(); ++i) {
    const bool odd = (i % 2 == 0); // 1st, 3rd, ... in 1-based counting
    if ((sel == FrameSelection::kOddOnly) == odd) out.frames.push_back(in.frames[i]);
  }
  return out;
}

} // namespace

std::vector<double> expand(const Volume& model, const DetectorModel& det,
                           const Quat& rotation, Interp interp) {
  const Mat3 rm = rotation.to_matrix();
  std::vector<double> w(det.num_pixels(), 0.0);
  for (std::size_t p = 0; p < det.num_pixels(); ++p) {
    if (det.mask_class[p] == MaskClass::kIgnore) continue;
    w[p] = det.pixel_weight[p] * sample_model(model, rm.apply(det.pixel_q[p]), interp);
  }
  return w;
}

double frame_log_likelihood(const SparseFrame& frame, const std::vector<double>& w,
                            const DetectorModel& det, double scale) {
  if (scale <= 0.0) throw ConfigError("scale must be positive");
  double ll = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p)
    if (det.mask_class[p] == MaskClass::kUseAll) ll -= scale * w[p];
  auto photon = [&](std::uint32_t pix, double cnt) {
    if (det.mask_class[pix] != MaskClass::kUseAll) return;
    ll += cnt * std::log(std::max(scale * w[pix], kLogFloor));
  };
  for (std::uint32_t p : frame.one_photon_pixels) photon(p, 1.0);
  for (const auto& [p, c] : frame.multi_photon_pixels) photon(p, double(c));
  return ll;
}

std::vector<Pdo> e_step(const FrameSet& frames, const Volume& model,
                        const DetectorModel& det, const RotationSet& rotations,
                        const std::vector<double>& scales, double beta, int workers) {
  if (beta <= 0.0 || beta > 1.0) throw ConfigError("beta must be in (0, 1]");
  Engine eng(frames, det, rotations, model.edge(), workers, 1e-10);
  eng.expansion_pass(model, Interp::kTrilinear);
  return eng.pdos(beta, scales, nullptr);
}

std::vector<double> update_scales(const FrameSet& frames, const std::vector<Pdo>& pdos,
                                  const Volume& model, const DetectorModel& det,
                                  const RotationSet& rotations, int workers) {
  Engine eng(frames, det, rotations, model.edge(), workers, 1e-10);
  eng.expansion_pass(model, Interp::kTrilinear);
  return eng.ml_scales(pdos);
}

Volume compress(const FrameSet& frames, const std::vector<Pdo>& pdos,
                const std::vector<double>& scales, const DetectorModel& det,
                const RotationSet& rotations, int grid_size,
                std::size_t* zero_weight_voxels, Interp interp, int workers) {
  bool any = false;
  for (const auto& f : frames.frames)
    if (f.total_photons() > 0) any = true;
  if (!any) throw ConfigError("compress needs at least one frame with photons");
  Engine eng(frames, det, rotations, grid_size, workers, 1e-10);
  return eng.merge(pdos, scales, zero_weight_voxels, interp);
}

double beta_at(const EmcConfig& cfg, int iteration) {
  if (cfg.beta_interval < 1) throw ConfigError("beta_schedule interval must be >= 1");
  if (cfg.beta_start <= 0.0 || cfg.beta_start > 1.0)
    throw ConfigError("beta must be in (0, 1]");
  const int steps = (iteration - 1) / cfg.beta_interval;
  double b = cfg.beta_start * std::pow(cfg.beta_factor, steps);
  return std::min(b, 1.0);
}

EmcResult run_emc(const FrameSet& frames_in, const DetectorModel& det,
                  const RotationSet& rotations, const EmcConfig& cfg, int workers) {
  const FrameSet selected = select_frames(frames_in, cfg.selection);

  // Frames without USE_ALL photons carry no orientation information and have
  // a degenerate (zero) ML scale; drop them up front and record which.
  EmcResult res;
  FrameSet kept;
  kept.num_pixels = selected.num_pixels;
  kept.stream_seed = selected.stream_seed;
  for (std::size_t d = 0; d < selected.frames.size(); ++d) {
    std::uint64_t k_use = 0;
    const SparseFrame& f = selected.frames[d];
    for (std::uint32_t p : f.one_photon_pixels)
      if (det.mask_class[p] == MaskClass::kUseAll) ++k_use;
    for (const auto& [p, c] : f.multi_photon_pixels)
      if (det.mask_class[p] == MaskClass::kUseAll) k_use += c;
    if (k_use > 0) {
      res.kept_frames.push_back(d);
      kept.frames.push_back(f);
    } else {
      res.skipped_frames.push_back(d);
    }
  }
  if (kept.frames.empty())
    throw StageError("no frames with USE_ALL photons; cannot run orientation recovery");

  Engine eng(kept, det, rotations, cfg.grid_size, workers, cfg.pdo_prune_rel);

  // Random starting model: uniform(0,1) per voxel.
  Volume model(eng.grid_size(), det.voxel_size);
  {
    auto rng = make_engine(derive_seed(cfg.seed, Stage::kEmc, 0x6d6f64656cULL));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t i = 0; i < model.size(); ++i) model[i] = uni(rng);
  }
  std::vector<double> scales(kept.frames.size(), 1.0);

  std::ofstream log;
  if (!cfg.log_file.empty()) {
    log.open(cfg.log_file, std::ios::app);
    if (!log) throw FormatError(cfg.log_file + ": cannot open log for append");
    log << "# iter beta rms_change mean_loglik argmax_entropy top1pct_frac "
           "zero_wt_voxels time_s\n";
  }

  const std::size_t top_k =
      std::max<std::size_t>(1, (eng.n_rot() + 99) / 100); // ceil(1% of rotations)

  for (int iter = 1; iter <= cfg.num_iter; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    const double beta = beta_at(cfg, iter);

    eng.expansion_pass(model, Interp::kTrilinear);
    double mean_ll = 0.0;
    const std::vector<Pdo> pdos = eng.pdos(beta, scales, &mean_ll);
    if (cfg.need_scaling) scales = eng.ml_scales(pdos);

    EmcIterationStats st;
    st.iteration = iter;
    st.beta = beta;
    st.mean_log_likelihood = mean_ll;

    Volume next = eng.merge(pdos, scales, &st.zero_weight_voxels, Interp::kTrilinear);

    double ss = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double dlt = next[i] - model[i];
      ss += dlt * dlt;
    }
    st.rms_change = std::sqrt(ss / double(next.size()));
    model = std::move(next);

    // Orientation concentration diagnostics: histogram of per-frame argmax.
    std::vector<std::uint32_t> hist(eng.n_rot(), 0);
    for (const auto& p : pdos) ++hist[p.argmax()];
    double entropy = 0.0;
    for (std::uint32_t h : hist) {
      if (h == 0) continue;
      const double f = double(h) / double(pdos.size());
      entropy -= f * std::log(f);
    }
    st.argmax_entropy = entropy;
    std::vector<std::uint32_t> sorted = hist;
    std::nth_element(sorted.begin(), sorted.begin() + std::min(top_k, sorted.size()) - 1,
                     sorted.end(), std::greater<>());
    std::uint64_t covered = 0;
    for (std::size_t i = 0; i < std::min(top_k, sorted.size()); ++i) covered += sorted[i];
    st.top_orientation_fraction = double(covered) / double(pdos.size());
    st.collapse = st.top_orientation_fraction > 0.9;
    // Early annealing routinely passes through a concentrated transient and
    // recovers; the run-level flag reflects the final state only.
    res.collapse_flagged = st.collapse;

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log.is_open()) {
      log << st.iteration << ' ' << st.beta << ' ' << st.rms_change << ' '
          << st.mean_log_likelihood << ' ' << st.argmax_entropy << ' '
          << st.top_orientation_fraction << ' ' << st.zero_weight_voxels << ' ' << secs
          << '\n';
      log.flush();
    }
    res.trace.push_back(st);
  }

  res.intensity = std::move(model);
  res.scales = std::move(scales);
  return res;
}

} // namespace spi
