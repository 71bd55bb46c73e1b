#include "spi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "spi/fft.hpp"
#include "spi/parallel.hpp"
#include "spi/rotations.hpp"

namespace spi {

namespace {

void check_same(const int a, const int b) {
  if (a != b) throw ConfigError("volumes disagree in edge length");
}

// Shells fully or partially inside the reconstructed sphere.
int max_shell(int edge) { return edge / 2; }

ShellCurve new_curve(int edge, double voxel_size) {
  ShellCurve c;
  c.voxel_size = voxel_size;
  const int n = max_shell(edge) + 1;
  c.q.resize(n);
  c.value.assign(n, 0.0);
  c.count.assign(n, 0);
  for (int s = 0; s < n; ++s) c.q[s] = (s + 0.5) * voxel_size;
  return c;
}

} // namespace

ShellCurve fsc(const CVolume& f1, const CVolume& f2) {
  check_same(f1.edge(), f2.edge());
  const RadialBins bins = RadialBins::make(f1.edge());
  ShellCurve curve = new_curve(f1.edge(), f1.voxel_size());
  const int nshell = static_cast<int>(curve.size());
  std::vector<double> num(nshell, 0.0), den1(nshell, 0.0), den2(nshell, 0.0);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const int s = bins.shell_of[i];
    if (s >= nshell) continue;
    num[s] += std::real(f1[i] * std::conj(f2[i]));
    den1[s] += std::norm(f1[i]);
    den2[s] += std::norm(f2[i]);
    ++curve.count[s];
  }
  for (int s = 0; s < nshell; ++s) {
    const double d = std::sqrt(den1[s] * den2[s]);
    curve.value[s] = d > 0.0 ? num[s] / d : 0.0;
  }
  return curve;
}

ShellCurve fsc_densities(const CVolume& rho1, const CVolume& rho2) {
  check_same(rho1.edge(), rho2.edge());
  Fft3 fft(rho1.edge());
  CVolume f1, f2;
  fft.forward(rho1, f1);
  fft.forward(rho2, f2);
  return fsc(f1, f2);
}

ShellCurve cc_half(const Volume& i1, const Volume& i2) {
  check_same(i1.edge(), i2.edge());
  const RadialBins bins = RadialBins::make(i1.edge());
  ShellCurve curve = new_curve(i1.edge(), i1.voxel_size());
  const int nshell = static_cast<int>(curve.size());
  std::vector<double> s1(nshell, 0.0), s2(nshell, 0.0), s11(nshell, 0.0),
      s22(nshell, 0.0), s12(nshell, 0.0);
  for (std::size_t i = 0; i < i1.size(); ++i) {
    const int s = bins.shell_of[i];
    if (s >= nshell) continue;
    s1[s] += i1[i];
    s2[s] += i2[i];
    s11[s] += i1[i] * i1[i];
    s22[s] += i2[i] * i2[i];
    s12[s] += i1[i] * i2[i];
    ++curve.count[s];
  }
  for (int s = 0; s < nshell; ++s) {
    const double n = static_cast<double>(curve.count[s]);
    if (n < 2) continue;
    const double cov = s12[s] - s1[s] * s2[s] / n;
    const double v1 = s11[s] - s1[s] * s1[s] / n;
    const double v2 = s22[s] - s2[s] * s2[s] / n;
    const double d = std::sqrt(v1 * v2);
    curve.value[s] = d > 0.0 ? cov / d : 0.0;
  }
  return curve;
}

ShellCurve prtf_from_fourier(const std::vector<CVolume>& fouriers) {
  if (fouriers.size() < 2) throw ConfigError("PRTF needs at least two solutions");
  const int edge = fouriers[0].edge();
  for (const auto& f : fouriers) check_same(edge, f.edge());
  const RadialBins bins = RadialBins::make(edge);
  ShellCurve curve = new_curve(edge, fouriers[0].voxel_size());
  const int nshell = static_cast<int>(curve.size());
  std::vector<double> shell_sum(nshell, 0.0);

  const std::size_t n = fouriers[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    const int s = bins.shell_of[i];
    if (s >= nshell) continue;
    std::complex<double> acc{0.0, 0.0};
    int included = 0;
    for (const auto& f : fouriers) {
      const double amp = std::abs(f[i]);
      if (amp <= 0.0) continue; // undefined phase
      acc += f[i] / amp;
      ++included;
    }
    if (included == 0) continue;
    shell_sum[s] += std::abs(acc) / double(included);
    ++curve.count[s];
  }
  for (int s = 0; s < nshell; ++s)
    if (curve.count[s] > 0) curve.value[s] = shell_sum[s] / double(curve.count[s]);
  return curve;
}

ShellCurve prtf(const std::vector<CVolume>& aligned_densities) {
  if (aligned_densities.size() < 2)
    throw ConfigError("PRTF needs at least two solutions");
  Fft3 fft(aligned_densities[0].edge());
  std::vector<CVolume> fs(aligned_densities.size());
  for (std::size_t i = 0; i < aligned_densities.size(); ++i)
    fft.forward(aligned_densities[i], fs[i]);
  return prtf_from_fourier(fs);
}

double half_bit_threshold(double n_voxels) {
  const double n_eff = std::max(n_voxels, 1.0);
  const double inv = 1.0 / std::sqrt(n_eff);
  return (0.2071 + 1.9102 * inv) / (1.2071 + 0.9102 * inv);
}

CrossingResult threshold_crossing(const ShellCurve& curve, const Threshold& thr) {
  if (curve.size() == 0) throw ConfigError("empty shell curve");
  CrossingResult res;
  auto threshold_at = [&](std::size_t s) {
    return thr.kind == Threshold::Kind::kFixed
               ? thr.value
               : half_bit_threshold(static_cast<double>(curve.count[s]));
  };
  for (std::size_t s = 1; s < curve.size(); ++s) {
    if (curve.count[s] == 0) continue;
    if (curve.value[s] < threshold_at(s)) {
      res.crossed = true;
      res.first_shell = static_cast<int>(s);
      res.q_first = curve.q[s];
      res.resolution_first = 1.0 / res.q_first;
      break;
    }
  }
  if (res.crossed) {
    // first shell after which the curve never recovers
    int last = res.first_shell;
    for (std::size_t s = curve.size(); s-- > 1;) {
      if (curve.count[s] == 0) continue;
      if (curve.value[s] >= threshold_at(s)) {
        last = static_cast<int>(s + 1);
        break;
      }
      last = static_cast<int>(s);
    }
    if (last < static_cast<int>(curve.size())) {
      res.last_shell = last;
      res.q_last = curve.q[last];
      res.resolution_last = 1.0 / res.q_last;
    } else {
      res.last_shell = res.first_shell;
      res.q_last = res.q_first;
      res.resolution_last = res.resolution_first;
    }
  }
  return res;
}

namespace {

struct RangeSamples {
  std::vector<Vec3> coords;
  std::vector<double> ref_vals;
};

RangeSamples collect_range(const Volume& ref, double rmin, double rmax) {
  RangeSamples rs;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double r = ref.radius_of(i);
    if (r < rmin || r > rmax) continue;
    rs.coords.push_back(ref.coords_of(i));
    rs.ref_vals.push_back(ref[i]);
  }
  return rs;
}

double pearson_at(const Volume& moving, const RangeSamples& rs, const Quat& q) {
  const Mat3 rm = q.to_matrix();
  double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
  const double n = static_cast<double>(rs.coords.size());
  for (std::size_t i = 0; i < rs.coords.size(); ++i) {
    const double a = rs.ref_vals[i];
    const double b = trilinear_sample(moving, rm.apply(rs.coords[i]));
    s1 += a;
    s2 += b;
    s11 += a * a;
    s22 += b * b;
    s12 += a * b;
  }
  const double cov = s12 - s1 * s2 / n;
  const double v1 = s11 - s1 * s1 / n;
  const double v2 = s22 - s2 * s2 / n;
  const double d = std::sqrt(v1 * v2);
  return d > 0.0 ? cov / d : 0.0;
}

} // namespace

RotAlignResult align_rotation(const Volume& ref, const Volume& moving, double rmin,
                              double rmax, int workers) {
  check_same(ref.edge(), moving.edge());
  if (rmax <= rmin) throw ConfigError("empty alignment radius range");
  const RangeSamples rs = collect_range(ref, rmin, rmax);
  if (rs.coords.size() < 16) throw ConfigError("alignment radius range too thin");
  if (workers <= 0) workers = default_workers();

  // Coarse pass over the quasi-uniform grid.
  static const RotationSet coarse = sample_rotations(2);
  std::vector<double> cc(coarse.size());
  parallel_for(coarse.size(), workers, [&](std::size_t r) {
    cc[r] = pearson_at(moving, rs, coarse.quaternions[r]);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < coarse.size(); ++r)
    if (cc[r] > cc[best]) best = r;

  std::vector<double> sorted_cc = cc;
  std::nth_element(sorted_cc.begin(), sorted_cc.begin() + sorted_cc.size() / 2,
                   sorted_cc.end());
  const double median = sorted_cc[sorted_cc.size() / 2];

  RotAlignResult res;
  // Isotropic inputs leave the correlation flat in rotation up to
  // interpolation noise; any maximizer is then as good as any other.
  res.degenerate = (cc[best] - median) < 1e-3;

  Quat q = coarse.quaternions[best];
  double best_cc = cc[best];

  // Local refinement: fixed 26-direction perturbations with halving steps.
  std::vector<Vec3> dirs;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        dirs.push_back(Vec3{double(a), double(b), double(c)}.normalized());
      }
  double step = 0.15; // rad, about the coarse grid spacing
  while (step > 2e-3) {
    std::vector<double> cand_cc(dirs.size());
    std::vector<Quat> cand_q(dirs.size());
    parallel_for(dirs.size(), workers, [&](std::size_t i) {
      cand_q[i] = (Quat::from_axis_angle(dirs[i], step) * q).normalized();
      cand_cc[i] = pearson_at(moving, rs, cand_q[i]);
    });
    std::size_t bi = 0;
    for (std::size_t i = 1; i < dirs.size(); ++i)
      if (cand_cc[i] > cand_cc[bi]) bi = i;
    if (cand_cc[bi] > best_cc) {
      best_cc = cand_cc[bi];
      q = cand_q[bi];
    } else {
      step *= 0.5;
    }
  }

  res.rotation = q;
  res.cc = best_cc;
  res.aligned = Volume(ref.edge(), ref.voxel_size());
  const Mat3 rm = q.to_matrix();
  for (std::size_t i = 0; i < res.aligned.size(); ++i)
    res.aligned[i] = trilinear_sample(moving, rm.apply(res.aligned.coords_of(i)));
  return res;
}

std::vector<double> powder_sum(const FrameSet& frames) {
  std::vector<double> img(frames.num_pixels, 0.0);
  for (const auto& f : frames.frames) {
    for (std::uint32_t p : f.one_photon_pixels) img[p] += 1.0;
    for (const auto& [p, c] : f.multi_photon_pixels) img[p] += double(c);
  }
  return img;
}

Histogram density_histogram(const CVolume& rho, const std::vector<std::uint8_t>& support,
                            int nbins) {
  if (support.size() != rho.size())
    throw ConfigError("support mask size does not match volume");
  if (nbins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<double> vals;
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (support[i]) vals.push_back(std::abs(rho[i]));
  if (vals.empty()) throw ConfigError("empty support mask");

  Histogram h;
  const double lo = 0.0;
  const double hi = *std::max_element(vals.begin(), vals.end()) * (1.0 + 1e-12);
  h.edges.resize(nbins + 1);
  for (int b = 0; b <= nbins; ++b) h.edges[b] = lo + (hi - lo) * b / nbins;
  h.counts.assign(nbins, 0);
  const double width = (hi - lo) / nbins;
  for (double v : vals) {
    int b = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
    b = std::clamp(b, 0, nbins - 1);
    ++h.counts[b];
  }

  // Sarle's bimodality coefficient from sample moments.
  const double n = static_cast<double>(vals.size());
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : vals) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 > 0.0) {
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2);
    h.bimodality = (skew * skew + 1.0) / kurt;
  }
  return h;
}

void write_curve(const ShellCurve& curve, const std::string& path,
                 const std::string& header) {
  std::ofstream f(path);
  if (!f) throw FormatError(path + ": cannot open for writing");
  const bool csv = path.size() > 4 && path.substr(path.size() - 4) == ".csv";
  const char sep = csv ? ',' : ' ';
  if (!header.empty()) f << "# " << header << '\n';
  f.precision(10);
  for (std::size_t s = 0; s < curve.size(); ++s)
    f << curve.q[s] << sep << curve.value[s] << '\n';
  if (!f) throw FormatError(path + ": write failed");
}

} // namespace spi
