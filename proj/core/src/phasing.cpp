#include "spi/phasing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spi/parallel.hpp"
#include "spi/rng.hpp"

namespace spi {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_same_grid(const PhaseIterate& psi) {
  if (psi.rho.edge() != psi.bg.edge())
    throw ConfigError("iterate grids disagree in edge length");
}

double meas_norm(const IntensityConstraint& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.i_meas.size(); ++i)
    if (c.constrained[i]) s += c.i_meas[i];
  return std::sqrt(std::max(s, 1e-300));
}

PhaseIterate combine(double a, const PhaseIterate& x, double b, const PhaseIterate& y) {
  PhaseIterate out;
  out.rho = CVolume(x.rho.edge(), x.rho.voxel_size());
  out.bg = Volume(x.bg.edge(), x.bg.voxel_size());
  for (std::size_t i = 0; i < out.rho.size(); ++i)
    out.rho[i] = a * x.rho[i] + b * y.rho[i];
  for (std::size_t i = 0; i < out.bg.size(); ++i)
    out.bg[i] = a * x.bg[i] + b * y.bg[i];
  return out;
}

} // namespace

IntensityConstraint IntensityConstraint::make(const Volume& i_meas, double inner_radius,
                                              double outer_radius) {
  IntensityConstraint c;
  c.i_meas = i_meas;
  c.inner_radius = inner_radius;
  const double grid_radius = i_meas.edge() / 2;
  c.outer_radius = outer_radius > 0.0 ? outer_radius : grid_radius - 7.0;
  if (c.outer_radius <= c.inner_radius)
    throw ConfigError("outer mask radius must exceed inner mask radius");
  c.bins = RadialBins::make(i_meas.edge());
  c.constrained.assign(i_meas.size(), 0);
  for (std::size_t i = 0; i < i_meas.size(); ++i) {
    const double r = i_meas.radius_of(i);
    const bool constr = r >= c.inner_radius && r <= c.outer_radius;
    c.constrained[i] = constr ? 1 : 0;
    if (constr && i_meas[i] < 0.0)
      throw ConfigError("measured intensity negative inside the constrained region");
  }
  return c;
}

Volume calc_intensity(const PhaseIterate& psi, Fft3& fft) {
  check_same_grid(psi);
  CVolume F;
  fft.forward(psi.rho, F);
  Volume out(psi.rho.edge(), psi.rho.voxel_size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::norm(F[i]) + psi.bg[i] * psi.bg[i];
  return out;
}

PhaseIterate project_modulus(const PhaseIterate& psi, const IntensityConstraint& c,
                             Fft3& fft, bool background_enabled) {
  check_same_grid(psi);
  if (psi.rho.edge() != c.i_meas.edge())
    throw ConfigError("iterate and constraint grids disagree");
  CVolume F;
  fft.forward(psi.rho, F);
  PhaseIterate out;
  out.bg = psi.bg;
  for (std::size_t i = 0; i < F.size(); ++i) {
    if (!c.constrained[i]) continue;
    const double icalc = std::norm(F[i]) + psi.bg[i] * psi.bg[i];
    if (icalc > 0.0) {
      const double ratio = std::sqrt(c.i_meas[i] / icalc);
      F[i] *= ratio;
      out.bg[i] *= ratio;
    } else if (c.i_meas[i] > 0.0) {
      if (background_enabled)
        out.bg[i] = std::sqrt(c.i_meas[i]);
      else
        F[i] = std::sqrt(c.i_meas[i]); // zero phase; background slot unused
    }
  }
  fft.inverse(F, out.rho);
  return out;
}

PhaseIterate project_support(const PhaseIterate& psi, long voxel_number,
                             const RadialBins& bins) {
  check_same_grid(psi);
  const std::size_t n = psi.rho.size();
  if (voxel_number <= 0 || static_cast<std::size_t>(voxel_number) >= n)
    throw ConfigError("voxel_number must be in (0, grid volume)");

  PhaseIterate out;
  out.rho = CVolume(psi.rho.edge(), psi.rho.voxel_size());
  out.bg = Volume(psi.bg.edge(), psi.bg.voxel_size());

  // Rank voxels by |rho|^2, ties broken by lower linear index.
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::norm(psi.rho[i]);
  auto better = [&mag](std::uint32_t a, std::uint32_t b) {
    if (mag[a] != mag[b]) return mag[a] > mag[b];
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + voxel_number, order.end(), better);
  for (long k = 0; k < voxel_number; ++k) out.rho[order[k]] = psi.rho[order[k]];

  // Background becomes its radial shell average.
  std::vector<double> shell_sum(bins.num_shells, 0.0);
  for (std::size_t i = 0; i < n; ++i) shell_sum[bins.shell_of[i]] += psi.bg[i];
  for (std::size_t i = 0; i < n; ++i) {
    const int s = bins.shell_of[i];
    out.bg[i] = shell_sum[s] / double(bins.counts[s]);
  }
  return out;
}

double iterate_distance(const PhaseIterate& a, const PhaseIterate& b) {
  const double vol = static_cast<double>(a.rho.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.rho.size(); ++i) s += std::norm(a.rho[i] - b.rho[i]);
  s *= vol; // Parseval: Fourier-side L2
  for (std::size_t i = 0; i < a.bg.size(); ++i) {
    const double d = a.bg[i] - b.bg[i];
    s += d * d;
  }
  return std::sqrt(s);
}

PhaseIterate er_iteration(const PhaseIterate& psi, const IntensityConstraint& c,
                          long voxel_number, Fft3& fft, bool background_enabled,
                          double* err) {
  PhaseIterate next =
      project_modulus(project_support(psi, voxel_number, c.bins), c, fft,
                      background_enabled);
  if (err) {
    const PhaseIterate pm = project_modulus(next, c, fft, background_enabled);
    const PhaseIterate ps = project_support(next, voxel_number, c.bins);
    *err = iterate_distance(pm, ps) / meas_norm(c);
  }
  return next;
}

PhaseIterate dm_iteration(const PhaseIterate& psi, const IntensityConstraint& c,
                          long voxel_number, Fft3& fft, double beta,
                          bool background_enabled, double* err) {
  if (beta == 0.0) throw ConfigError("difference-map beta must be nonzero");
  const double inv = 1.0 / beta;
  const PhaseIterate pm = project_modulus(psi, c, fft, background_enabled);
  const PhaseIterate ps = project_support(psi, voxel_number, c.bins);
  const PhaseIterate fm = combine(1.0 - inv, pm, inv, psi);
  const PhaseIterate fs = combine(1.0 + inv, ps, -inv, psi);
  const PhaseIterate pmfs = project_modulus(fs, c, fft, background_enabled);
  const PhaseIterate psfm = project_support(fm, voxel_number, c.bins);
  if (err) *err = iterate_distance(pmfs, psfm) / meas_norm(c);
  PhaseIterate delta = combine(1.0, pmfs, -1.0, psfm);
  return combine(1.0, psi, beta, delta);
}

PhaseIterate initial_iterate(const IntensityConstraint& c, const PhasingConfig& cfg,
                             int repeat) {
  auto rng = make_engine(derive_seed(cfg.seed, Stage::kPhasing, repeat));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  PhaseIterate psi;
  const int m = c.i_meas.edge();
  psi.rho = CVolume(m, c.i_meas.voxel_size());
  psi.bg = Volume(m, c.i_meas.voxel_size());
  for (std::size_t i = 0; i < psi.rho.size(); ++i)
    psi.rho[i] = cfg.init_density_max * uni(rng);
  if (cfg.background) {
    double mean_amp = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < c.i_meas.size(); ++i)
      if (c.constrained[i]) {
        mean_amp += std::sqrt(c.i_meas[i]);
        ++cnt;
      }
    mean_amp = cnt ? mean_amp / double(cnt) : 0.0;
    const double cap = cfg.init_bg_scale * mean_amp;
    for (std::size_t i = 0; i < psi.bg.size(); ++i) psi.bg[i] = cap * uni(rng);
  }
  return psi;
}

PhasingResult run_phasing(const Volume& i_meas, const PhasingConfig& cfg, int workers) {
  if (cfg.repeats < 1) throw ConfigError("repeats must be >= 1");
  PhasingResult res;
  res.constraint = IntensityConstraint::make(i_meas, cfg.inner_mask, cfg.outer_mask);
  res.solutions.resize(cfg.repeats);
  res.error_trace.resize(cfg.repeats);

  if (workers <= 0) workers = default_workers();
  parallel_for(static_cast<std::size_t>(cfg.repeats), workers, [&](std::size_t rep) {
    Fft3 fft(i_meas.edge());
    PhaseIterate psi = initial_iterate(res.constraint, cfg, static_cast<int>(rep));
    std::vector<double>& trace = res.error_trace[rep];
    for (const auto& [algo, count] : cfg.plan) {
      for (int i = 0; i < count; ++i) {
        double err = 0.0;
        if (algo == PhaseAlgo::kErrorReduction)
          psi = er_iteration(psi, res.constraint, cfg.voxel_number, fft,
                             cfg.background, &err);
        else
          psi = dm_iteration(psi, res.constraint, cfg.voxel_number, fft, cfg.dm_beta,
                             cfg.background, &err);
        trace.push_back(err);
      }
    }
    res.solutions[rep] = std::move(psi);
  });
  return res;
}

namespace {

// Center of mass on the cyclic grid via the phase of the first Fourier mode;
// returns the centroid in raw index coordinates [0, M).
std::array<double, 3> circular_centroid(const CVolume& rho) {
  const int m = rho.edge();
  std::array<double, 3> cen;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> marg(m, 0.0);
    std::size_t i = 0;
    for (int ix = 0; ix < m; ++ix)
      for (int iy = 0; iy < m; ++iy)
        for (int iz = 0; iz < m; ++iz, ++i) {
          const int idx = axis == 0 ? ix : (axis == 1 ? iy : iz);
          marg[idx] += std::abs(rho[i]);
        }
    double re = 0.0, im = 0.0;
    for (int k = 0; k < m; ++k) {
      re += marg[k] * std::cos(2.0 * kPi * k / m);
      im += marg[k] * std::sin(2.0 * kPi * k / m);
    }
    double theta = std::atan2(im, re);
    double p = theta * m / (2.0 * kPi);
    if (p < 0.0) p += m;
    cen[axis] = p;
  }
  return cen;
}

CVolume cyclic_roll(const CVolume& in, int sx, int sy, int sz) {
  const int m = in.edge();
  auto wrap = [m](int v) { return ((v % m) + m) % m; };
  CVolume out(m, in.voxel_size());
  for (int ix = 0; ix < m; ++ix)
    for (int iy = 0; iy < m; ++iy)
      for (int iz = 0; iz < m; ++iz)
        out.at(ix, iy, iz) = in.at(wrap(ix - sx), wrap(iy - sy), wrap(iz - sz));
  return out;
}

void subvoxel_shift(CVolume& rho, const Vec3& frac, Fft3& fft) {
  if (frac.x == 0.0 && frac.y == 0.0 && frac.z == 0.0) return;
  CVolume F;
  fft.forward(rho, F);
  const int m = rho.edge();
  const int c = rho.center();
  std::size_t i = 0;
  for (int ix = 0; ix < m; ++ix)
    for (int iy = 0; iy < m; ++iy)
      for (int iz = 0; iz < m; ++iz, ++i) {
        const double phase = -2.0 * kPi *
                             ((ix - c) * frac.x + (iy - c) * frac.y + (iz - c) * frac.z) /
                             m;
        F[i] *= std::complex<double>(std::cos(phase), std::sin(phase));
      }
  fft.inverse(F, rho);
}

void remove_mean_phase(CVolume& rho, double* removed) {
  std::complex<double> total{0.0, 0.0};
  for (std::size_t i = 0; i < rho.size(); ++i) total += rho[i];
  if (std::abs(total) == 0.0) {
    if (removed) *removed = 0.0;
    return;
  }
  const double phi = std::arg(total);
  const std::complex<double> rot(std::cos(-phi), std::sin(-phi));
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] *= rot;
  if (removed) *removed = phi;
}

CVolume central_inversion(const CVolume& in) {
  const int m = in.edge();
  CVolume out(m, in.voxel_size());
  for (int ix = 0; ix < m; ++ix)
    for (int iy = 0; iy < m; ++iy)
      for (int iz = 0; iz < m; ++iz)
        out.at(ix, iy, iz) = std::conj(in.at(m - 1 - ix, m - 1 - iy, m - 1 - iz));
  return out;
}

double rho_distance2(const CVolume& a, const CVolume& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return s;
}

} // namespace

std::vector<AlignmentInfo> align_solutions(std::vector<PhaseIterate>& solutions) {
  if (solutions.empty()) throw ConfigError("no solutions to align");
  std::vector<AlignmentInfo> infos(solutions.size());
  const int m = solutions[0].rho.edge();
  Fft3 fft(m);
  const int c = solutions[0].rho.center();

  for (std::size_t s = 0; s < solutions.size(); ++s) {
    CVolume& rho = solutions[s].rho;
    AlignmentInfo& info = infos[s];

    const auto cen = circular_centroid(rho);
    Vec3 shift{double(c) - cen[0], double(c) - cen[1], double(c) - cen[2]};
    // wrap into (-M/2, M/2]
    auto wrap_half = [m](double v) {
      while (v > m / 2.0) v -= m;
      while (v <= -m / 2.0) v += m;
      return v;
    };
    shift = {wrap_half(shift.x), wrap_half(shift.y), wrap_half(shift.z)};
    const int sx = static_cast<int>(std::lround(shift.x));
    const int sy = static_cast<int>(std::lround(shift.y));
    const int sz = static_cast<int>(std::lround(shift.z));
    info.integer_shift = {double(sx), double(sy), double(sz)};
    info.subvoxel_shift = {shift.x - sx, shift.y - sy, shift.z - sz};
    rho = cyclic_roll(rho, sx, sy, sz);
    subvoxel_shift(rho, info.subvoxel_shift, fft);
    remove_mean_phase(rho, &info.phase_removed);

    if (s > 0) {
      CVolume inverted = central_inversion(rho);
      double dummy;
      remove_mean_phase(inverted, &dummy);
      if (rho_distance2(inverted, solutions[0].rho) <
          rho_distance2(rho, solutions[0].rho)) {
        rho = std::move(inverted);
        info.inverted = true;
      }
    }
  }
  return infos;
}

AveragedSolution average_solutions(const std::vector<PhaseIterate>& aligned) {
  if (aligned.empty()) throw ConfigError("no solutions to average");
  AveragedSolution avg;
  const int m = aligned[0].rho.edge();
  avg.rho = CVolume(m, aligned[0].rho.voxel_size());
  avg.bg = Volume(m, aligned[0].bg.voxel_size());
  const double inv = 1.0 / double(aligned.size());
  for (const auto& sol : aligned) {
    for (std::size_t i = 0; i < avg.rho.size(); ++i) avg.rho[i] += sol.rho[i] * inv;
    for (std::size_t i = 0; i < avg.bg.size(); ++i) avg.bg[i] += sol.bg[i] * inv;
  }
  return avg;
}

} // namespace spi
