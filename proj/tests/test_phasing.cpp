#include <doctest.h>

#include <random>

#include "spi/phasing.hpp"
#include "spi/rng.hpp"
#include "test_helpers.hpp"

using namespace spi;

namespace {

PhaseIterate random_iterate(int m, std::uint64_t seed, double bg_scale = 1.0) {
  PhaseIterate psi;
  psi.rho = CVolume(m);
  psi.bg = Volume(m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t i = 0; i < psi.rho.size(); ++i) psi.rho[i] = {uni(rng), uni(rng)};
  for (std::size_t i = 0; i < psi.bg.size(); ++i)
    psi.bg[i] = bg_scale * std::abs(uni(rng));
  return psi;
}

Volume random_intensity(int m, std::uint64_t seed) {
  Volume v(m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.1, 4.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = uni(rng);
  return v;
}

// Test-side projections, built on the naive DFT; used as the independent
// oracle for the ER/DM update formulas.
PhaseIterate naive_project_modulus(const PhaseIterate& psi, const IntensityConstraint& c) {
  CVolume F = test::naive_dft(psi.rho, true);
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
      out.bg[i] = std::sqrt(c.i_meas[i]);
    }
  }
  out.rho = test::naive_dft(F, false);
  return out;
}

PhaseIterate naive_project_support(const PhaseIterate& psi, long n) {
  const std::size_t v = psi.rho.size();
  std::vector<std::size_t> order(v);
  for (std::size_t i = 0; i < v; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::norm(psi.rho[a]), mb = std::norm(psi.rho[b]);
    return ma != mb ? ma > mb : a < b;
  });
  PhaseIterate out;
  out.rho = CVolume(psi.rho.edge());
  out.bg = Volume(psi.bg.edge());
  for (long i = 0; i < n; ++i) out.rho[order[i]] = psi.rho[order[i]];
  // radial average
  std::vector<double> sum(64, 0.0), cnt(64, 0.0);
  for (std::size_t i = 0; i < v; ++i) {
    const int s = int(std::floor(psi.bg.radius_of(i)));
    sum[s] += psi.bg[i];
    cnt[s] += 1.0;
  }
  for (std::size_t i = 0; i < v; ++i) {
    const int s = int(std::floor(psi.bg.radius_of(i)));
    out.bg[i] = sum[s] / cnt[s];
  }
  return out;
}

PhaseIterate lin(double a, const PhaseIterate& x, double b, const PhaseIterate& y) {
  PhaseIterate out;
  out.rho = CVolume(x.rho.edge());
  out.bg = Volume(x.bg.edge());
  for (std::size_t i = 0; i < out.rho.size(); ++i)
    out.rho[i] = a * x.rho[i] + b * y.rho[i];
  for (std::size_t i = 0; i < out.bg.size(); ++i) out.bg[i] = a * x.bg[i] + b * y.bg[i];
  return out;
}

} // namespace

TEST_CASE("calc_intensity: zero density leaves exactly B^2") {
  PhaseIterate psi = random_iterate(9, 1);
  for (std::size_t i = 0; i < psi.rho.size(); ++i) psi.rho[i] = 0.0;
  Fft3 fft(9);
  const Volume I = calc_intensity(psi, fft);
  for (std::size_t i = 0; i < I.size(); ++i)
    CHECK(I[i] == doctest::Approx(psi.bg[i] * psi.bg[i]).epsilon(1e-14));
}

TEST_CASE("calc_intensity: unit voxel at the origin gives flat unit intensity") {
  PhaseIterate psi;
  psi.rho = CVolume(9);
  psi.bg = Volume(9);
  const int c = psi.rho.center();
  psi.rho.at(c, c, c) = 1.0;
  Fft3 fft(9);
  const Volume I = calc_intensity(psi, fft);
  for (std::size_t i = 0; i < I.size(); ++i)
    CHECK(I[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("calc_intensity satisfies the Parseval sum rule") {
  PhaseIterate psi = random_iterate(9, 2);
  Fft3 fft(9);
  const Volume I = calc_intensity(psi, fft);
  double total = 0.0, rho2 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < I.size(); ++i) total += I[i];
  for (std::size_t i = 0; i < psi.rho.size(); ++i) rho2 += std::norm(psi.rho[i]);
  for (std::size_t i = 0; i < psi.bg.size(); ++i) b2 += psi.bg[i] * psi.bg[i];
  const double v = double(psi.rho.size());
  CHECK(total == doctest::Approx(v * rho2 + b2).epsilon(1e-12));
}

TEST_CASE("project_modulus: exact data is a fixed point") {
  PhaseIterate psi = random_iterate(9, 3);
  Fft3 fft(9);
  const Volume I = calc_intensity(psi, fft);
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);
  const PhaseIterate out = project_modulus(psi, c, fft);
  for (std::size_t i = 0; i < psi.rho.size(); ++i)
    CHECK(std::abs(out.rho[i] - psi.rho[i]) < 1e-12);
  for (std::size_t i = 0; i < psi.bg.size(); ++i)
    CHECK(std::abs(out.bg[i] - psi.bg[i]) < 1e-12);
}

TEST_CASE("project_modulus is idempotent to 1e-10") {
  const Volume I = random_intensity(9, 4);
  const IntensityConstraint c = IntensityConstraint::make(I, 2.0, 100.0);
  Fft3 fft(9);
  for (int trial = 0; trial < 10; ++trial) {
    const PhaseIterate psi = random_iterate(9, 100 + trial);
    const PhaseIterate p1 = project_modulus(psi, c, fft);
    const PhaseIterate p2 = project_modulus(p1, c, fft);
    CHECK(iterate_distance(p2, p1) < 1e-10 * (1.0 + iterate_distance(p1, psi)));
  }
}

TEST_CASE("project_modulus leaves FREE voxels untouched") {
  const Volume I = random_intensity(9, 5);
  const IntensityConstraint c = IntensityConstraint::make(I, 2.0, 3.5);
  const PhaseIterate psi = random_iterate(9, 6);
  Fft3 fft(9);
  const PhaseIterate out = project_modulus(psi, c, fft);
  const CVolume f_in = test::naive_dft(psi.rho, true);
  const CVolume f_out = test::naive_dft(out.rho, true);
  int checked = 0;
  for (std::size_t i = 0; i < f_in.size(); ++i) {
    if (c.constrained[i]) continue;
    CHECK(std::abs(f_out[i] - f_in[i]) < 1e-10);
    CHECK(out.bg[i] == psi.bg[i]);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("project_modulus: zero calculated amplitude routes the magnitude to B") {
  PhaseIterate psi;
  psi.rho = CVolume(3);
  psi.bg = Volume(3);
  Volume I(3);
  for (std::size_t i = 0; i < I.size(); ++i) I[i] = 2.25;
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);
  Fft3 fft(3);
  const PhaseIterate out = project_modulus(psi, c, fft);
  for (std::size_t i = 0; i < out.bg.size(); ++i)
    CHECK(out.bg[i] == doctest::Approx(1.5).epsilon(1e-14));
  for (std::size_t i = 0; i < out.rho.size(); ++i)
    CHECK(std::abs(out.rho[i]) < 1e-14);

  // with the background disabled, the amplitude lands in the density
  const PhaseIterate out2 = project_modulus(psi, c, fft, false);
  const CVolume f2 = test::naive_dft(out2.rho, true);
  for (std::size_t i = 0; i < f2.size(); ++i)
    CHECK(std::abs(f2[i] - std::complex<double>(1.5, 0.0)) < 1e-12);
}

TEST_CASE("project_modulus: nearest point on the (ReF, ImF, B) sphere") {
  const Volume I = random_intensity(9, 7);
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);
  const PhaseIterate psi = random_iterate(9, 8);
  Fft3 fft(9);
  const PhaseIterate out = project_modulus(psi, c, fft);

  const CVolume f_in = test::naive_dft(psi.rho, true);
  const CVolume f_out = test::naive_dft(out.rho, true);

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> pick(0, f_in.size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int tested = 0;
  while (tested < 5) {
    const std::size_t q = pick(rng);
    if (!c.constrained[q]) continue;
    ++tested;
    const double R = std::sqrt(c.i_meas[q]);
    const double vx = f_in[q].real(), vy = f_in[q].imag(), vz = psi.bg[q];
    const double ux = f_out[q].real(), uy = f_out[q].imag(), uz = out.bg[q];
    const double d_proj = std::sqrt((vx - ux) * (vx - ux) + (vy - uy) * (vy - uy) +
                                    (vz - uz) * (vz - uz));
    for (int k = 0; k < 10000; ++k) {
      double px = gauss(rng), py = gauss(rng), pz = gauss(rng);
      const double n = std::sqrt(px * px + py * py + pz * pz);
      px *= R / n;
      py *= R / n;
      pz *= R / n;
      const double d = std::sqrt((vx - px) * (vx - px) + (vy - py) * (vy - py) +
                                 (vz - pz) * (vz - pz));
      CHECK(d_proj <= d + 1e-9);
    }
  }
}

TEST_CASE("project_support: exact-N densities pass through unchanged") {
  const RadialBins bins = RadialBins::make(9);
  PhaseIterate psi;
  psi.rho = CVolume(9);
  psi.bg = Volume(9);
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> pick(0, psi.rho.size() - 1);
  for (int k = 0; k < 40; ++k) psi.rho[pick(rng)] = {1.0 + k * 0.01, 0.5};
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < psi.rho.size(); ++i)
    if (std::norm(psi.rho[i]) > 0) ++nonzero;

  const PhaseIterate out = project_support(psi, long(nonzero), bins);
  for (std::size_t i = 0; i < psi.rho.size(); ++i) CHECK(out.rho[i] == psi.rho[i]);
}

TEST_CASE("project_support is exactly idempotent") {
  const RadialBins bins = RadialBins::make(9);
  const PhaseIterate psi = random_iterate(9, 11);
  const PhaseIterate p1 = project_support(psi, 50, bins);
  const PhaseIterate p2 = project_support(p1, 50, bins);
  for (std::size_t i = 0; i < p1.rho.size(); ++i) CHECK(p2.rho[i] == p1.rho[i]);
  for (std::size_t i = 0; i < p1.bg.size(); ++i)
    CHECK(p2.bg[i] == doctest::Approx(p1.bg[i]).epsilon(1e-14));
}

TEST_CASE("project_support: spherically symmetric backgrounds are fixed points") {
  const RadialBins bins = RadialBins::make(9);
  PhaseIterate psi = random_iterate(9, 12);
  // constant within each unit-width shell, i.e. already in the constraint set
  for (std::size_t i = 0; i < psi.bg.size(); ++i)
    psi.bg[i] = 3.0 * std::exp(-0.4 * std::floor(psi.bg.radius_of(i)));
  const PhaseIterate out = project_support(psi, 50, bins);
  for (std::size_t i = 0; i < psi.bg.size(); ++i)
    CHECK(out.bg[i] == doctest::Approx(psi.bg[i]).epsilon(1e-12));
}

TEST_CASE("top-N rule matches brute force over all C(12,4) supports") {
  PhaseIterate psi;
  psi.rho = CVolume(3);
  psi.bg = Volume(3);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> uni(0.5, 2.0);
  std::vector<std::size_t> spots;
  for (std::size_t i = 0; i < 27; i += 2) spots.push_back(i);
  spots.resize(12);
  for (std::size_t s : spots) psi.rho[s] = {uni(rng), uni(rng)};

  const RadialBins bins = RadialBins::make(3);
  const PhaseIterate kept = project_support(psi, 4, bins);

  double best = 1e300;
  std::vector<std::size_t> best_support;
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = a + 1; b < 12; ++b)
      for (std::size_t c = b + 1; c < 12; ++c)
        for (std::size_t d = c + 1; d < 12; ++d) {
          double dropped = 0.0;
          for (std::size_t i = 0; i < 12; ++i) {
            if (i == a || i == b || i == c || i == d) continue;
            dropped += std::norm(psi.rho[spots[i]]);
          }
          if (dropped < best) {
            best = dropped;
            best_support = {spots[a], spots[b], spots[c], spots[d]};
          }
        }
  double kept_err = 0.0;
  for (std::size_t i = 0; i < kept.rho.size(); ++i)
    kept_err += std::norm(kept.rho[i] - psi.rho[i]);
  CHECK(kept_err == doctest::Approx(best).epsilon(1e-12));
  for (std::size_t s : best_support) CHECK(std::norm(kept.rho[s]) > 0.0);
}

TEST_CASE("radial averaging is an orthogonal projection") {
  const RadialBins bins = RadialBins::make(9);
  const PhaseIterate psi = random_iterate(9, 14);
  const PhaseIterate out = project_support(psi, 50, bins);
  double inner = 0.0;
  for (std::size_t i = 0; i < psi.bg.size(); ++i)
    inner += (psi.bg[i] - out.bg[i]) * out.bg[i];
  CHECK(std::abs(inner) < 1e-10);
}

TEST_CASE("er_iteration: a solution satisfying both constraints stays put") {
  const int m = 21;
  const Phantom ph = make_phantom(m, test::default_phantom(m));
  PhaseIterate truth;
  truth.rho = CVolume(m);
  truth.bg = Volume(m);
  long support = 0;
  for (std::size_t i = 0; i < truth.rho.size(); ++i) {
    truth.rho[i] = ph.density[i];
    if (ph.density[i] > 0.0) ++support;
  }
  Fft3 fft(m);
  const Volume I = calc_intensity(truth, fft);
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);

  double err = -1.0;
  const PhaseIterate next = er_iteration(truth, c, support, fft, true, &err);
  PhaseIterate zero;
  zero.rho = CVolume(m);
  zero.bg = Volume(m);
  CHECK(iterate_distance(next, truth) < 1e-8 * iterate_distance(truth, zero));
  CHECK(err < 1e-10);
}

TEST_CASE("er error metric is non-increasing on solvable data") {
  const int m = 21;
  const Phantom ph = make_phantom(m, test::default_phantom(m));
  PhaseIterate truth;
  truth.rho = CVolume(m);
  truth.bg = Volume(m);
  for (std::size_t i = 0; i < truth.rho.size(); ++i) truth.rho[i] = ph.density[i];
  Fft3 fft(m);
  const Volume I = calc_intensity(truth, fft);
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);

  PhasingConfig cfg;
  cfg.voxel_number = 1200;
  cfg.background = false;
  cfg.seed = 15;
  cfg.inner_mask = 0.0;
  cfg.outer_mask = 100.0;
  PhaseIterate psi = initial_iterate(c, cfg, 0);
  double prev = 1e300;
  for (int it = 0; it < 40; ++it) {
    double err = 0.0;
    psi = er_iteration(psi, c, cfg.voxel_number, fft, false, &err);
    CHECK(err <= prev * (1.0 + 1e-6) + 1e-12);
    prev = err;
  }
}

TEST_CASE("dm_iteration: doubly satisfied iterates are fixed points") {
  const int m = 21;
  const Phantom ph = make_phantom(m, test::default_phantom(m));
  PhaseIterate truth;
  truth.rho = CVolume(m);
  truth.bg = Volume(m);
  long support = 0;
  for (std::size_t i = 0; i < truth.rho.size(); ++i) {
    truth.rho[i] = ph.density[i];
    if (ph.density[i] > 0.0) ++support;
  }
  Fft3 fft(m);
  const Volume I = calc_intensity(truth, fft);
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);
  const PhaseIterate next = dm_iteration(truth, c, support, fft, 0.7);
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < truth.rho.size(); ++i) {
    scale += std::norm(truth.rho[i]);
    diff += std::norm(next.rho[i] - truth.rho[i]);
  }
  CHECK(std::sqrt(diff / scale) < 1e-10);
}

TEST_CASE("dm_iteration matches the symbolic update on a two-voxel toy") {
  // beta = 0.7; the relaxation coefficient on P_M inside f_M is 1 - 1/beta
  const double beta = 0.7;
  CHECK(1.0 - 1.0 / beta == doctest::Approx(-0.42857142857).epsilon(1e-9));

  PhaseIterate psi;
  psi.rho = CVolume(3);
  psi.bg = Volume(3);
  psi.rho.at(1, 1, 1) = {0.8, -0.3};
  psi.rho.at(2, 1, 0) = {-0.4, 0.1};
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> uni(0.2, 1.0);
  for (std::size_t i = 0; i < psi.bg.size(); ++i) psi.bg[i] = uni(rng);

  Volume I(3);
  for (std::size_t i = 0; i < I.size(); ++i) I[i] = uni(rng) * 4.0;
  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);
  const long n_support = 1;

  const PhaseIterate pm = naive_project_modulus(psi, c);
  const PhaseIterate ps = naive_project_support(psi, n_support);
  const PhaseIterate fm = lin(1.0 - 1.0 / beta, pm, 1.0 / beta, psi);
  const PhaseIterate fs = lin(1.0 + 1.0 / beta, ps, -1.0 / beta, psi);
  const PhaseIterate pmfs = naive_project_modulus(fs, c);
  const PhaseIterate psfm = naive_project_support(fm, n_support);
  const PhaseIterate expect = lin(1.0, psi, beta, lin(1.0, pmfs, -1.0, psfm));

  Fft3 fft(3);
  const PhaseIterate got = dm_iteration(psi, c, n_support, fft, beta);
  for (std::size_t i = 0; i < got.rho.size(); ++i)
    CHECK(std::abs(got.rho[i] - expect.rho[i]) < 1e-12);
  for (std::size_t i = 0; i < got.bg.size(); ++i)
    CHECK(std::abs(got.bg[i] - expect.bg[i]) < 1e-12);
}

TEST_CASE("run_phasing: one ER iteration equals er_iteration of the recorded start") {
  const Volume I = random_intensity(9, 17);
  PhasingConfig cfg;
  cfg.repeats = 1;
  cfg.plan = {{PhaseAlgo::kErrorReduction, 1}};
  cfg.voxel_number = 40;
  cfg.inner_mask = 0.0;
  cfg.outer_mask = 100.0;
  cfg.seed = 18;
  const PhasingResult res = run_phasing(I, cfg, 1);
  REQUIRE(res.solutions.size() == 1);
  REQUIRE(res.error_trace[0].size() == 1);

  const IntensityConstraint c = IntensityConstraint::make(I, 0.0, 100.0);
  Fft3 fft(9);
  const PhaseIterate start = initial_iterate(c, cfg, 0);
  const PhaseIterate expect = er_iteration(start, c, cfg.voxel_number, fft);
  for (std::size_t i = 0; i < expect.rho.size(); ++i)
    CHECK(std::abs(res.solutions[0].rho[i] - expect.rho[i]) < 1e-13);
}

TEST_CASE("run_phasing is deterministic across worker counts") {
  const Volume I = random_intensity(9, 19);
  PhasingConfig cfg;
  cfg.repeats = 6;
  cfg.plan = {{PhaseAlgo::kErrorReduction, 3}, {PhaseAlgo::kDifferenceMap, 3}};
  cfg.voxel_number = 40;
  cfg.inner_mask = 0.0;
  cfg.outer_mask = 100.0;
  cfg.seed = 20;
  const PhasingResult a = run_phasing(I, cfg, 1);
  const PhasingResult b = run_phasing(I, cfg, 4);
  for (int r = 0; r < 6; ++r)
    for (std::size_t i = 0; i < a.solutions[r].rho.size(); ++i)
      CHECK(a.solutions[r].rho[i] == b.solutions[r].rho[i]);
}

TEST_CASE("alignment: centering, phase removal, shift/inversion recovery") {
  const int m = 21;
  const Phantom ph = make_phantom(m, test::default_phantom(m));
  PhaseIterate base;
  base.rho = CVolume(m);
  base.bg = Volume(m);
  for (std::size_t i = 0; i < base.rho.size(); ++i) base.rho[i] = ph.density[i];

  SUBCASE("single solution ends centered with zero mean phase") {
    std::vector<PhaseIterate> sols{base};
    align_solutions(sols);
    std::complex<double> total{0, 0};
    for (std::size_t i = 0; i < sols[0].rho.size(); ++i) total += sols[0].rho[i];
    CHECK(std::abs(std::arg(total)) < 1e-9);
  }

  SUBCASE("a (3,0,0)-shifted copy aligns back to the original") {
    PhaseIterate shifted;
    shifted.rho = CVolume(m);
    shifted.bg = base.bg;
    for (int x = 0; x < m; ++x)
      for (int y = 0; y < m; ++y)
        for (int z = 0; z < m; ++z)
          shifted.rho.at((x + 3) % m, y, z) = base.rho.at(x, y, z);

    std::vector<PhaseIterate> sols{base, shifted};
    align_solutions(sols);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < base.rho.size(); ++i) {
      num += std::norm(sols[1].rho[i] - sols[0].rho[i]);
      den += std::norm(sols[0].rho[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-9);
  }

  SUBCASE("a globally phase-rotated and centrally inverted copy aligns back") {
    PhaseIterate twin;
    twin.rho = CVolume(m);
    twin.bg = base.bg;
    const std::complex<double> phase(std::cos(1.1), std::sin(1.1));
    for (int x = 0; x < m; ++x)
      for (int y = 0; y < m; ++y)
        for (int z = 0; z < m; ++z)
          twin.rho.at(x, y, z) =
              phase * std::conj(base.rho.at(m - 1 - x, m - 1 - y, m - 1 - z));

    std::vector<PhaseIterate> sols{base, twin};
    const auto infos = align_solutions(sols);
    CHECK(infos[1].inverted);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < base.rho.size(); ++i) {
      num += std::norm(sols[1].rho[i] - sols[0].rho[i]);
      den += std::norm(sols[0].rho[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-9);
  }
}

TEST_CASE("average_solutions: identity, cancellation, triangle bound") {
  PhaseIterate a = random_iterate(5, 21);
  PhaseIterate b = a;

  const AveragedSolution same = average_solutions({a, b});
  for (std::size_t i = 0; i < a.rho.size(); ++i)
    CHECK(std::abs(same.rho[i] - a.rho[i]) < 1e-14);

  b.rho[7] = -a.rho[7];
  const AveragedSolution opp = average_solutions({a, b});
  CHECK(std::abs(opp.rho[7]) < 1e-14);

  for (std::size_t i = 0; i < a.rho.size(); ++i) {
    const double bound = std::max(std::abs(a.rho[i]), std::abs(b.rho[i]));
    CHECK(std::abs(opp.rho[i]) <= bound + 1e-14);
  }
}

TEST_CASE("background-aware phasing recovers the isotropic background profile") {
  // Noiseless instance with a known flat isotropic background (a wide
  // Gaussian) carrying a third or more of each constrained shell. The
  // central speckle is masked, as in production runs; the recovered radial
  // |B| must match the truth within 5% RMS over the constrained shells.
  const int m = 33;
  PhantomParams pp = test::default_phantom(m);
  pp.outer_radius = 0.18 * m;
  pp.shell_thickness = 1.2;
  pp.gap_thickness = 1.0;
  const Phantom ph = make_phantom(m, pp);
  PhaseIterate truth;
  truth.rho = CVolume(m);
  truth.bg = Volume(m);
  long support = 0;
  for (std::size_t i = 0; i < truth.rho.size(); ++i) {
    truth.rho[i] = ph.density[i];
    if (ph.density[i] > 0.0) ++support;
  }
  Fft3 fft(m);
  CVolume F;
  fft.forward(truth.rho, F);
  const RadialBins bins = RadialBins::make(m);
  std::vector<double> shell_sum(bins.num_shells, 0.0);
  for (std::size_t i = 0; i < F.size(); ++i)
    shell_sum[bins.shell_of[i]] += std::norm(F[i]);
  RadialBackground bg;
  bg.sigma = 1e6;
  bg.amplitude = 0.5 * shell_sum[3] / bins.counts[3];
  Volume I(m);
  for (std::size_t i = 0; i < I.size(); ++i)
    I[i] = std::norm(F[i]) + bg.intensity(I.radius_of(i));

  PhasingConfig cfg;
  cfg.repeats = 4;
  cfg.plan = parse_iteration_string("100ERA 400DM 100ERA");
  cfg.voxel_number = long(support * 1.3);
  cfg.background = true;
  cfg.inner_mask = 4.5; // central speckle: first form-factor zero at ~4.7
  cfg.outer_mask = 15.0;
  cfg.seed = 22;
  const PhasingResult res = run_phasing(I, cfg, 2);

  double num = 0.0, den = 0.0;
  for (int shell = 5; shell < 15; ++shell) {
    const double want = std::sqrt(bg.intensity(shell + 0.5));
    double got = 0.0;
    for (const auto& sol : res.solutions) {
      double s = 0.0;
      std::int64_t n = 0;
      for (std::size_t i = 0; i < sol.bg.size(); ++i) {
        if (bins.shell_of[i] != shell) continue;
        s += std::abs(sol.bg[i]);
        ++n;
      }
      got += s / double(n);
    }
    got /= double(res.solutions.size());
    num += (got - want) * (got - want);
    den += want * want;
  }
  CHECK(std::sqrt(num / den) < 0.05);
}
