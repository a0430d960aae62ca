#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "aniso/error.hpp"
#include "aniso/transform.hpp"

using namespace aniso;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Random spectrum under a smooth bump of radius r in |xi|.
GridFunction bump_spectrum(const GridSpec& grid, double r, std::uint64_t seed, int m = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Channels spec(static_cast<std::size_t>(m), std::vector<cplx>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid.frequency(i).norm() / r;
    const double env = t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t * t)) : 0.0;
    for (auto& ch : spec) ch[i] = env * cplx(g(rng), g(rng));
  }
  return GridFunction::from_spectrum(grid, spec);
}

double rel_error(const GridFunction& a, const GridFunction& b) { return a.plus(b, -1.0).l2_norm() / b.l2_norm(); }

}  // namespace

TEST(Grid, Conventions) {
  const auto g = GridSpec::cube(2, 8, 4.0);
  EXPECT_EQ(g.size(), 64u);
  EXPECT_DOUBLE_EQ(g.coord(0, 0), -2.0);
  EXPECT_DOUBLE_EQ(g.spacing(1), 0.5);
  EXPECT_EQ(g.signed_index(0, 5), -3);
  EXPECT_DOUBLE_EQ(g.freq(0, 1), 2 * kPi / 4.0);
  EXPECT_DOUBLE_EQ(g.volume(), 16.0);
  int idx[2];
  g.unflatten(g.flatten(std::array<int, 2>{3, 6}), idx);
  EXPECT_EQ(idx[0], 3);
  EXPECT_EQ(idx[1], 6);
  const double on[2] = {-1.5, 0.0}, off[2] = {-1.3, 0.0}, wrapped[2] = {2.5, 0.0};
  EXPECT_TRUE(grid_index_of(g, on).has_value());
  EXPECT_FALSE(grid_index_of(g, off).has_value());
  EXPECT_EQ(grid_index_of(g, wrapped), grid_index_of(g, std::array<double, 2>{-1.5, 0.0}));
}

TEST(Grid, GaussianSpectrumMatchesContinuousTransform) {
  // exp(-x^2/2) has transform sqrt(2 pi) exp(-xi^2/2).
  const auto g = GridSpec::cube(1, 256, 40.0);
  Channels v(1, std::vector<cplx>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) v[0][i] = std::exp(-0.5 * std::pow(g.point(i)(0), 2));
  const auto f = GridFunction::from_values(g, v);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double xi = g.frequency(i)(0);
    EXPECT_NEAR(std::abs(f.spectrum(0)[i] - std::sqrt(2 * kPi) * std::exp(-0.5 * xi * xi)), 0.0, 1e-12);
  }
  EXPECT_LT(f.roundtrip_error(), 1e-14);
}

TEST(Grid, SeriesEvaluationMatchesDirectSum) {
  const auto g = GridSpec::cube(2, 8, 6.0);
  const auto f = bump_spectrum(g, 3.0, 1);
  std::vector<double> pts{0.37, -1.2, 2.9, 0.01, -3.0, -3.0};
  const auto vals = evaluate_series(g, f.spectrum(0), pts);
  for (std::size_t p = 0; p < 3; ++p) {
    cplx s = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vector xi = g.frequency(i);
      s += f.spectrum(0)[i] * std::exp(cplx(0, xi(0) * pts[2 * p] + xi(1) * pts[2 * p + 1]));
    }
    s /= g.volume();
    EXPECT_NEAR(std::abs(vals[p] - s), 0.0, 1e-12);
  }
  std::vector<cplx> c{1.0, cplx(0, 2), -0.5};
  const auto acc = accumulate_series(g, pts, c);
  for (std::size_t i = 0; i < g.size(); i += 5) {
    const Vector xi = g.frequency(i);
    cplx s = 0;
    for (std::size_t p = 0; p < 3; ++p) s += c[p] * std::exp(cplx(0, -(xi(0) * pts[2 * p] + xi(1) * pts[2 * p + 1])));
    EXPECT_NEAR(std::abs(acc[i] - s), 0.0, 1e-12);
  }
  // On-grid points reproduce the stored samples.
  const Vector x = g.point(10);
  const auto on = evaluate_series(g, f.spectrum(0), std::vector<double>{x(0), x(1)});
  EXPECT_NEAR(std::abs(on[0] - f.values(0)[10]), 0.0, 1e-13);
}

TEST(Grid, BandlimitTag) {
  const auto dil = Dilation::validate(mat2(2, 0, 0, 2));
  const auto adj = BallFamily::build(dil.adjoint());
  const auto g = GridSpec::cube(2, 32, 16.0);
  const auto narrow = bump_spectrum(g, 0.5, 2);
  EXPECT_EQ(narrow.with_bandlimit(0, adj).bandlimit(), 0);
  try {
    bump_spectrum(g, 5.0, 2).with_bandlimit(0, adj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HypothesisViolated);
  }
  EXPECT_FALSE(narrow.plus(narrow).bandlimit().has_value());
}

TEST(Transform, PeriodicCubes) {
  const auto dil = Dilation::validate(mat2(2, 0, 0, 2));
  const auto g = GridSpec::cube(2, 32, 8.0);
  for (int k = -3; k <= 2; ++k) {
    const auto cubes = periodic_cubes(dil, k, g);
    EXPECT_NEAR(static_cast<double>(cubes.size()), 64.0 * std::pow(4.0, k), 1e-9);
  }
  try {
    periodic_cubes(dil, -4, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HypothesisViolated);
  }
}

class ReconstructPerPreset : public ::testing::TestWithParam<std::tuple<int, bool>> {};

TEST_P(ReconstructPerPreset, SynthesizeAnalyzeIsIdentity) {
  const auto [preset, homogeneous] = GetParam();
  Matrix a = preset == 0 ? mat2(2, 0, 0, 2) : preset == 1 ? mat2(2, 0, 0, 3) : mat2(1, -1, 1, 1);
  const double L = preset == 1 ? 36.0 : 32.0;
  const auto dil = Dilation::validate(a);
  FilterOptions o;
  o.homogeneous = homogeneous;
  const auto fb = FilterBank::synthesize(dil, o);
  const auto g = GridSpec::cube(2, 64, L);
  const int kf = fb.finest_scale(g);
  const int kc = homogeneous ? fb.coarsest_scale(g) : 0;
  const int k_lo = homogeneous ? kc + 1 : 0;
  const auto f = bandlimited_test_function(g, fb, k_lo, std::max(kf - 1, k_lo), 0);
  const auto s = analyze(f, fb, AnalysisWindow{kc, kf, std::nullopt});
  EXPECT_EQ(s.homogeneous, homogeneous);
  EXPECT_LT(rel_error(synthesize(s, fb, g), f), 1e-6);
  // Tight frame: coefficient energy equals the function's.
  double e = 0;
  for (const auto& [q, v] : s.entries) e += v.squaredNorm();
  EXPECT_NEAR(std::sqrt(e) / f.l2_norm(), 1.0, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Presets, ReconstructPerPreset,
                         ::testing::Combine(::testing::Values(0, 1, 2), ::testing::Bool()));

TEST(Transform, SingleCoefficientIsAtom) {
  const auto dil = Dilation::validate(mat2(1, -1, 1, 1));
  const auto fb = FilterBank::synthesize(dil);
  const auto g = GridSpec::cube(2, 64, 32.0);
  const DilatedCube q{1, {2, -1}};
  CoefficientSet s;
  s.dim = 2;
  s.k_min = s.k_max = 1;
  s.dilation_hash = dil.hash();
  s.entries[q] = CVector::Ones(1);
  const auto a = atom(fb, g, q, Band::Psi);
  EXPECT_LT(rel_error(synthesize(s, fb, g), a), 1e-12);
  // psi_Q^(xi) = |det A|^{-k/2} psi^((A*)^{-k} xi) e^{-i xi.x_Q}.
  const Vector xq = cube_corner(dil, q);
  for (std::size_t i = 0; i < g.size(); i += 13) {
    const Vector xi = g.frequency(i);
    const cplx want = std::pow(2.0, -0.5) * fb.dilated(Band::Psi, 1, std::span<const double>(xi.data(), 2)) *
                      std::exp(cplx(0, -xi.dot(xq)));
    EXPECT_NEAR(std::abs(a.spectrum(0)[i] - want), 0.0, 1e-12);
  }
  CoefficientSet empty = s;
  empty.entries.clear();
  EXPECT_EQ(synthesize(empty, fb, g).l2_norm(), 0.0);
}

TEST(Transform, AnalysisIsInnerProductWithAtoms) {
  const auto dil = Dilation::validate(mat2(2, 0, 0, 3));
  const auto fb = FilterBank::synthesize(dil);
  const auto g = GridSpec::cube(2, 64, 36.0);
  const int kf = fb.finest_scale(g);
  const auto f = bandlimited_test_function(g, fb, kf - 2, kf, 3);
  const auto s = analyze(f, fb, AnalysisWindow{kf - 1, kf - 1, std::nullopt});
  int checked = 0;
  for (const auto& [q, v] : s.entries) {
    if (checked++ % 17) continue;
    // <f, phi_Q> by Parseval on the grid spectra.
    const auto a = atom(fb, g, q, Band::Phi);
    cplx ip = 0;
    for (std::size_t i = 0; i < g.size(); ++i) ip += f.spectrum(0)[i] * std::conj(a.spectrum(0)[i]);
    ip /= g.volume();
    EXPECT_NEAR(std::abs(v(0) - ip), 0.0, 1e-10);
  }
}

TEST(Transform, OffGridCornersUseSeries) {
  // Quincunx corners at negative scales fall between grid points.
  const auto dil = Dilation::validate(mat2(1, -1, 1, 1));
  const auto fb = FilterBank::synthesize(dil);
  const auto g = GridSpec::cube(2, 32, 32.0);
  const int kc = fb.coarsest_scale(g);
  const auto f = bandlimited_test_function(g, fb, kc, kc + 3, 1);
  const auto s = analyze(f, fb, AnalysisWindow{kc, kc + 4, std::nullopt});
  EXPECT_LT(rel_error(synthesize(s, fb, g), f), 1e-6);
}

TEST(Transform, BandlimitedTestFunctionDeterministicAndRefinable) {
  const auto fb = FilterBank::synthesize(Dilation::validate(mat2(2, 0, 0, 2)));
  const auto g1 = GridSpec::cube(2, 64, 32.0), g2 = GridSpec::cube(2, 128, 32.0);
  const int kf = fb.finest_scale(g1), kc = fb.coarsest_scale(g1);
  const auto a = bandlimited_test_function(g1, fb, kc, kf, 2);
  const auto b = bandlimited_test_function(g1, fb, kc, kf, 2);
  EXPECT_EQ(a.spectrum(0), b.spectrum(0));
  ASSERT_TRUE(a.bandlimit().has_value());
  const auto c = bandlimited_test_function(g2, fb, kc, kf, 2);
  // Same function on the finer grid: equal values at shared points.
  for (std::size_t i = 0; i < g1.size(); i += 11) {
    int idx[2];
    g1.unflatten(i, idx);
    const int fine[2] = {2 * idx[0], 2 * idx[1]};
    EXPECT_NEAR(std::abs(a.values(0)[i] - c.values(0)[g2.flatten(fine)]), 0.0, 1e-10);
  }
  EXPECT_NE(a.spectrum(0), bandlimited_test_function(g1, fb, kc, kf, 3).spectrum(0));
}

TEST(Transform, SamplingIdentity) {
  Matrix a(1, 1);
  a << 2;
  const auto dil = Dilation::validate(a);
  const auto adj = BallFamily::build(dil.adjoint());
  const auto g = GridSpec::cube(1, 256, 64.0);
  std::vector<double> xs;
  for (int i = 0; i < 40; ++i) xs.push_back(-31.0 + 1.37 * i);
  const auto f = bump_spectrum(g, 0.9, 4).with_bandlimit(0, adj);
  const auto h = bump_spectrum(g, 0.9, 5).with_bandlimit(0, adj);
  EXPECT_LT(sampling_identity_check(f, h, 0, dil, xs), 1e-7);
  // Spectra wider than [-pi, pi]: sampling at k = 0 aliases.
  const auto fw = bump_spectrum(g, 6.0, 6).with_bandlimit(3, adj);
  const auto hw = bump_spectrum(g, 6.0, 7).with_bandlimit(3, adj);
  std::vector<cplx> prod = fw.spectrum(0);
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= hw.spectrum(0)[i];
  double scale = 0;
  for (const cplx& v : evaluate_series(g, prod, xs)) scale = std::max(scale, std::abs(v));
  EXPECT_GT(sampling_identity_check(fw, hw, 0, dil, xs) / scale, 0.1);
  EXPECT_THROW(sampling_identity_check(bump_spectrum(g, 0.9, 4), h, 0, dil, xs), Error);
}

TEST(Transform, SamplingInequalityNeedsE0) {
  Matrix a(1, 1);
  a << 2;
  const auto dil = Dilation::validate(a);
  const auto adj = BallFamily::build(dil.adjoint());
  const auto g = GridSpec::cube(1, 128, 32.0);
  const auto f = bump_spectrum(g, 0.9, 8);
  EXPECT_THROW(sampling_inequality_probe(f, MatrixWeightField::identity(1), 2.0, dil), Error);
  const double r = sampling_inequality_probe(f.with_bandlimit(0, adj), MatrixWeightField::identity(1), 2.0, dil);
  EXPECT_GT(r, 0.1);
  EXPECT_LT(r, 10.0);
  EXPECT_EQ(sampling_inequality_probe(f.scaled(0.0).with_bandlimit(0, adj), MatrixWeightField::identity(1), 2.0, dil),
            0.0);
}
