#include "aniso/transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "aniso/error.hpp"
#include "aniso/kernels.hpp"

namespace aniso {

namespace {

Band analysis_band(const FilterBank& fb, int k) {
  if (!fb.homogeneous() && k == 0) return Band::LowPhi;
  return fb.homogeneous() ? Band::PhiTilde : Band::Phi;
}

Band synthesis_band(const FilterBank& fb, int k) {
  if (!fb.homogeneous() && k == 0) return Band::LowPsi;
  return Band::Psi;
}

void check_window(const FilterBank& fb, int k_min, int k_max) {
  if (k_max < k_min) fail(ErrorCode::InvalidArgument, "empty scale window");
  if (!fb.homogeneous() && k_min < 0) fail(ErrorCode::InvalidArgument, "inhomogeneous windows start at k = 0");
}

std::vector<double> corners_of(const Dilation& dil, std::span<const DilatedCube> cubes) {
  const int d = dil.dim();
  std::vector<double> pts;
  pts.reserve(cubes.size() * static_cast<std::size_t>(d));
  for (const auto& q : cubes) {
    const Vector x = cube_corner(dil, q);
    for (int a = 0; a < d; ++a) pts.push_back(x(a));
  }
  return pts;
}

// Grid indices of all points, or empty if some point is off the grid.
std::vector<std::size_t> lattice_lookup(const GridSpec& grid, std::span<const double> pts) {
  const auto d = static_cast<std::size_t>(grid.dim());
  std::vector<std::size_t> idx;
  idx.reserve(pts.size() / d);
  for (std::size_t i = 0; i < pts.size() / d; ++i) {
    auto g = grid_index_of(grid, pts.subspan(i * d, d));
    if (!g) return {};
    idx.push_back(*g);
  }
  return idx;
}

}  // namespace

GridFunction band_convolve(const GridFunction& f, const FilterBank& fb, int k, Band which) {
  const auto& mult = fb.multiplier(f.grid(), which, k);
  Channels out = f.all_spectra();
  for (auto& ch : out) kernels::active().mul_real(ch, mult);
  return GridFunction::from_spectrum(f.grid(), std::move(out));
}

std::vector<DilatedCube> periodic_cubes(const Dilation& dil, int k, const GridSpec& grid) {
  const int d = dil.dim();
  if (grid.dim() != d) fail(ErrorCode::DimensionMismatch, "grid dimension");
  const Matrix& ak = dil.power(k);
  for (int a = 0; a < d; ++a) {
    const Vector v = ak.col(a) * grid.L[static_cast<std::size_t>(a)];
    for (int r = 0; r < d; ++r) {
      if (std::abs(v(r) - std::round(v(r))) > 1e-9 * std::max(1.0, std::abs(v(r)))) {
        fail(ErrorCode::HypothesisViolated,
             "A^" + std::to_string(k) + " does not map the period lattice into Z^d");
      }
    }
  }
  // Corners A^{-k} j inside the half-open box; a corner may sit on the box
  // while the cube's interior lies outside, so enumerate corners directly.
  const Box box = grid.box();
  Vector bmin = Vector::Constant(d, std::numeric_limits<double>::infinity());
  Vector bmax = -bmin;
  for (int corner = 0; corner < (1 << d); ++corner) {
    Vector x(d);
    for (int a = 0; a < d; ++a) x(a) = (corner >> a) & 1 ? box.hi(a) : box.lo(a);
    const Vector y = ak * x;
    bmin = bmin.cwiseMin(y);
    bmax = bmax.cwiseMax(y);
  }
  std::vector<int> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
  double count = 1.0;
  for (int a = 0; a < d; ++a) {
    lo[static_cast<std::size_t>(a)] = static_cast<int>(std::floor(bmin(a))) - 1;
    hi[static_cast<std::size_t>(a)] = static_cast<int>(std::ceil(bmax(a))) + 1;
    count *= hi[static_cast<std::size_t>(a)] - lo[static_cast<std::size_t>(a)] + 1;
  }
  if (count > 4e6) fail(ErrorCode::RegionTooLarge, "periodic cube enumeration exceeds cap");
  const Matrix& inv = dil.power(-k);
  std::vector<DilatedCube> out;
  std::vector<int> j = lo;
  Vector jv(d);
  while (true) {
    for (int a = 0; a < d; ++a) jv(a) = j[static_cast<std::size_t>(a)];
    const Vector x = inv * jv;
    bool inside = true;
    for (int a = 0; a < d; ++a) {
      const double eps = 1e-9 * grid.L[static_cast<std::size_t>(a)];
      inside = inside && x(a) >= box.lo(a) - eps && x(a) < box.hi(a) - eps;
    }
    if (inside) out.push_back(DilatedCube{k, j});
    int a = d - 1;
    while (a >= 0) {
      if (++j[static_cast<std::size_t>(a)] <= hi[static_cast<std::size_t>(a)]) break;
      j[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

CoefficientSet analyze(const GridFunction& f, const FilterBank& fb, const AnalysisWindow& window) {
  check_window(fb, window.k_min, window.k_max);
  const Dilation& dil = fb.dilation();
  const GridSpec& grid = f.grid();
  const int d = dil.dim();
  if (grid.dim() != d) fail(ErrorCode::DimensionMismatch, "grid dimension");
  const int m = f.vec_dim();

  CoefficientSet out;
  out.dim = d;
  out.vec_dim = m;
  out.k_min = window.k_min;
  out.k_max = window.k_max;
  out.region = window.region ? *window.region : grid.box();
  out.dilation_hash = dil.hash();
  out.homogeneous = fb.homogeneous();

  for (int k = window.k_min; k <= window.k_max; ++k) {
    const auto cubes = window.region ? cubes_at_scale(dil, k, *window.region) : periodic_cubes(dil, k, grid);
    const auto& mult = fb.multiplier(grid, analysis_band(fb, k), k);
    const auto pts = corners_of(dil, cubes);
    const auto lookup = lattice_lookup(grid, pts);
    const double norm = std::pow(dil.abs_det(), -0.5 * k);
    std::vector<std::vector<cplx>> samples(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) {
      std::vector<cplx> spec = f.spectrum(c);
      kernels::active().mul_real(spec, mult);
      if (!lookup.empty() || cubes.empty()) {
        const auto vals = spectrum_to_values(grid, spec);
        auto& dst = samples[static_cast<std::size_t>(c)];
        dst.reserve(lookup.size());
        for (std::size_t i : lookup) dst.push_back(vals[i]);
      } else {
        samples[static_cast<std::size_t>(c)] = evaluate_series(grid, spec, pts);
      }
    }
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      CVector v(m);
      for (int c = 0; c < m; ++c) v(c) = norm * samples[static_cast<std::size_t>(c)][i];
      out.entries.emplace(cubes[i], std::move(v));
    }
  }
  return out;
}

GridFunction synthesize(const CoefficientSet& s, const FilterBank& fb, const GridSpec& grid) {
  const Dilation& dil = fb.dilation();
  const int d = dil.dim();
  if (grid.dim() != d || (s.dim != 0 && s.dim != d)) fail(ErrorCode::DimensionMismatch, "coefficient dimension");
  if (s.homogeneous != fb.homogeneous()) fail(ErrorCode::InvalidArgument, "coefficient set and bank disagree on homogeneity");
  const int m = std::max(1, s.vec_dim);
  Channels spectrum(static_cast<std::size_t>(m), std::vector<cplx>(grid.size()));

  // Group entries by scale; the map orders by k first.
  auto it = s.entries.begin();
  while (it != s.entries.end()) {
    const int k = it->first.k;
    std::vector<DilatedCube> cubes;
    std::vector<const CVector*> vals;
    for (; it != s.entries.end() && it->first.k == k; ++it) {
      if (it->second.size() != m) fail(ErrorCode::DimensionMismatch, "coefficient vector length");
      cubes.push_back(it->first);
      vals.push_back(&it->second);
    }
    if (!fb.homogeneous() && k < 0) fail(ErrorCode::InvalidArgument, "inhomogeneous coefficients need k >= 0");
    const auto& mult = fb.multiplier(grid, synthesis_band(fb, k), k);
    const auto pts = corners_of(dil, cubes);
    const auto lookup = lattice_lookup(grid, pts);
    const double norm = std::pow(dil.abs_det(), -0.5 * k);
    for (int c = 0; c < m; ++c) {
      std::vector<cplx> coeffs(cubes.size());
      for (std::size_t i = 0; i < cubes.size(); ++i) coeffs[i] = (*vals[i])(c);
      std::vector<cplx> acc;
      if (!lookup.empty()) {
        std::vector<cplx> impulses(grid.size());
        for (std::size_t i = 0; i < lookup.size(); ++i) impulses[lookup[i]] += coeffs[i];
        acc = values_to_spectrum(grid, impulses);
        const double inv = 1.0 / grid.cell_volume();
        for (auto& v : acc) v *= inv;
      } else {
        acc = accumulate_series(grid, pts, coeffs);
      }
      std::vector<double> scaled(mult.size());
      for (std::size_t i = 0; i < mult.size(); ++i) scaled[i] = norm * mult[i];
      kernels::active().mul_real(acc, scaled);
      kernels::active().axpy(1.0, acc, spectrum[static_cast<std::size_t>(c)]);
    }
  }
  return GridFunction::from_spectrum(grid, std::move(spectrum));
}

GridFunction bandlimited_test_function(const GridSpec& grid, const FilterBank& fb, int k_lo, int k_hi, int id, int m,
                                       std::uint64_t seed) {
  if (k_hi < k_lo) fail(ErrorCode::InvalidArgument, "empty scale band");
  if (m < 1) fail(ErrorCode::InvalidArgument, "channel count must be positive");
  const int d = grid.dim();
  if (d != fb.dilation().dim()) fail(ErrorCode::DimensionMismatch, "grid dimension");
  const bool homog = fb.homogeneous();
  const double golden = 0.6180339887498949;
  const double frac = 0.5 + golden * id - std::floor(0.5 + golden * id);
  const double centre = k_lo + (k_hi - k_lo) * frac;
  const double width = std::max(1.0, 0.5 * (k_hi - k_lo));
  const std::vector<double> xi = grid.frequencies();
  Channels spec(static_cast<std::size_t>(m), std::vector<cplx>(grid.size()));
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::span<const double> x(&xi[i * static_cast<std::size_t>(d)], static_cast<std::size_t>(d));
    const auto terms = fb.orbit(x);
    if (homog && terms.empty()) continue;
    bool inside = true;
    double dsum = 0.0, jbar = 0.0;
    for (const auto& [j, g] : terms) {
      inside = inside && j <= k_hi && (!homog || j >= k_lo);
      dsum += g * g;
      if (homog || j >= 1) jbar += j * g * g;
    }
    if (!inside) continue;
    if (dsum > 0.0) jbar /= dsum;
    const double env = std::exp(-0.5 * std::pow((jbar - centre) / width, 2));
    grid.unflatten(i, idx);
    for (int c = 0; c < m; ++c) {
      std::uint64_t h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(&seed), sizeof seed));
      const std::int64_t tag[2] = {id, c};
      h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(tag), sizeof tag), h);
      for (int a = 0; a < d; ++a) {
        const std::int64_t sidx = grid.signed_index(a, idx[static_cast<std::size_t>(a)]);
        h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(&sidx), sizeof sidx), h);
      }
      std::mt19937_64 rng(h);
      std::normal_distribution<double> gauss;
      const double re = gauss(rng);
      const double im = gauss(rng);
      spec[static_cast<std::size_t>(c)][i] = env * cplx(re, im);
    }
  }
  GridFunction f = GridFunction::from_spectrum(grid, std::move(spec));
  const BallFamily& adj = fb.adjoint_family();
  for (int k = k_hi; k <= k_hi + 4; ++k) {
    if (GridFunction::mass_outside(f, k, adj) <= 1e-10) return f.with_bandlimit(k, adj);
  }
  return f;
}

GridFunction atom(const FilterBank& fb, const GridSpec& grid, const DilatedCube& q, Band band, int m, int channel) {
  if (channel < 0 || channel >= m) fail(ErrorCode::InvalidArgument, "atom channel out of range");
  const Dilation& dil = fb.dilation();
  const Vector x = cube_corner(dil, q);
  const std::vector<double> pts(x.data(), x.data() + x.size());
  const std::vector<cplx> one{1.0};
  auto spec = accumulate_series(grid, pts, one);
  const auto& mult = fb.multiplier(grid, band, q.k);
  const double norm = std::pow(dil.abs_det(), -0.5 * q.k);
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= norm * mult[i];
  Channels ch(static_cast<std::size_t>(m), std::vector<cplx>(grid.size()));
  ch[static_cast<std::size_t>(channel)] = std::move(spec);
  return GridFunction::from_spectrum(grid, std::move(ch));
}

double sampling_identity_check(const GridFunction& f, const GridFunction& g, int k, const Dilation& dil,
                               std::span<const double> x_samples) {
  if (!f.bandlimit() || !g.bandlimit()) fail(ErrorCode::HypothesisViolated, "sampling identity needs band-limited inputs");
  if (!(f.grid() == g.grid()) || f.vec_dim() != g.vec_dim()) fail(ErrorCode::DimensionMismatch, "input shapes differ");
  const GridSpec& grid = f.grid();
  const auto cubes = periodic_cubes(dil, k, grid);
  const auto pts = corners_of(dil, cubes);
  const double vol = std::pow(dil.abs_det(), -k);
  double err = 0.0;
  for (int c = 0; c < f.vec_dim(); ++c) {
    std::vector<cplx> lhs_spec = f.spectrum(c);
    kernels::active().mul_complex(lhs_spec, g.spectrum(c), false);
    const auto lhs = evaluate_series(grid, lhs_spec, x_samples);
    // sum_j vol f(x_j) g(x - x_j) has transform g^(xi) sum_j vol f(x_j) e^{-i xi.x_j}.
    auto fv = evaluate_series(grid, f.spectrum(c), pts);
    for (auto& v : fv) v *= vol;
    auto rhs_spec = accumulate_series(grid, pts, fv);
    kernels::active().mul_complex(rhs_spec, g.spectrum(c), false);
    const auto rhs = evaluate_series(grid, rhs_spec, x_samples);
    for (std::size_t i = 0; i < lhs.size(); ++i) err = std::max(err, std::abs(lhs[i] - rhs[i]));
  }
  return err;
}

double sampling_inequality_probe(const GridFunction& f, const MatrixWeightField& w, double p, const Dilation& dil,
                                 int n_side) {
  if (!f.bandlimit() || *f.bandlimit() > 0) fail(ErrorCode::HypothesisViolated, "probe needs f in E_0");
  if (f.vec_dim() != w.vec_dim()) fail(ErrorCode::DimensionMismatch, "weight and function vector dimensions differ");
  const GridSpec& grid = f.grid();
  const int d = dil.dim();
  const int m = f.vec_dim();
  const double rhs = weighted_lp_norm(f, w, p);
  if (rhs == 0.0) return 0.0;
  const auto cubes = periodic_cubes(dil, 0, grid);
  const auto pts = corners_of(dil, cubes);
  std::vector<std::vector<cplx>> fj;
  for (int c = 0; c < m; ++c) fj.push_back(evaluate_series(grid, f.spectrum(c), pts));
  double lhs = 0.0;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    CVector v(m);
    for (int c = 0; c < m; ++c) v(c) = fj[static_cast<std::size_t>(c)][i];
    const auto nodes = cube_nodes(dil, cubes[i], n_side);
    const std::size_t nn = nodes.size() / static_cast<std::size_t>(d);
    double acc = 0.0;
    for (std::size_t t = 0; t < nn; ++t) {
      const std::span<const double> x(&nodes[t * d], static_cast<std::size_t>(d));
      acc += w.is_scalar() ? w.scalar_at(x) * std::pow(v.norm(), p) : std::pow((w.root(x, 1.0 / p) * v).norm(), p);
    }
    lhs += acc / static_cast<double>(nn) * cube_volume(dil, 0);
  }
  return std::pow(lhs, 1.0 / p) / rhs;
}

}  // namespace aniso
