// Acceptance checks, one line per criterion:
//   acceptance [criterion...] [--cli <path to aniso>]
// With no criterion every one runs. Exit status is the number of failures.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "aniso/error.hpp"
#include "aniso/norms.hpp"
#include "aniso/operators.hpp"
#include "aniso/transform.hpp"
#include "aniso/weights.hpp"

using namespace aniso;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Preset {
  std::string name;
  Matrix a;
  double L;
};

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

std::vector<Preset> presets2d() {
  return {{"dyadic2d", mat({{2, 0}, {0, 2}}), 32.0},
          {"diag23", mat({{2, 0}, {0, 3}}), 36.0},
          {"quincunx", mat({{1, -1}, {1, 1}}), 32.0}};
}

std::vector<Preset> all_presets() {
  auto p = presets2d();
  p.insert(p.begin(), Preset{"dyadic1d", mat({{2}}), 64.0});
  return p;
}

FilterOptions second_bank_options() {
  FilterOptions o;
  o.kappa = 2.2;
  o.outer_fraction = 0.8;
  o.split = 0.4;
  return o;
}

Vector random_point(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> lr(-4, 4);
  Vector x(d);
  for (int a = 0; a < d; ++a) x(a) = g(rng);
  return x.normalized() * std::pow(10.0, lr(rng));
}

// ---------------------------------------------------------------------------

Outcome quasi_norm_laws() {
  Outcome out;
  std::string detail;
  for (const auto& p : presets2d()) {
    const auto dil = Dilation::validate(p.a);
    const auto bf = BallFamily::build(dil);
    const double det = dil.abs_det();
    const double c = std::pow(det, bf.sigma());
    std::mt19937_64 rng(101);
    double worst = 0;
    for (int t = 0; t < 10000; ++t) {
      const Vector x = random_point(rng, 2);
      const Vector ax = dil.matrix() * x;
      worst = std::max(worst, std::abs(bf.quasi_norm(ax) / bf.quasi_norm(x) - det) / det);
    }
    int violations = 0;
    for (int t = 0; t < 10000; ++t) {
      const Vector x = random_point(rng, 2), y = random_point(rng, 2);
      if (bf.quasi_norm(Vector(x + y)) > c * (bf.quasi_norm(x) + bf.quasi_norm(y))) ++violations;
    }
    out.pass = out.pass && worst <= 1e-12 && violations == 0;
    detail += fmt("%s homogeneity err %.1e, triangle violations %d (C=%g); ", p.name.c_str(), worst, violations, c);
  }
  out.detail = detail;
  return out;
}

Outcome eccentricity() {
  Outcome out;
  for (const auto& p : all_presets()) {
    const auto bf = BallFamily::build(Dilation::validate(p.a));
    const double c1 = bf.eccentricity_constant(4096), c4 = bf.eccentricity_constant(16384);
    const double change = c4 / c1 - 1.0;
    out.pass = out.pass && std::isfinite(c4) && std::abs(change) <= 0.10;
    out.detail += fmt("%s C=%.4g->%.4g (%+.1f%%); ", p.name.c_str(), c1, c4, 100 * change);
  }
  return out;
}

Outcome calderon() {
  Outcome out;
  for (const auto& p : all_presets()) {
    const auto dil = Dilation::validate(p.a);
    const auto grid = GridSpec::cube(dil.dim(), dil.dim() == 1 ? 1024 : 128, p.L);
    const auto hom = FilterBank::synthesize(dil);
    const auto rh = hom.verify_calderon(1000, hom.coarsest_scale(grid), hom.finest_scale(grid));
    FilterOptions o;
    o.homogeneous = false;
    const auto inh = FilterBank::synthesize(dil, o);
    const auto ri = inh.verify_calderon(1000, 1, o.k_max);
    out.pass = out.pass && rh.max_residual < 1e-8 && ri.max_residual < 1e-8 && rh.samples == 1000 && ri.samples == 1000;
    out.detail += fmt("%s hom %.1e inh %.1e; ", p.name.c_str(), rh.max_residual, ri.max_residual);
  }
  return out;
}

Outcome reconstruction() {
  Outcome out;
  for (const auto& p : all_presets()) {
    const auto dil = Dilation::validate(p.a);
    const auto grid = GridSpec::cube(dil.dim(), dil.dim() == 1 ? 1024 : 128, p.L);
    for (bool homogeneous : {true, false}) {
      FilterOptions o;
      o.homogeneous = homogeneous;
      const auto fb = FilterBank::synthesize(dil, o);
      const int kf = fb.finest_scale(grid);
      const int kc = homogeneous ? fb.coarsest_scale(grid) : 0;
      double worst = 0;
      for (int id = 0; id < 10; ++id) {
        const auto f = bandlimited_test_function(grid, fb, homogeneous ? kc + 1 : 0, kf - 1, id);
        const auto s = analyze(f, fb, AnalysisWindow{kc, kf, std::nullopt});
        const auto back = synthesize(s, fb, grid);
        worst = std::max(worst, back.plus(f, -1.0).l2_norm() / f.l2_norm());
      }
      out.pass = out.pass && worst < 1e-6;
      out.detail += fmt("%s %s %.1e; ", p.name.c_str(), homogeneous ? "hom" : "inh", worst);
    }
  }
  return out;
}

// Shared by the norm-equivalence and bank-independence criteria.
struct HarnessRun {
  std::string label;
  std::map<int, HarnessReport> by_grid;  // n -> report
};

std::vector<HarnessRun> harness_runs(bool all_weights) {
  const auto dil = Dilation::validate(mat({{2, 0}, {0, 2}}));
  const auto bf = BallFamily::build(dil);
  const auto fa = FilterBank::synthesize(dil);
  const auto fbb = FilterBank::synthesize(dil, second_bank_options());
  const auto coarse = GridSpec::cube(2, 128, 32.0);
  const int kf = std::min(fa.finest_scale(coarse), fbb.finest_scale(coarse));
  const int kc = std::max(fa.coarsest_scale(coarse), fbb.coarsest_scale(coarse));
  CMatrix pd(2, 2);
  pd << 2.0, 0.5, 0.5, 1.0;
  struct W {
    std::string name;
    MatrixWeightField w;
  };
  std::vector<W> weights{{"I", MatrixWeightField::identity(1)},
                         {"scalar_power(0.3)", MatrixWeightField::scalar_power(bf, 0.3)}};
  if (all_weights) weights.insert(weights.begin() + 1, W{"constant PD (2x2)", MatrixWeightField::constant(pd)});
  const std::vector<BesovParams> params{{0.0, 2.0, 2.0, true}, {0.5, 2.0, 1.0, true}, {1.0, 3.0, kInf, true}};
  std::vector<HarnessRun> runs;
  for (const auto& w : weights) {
    for (const auto& bp : params) {
      HarnessRun run;
      run.label = fmt("W=%s (%g,%g,%s)", w.name.c_str(), bp.alpha, bp.p, std::isinf(bp.q) ? "inf" : fmt("%g", bp.q).c_str());
      runs.push_back(run);
    }
  }
  for (int n : {128, 256}) {
    const auto grid = GridSpec::cube(2, n, 32.0);
    std::size_t r = 0;
    for (const auto& w : weights) {
      std::vector<GridFunction> tests;
      for (int id = 0; id < 5; ++id) tests.push_back(bandlimited_test_function(grid, fa, kc, kf, id, w.w.vec_dim()));
      for (const auto& bp : params) {
        runs[r++].by_grid[n] = equivalence_harness(tests, fa, fbb, w.w, bp, kc - 1, kf, 42);
      }
    }
  }
  return runs;
}

double drift(const HarnessReport& a, const HarnessReport& b, double HarnessRow::*field) {
  double worst = 0;
  for (std::size_t i = 0; i < a.rows.size() && i < b.rows.size(); ++i) {
    worst = std::max(worst, std::abs(b.rows[i].*field / a.rows[i].*field - 1.0));
  }
  return worst;
}

Outcome norm_equivalence() {
  Outcome out;
  double lo = kInf, hi = 0, worst = 0;
  for (const auto& run : harness_runs(true)) {
    const auto& a = run.by_grid.at(128);
    const auto& b = run.by_grid.at(256);
    for (const auto* r : {&a, &b}) {
      lo = std::min({lo, r->r1_min, r->r2_min});
      hi = std::max({hi, r->r1_max, r->r2_max});
      out.pass = out.pass && r->rows.size() == 5;
    }
    const double d = std::max(drift(a, b, &HarnessRow::r1), drift(a, b, &HarnessRow::r2));
    worst = std::max(worst, d);
    out.detail += fmt("%s r1 [%.3f,%.3f] r2 [%.3f,%.3f] drift %.1f%%; ", run.label.c_str(), b.r1_min, b.r1_max, b.r2_min,
                      b.r2_max, 100 * d);
  }
  out.pass = out.pass && lo >= 0.1 && hi <= 10.0 && worst < 0.20;
  out.detail = fmt("range [%.3f, %.3f], max drift %.1f%%: ", lo, hi, 100 * worst) + out.detail;
  return out;
}

Outcome bank_independence() {
  Outcome out;
  double lo = kInf, hi = 0, worst = 0;
  for (const auto& run : harness_runs(false)) {
    const auto& a = run.by_grid.at(128);
    const auto& b = run.by_grid.at(256);
    lo = std::min({lo, a.r3_min, b.r3_min});
    hi = std::max({hi, a.r3_max, b.r3_max});
    worst = std::max(worst, drift(a, b, &HarnessRow::r3));
  }
  out.pass = lo >= 0.1 && hi <= 10.0 && worst < 0.20;
  out.detail = fmt("r3 in [%.3f, %.3f] over 6 settings x 5 functions x 2 grids, drift %.2f%%", lo, hi, 100 * worst);
  return out;
}

// Brute-force (avg_B w)(avg_B w^{-1}) for w = rho^a on B = B_k, by a midpoint
// sum with `cells` cells; divergence shows as growth with the cell count.
double brute_ap(const BallFamily& bf, double a, int k, int cells) {
  const double half = 0.5 * std::pow(2.0, k) * 1.0;  // B_k = A^k Delta, |Delta| = 1 on the line
  double sw = 0, sinv = 0;
  const double h = 2 * half / cells;
  for (int i = 0; i < cells; ++i) {
    const double x[1] = {-half + (i + 0.5) * h};
    const double r = bf.quasi_norm(x);
    sw += std::pow(r, a);
    sinv += std::pow(r, -a);
  }
  return (sw / cells) * (sinv / cells);
}

Outcome ap_classifier() {
  Outcome out;
  const auto dil = Dilation::validate(mat({{2}}));
  const auto bf = BallFamily::build(dil);
  const std::vector<Ball> balls{{Vector::Zero(1), 0}, {Vector::Zero(1), 2}, {Vector::Constant(1, 0.3), -1}};
  std::string line;
  for (double a : {-1.5, -0.5, 0.0, 0.5, 1.5}) {
    const auto w = MatrixWeightField::scalar_power(bf, a);
    const auto primal = classify_ap([&](std::size_t n) { return ap_estimate(w, 2.0, bf, balls, n); }, 256, 3);
    const auto dual = classify_ap([&](std::size_t n) { return ap_estimate_dual(w, 2.0, bf, balls, n); }, 256, 3);
    // Oracle: 2^12 vs 2^16 cells on the ball centred at the origin.
    const double o1 = brute_ap(bf, a, 0, 1 << 12), o2 = brute_ap(bf, a, 0, 1 << 16);
    const bool oracle_bounded = o2 < 1.5 * o1;
    const bool expect = std::abs(a) < 1.0;
    out.pass = out.pass && primal.bounded == oracle_bounded && dual.bounded == primal.bounded && primal.bounded == expect;
    line += fmt("a=%g %s/%s oracle %s (%.3g->%.3g); ", a, primal.bounded ? "bounded" : "unbounded",
                dual.bounded ? "bounded" : "unbounded", oracle_bounded ? "bounded" : "unbounded", o1, o2);
  }
  out.detail = line;
  return out;
}

Outcome reducing_operators() {
  Outcome out;
  const auto dil = Dilation::validate(mat({{2, 0}, {0, 2}}));
  const auto bf = BallFamily::build(dil);
  const auto grid = GridSpec::cube(2, 64, 8.0);
  std::vector<DilatedCube> cubes;
  for (int k = -1; k <= 0; ++k)
    for (const auto& q : periodic_cubes(dil, k, grid)) cubes.push_back(q);
  const auto rot = MatrixWeightField::rotated_diag(bf, 0.3, Vector::Constant(2, 0.4), 0.5, -0.4);
  const auto m3 = MatrixWeightField::block_diag({MatrixWeightField::scalar_power(bf, 0.3), rot});

  // p = 2, constant weights: exact norm and reducing-operator norm agree.
  double worst_const = 0;
  for (int m : {1, 2, 3}) {
    CMatrix w = CMatrix::Identity(m, m);
    for (int i = 0; i < m; ++i) {
      w(i, i) = 1.0 + i;
      if (i + 1 < m) w(i, i + 1) = w(i + 1, i) = 0.3;
    }
    const auto field = MatrixWeightField::constant(w);
    CoefficientSet s;
    s.dim = 2;
    s.vec_dim = m;
    s.k_min = -1;
    s.k_max = 0;
    s.dilation_hash = dil.hash();
    std::mt19937_64 rng(m);
    std::normal_distribution<double> g;
    for (const auto& q : cubes) {
      CVector v(m);
      for (int i = 0; i < m; ++i) v(i) = cplx(g(rng), g(rng));
      s.entries.emplace(q, v);
    }
    const auto rf = build_reducing_family(field, 2.0, dil, cubes, direction_grid(m, 16));
    const BesovParams bp{0.5, 2.0, 2.0, true};
    const double a = sequence_norm(s, field, bp, dil), b = sequence_norm_reducing(s, rf, bp, dil);
    worst_const = std::max(worst_const, std::abs(a - b) / a);
  }
  out.pass = worst_const <= 1e-6;

  // Sandwich on the direction grid for variable weights.
  const auto sandwich = [&](const MatrixWeightField& w, double p, int dirs, double& lo_out, double& hi_out) {
    const int m = w.vec_dim();
    const auto grid_dirs = direction_grid(m, dirs);
    lo_out = kInf;
    hi_out = 0;
    for (const auto& q : cubes) {
      const auto r = reducing_operator(w, p, dil, q, grid_dirs);
      for (const auto& u : grid_dirs) {
        const double ratio = (r.matrix * u).norm() / averaged_norm(w, p, dil, q, u);
        lo_out = std::min(lo_out, ratio);
        hi_out = std::max(hi_out, ratio);
      }
    }
    const double sm = std::sqrt(static_cast<double>(m)), eps = 1e-9;
    return lo_out >= 1.0 / sm - eps && hi_out <= sm + eps;
  };
  out.detail = fmt("p=2 constant-weight agreement %.1e over m=1,2,3; ", worst_const);
  for (double p : {2.0, 3.0}) {
    for (const auto* w : {&rot, &m3}) {
      double lo = 0, hi = 0;
      const bool ok = sandwich(*w, p, p == 3.0 ? 64 : 32, lo, hi);
      out.pass = out.pass && ok;
      out.detail += fmt("p=%g m=%d |A_Q u|/omega in [%.4f, %.4f] over %zu cubes; ", p, w->vec_dim(), lo, hi, cubes.size());
    }
  }
  return out;
}

// Seeded spectrum under a smooth bump of radius r in |xi|, drawn per signed
// frequency index so that the function survives grid refinement.
GridFunction smooth_band(const GridSpec& grid, double r, std::uint64_t seed) {
  Channels spec(1, std::vector<cplx>(grid.size()));
  std::vector<int> idx(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid.frequency(i).norm() / r;
    if (t >= 1.0) continue;
    grid.unflatten(i, idx);
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ULL;
    for (int a = 0; a < grid.dim(); ++a) h = (h ^ static_cast<std::uint64_t>(grid.signed_index(a, idx[a]) + 4096)) * 0x100000001B3ULL;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> g;
    spec[0][i] = std::exp(1.0 - 1.0 / (1.0 - t * t)) * cplx(g(rng), g(rng));
  }
  return GridFunction::from_spectrum(grid, spec);
}

Outcome sampling_lemma() {
  Outcome out;
  const auto dil = Dilation::validate(mat({{2}}));
  const auto adj = BallFamily::build(dil.adjoint());
  const auto grid = GridSpec::cube(1, 256, 64.0);
  std::vector<double> xs;
  for (int i = 0; i < 64; ++i) xs.push_back(-31.7 + 0.99 * i);
  double good = 0, bad = kInf;
  for (std::uint64_t s = 0; s < 5; ++s) {
    // Hypothesis: spectra in B*_1 = (-1, 1), inside [-pi, pi].
    const auto f = smooth_band(grid, 0.95, 2 * s + 1).with_bandlimit(0, adj);
    const auto g = smooth_band(grid, 0.95, 2 * s + 2).with_bandlimit(0, adj);
    good = std::max(good, sampling_identity_check(f, g, 0, dil, xs));
    // Violation: spectra reach |xi| = 6 > pi, still sampled at k = 0.
    const auto fw = smooth_band(grid, 6.0, 2 * s + 11).with_bandlimit(3, adj);
    const auto gw = smooth_band(grid, 6.0, 2 * s + 12).with_bandlimit(3, adj);
    std::vector<cplx> prod = fw.spectrum(0);
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= gw.spectrum(0)[i];
    double scale = 0;
    for (const cplx& v : evaluate_series(grid, prod, xs)) scale = std::max(scale, std::abs(v));
    bad = std::min(bad, sampling_identity_check(fw, gw, 0, dil, xs) / scale);
  }
  out.pass = good < 1e-7 && bad > 0.1;
  out.detail = fmt("hypothesis satisfied: max error %.2e; violated (k too small): relative error >= %.2f", good, bad);
  return out;
}

Outcome maximal_probe() {
  Outcome out;
  const auto dil = Dilation::validate(mat({{2, 0}, {0, 2}}));
  const auto bf = BallFamily::build(dil);
  const auto adj = BallFamily::build(dil.adjoint());
  const std::vector<std::pair<std::string, MatrixWeightField>> weights{
      {"I", MatrixWeightField::identity(1)}, {"scalar_power(0.3)", MatrixWeightField::scalar_power(bf, 0.3)}};
  for (const auto& [name, w] : weights) {
    double mx[2] = {0, 0};
    int g = 0;
    for (int n : {64, 128}) {
      const auto grid = GridSpec::cube(2, n, 16.0);
      for (std::uint64_t s = 0; s < 50; ++s) {
        const auto f = smooth_band(grid, 1.1, s + 1).with_bandlimit(0, adj);
        mx[g] = std::max(mx[g], sampling_inequality_probe(f, w, 2.0, dil));
      }
      ++g;
    }
    const double change = mx[1] / mx[0] - 1.0;
    out.pass = out.pass && std::isfinite(mx[1]) && mx[1] <= 10.0 && std::abs(change) <= 0.10;
    out.detail += fmt("W=%s max ratio %.4f (n=64) %.4f (n=128), change %+.2f%%; ", name.c_str(), mx[0], mx[1], 100 * change);
  }
  return out;
}

Outcome molecules() {
  Outcome out;
  // Synthesized psi_Q on the quincunx preset, 3 scales x 25 cubes.
  {
    const auto dil = Dilation::validate(mat({{1, -1}, {1, 1}}));
    const auto bf = BallFamily::build(dil);
    const auto fb = FilterBank::synthesize(dil);
    const auto grid = GridSpec::cube(2, 256, 32.0);
    const int kf = fb.finest_scale(grid);
    const auto mp = MoleculeParams::make(0.0, 2.0, 1.0, 1.1, 0.5, dil);
    int checked = 0, passed = 0;
    double worst = -kInf;
    for (int k = kf - 2; k <= kf; ++k)
      for (int j0 = -2; j0 <= 2; ++j0)
        for (int j1 = -2; j1 <= 2; ++j1) {
          const DilatedCube q{k, {j0, j1}};
          const auto r = molecule_check(atom(fb, grid, q, Band::Psi), q, mp, bf);
          ++checked;
          if (r.pass) ++passed;
          worst = std::max(worst, r.conditions[0].margin);
        }
    out.pass = passed == checked && checked == 75;
    out.detail += fmt("quincunx psi_Q k=%d..%d: %d/%d pass (worst tail slope %.3f); ", kf - 2, kf, passed, checked, worst);
  }
  const auto only_fails = [](const MoleculeReport& r, int which) {
    bool ok = !r.pass && r.conditions[static_cast<std::size_t>(which)].checked &&
              !r.conditions[static_cast<std::size_t>(which)].pass;
    for (int c = 0; c < 4; ++c)
      if (c != which) ok = ok && r.conditions[static_cast<std::size_t>(c)].pass;
    return ok;
  };
  const auto flags = [](const MoleculeReport& r) {
    std::string s;
    for (const auto& c : r.conditions) s += !c.checked ? '-' : c.pass ? 'P' : 'F';
    return s;
  };
  // Gaussian with nonzero mean on the dyadic preset: moments fail.
  {
    const auto dil = Dilation::validate(mat({{2, 0}, {0, 2}}));
    const auto bf = BallFamily::build(dil);
    const auto grid = GridSpec::cube(2, 256, 32.0);
    const auto mp = MoleculeParams::make(0.0, 2.0, 1.0, 1.1, 0.5, dil);
    Channels v(1, std::vector<cplx>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Vector u = bf.shape() * grid.point(i);
      v[0][i] = std::exp(-0.5 * u.squaredNorm());
    }
    const auto r = molecule_check(GridFunction::from_values(grid, v), DilatedCube{0, {0, 0}}, mp, bf);
    out.pass = out.pass && only_fails(r, 1);
    out.detail += fmt("Gaussian (N=%d) conditions %s; ", mp.N(), flags(r).c_str());
  }
  // Slowly decaying profile on diag(2,3): the envelope condition fails.
  {
    const auto dil = Dilation::validate(mat({{2, 0}, {0, 3}}));
    const auto bf = BallFamily::build(dil);
    const auto grid = GridSpec::cube(2, 256, 36.0);
    const auto mp = MoleculeParams::make(0.5, 2.0, 1.0, 3.0, 0.6, dil);
    Channels v(1, std::vector<cplx>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      v[0][i] = std::pow(1.0 + grid.point(i).squaredNorm() / 4.0, -5.0);
    }
    const auto r = molecule_check(GridFunction::from_values(grid, v), DilatedCube{0, {0, 0}}, mp, bf);
    out.pass = out.pass && only_fails(r, 0);
    out.detail += fmt("slow profile (decay exponent %.3g) conditions %s", mp.decay_exponent(), flags(r).c_str());
  }
  return out;
}

Outcome almost_diagonal() {
  Outcome out;
  const auto dil = Dilation::validate(mat({{2}}));
  const auto bf = BallFamily::build(dil);
  const auto fb1 = FilterBank::synthesize(dil);
  const auto fb2 = FilterBank::synthesize(dil, second_bank_options());
  const auto grid = GridSpec::cube(1, 1024, 64.0);
  const int kf = std::min(fb1.finest_scale(grid), fb2.finest_scale(grid));
  const int kb = kf - 4;
  const AdParams ap{0.0, 2.0, 1.0, 0.5};
  AdParams ap1 = ap;
  ap1.c = 1.0;
  const auto w = MatrixWeightField::identity(1);
  const BesovParams bp{0.0, 2.0, 2.0, true};
  const auto period = grid.L;

  const auto torus_t = [&](const DilatedCube& q, const DilatedCube& p) {
    Vector d = cube_corner(dil, q) - cube_corner(dil, p);
    d(0) -= period[0] * std::floor((d(0) + 0.5 * period[0]) / period[0]);
    return 1.0 + bf.quasi_norm(d) / std::max(cube_volume(dil, q.k), cube_volume(dil, p.k));
  };
  struct Probe {
    double three = 0, five = 0;
  };
  std::map<std::string, Probe> probes;
  std::map<std::string, bool> certified;
  for (int scales : {3, 5}) {
    const auto fam = periodic_family(dil, grid, kb, kb + scales - 1);
    const auto record = [&](const std::string& name, AdMatrix m, const AdParams& p, bool probe) {
      const auto cert = ad_certify(m, p, bf);
      const bool ok = cert.c.has_value();
      if (!certified.count(name)) certified[name] = ok;
      certified[name] = certified[name] && ok;
      out.detail += fmt("%s[%d] %s", name.c_str(), scales, ok ? fmt("c*=%.3g", *cert.c).c_str() : "not certified");
      out.detail += fmt(" (dslope %.3f); ", cert.distance_slope);
      if (probe) {
        const double r = ad_norm_probe(m, w, bp, dil, 50).max_ratio;
        (scales == 3 ? probes[name].three : probes[name].five) = r;
      }
    };
    record("identity", AdMatrix::tabulate(fam, fam, ap, [](auto& q, auto& p) { return q == p ? cplx(1) : cplx(0); }, period),
           ap, true);
    record("envelope(c=0.5)",
           AdMatrix::tabulate(fam, fam, ap, [&](auto& q, auto& p) { return cplx(ad_envelope(q, p, ap, bf, period)); }, period),
           ap, false);
    record("envelope(c=1)",
           AdMatrix::tabulate(fam, fam, ap1, [&](auto& q, auto& p) { return cplx(ad_envelope(q, p, ap1, bf, period)); }, period),
           ap1, true);
    // Distance decay J - 1/2 instead of J + c.
    record("sub-J",
           AdMatrix::tabulate(fam, fam, ap, [&](auto& q, auto& p) {
             return cplx(ad_envelope(q, p, ap, bf, period) * std::pow(torus_t(q, p), ap.c + 0.5));
           }, period),
           ap, false);
    record("gram bank1", ad_from_operator(OperatorSpec::identity(), fb1, grid, fam, ap), ap, true);
    record("gram bank2", ad_from_operator(OperatorSpec::identity(), fb2, grid, fam, ap), ap, true);
  }
  out.pass = certified["identity"] && certified["envelope(c=0.5)"] && certified["envelope(c=1)"] &&
             !certified["sub-J"] && certified["gram bank1"] && certified["gram bank2"];
  std::string probe_line;
  for (const auto& [name, p] : probes) {
    const double d = std::abs(p.five / p.three - 1.0);
    out.pass = out.pass && d < 0.25;
    probe_line += fmt("%s %.4f->%.4f (%.1f%%); ", name.c_str(), p.three, p.five, 100 * d);
  }
  out.detail = fmt("scales %d..%d -> %d..%d, probe max ratio over 50 samples: ", kb, kb + 2, kb, kb + 4) + probe_line +
               out.detail;
  return out;
}

Outcome completeness() {
  Outcome out;
  const auto dil = Dilation::validate(mat({{2, 0}, {0, 2}}));
  const auto bf = BallFamily::build(dil);
  const auto fb = FilterBank::synthesize(dil);
  const auto grid = GridSpec::cube(2, 64, 32.0);
  const int kf = fb.finest_scale(grid), kc = fb.coarsest_scale(grid);
  std::vector<DilatedCube> cubes;
  for (int k = kc + 1; k < kf; ++k)
    for (const auto& q : periodic_cubes(dil, k, grid)) cubes.push_back(q);
  const auto w = MatrixWeightField::rotated_diag(bf, 0.2, Vector::Constant(2, 0.3), 0.1, -0.1);
  const BesovParams bp{0.5, 2.0, 2.0, true};
  const auto rf = build_reducing_family(w, bp.p, dil, cubes, direction_grid(2, 32));
  const double ratio = 0.5;
  const auto rep = cauchy_convergence_demo(bp, w, rf, fb, grid, kc, kf, ratio, 6, 24, 7);
  const double rel = std::abs(rep.rate / ratio - 1.0);
  out.pass = rep.operators_invertible && rel <= 0.10;
  out.detail = fmt("W=rotated_diag m=2, %zu cubes, construction rate %.2f, measured %.4f (%.2f%% off); distances", cubes.size(),
                   ratio, rep.rate, 100 * rel);
  for (double d : rep.distances) out.detail += fmt(" %.3g", d);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& cli) {
  Outcome out;
  if (cli.empty() || !fs::exists(cli)) {
    out.pass = false;
    out.detail = "CLI binary not found: " + cli;
    return out;
  }
  const fs::path config = fs::path(ANISO_SOURCE_DIR) / "configs" / "smoke.json";
  const std::vector<std::string> commands{"validate-dilation", "build-filters", "transform --roundtrip", "norms",
                                          "check-weight",      "molecules",     "ad"};
  const fs::path base = fs::temp_directory_path() / ("aniso_determinism_" + std::to_string(::getpid()));
  std::string stdout_text[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = base / (run == 0 ? "a" : "b");
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& c : commands) {
      const std::string cmd = "\"" + cli + "\" " + c + " --config \"" + config.string() + "\" --out \"" + dir.string() +
                              "\" >> \"" + (dir / "stdout.txt").string() + "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        out.pass = false;
        out.detail = "command failed: " + cmd;
        return out;
      }
    }
    const std::string cmd = "\"" + cli + "\" report \"" + dir.string() + "\" --out \"" + (dir / "report").string() +
                            "\" >> \"" + (dir / "stdout.txt").string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      out.pass = false;
      out.detail = "report failed";
      return out;
    }
    stdout_text[run] = read_file(dir / "stdout.txt");
  }
  std::size_t files = 0, manifests = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), base / "a");
    const std::string a = read_file(e.path()), b = read_file(base / "b" / rel);
    ++files;
    if (rel.filename().string().rfind("manifest_", 0) == 0) {
      // Only the creation time may differ.
      auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
      ja.erase("created");
      jb.erase("created");
      ++manifests;
      if (ja != jb) differing.push_back(rel.string());
    } else if (a != b) {
      differing.push_back(rel.string());
    }
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(base / "b"))
    if (e.is_regular_file()) ++files_b;
  out.pass = differing.empty() && files == files_b && files > commands.size() && manifests == commands.size();
  out.detail = fmt("%zu files (%zu manifests) from 7 subcommands + report compared byte-wise, %zu differ", files, manifests,
                   differing.size());
  for (const auto& d : differing) out.detail += " " + d;
  fs::remove_all(base);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else {
      wanted.push_back(std::atoi(a.c_str()));
    }
  }
  if (cli.empty()) cli = (fs::path(argv[0]).parent_path() / ".." / "tools" / "aniso").string();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"quasi-norm laws", quasi_norm_laws},
      {"eccentricity bounds", eccentricity},
      {"Calderon residual", calderon},
      {"frame reconstruction", reconstruction},
      {"norm equivalence", norm_equivalence},
      {"bank independence", bank_independence},
      {"A_p classifier", ap_classifier},
      {"reducing operators", reducing_operators},
      {"sampling identity", sampling_lemma},
      {"maximal-type probe", maximal_probe},
      {"molecules", molecules},
      {"almost diagonal", almost_diagonal},
      {"completeness", completeness},
      {"determinism", [&] { return determinism(cli); }},
  };
  if (wanted.empty())
    for (int c = 1; c <= static_cast<int>(criteria.size()); ++c) wanted.push_back(c);
  int failures = 0;
  for (int c : wanted) {
    if (c < 1 || c > static_cast<int>(criteria.size())) {
      std::printf("criterion %d: unknown\n", c);
      ++failures;
      continue;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(c - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %2d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", c, name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures;
}
