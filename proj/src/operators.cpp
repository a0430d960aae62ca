#include "aniso/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "aniso/error.hpp"

namespace aniso {

namespace {

std::vector<std::vector<int>> multi_indices(int d, int lo, int hi) {
  std::vector<std::vector<int>> out;
  if (hi < 0) return out;
  std::vector<int> g(static_cast<std::size_t>(d), 0);
  while (true) {
    int s = 0;
    for (int v : g) s += v;
    if (s >= lo && s <= hi) out.push_back(g);
    int a = d - 1;
    while (a >= 0) {
      if (++g[static_cast<std::size_t>(a)] <= hi) break;
      g[static_cast<std::size_t>(a)] = 0;
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

double wrap(double v, double period) { return v - period * std::floor((v + 0.5 * period) / period); }

Vector periodic_image(Vector v, std::span<const double> period) {
  for (std::size_t a = 0; a < period.size(); ++a) v(static_cast<Eigen::Index>(a)) = wrap(v(static_cast<Eigen::Index>(a)), period[a]);
  return v;
}

// |g(A^{-k} .)| derivatives: each channel's spectrum times prod (i eta_a)^gamma_a,
// eta = (A^{-k})^T xi, back on the grid; pointwise Euclidean norm over channels.
std::vector<double> derivative_magnitude(const GridFunction& g, const Matrix& inv_t, const std::vector<int>& gamma,
                                         const std::vector<double>& freqs, std::vector<std::vector<cplx>>* keep) {
  const GridSpec& grid = g.grid();
  const int d = grid.dim();
  const std::size_t n = grid.size();
  std::vector<cplx> factor(n, 1.0);
  bool trivial = true;
  for (int v : gamma) trivial = trivial && v == 0;
  if (!trivial) {
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Map<const Vector> xi(&freqs[i * static_cast<std::size_t>(d)], d);
      const Vector eta = inv_t * xi;
      cplx f = 1.0;
      for (int a = 0; a < d; ++a)
        for (int r = 0; r < gamma[static_cast<std::size_t>(a)]; ++r) f *= cplx(0.0, eta(a));
      factor[i] = f;
    }
  }
  std::vector<double> mag(n, 0.0);
  for (int c = 0; c < g.vec_dim(); ++c) {
    std::vector<cplx> vals;
    if (trivial) {
      vals = g.values(c);
    } else {
      std::vector<cplx> spec = g.spectrum(c);
      for (std::size_t i = 0; i < n; ++i) spec[i] *= factor[i];
      vals = spectrum_to_values(grid, spec);
    }
    for (std::size_t i = 0; i < n; ++i) mag[i] += std::norm(vals[i]);
    if (keep) keep->push_back(std::move(vals));
  }
  for (auto& v : mag) v = std::sqrt(v);
  return mag;
}

void check_resolved(const GridFunction& g, double tol) {
  const GridSpec& grid = g.grid();
  const int d = grid.dim();
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (int c = 0; c < g.vec_dim(); ++c) {
    const auto& spec = g.spectrum(c);
    double top = 0.0, edge = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      grid.unflatten(i, idx);
      bool outer = false;
      for (int a = 0; a < d; ++a) {
        const int m = std::abs(grid.signed_index(a, idx[static_cast<std::size_t>(a)]));
        outer = outer || m >= grid.n[static_cast<std::size_t>(a)] / 2 - 1;
      }
      const double v = std::abs(spec[i]);
      top = std::max(top, v);
      if (outer) edge = std::max(edge, v);
    }
    if (top > 0.0 && edge > tol * top) {
      fail(ErrorCode::GridTooCoarse, "spectrum has not decayed at the Nyquist layers; derivatives are unresolved");
    }
  }
}

double fit_slope(const std::map<double, double>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(pts.size());
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

struct ShellProfile {
  std::map<int, double> peak;  // shell -> max ratio
};

void record(ShellProfile& prof, int shell, double value, double envelope) {
  if (value <= 0.0) return;
  double& r = prof.peak[shell];
  r = std::max(r, value / envelope);
}

ConditionReport judge(const ShellProfile& prof, const MoleculeOptions& opts, double log_det) {
  ConditionReport r;
  r.checked = true;
  std::map<double, double> tail;
  for (auto it = prof.peak.rbegin(); it != prof.peak.rend() && static_cast<int>(tail.size()) < opts.tail_shells; ++it) {
    if (it->second > 0.0) tail[it->first * log_det] = std::log(it->second);
  }
  for (const auto& [j, v] : prof.peak) r.constant = std::max(r.constant, v);
  r.margin = tail.size() >= 2 ? fit_slope(tail) : 0.0;
  r.pass = r.margin <= opts.slope_tol;
  return r;
}

}  // namespace

double decay_threshold(double beta, double p) { return beta / p + std::max(0.0, 1.0 - 1.0 / p); }

MoleculeParams MoleculeParams::make(double alpha, double p, double beta, double M, double delta, const Dilation& dil) {
  MoleculeParams mp;
  mp.alpha = alpha;
  mp.p = p;
  mp.beta = beta;
  mp.M = M;
  mp.delta = delta;
  mp.zeta_minus = dil.zeta_minus();
  mp.zeta_plus = dil.zeta_plus();
  mp.validate();
  return mp;
}

int MoleculeParams::N() const {
  return std::max(static_cast<int>(std::floor((J() - alpha - 1.0) / zeta_minus)), -1);
}

double MoleculeParams::decay_exponent() const { return std::max(M, (M - alpha) * zeta_plus / zeta_minus); }

int MoleculeParams::holder_order() const { return static_cast<int>(std::floor(alpha / zeta_minus)); }

void MoleculeParams::validate() const {
  if (!(p > 0.0) || !std::isfinite(alpha) || !(beta >= 0.0)) fail(ErrorCode::InvalidArgument, "molecule alpha, p, beta");
  if (!(zeta_minus > 0.0) || !(zeta_plus >= zeta_minus)) fail(ErrorCode::InvalidArgument, "molecule zeta exponents");
  if (!(M > J())) fail(ErrorCode::InvalidArgument, "molecule M must exceed J");
  if (!(delta > alpha - std::floor(alpha)) || !(delta <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "molecule delta outside (alpha - floor(alpha), 1]");
  }
  if (holder_order() + 1 > 8) fail(ErrorCode::InvalidArgument, "derivative order above 9 is not supported");
}

MoleculeReport molecule_check(const GridFunction& g, const DilatedCube& q, const MoleculeParams& mp,
                              const BallFamily& bf, const MoleculeOptions& opts) {
  mp.validate();
  const Dilation& dil = bf.dilation();
  const GridSpec& grid = g.grid();
  const int d = dil.dim();
  if (grid.dim() != d || static_cast<int>(q.j.size()) != d) fail(ErrorCode::DimensionMismatch, "molecule dimension");
  if (opts.tail_shells < 2) fail(ErrorCode::InvalidArgument, "tail_shells must be at least 2");
  check_resolved(g, opts.resolve_tol);

  const int k = q.k;
  const double det = dil.abs_det();
  const double log_det = std::log(det);
  const Matrix& ak = dil.power(k);
  const Matrix inv_t = dil.power(-k).transpose();
  const Vector xq = cube_corner(dil, q);
  const std::size_t n = grid.size();

  // Periodic image of x - x_Q, its rho-shell after A^k, and the window mask.
  std::vector<Vector> disp(n);
  std::vector<int> shell(n);
  std::vector<double> rho(n);
  std::vector<char> inside(n);
  for (std::size_t i = 0; i < n; ++i) {
    disp[i] = periodic_image(grid.point(i) - xq, grid.L);
    const Vector u = ak * disp[i];
    bool zero = true;
    for (int a = 0; a < d; ++a) zero = zero && u(a) == 0.0;
    shell[i] = zero ? -BallFamily::kScaleClamp - 1 : bf.shell(std::span<const double>(u.data(), u.size()));
    rho[i] = zero ? 0.0 : std::pow(det, shell[i]);
    bool in = true;
    for (int a = 0; a < d; ++a) in = in && std::abs(disp[i](a)) <= opts.window_fraction * 0.5 * grid.L[static_cast<std::size_t>(a)];
    inside[i] = in;
  }
  const double amp = std::pow(det, 0.5 * k);
  const std::vector<double> freqs = grid.frequencies();
  const auto floor_of = [&](const std::vector<double>& v) {
    double top = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (inside[i]) top = std::max(top, v[i]);
    return opts.noise_floor * top;
  };

  MoleculeReport rep;

  // (i)
  {
    const auto mag = derivative_magnitude(g, inv_t, std::vector<int>(static_cast<std::size_t>(d), 0), freqs, nullptr);
    const double e = mp.decay_exponent();
    const double fl = floor_of(mag);
    ShellProfile prof;
    for (std::size_t i = 0; i < n; ++i) {
      if (inside[i] && mag[i] > fl) record(prof, shell[i], mag[i], amp * std::pow(1.0 + rho[i], -e));
    }
    rep.conditions[0] = judge(prof, opts, log_det);
  }

  // (ii)
  {
    ConditionReport& r = rep.conditions[1];
    const int N = mp.N();
    if (N >= 0) {
      r.checked = true;
      const double cell = grid.cell_volume();
      for (const auto& gamma : multi_indices(d, 0, N)) {
        int order = 0;
        for (int v : gamma) order += v;
        for (int c = 0; c < g.vec_dim(); ++c) {
          const auto& vals = g.values(c);
          cplx moment = 0.0;
          double scale = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            double mono = 1.0;
            for (int a = 0; a < d; ++a) mono *= std::pow(disp[i](a), gamma[static_cast<std::size_t>(a)]);
            moment += mono * vals[i] * cell;
            scale += std::pow(disp[i].norm(), order) * std::abs(vals[i]) * cell;
          }
          if (scale > 0.0) r.margin = std::max(r.margin, std::abs(moment) / scale);
        }
      }
      r.constant = opts.moment_tol;
      r.pass = r.margin < opts.moment_tol;
    }
  }

  // (iii)
  {
    ShellProfile prof;
    for (const auto& gamma : multi_indices(d, 0, mp.holder_order() + 1)) {
      const auto mag = derivative_magnitude(g, inv_t, gamma, freqs, nullptr);
      const double fl = floor_of(mag);
      for (std::size_t i = 0; i < n; ++i) {
        if (inside[i] && mag[i] > fl) record(prof, shell[i], mag[i], amp * std::pow(1.0 + rho[i], -mp.M));
      }
    }
    rep.conditions[2] = judge(prof, opts, log_det);
  }

  // (iv): |D h(u_x) - D h(u_y)| against |det|^{k/2-|gamma|-delta} rho(u_x - u_y)^delta
  // times a bound for the sup over the rho-ball, using the quasi-triangle
  // inequality rho(a - z) >= rho(a)/H - rho(z), H = |det|^sigma.
  {
    const int order = mp.holder_order();
    const double h_const = std::pow(det, bf.sigma());
    const double scale = std::pow(det, 0.5 * k - order - mp.delta);
    std::vector<std::vector<int>> offsets;
    {
      std::vector<int> o(static_cast<std::size_t>(d), -opts.holder_reach);
      while (true) {
        bool nonzero = false;
        for (int v : o) nonzero = nonzero || v != 0;
        if (nonzero) offsets.push_back(o);
        int a = d - 1;
        while (a >= 0) {
          if (++o[static_cast<std::size_t>(a)] <= opts.holder_reach) break;
          o[static_cast<std::size_t>(a)] = -opts.holder_reach;
          --a;
        }
        if (a < 0) break;
      }
    }
    std::vector<double> off_rho;
    for (const auto& o : offsets) {
      Vector step(d);
      for (int a = 0; a < d; ++a) step(a) = o[static_cast<std::size_t>(a)] * grid.spacing(a);
      off_rho.push_back(bf.quasi_norm(Vector(ak * step)));
    }
    ShellProfile prof;
    std::vector<int> idx(static_cast<std::size_t>(d)), jdx(static_cast<std::size_t>(d));
    for (const auto& gamma : multi_indices(d, order, order)) {
      std::vector<std::vector<cplx>> vals;
      const auto mag = derivative_magnitude(g, inv_t, gamma, freqs, &vals);
      const double fl = floor_of(mag);
      for (std::size_t i = 0; i < n; ++i) {
        if (!inside[i]) continue;
        grid.unflatten(i, idx);
        const double lower_base = rho[i] / h_const;
        for (std::size_t o = 0; o < offsets.size(); ++o) {
          for (int a = 0; a < d; ++a) {
            const int na = grid.n[static_cast<std::size_t>(a)];
            jdx[static_cast<std::size_t>(a)] = ((idx[static_cast<std::size_t>(a)] + offsets[o][static_cast<std::size_t>(a)]) % na + na) % na;
          }
          const std::size_t j = grid.flatten(jdx);
          if (std::max(mag[i], mag[j]) <= fl) continue;
          double diff = 0.0;
          for (const auto& ch : vals) diff += std::norm(ch[i] - ch[j]);
          const double r = off_rho[o];
          record(prof, shell[i], std::sqrt(diff),
                 scale * std::pow(r, mp.delta) * std::pow(1.0 + std::max(0.0, lower_base - r), -mp.M));
        }
      }
    }
    rep.conditions[3] = judge(prof, opts, log_det);
  }

  rep.pass = true;
  for (const auto& c : rep.conditions) rep.pass = rep.pass && (!c.checked || c.pass);
  return rep;
}

void AdParams::validate() const {
  if (!(p > 0.0) || !std::isfinite(alpha) || !(beta >= 0.0)) fail(ErrorCode::InvalidArgument, "ad alpha, p, beta");
  if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorCode::InvalidArgument, "ad slack c must be positive");
}

double ad_envelope(const DilatedCube& q, const DilatedCube& p, const AdParams& ap, const BallFamily& bf,
                   std::span<const double> period) {
  const Dilation& dil = bf.dilation();
  const double vq = cube_volume(dil, q.k), vp = cube_volume(dil, p.k);
  Vector diff = cube_corner(dil, q) - cube_corner(dil, p);
  if (!period.empty()) diff = periodic_image(diff, period);
  const double ratio = vq / vp;
  const double J = ap.J();
  const double dist = 1.0 + bf.quasi_norm(diff) / std::max(vq, vp);
  const double e = 0.5 * (1.0 + ap.c);
  return std::pow(ratio, ap.alpha) * std::pow(dist, -J - ap.c) * std::min(std::pow(ratio, e), std::pow(1.0 / ratio, e + J - 1.0));
}

AdMatrix AdMatrix::tabulate(std::vector<DilatedCube> rows, std::vector<DilatedCube> cols, const AdParams& params,
                            const std::function<cplx(const DilatedCube&, const DilatedCube&)>& f,
                            std::vector<double> period) {
  AdMatrix a;
  a.rows = std::move(rows);
  a.cols = std::move(cols);
  a.params = params;
  a.period = std::move(period);
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    for (std::size_t c = 0; c < a.cols.size(); ++c) {
      const cplx v = f(a.rows[r], a.cols[c]);
      if (v != cplx(0.0)) a.entries.push_back({r, c, v});
    }
  }
  return a;
}

AdMatrix AdMatrix::scaled_rows(std::span<const cplx> b) const {
  if (b.size() != rows.size()) fail(ErrorCode::DimensionMismatch, "row scaling length");
  AdMatrix out = *this;
  out.verified_c.reset();
  out.verified_constant = 0.0;
  for (auto& e : out.entries) e.value *= b[e.row];
  return out;
}

void AdMatrix::sort_entries() {
  std::sort(entries.begin(), entries.end(),
            [](const AdEntry& x, const AdEntry& y) { return x.row != y.row ? x.row < y.row : x.col < y.col; });
}

namespace {

struct SlopeResult {
  double constant = 0.0;
  double distance = -std::numeric_limits<double>::infinity();
  double scale = -std::numeric_limits<double>::infinity();
  std::size_t groups = 0;
};

struct PairGeometry {
  int dk = 0;          // k_Q - k_P
  int kq = 0, kp = 0;
  double log_dist = 0;  // log(1 + rho / max{|P|,|Q|})
  double magnitude = 0;
  bool in_window = true;
};

SlopeResult slopes_at(const std::vector<PairGeometry>& geo, const AdParams& base, double c, const CertifyOptions& opts,
                      double log_det) {
  AdParams ap = base;
  ap.c = c;
  const double J = ap.J();
  const double e = 0.5 * (1.0 + c);
  SlopeResult r;
  std::map<std::pair<int, int>, std::map<double, double>> by_pair;
  std::map<int, double> by_dk;
  for (const auto& g : geo) {
    // log of the envelope; |Q|/|P| = |det|^{-dk}.
    const double log_ratio = -g.dk * log_det;
    const double log_env = ap.alpha * log_ratio - (J + c) * g.log_dist + std::min(e * log_ratio, -(e + J - 1.0) * log_ratio);
    const double lr = std::log(g.magnitude) - log_env;
    r.constant = std::max(r.constant, std::exp(lr));
    if (!g.in_window) continue;
    if (g.log_dist >= std::log(opts.tail_start) - 1e-12) {
      auto& bin = by_pair[{g.kq, g.kp}];
      const double key = std::round(g.log_dist * 1e9) / 1e9;
      auto it = bin.find(key);
      if (it == bin.end() || it->second < lr) bin[key] = lr;
    }
    auto it = by_dk.find(g.dk);
    if (it == by_dk.end() || it->second < lr) by_dk[g.dk] = lr;
  }
  for (const auto& [key, bin] : by_pair) {
    if (static_cast<int>(bin.size()) < opts.min_bins) continue;
    std::map<double, double> tail;
    for (auto it = bin.rbegin(); it != bin.rend() && static_cast<int>(tail.size()) < opts.tail_bins; ++it) tail.insert(*it);
    r.distance = std::max(r.distance, fit_slope(tail));
    ++r.groups;
  }
  for (int side : {1, -1}) {
    std::map<double, double> pts;
    for (const auto& [dk, lr] : by_dk) {
      if (dk * side >= 1) pts[std::abs(dk) * log_det] = lr;
    }
    if (static_cast<int>(pts.size()) >= opts.min_bins) r.scale = std::max(r.scale, fit_slope(pts));
  }
  return r;
}

}  // namespace

namespace {

// Scale pairs whose cube positions (not values) reach min_bins distinct
// distance bins at or beyond tail_start inside the window.
std::size_t resolvable_pairs(const AdMatrix& a, const BallFamily& bf, const CertifyOptions& opts) {
  const Dilation& dil = bf.dilation();
  std::map<int, std::vector<Vector>> rows, cols;
  for (const auto& q : a.rows) rows[q.k].push_back(cube_corner(dil, q));
  for (const auto& p : a.cols) cols[p.k].push_back(cube_corner(dil, p));
  const double log_start = std::log(opts.tail_start);
  std::size_t count = 0;
  for (const auto& [kq, xs] : rows) {
    for (const auto& [kp, ys] : cols) {
      const double vmax = std::max(cube_volume(dil, kq), cube_volume(dil, kp));
      std::set<long long> bins;
      for (const Vector& x : xs) {
        for (const Vector& y : ys) {
          Vector diff = x - y;
          if (!a.period.empty()) diff = periodic_image(diff, a.period);
          bool inside = true;
          for (std::size_t c = 0; c < a.period.size(); ++c) {
            inside = inside && std::abs(diff(static_cast<Eigen::Index>(c))) <= opts.window_fraction * 0.5 * a.period[c];
          }
          const double ld = std::log1p(bf.quasi_norm(diff) / vmax);
          if (inside && ld >= log_start) bins.insert(std::llround(ld * 1e9));
          if (static_cast<int>(bins.size()) >= opts.min_bins) break;
        }
        if (static_cast<int>(bins.size()) >= opts.min_bins) break;
      }
      if (static_cast<int>(bins.size()) >= opts.min_bins) ++count;
    }
  }
  return count;
}

}  // namespace

AdCertificate ad_certify(AdMatrix& a, const AdParams& ap, const BallFamily& bf, const CertifyOptions& opts) {
  ap.validate();
  const Dilation& dil = bf.dilation();
  const double log_det = std::log(dil.abs_det());
  double top = 0.0;
  for (const auto& e : a.entries) top = std::max(top, std::abs(e.value));
  std::vector<PairGeometry> geo;
  geo.reserve(a.entries.size());
  for (const auto& e : a.entries) {
    const double mag = std::abs(e.value);
    if (!(mag > opts.noise_floor * top)) continue;
    const DilatedCube& q = a.rows[e.row];
    const DilatedCube& p = a.cols[e.col];
    Vector diff = cube_corner(dil, q) - cube_corner(dil, p);
    if (!a.period.empty()) diff = periodic_image(diff, a.period);
    PairGeometry g;
    g.kq = q.k;
    g.kp = p.k;
    g.dk = q.k - p.k;
    g.log_dist = std::log1p(bf.quasi_norm(diff) / std::max(cube_volume(dil, q.k), cube_volume(dil, p.k)));
    g.magnitude = mag;
    for (std::size_t c = 0; c < a.period.size(); ++c) {
      g.in_window = g.in_window && std::abs(diff(static_cast<Eigen::Index>(c))) <= opts.window_fraction * 0.5 * a.period[c];
    }
    geo.push_back(g);
  }
  const auto diverges = [&](const SlopeResult& s) { return s.distance > opts.slope_tol || s.scale > opts.slope_tol; };
  const auto report = [](const SlopeResult& s, std::optional<double> c) {
    AdCertificate cert;
    cert.c = c;
    cert.constant = s.constant;
    cert.distance_slope = std::isfinite(s.distance) ? s.distance : 0.0;
    cert.scale_slope = std::isfinite(s.scale) ? s.scale : 0.0;
    cert.distance_groups = s.groups;
    return cert;
  };

  a.verified_c.reset();
  a.verified_constant = 0.0;
  const std::size_t resolvable = resolvable_pairs(a, bf, opts);
  const SlopeResult at_floor = slopes_at(geo, ap, opts.c_floor, opts, log_det);
  if (resolvable == 0 || diverges(at_floor)) {
    AdCertificate cert = report(at_floor, std::nullopt);
    cert.resolvable_groups = resolvable;
    return cert;
  }
  double lo = opts.c_floor, hi = opts.c_ceiling;
  SlopeResult best = slopes_at(geo, ap, hi, opts, log_det);
  if (!diverges(best)) {
    lo = hi;
  } else {
    best = at_floor;
    for (int it = 0; it < opts.iterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      const SlopeResult s = slopes_at(geo, ap, mid, opts, log_det);
      if (diverges(s)) {
        hi = mid;
      } else {
        lo = mid;
        best = s;
      }
    }
  }
  a.verified_c = lo;
  a.verified_constant = best.constant;
  // Every stored entry obeys the bound with the fitted constant.
  AdParams at = ap;
  at.c = lo;
  for (const auto& e : a.entries) {
    const double env = ad_envelope(a.rows[e.row], a.cols[e.col], at, bf, a.period);
    if (std::abs(e.value) > best.constant * env * (1.0 + 1e-9) && std::abs(e.value) > opts.noise_floor * top) {
      fail(ErrorCode::ConstructionFailed, "certified entry exceeds its envelope");
    }
  }
  AdCertificate cert = report(best, lo);
  cert.resolvable_groups = resolvable;
  return cert;
}

CoefficientSet ad_apply(const AdMatrix& a, const CoefficientSet& s) {
  std::map<DilatedCube, std::size_t> col_index;
  for (std::size_t c = 0; c < a.cols.size(); ++c) col_index.emplace(a.cols[c], c);
  const int m = std::max(1, s.vec_dim);
  std::vector<const CVector*> by_col(a.cols.size(), nullptr);
  for (const auto& [q, v] : s.entries) {
    auto it = col_index.find(q);
    if (it == col_index.end()) fail(ErrorCode::IndexMismatch, "coefficient cube outside the matrix column set");
    if (v.size() != m) fail(ErrorCode::DimensionMismatch, "coefficient vector length");
    by_col[it->second] = &v;
  }
  std::vector<CVector> acc(a.rows.size(), CVector::Zero(m));
  for (const auto& e : a.entries) {
    if (const CVector* v = by_col[e.col]) acc[e.row] += e.value * *v;
  }
  CoefficientSet out;
  out.dim = s.dim;
  out.vec_dim = m;
  out.region = s.region;
  out.dilation_hash = s.dilation_hash;
  out.homogeneous = s.homogeneous;
  out.k_min = std::numeric_limits<int>::max();
  out.k_max = std::numeric_limits<int>::min();
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    out.k_min = std::min(out.k_min, a.rows[r].k);
    out.k_max = std::max(out.k_max, a.rows[r].k);
    out.entries[a.rows[r]] = acc[r];
  }
  if (a.rows.empty()) out.k_min = out.k_max = 0;
  return out;
}

OperatorSpec OperatorSpec::identity() { return {}; }

OperatorSpec OperatorSpec::zero() {
  OperatorSpec t;
  t.kind = Kind::Zero;
  t.name = "zero";
  return t;
}

OperatorSpec OperatorSpec::multiplier(std::function<cplx(std::span<const double>)> m, std::string name) {
  OperatorSpec t;
  t.kind = Kind::Multiplier;
  t.symbol = std::move(m);
  t.name = std::move(name);
  return t;
}

OperatorSpec OperatorSpec::convolution(std::function<cplx(std::span<const double>)> k, std::string name) {
  OperatorSpec t;
  t.kind = Kind::Kernel;
  t.kernel = std::move(k);
  t.name = std::move(name);
  return t;
}

std::vector<DilatedCube> periodic_family(const Dilation& dil, const GridSpec& grid, int k_min, int k_max) {
  std::vector<DilatedCube> out;
  for (int k = k_min; k <= k_max; ++k) {
    auto cubes = periodic_cubes(dil, k, grid);
    out.insert(out.end(), cubes.begin(), cubes.end());
  }
  return out;
}

AdMatrix ad_from_operator(const OperatorSpec& t, const FilterBank& fb, const GridSpec& grid,
                          std::span<const DilatedCube> cubes, const AdParams& params) {
  params.validate();
  const Dilation& dil = fb.dilation();
  const int d = dil.dim();
  if (grid.dim() != d) fail(ErrorCode::DimensionMismatch, "grid dimension");
  AdMatrix a;
  a.rows.assign(cubes.begin(), cubes.end());
  a.cols = a.rows;
  a.params = params;
  a.period = grid.L;
  if (t.kind == OperatorSpec::Kind::Zero) return a;

  const std::size_t n = grid.size();
  std::vector<cplx> symbol(n, 1.0);
  if (t.kind == OperatorSpec::Kind::Multiplier) {
    if (!t.symbol) fail(ErrorCode::InvalidArgument, "multiplier operator without a symbol");
    const auto xi = grid.frequencies();
    for (std::size_t i = 0; i < n; ++i) symbol[i] = t.symbol(std::span<const double>(&xi[i * static_cast<std::size_t>(d)], static_cast<std::size_t>(d)));
  } else if (t.kind == OperatorSpec::Kind::Kernel) {
    if (!t.kernel) fail(ErrorCode::InvalidArgument, "kernel operator without a kernel");
    const auto x = grid.points();
    std::vector<cplx> k(n);
    for (std::size_t i = 0; i < n; ++i) k[i] = t.kernel(std::span<const double>(&x[i * static_cast<std::size_t>(d)], static_cast<std::size_t>(d)));
    symbol = values_to_spectrum(grid, k);
  }

  std::map<int, std::vector<std::size_t>> by_scale;
  for (std::size_t i = 0; i < a.rows.size(); ++i) by_scale[a.rows[i].k].push_back(i);
  std::vector<Vector> corners(a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) corners[i] = cube_corner(dil, a.rows[i]);

  const auto analysis_band = [&](int k) {
    if (!fb.homogeneous() && k == 0) return Band::LowPhi;
    return fb.homogeneous() ? Band::PhiTilde : Band::Phi;
  };
  const auto synthesis_band = [&](int k) { return !fb.homogeneous() && k == 0 ? Band::LowPsi : Band::Psi; };

  for (const auto& [kq, qs] : by_scale) {
    const auto& mq = fb.multiplier(grid, analysis_band(kq), kq);
    for (const auto& [kp, ps] : by_scale) {
      const auto& mp = fb.multiplier(grid, synthesis_band(kp), kp);
      std::vector<cplx> spec(n);
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        const double b = mq[i] * mp[i];
        if (b != 0.0) {
          spec[i] = symbol[i] * b;
          any = any || spec[i] != cplx(0.0);
        }
      }
      if (!any) continue;
      const double norm = std::pow(dil.abs_det(), -0.5 * (kq + kp));
      // F(x_Q - x_P); read from the grid when every difference is a sample.
      std::vector<double> pts;
      pts.reserve(qs.size() * ps.size() * static_cast<std::size_t>(d));
      for (std::size_t iq : qs) {
        for (std::size_t ip : ps) {
          const Vector diff = periodic_image(corners[iq] - corners[ip], grid.L);
          for (int c = 0; c < d; ++c) pts.push_back(diff(c));
        }
      }
      std::vector<cplx> vals;
      std::vector<std::size_t> lookup;
      lookup.reserve(qs.size() * ps.size());
      for (std::size_t i = 0; i < qs.size() * ps.size(); ++i) {
        auto g = grid_index_of(grid, std::span<const double>(&pts[i * static_cast<std::size_t>(d)], static_cast<std::size_t>(d)));
        if (!g) {
          lookup.clear();
          break;
        }
        lookup.push_back(*g);
      }
      if (!lookup.empty()) {
        const auto field = spectrum_to_values(grid, spec);
        vals.reserve(lookup.size());
        for (std::size_t g : lookup) vals.push_back(field[g]);
      } else {
        vals = evaluate_series(grid, spec, pts);
      }
      std::size_t t_i = 0;
      for (std::size_t iq : qs) {
        for (std::size_t ip : ps) {
          const cplx v = norm * vals[t_i++];
          if (v != cplx(0.0)) a.entries.push_back({iq, ip, v});
        }
      }
    }
  }
  a.sort_entries();
  return a;
}

ProbeReport ad_norm_probe(const AdMatrix& a, const MatrixWeightField& w, const BesovParams& params,
                          const Dilation& dil, std::size_t samples, std::uint64_t seed) {
  params.validate();
  const int m = w.vec_dim();
  CubeWeightCache cache(w, params.p, dil);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  ProbeReport rep;
  CoefficientSet s;
  s.dim = dil.dim();
  s.vec_dim = m;
  s.dilation_hash = dil.hash();
  s.homogeneous = params.homogeneous;
  s.k_min = std::numeric_limits<int>::max();
  s.k_max = std::numeric_limits<int>::min();
  for (const auto& q : a.cols) {
    s.k_min = std::min(s.k_min, q.k);
    s.k_max = std::max(s.k_max, q.k);
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < samples; ++t) {
    s.entries.clear();
    for (const auto& q : a.cols) {
      CVector v(m);
      for (int c = 0; c < m; ++c) v(c) = cplx(gauss(rng), gauss(rng));
      s.entries.emplace(q, std::move(v));
    }
    const double den = sequence_norm(s, cache, params, dil);
    if (!(den > 0.0)) continue;
    const double ratio = sequence_norm(ad_apply(a, s), cache, params, dil) / den;
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    sum += ratio;
    ++rep.samples;
  }
  rep.mean_ratio = rep.samples ? sum / static_cast<double>(rep.samples) : 0.0;
  return rep;
}

}  // namespace aniso
