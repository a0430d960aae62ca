#include "aniso/norms.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "aniso/error.hpp"

namespace aniso {

void BesovParams::validate() const {
  if (!std::isfinite(alpha)) fail(ErrorCode::InvalidArgument, "alpha must be finite");
  if (!(p >= 1.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "p must lie in [1, inf)");
  if (!(q > 0.0)) fail(ErrorCode::InvalidArgument, "q must be positive or infinite");
}

double lq_aggregate(const std::vector<double>& terms, double q) {
  if (std::isinf(q)) {
    double m = 0.0;
    for (double t : terms) m = std::max(m, t);
    return m;
  }
  double s = 0.0;
  for (double t : terms) s += std::pow(t, q);
  return std::pow(s, 1.0 / q);
}

double continuous_norm(const GridFunction& f, const GridWeight& root, const BesovParams& params, const FilterBank& fb,
                       int k_min, int k_max) {
  params.validate();
  if (params.homogeneous != fb.homogeneous()) fail(ErrorCode::InvalidArgument, "params and bank disagree on homogeneity");
  const double ld = std::log(fb.dilation().abs_det());
  std::vector<double> terms;
  if (params.homogeneous) {
    for (int k = k_min; k <= k_max; ++k) {
      const auto g = band_convolve(f, fb, k, Band::Phi);
      terms.push_back(std::exp(k * params.alpha * ld) * weighted_lp_norm(g, root, params.p));
    }
    return lq_aggregate(terms, params.q);
  }
  const double low = weighted_lp_norm(band_convolve(f, fb, 0, Band::LowPhi), root, params.p);
  for (int k = std::max(1, k_min); k <= k_max; ++k) {
    const auto g = band_convolve(f, fb, k, Band::Phi);
    terms.push_back(std::exp(k * params.alpha * ld) * weighted_lp_norm(g, root, params.p));
  }
  return low + lq_aggregate(terms, params.q);
}

double continuous_norm(const GridFunction& f, const MatrixWeightField& w, const BesovParams& params,
                       const FilterBank& fb, int k_min, int k_max) {
  return continuous_norm(f, GridWeight(w, f.grid(), 1.0 / params.p), params, fb, k_min, k_max);
}

CubeWeightCache::CubeWeightCache(MatrixWeightField w, double p, Dilation dil, int n_side)
    : w_(std::move(w)), p_(p), dil_(std::move(dil)), n_side_(n_side) {}

const CubeWeightCache::Entry& CubeWeightCache::entry(const DilatedCube& q) {
  auto it = cache_.find(q);
  if (it != cache_.end()) return it->second;
  const int d = dil_.dim();
  const auto nodes = cube_nodes(dil_, q, n_side_);
  const std::size_t nn = nodes.size() / static_cast<std::size_t>(d);
  Entry e;
  if (w_.is_scalar()) {
    for (std::size_t i = 0; i < nn; ++i) e.scalar_avg += w_.scalar_at(std::span<const double>(&nodes[i * d], static_cast<std::size_t>(d)));
    e.scalar_avg /= static_cast<double>(nn);
  } else if (p_ == 2.0) {
    e.matrix_avg = CMatrix::Zero(w_.vec_dim(), w_.vec_dim());
    for (std::size_t i = 0; i < nn; ++i) e.matrix_avg += w_.at(std::span<const double>(&nodes[i * d], static_cast<std::size_t>(d)));
    e.matrix_avg /= static_cast<double>(nn);
  } else {
    for (std::size_t i = 0; i < nn; ++i) e.roots.push_back(w_.root(std::span<const double>(&nodes[i * d], static_cast<std::size_t>(d)), 1.0 / p_));
  }
  return cache_.emplace(q, std::move(e)).first->second;
}

double CubeWeightCache::term(const DilatedCube& q, const CVector& v) {
  if (v.size() != w_.vec_dim()) fail(ErrorCode::DimensionMismatch, "coefficient and weight dimensions differ");
  const Entry& e = entry(q);
  // |Q|^{-p/2} |Q| avg_Q |W^{1/p} v|^p.
  const double vol_factor = std::pow(dil_.abs_det(), -q.k * (1.0 - 0.5 * p_));
  double avg;
  if (w_.is_scalar()) {
    avg = e.scalar_avg * std::pow(v.norm(), p_);
  } else if (p_ == 2.0) {
    avg = std::max(0.0, (v.adjoint() * e.matrix_avg * v)(0, 0).real());
  } else {
    avg = 0.0;
    for (const auto& r : e.roots) avg += std::pow((r * v).norm(), p_);
    avg /= static_cast<double>(e.roots.size());
  }
  return vol_factor * avg;
}

namespace {

template <typename TermFn>
double aggregate_scales(const CoefficientSet& s, const BesovParams& params, const Dilation& dil, TermFn&& term) {
  params.validate();
  const double ld = std::log(dil.abs_det());
  std::map<int, double> per_scale;
  for (const auto& [q, v] : s.entries) {
    if (!params.homogeneous && q.k < 0) continue;
    per_scale[q.k] += term(q, v);
  }
  std::vector<double> terms;
  for (const auto& [k, acc] : per_scale) terms.push_back(std::exp(k * params.alpha * ld) * std::pow(acc, 1.0 / params.p));
  return lq_aggregate(terms, params.q);
}

}  // namespace

double sequence_norm(const CoefficientSet& s, CubeWeightCache& cache, const BesovParams& params, const Dilation& dil) {
  if (cache.p() != params.p) fail(ErrorCode::InvalidArgument, "cache exponent differs from params.p");
  if (s.vec_dim != cache.weight().vec_dim()) fail(ErrorCode::DimensionMismatch, "coefficient and weight dimensions differ");
  return aggregate_scales(s, params, dil, [&](const DilatedCube& q, const CVector& v) { return cache.term(q, v); });
}

double sequence_norm(const CoefficientSet& s, const MatrixWeightField& w, const BesovParams& params,
                     const Dilation& dil) {
  CubeWeightCache cache(w, params.p, dil);
  return sequence_norm(s, cache, params, dil);
}

double sequence_norm_reducing(const CoefficientSet& s, const ReducingFamily& rf, const BesovParams& params,
                              const Dilation& dil) {
  if (rf.p != params.p) fail(ErrorCode::InvalidArgument, "reducing family exponent differs from params.p");
  return aggregate_scales(s, params, dil, [&](const DilatedCube& q, const CVector& v) {
    auto it = rf.ops.find(q);
    if (it == rf.ops.end()) fail(ErrorCode::MissingCube, "reducing family lacks a cube at scale " + std::to_string(q.k));
    if (it->second.rows() != v.size()) fail(ErrorCode::DimensionMismatch, "reducing operator dimension");
    // (|Q|^{1/p - 1/2} |A_Q v|)^p.
    const double vol = std::pow(dil.abs_det(), -q.k * (1.0 - 0.5 * params.p));
    return vol * std::pow((it->second * v).norm(), params.p);
  });
}

namespace {

CoefficientSet random_like(const CoefficientSet& shape, int k_lo, int k_hi, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CoefficientSet out = shape;
  out.entries.clear();
  out.k_min = k_lo;
  out.k_max = k_hi;
  for (const auto& [q, v] : shape.entries) {
    if (q.k < k_lo || q.k > k_hi) continue;
    CVector r(v.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = cplx(g(rng), g(rng));
    out.entries.emplace(q, std::move(r));
  }
  return out;
}

}  // namespace

HarnessReport equivalence_harness(const std::vector<GridFunction>& tests, const FilterBank& bank_a,
                                  const FilterBank& bank_b, const MatrixWeightField& w, const BesovParams& params,
                                  int k_min, int k_max, std::uint64_t seed) {
  params.validate();
  HarnessReport rep;
  const Dilation& dil = bank_a.dilation();
  CubeWeightCache cache(w, params.p, dil);
  std::unique_ptr<GridWeight> root;
  int id = 0;
  for (const GridFunction& f : tests) {
    const int test_id = id++;
    if (f.l2_norm() == 0.0) continue;
    if (!root || !(root->grid() == f.grid())) root = std::make_unique<GridWeight>(w, f.grid(), 1.0 / params.p);
    const double cont_a = continuous_norm(f, *root, params, bank_a, k_min, k_max);
    const double cont_b = continuous_norm(f, *root, params, bank_b, k_min, k_max);
    const auto s = analyze(f, bank_a, AnalysisWindow{k_min, k_max, std::nullopt});
    HarnessRow row;
    row.test_id = test_id;
    row.r1 = sequence_norm(s, cache, params, dil) / cont_a;
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(test_id));
    const int lo = params.homogeneous ? k_min + 1 : k_min;
    const auto rs = random_like(s, lo, std::max(lo, k_max - 1), rng);
    const auto g = synthesize(rs, bank_a, f.grid());
    row.r2 = continuous_norm(g, *root, params, bank_a, k_min, k_max) / sequence_norm(rs, cache, params, dil);
    row.r3 = cont_a / cont_b;
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty()) {
    rep.r1_min = rep.r2_min = rep.r3_min = kInf;
    for (const auto& r : rep.rows) {
      rep.r1_min = std::min(rep.r1_min, r.r1);
      rep.r1_max = std::max(rep.r1_max, r.r1);
      rep.r2_min = std::min(rep.r2_min, r.r2);
      rep.r2_max = std::max(rep.r2_max, r.r2);
      rep.r3_min = std::min(rep.r3_min, r.r3);
      rep.r3_max = std::max(rep.r3_max, r.r3);
    }
  }
  return rep;
}

CauchyReport cauchy_convergence_demo(const BesovParams& params, const MatrixWeightField& w, const ReducingFamily& rf,
                                     const FilterBank& fb, const GridSpec& grid, int k_min, int k_max, double ratio,
                                     int steps, int terms, std::uint64_t seed) {
  params.validate();
  if (rf.ops.empty()) fail(ErrorCode::InvalidArgument, "empty cube family");
  if (steps < 2 || terms < steps) fail(ErrorCode::InvalidArgument, "need terms >= steps >= 2");
  const Dilation& dil = fb.dilation();
  const int m = static_cast<int>(rf.ops.begin()->second.rows());
  CauchyReport rep;
  for (const auto& [q, a] : rf.ops) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(a, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0)) rep.operators_invertible = false;
  }

  CoefficientSet shape;
  shape.dim = dil.dim();
  shape.vec_dim = m;
  shape.k_min = k_min;
  shape.k_max = k_max;
  shape.region = grid.box();
  shape.dilation_hash = dil.hash();
  shape.homogeneous = fb.homogeneous();

  // Corrections c_l normalised in b({A_Q}).
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::map<DilatedCube, CVector>> corr;
  for (int l = 0; l < terms; ++l) {
    CoefficientSet c = shape;
    for (const auto& [q, a] : rf.ops) {
      CVector v(m);
      for (int i = 0; i < m; ++i) v(i) = cplx(g(rng), g(rng));
      c.entries.emplace(q, std::move(v));
    }
    const double n = sequence_norm_reducing(c, rf, params, dil);
    for (auto& [q, v] : c.entries) v /= n;
    corr.push_back(std::move(c.entries));
  }
  const auto partial = [&](int upto) {
    CoefficientSet s = shape;
    for (const auto& [q, a] : rf.ops) s.entries.emplace(q, CVector::Zero(m));
    double scale = 1.0;
    for (int l = 0; l <= upto; ++l, scale *= ratio) {
      for (const auto& [q, v] : corr[static_cast<std::size_t>(l)]) s.entries[q] += scale * v;
    }
    return s;
  };
  const CoefficientSet limit = partial(terms - 1);
  const GridFunction f_lim = synthesize(limit, fb, grid);
  const GridWeight root(w, grid, 1.0 / params.p);
  for (int i = 0; i < steps; ++i) {
    const CoefficientSet si = partial(i);
    double worst = 0.0;
    for (const auto& [q, a] : rf.ops) worst = std::max(worst, (a * (si.entries.at(q) - limit.entries.at(q))).norm());
    rep.cube_errors.push_back(worst);
    const GridFunction fi = synthesize(si, fb, grid);
    rep.distances.push_back(continuous_norm(fi.plus(f_lim, -1.0), root, params, fb, k_min, k_max));
  }
  // Regression of log distance against step index.
  double mx = 0, my = 0;
  int n = 0;
  for (int i = 0; i < steps; ++i) {
    if (!(rep.distances[static_cast<std::size_t>(i)] > 0.0)) continue;
    mx += i;
    my += std::log(rep.distances[static_cast<std::size_t>(i)]);
    ++n;
  }
  if (n >= 2) {
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < steps; ++i) {
      if (!(rep.distances[static_cast<std::size_t>(i)] > 0.0)) continue;
      sxy += (i - mx) * (std::log(rep.distances[static_cast<std::size_t>(i)]) - my);
      sxx += (i - mx) * (i - mx);
    }
    rep.rate = std::exp(sxy / sxx);
  }
  return rep;
}

}  // namespace aniso
