#include "aniso/weights.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "aniso/error.hpp"
#include "aniso/kernels.hpp"

namespace aniso {

std::string to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::Identity: return "identity";
    case WeightKind::Constant: return "constant";
    case WeightKind::ScalarPower: return "scalar_power";
    case WeightKind::BlockDiag: return "block_diag";
    case WeightKind::RotatedDiag: return "rotated_diag";
    case WeightKind::GridSampled: return "grid_sampled";
    case WeightKind::Power: return "power";
  }
  return "unknown";
}

namespace {

void check_hpd(const CMatrix& w) {
  if (w.rows() != w.cols() || w.rows() == 0) fail(ErrorCode::DimensionMismatch, "weight must be square");
  if (!w.allFinite()) fail(ErrorCode::NotPositiveDefinite, "weight has non-finite entries");
  if ((w - w.adjoint()).norm() > 1e-12 * std::max(1.0, w.norm())) fail(ErrorCode::NotPositiveDefinite, "weight is not Hermitian");
  (void)hermitian_power(w, 1.0);
}

double rho_floor(const BallFamily& bf, std::span<const double> x) {
  const double r = bf.quasi_norm(x);
  return r > 0.0 ? r : std::pow(bf.dilation().abs_det(), -BallFamily::kScaleClamp);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

MatrixWeightField MatrixWeightField::identity(int m) {
  if (m < 1) fail(ErrorCode::InvalidArgument, "weight dimension must be >= 1");
  auto impl = std::make_shared<Impl>();
  impl->kind = WeightKind::Identity;
  impl->m = m;
  impl->constant = true;
  impl->label = "identity";
  impl->scalar = [](std::span<const double>) { return 1.0; };
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

MatrixWeightField MatrixWeightField::constant(const CMatrix& w) {
  check_hpd(w);
  auto impl = std::make_shared<Impl>();
  impl->kind = WeightKind::Constant;
  impl->m = static_cast<int>(w.rows());
  impl->constant = true;
  impl->label = "constant";
  const CMatrix copy = 0.5 * (w + w.adjoint());
  impl->matrix = [copy](std::span<const double>) { return copy; };
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

MatrixWeightField MatrixWeightField::scalar_power(const BallFamily& bf, double a, int m) {
  if (m < 1) fail(ErrorCode::InvalidArgument, "weight dimension must be >= 1");
  auto impl = std::make_shared<Impl>();
  impl->kind = WeightKind::ScalarPower;
  impl->m = m;
  impl->constant = a == 0.0;
  impl->label = "scalar_power(" + fmt(a) + ")";
  impl->scalar = [bf, a](std::span<const double> x) { return std::pow(rho_floor(bf, x), a); };
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

MatrixWeightField MatrixWeightField::block_diag(std::vector<MatrixWeightField> blocks) {
  if (blocks.empty()) fail(ErrorCode::InvalidArgument, "block_diag needs at least one block");
  auto impl = std::make_shared<Impl>();
  impl->kind = WeightKind::BlockDiag;
  impl->constant = true;
  impl->label = "block_diag(";
  int m = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    m += blocks[i].vec_dim();
    impl->constant = impl->constant && blocks[i].is_constant();
    impl->label += (i ? "," : "") + blocks[i].describe();
  }
  impl->label += ")";
  impl->m = m;
  impl->matrix = [blocks, m](std::span<const double> x) {
    CMatrix out = CMatrix::Zero(m, m);
    int off = 0;
    for (const auto& b : blocks) {
      const int bm = b.vec_dim();
      out.block(off, off, bm, bm) = b.at(x);
      off += bm;
    }
    return out;
  };
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

MatrixWeightField MatrixWeightField::rotated_diag(const BallFamily& bf, double theta0, const Vector& gradient,
                                                  double a1, double a2) {
  if (gradient.size() != bf.dilation().dim()) fail(ErrorCode::DimensionMismatch, "angle gradient dimension");
  auto impl = std::make_shared<Impl>();
  impl->kind = WeightKind::RotatedDiag;
  impl->m = 2;
  impl->constant = a1 == 0.0 && a2 == 0.0 && gradient.isZero(0.0);
  impl->label = "rotated_diag(" + fmt(a1) + "," + fmt(a2) + ")";
  impl->matrix = [bf, theta0, gradient, a1, a2](std::span<const double> x) {
    double theta = theta0;
    for (Eigen::Index i = 0; i < gradient.size(); ++i) theta += gradient(i) * x[static_cast<std::size_t>(i)];
    const double r = rho_floor(bf, x);
    const double c = std::cos(theta), s = std::sin(theta);
    Matrix rot(2, 2);
    rot << c, -s, s, c;
    Matrix diag = Matrix::Zero(2, 2);
    diag(0, 0) = std::pow(r, a1);
    diag(1, 1) = std::pow(r, a2);
    return CMatrix((rot * diag * rot.transpose()).cast<cplx>());
  };
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

MatrixWeightField MatrixWeightField::grid_sampled(const GridSpec& grid, std::vector<CMatrix> samples) {
  if (samples.size() != grid.size()) fail(ErrorCode::DimensionMismatch, "grid_sampled needs one matrix per grid sample");
  const auto m = static_cast<int>(samples.front().rows());
  for (const auto& s : samples) {
    if (s.rows() != m || s.cols() != m) fail(ErrorCode::DimensionMismatch, "grid_sampled matrix shape");
    check_hpd(s);
  }
  auto impl = std::make_shared<Impl>();
  impl->kind = WeightKind::GridSampled;
  impl->m = m;
  impl->label = "grid_sampled";
  auto table = std::make_shared<const std::vector<CMatrix>>(std::move(samples));
  impl->matrix = [grid, table](std::span<const double> x) {
    std::vector<int> idx(static_cast<std::size_t>(grid.dim()));
    for (int a = 0; a < grid.dim(); ++a) {
      const long long na = grid.n[static_cast<std::size_t>(a)];
      long long i = std::llround((x[static_cast<std::size_t>(a)] + 0.5 * grid.L[static_cast<std::size_t>(a)]) / grid.spacing(a)) % na;
      if (i < 0) i += na;
      idx[static_cast<std::size_t>(a)] = static_cast<int>(i);
    }
    return (*table)[grid.flatten(idx)];
  };
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

MatrixWeightField MatrixWeightField::power(double t) const {
  if (!std::isfinite(t)) fail(ErrorCode::InvalidArgument, "weight exponent must be finite");
  if (impl_->kind == WeightKind::Identity) return *this;
  auto impl = std::make_shared<Impl>(*impl_);
  impl->base = impl_;
  impl->exponent = t;
  if (impl_->kind == WeightKind::Constant) {
    const CMatrix w = impl_->matrix(std::span<const double>());
    return constant(hermitian_power(w, t));
  }
  if (impl_->scalar) {
    auto base = impl_->scalar;
    impl->scalar = [base, t](std::span<const double> x) { return std::pow(base(x), t); };
    impl->matrix = nullptr;
    if (impl_->kind != WeightKind::ScalarPower) impl->kind = WeightKind::Power;
  } else {
    auto base = impl_->matrix;
    impl->matrix = [base, t](std::span<const double> x) { return hermitian_power(base(x), t); };
    impl->kind = WeightKind::Power;
  }
  impl->label = "(" + impl_->label + ")^" + fmt(t);
  MatrixWeightField f;
  f.impl_ = std::move(impl);
  return f;
}

CMatrix MatrixWeightField::at(std::span<const double> x) const {
  if (impl_->scalar) {
    const double v = impl_->scalar(x);
    return CMatrix::Identity(impl_->m, impl_->m) * v;
  }
  return impl_->matrix(x);
}

double MatrixWeightField::scalar_at(std::span<const double> x) const {
  if (!impl_->scalar) fail(ErrorCode::InvalidArgument, "weight is not scalar");
  return impl_->scalar(x);
}

CMatrix MatrixWeightField::root(std::span<const double> x, double t) const {
  if (impl_->scalar) {
    const double v = impl_->scalar(x);
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::NotPositiveDefinite, "scalar weight not positive");
    return CMatrix::Identity(impl_->m, impl_->m) * std::pow(v, t);
  }
  return hermitian_power(impl_->matrix(x), t);
}

MatrixWeightField dual_weight(const MatrixWeightField& w, double p) {
  if (!(p > 1.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "dual weight needs p in (1, inf)");
  const double pp = p / (p - 1.0);
  return w.power(-pp / p);
}

GridWeight::GridWeight(const MatrixWeightField& w, const GridSpec& grid, double t)
    : grid_(grid), m_(w.vec_dim()), t_(t), scalar_(w.is_scalar()) {
  const std::vector<double> pts = grid.points();
  const auto d = static_cast<std::size_t>(grid.dim());
  const std::size_t n = grid.size();
  if (scalar_) {
    s_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = w.scalar_at(std::span<const double>(&pts[i * d], d));
      if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::NotPositiveDefinite, "scalar weight not positive");
      s_[i] = std::pow(v, t);
    }
    return;
  }
  const auto mm = static_cast<std::size_t>(m_ * m_);
  mats_.resize(n * mm);
  const bool constant = w.is_constant();
  CMatrix cached;
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(&pts[i * d], d);
    if (!constant || i == 0) cached = w.root(x, t);
    for (int r = 0; r < m_; ++r)
      for (int c = 0; c < m_; ++c) mats_[i * mm + static_cast<std::size_t>(r * m_ + c)] = cached(r, c);
  }
}

double weighted_lp_norm(const GridFunction& f, const GridWeight& root, double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "p must lie in [1, inf)");
  if (f.vec_dim() != root.vec_dim()) fail(ErrorCode::DimensionMismatch, "weight and function vector dimensions differ");
  if (!(f.grid() == root.grid())) fail(ErrorCode::DimensionMismatch, "weight table grid differs");
  const std::size_t n = f.grid().size();
  const int m = f.vec_dim();
  double acc = 0.0;
  if (root.scalar()) {
    // |w^t f|^p = w^{tp} |f|^p.
    const auto& s = root.scalar_table();
    if (m == 1 && p == 2.0) {
      std::vector<double> w2(n);
      for (std::size_t i = 0; i < n; ++i) w2[i] = s[i] * s[i];
      acc = kernels::active().weighted_sumsq(f.values(0), w2);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double e = 0.0;
        for (int c = 0; c < m; ++c) e += std::norm(f.values(c)[i]);
        if (e > 0.0) acc += std::pow(s[i] * std::sqrt(e), p);
      }
    }
  } else {
    std::vector<cplx> v(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < n; ++i) {
      const auto blk = root.block(i);
      double e = 0.0;
      for (int r = 0; r < m; ++r) {
        cplx s = 0.0;
        for (int c = 0; c < m; ++c) s += blk[static_cast<std::size_t>(r * m + c)] * f.values(c)[i];
        e += std::norm(s);
      }
      if (e > 0.0) acc += std::pow(e, 0.5 * p);
    }
  }
  return std::pow(acc * f.grid().cell_volume(), 1.0 / p);
}

double weighted_lp_norm(const GridFunction& f, const MatrixWeightField& w, double p) {
  if (f.vec_dim() != w.vec_dim()) fail(ErrorCode::DimensionMismatch, "weight and function vector dimensions differ");
  return weighted_lp_norm(f, GridWeight(w, f.grid(), 1.0 / p), p);
}

std::vector<double> ball_nodes(const BallFamily& bf, const Ball& ball, std::size_t target, double scale) {
  const int d = bf.dilation().dim();
  if (ball.center.size() != d) fail(ErrorCode::DimensionMismatch, "ball center dimension");
  if (target < 8) fail(ErrorCode::QuadratureUnderflow, "fewer than 8 quadrature nodes requested");
  const double vd = unit_ball_volume(d);
  // Lattice spacing 2/n_side; roughly vd (n_side/2)^d nodes land in the ball.
  int n_side = 2 * static_cast<int>(std::floor(std::pow(static_cast<double>(target) / vd, 1.0 / d)));
  n_side = std::max(n_side, 2);
  const Matrix map = scale * bf.dilation().power(ball.k) * bf.shape().inverse();
  std::vector<double> out;
  while (true) {
    out.clear();
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    Vector u(d);
    while (true) {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        u(a) = -1.0 + (2.0 * idx[static_cast<std::size_t>(a)] + 1.0) / n_side;
        r2 += u(a) * u(a);
      }
      if (r2 < 1.0) {
        const Vector y = ball.center + map * u;
        for (int a = 0; a < d; ++a) out.push_back(y(a));
      }
      int a = d - 1;
      while (a >= 0 && ++idx[static_cast<std::size_t>(a)] == n_side) idx[static_cast<std::size_t>(a--)] = 0;
      if (a < 0) break;
    }
    if (out.size() / static_cast<std::size_t>(d) >= target) break;
    n_side += 2;
  }
  return out;
}

std::vector<double> cube_nodes(const Dilation& dil, const DilatedCube& q, int n_side) {
  const int d = dil.dim();
  std::size_t count = 1;
  for (int a = 0; a < d; ++a) count *= static_cast<std::size_t>(std::max(n_side, 0));
  if (count < 8) fail(ErrorCode::QuadratureUnderflow, "cube has fewer than 8 quadrature nodes");
  const Matrix& inv = dil.power(-q.k);
  std::vector<double> out;
  out.reserve(count * static_cast<std::size_t>(d));
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  Vector u(d);
  while (true) {
    for (int a = 0; a < d; ++a) u(a) = q.j[static_cast<std::size_t>(a)] + (idx[static_cast<std::size_t>(a)] + 0.5) / n_side;
    const Vector y = inv * u;
    for (int a = 0; a < d; ++a) out.push_back(y(a));
    int a = d - 1;
    while (a >= 0 && ++idx[static_cast<std::size_t>(a)] == n_side) idx[static_cast<std::size_t>(a--)] = 0;
    if (a < 0) break;
  }
  return out;
}

namespace {

double conj_exponent(double p) { return p / (p - 1.0); }

// Double average avg_x [avg_y |W^{1/p}(x) W^{-1/p}(y)|^inner]^{outer / inner}.
double double_average(const MatrixWeightField& w, double p, std::span<const double> nodes, int d, double inner,
                      double outer) {
  const std::size_t n = nodes.size() / static_cast<std::size_t>(d);
  if (w.is_scalar()) {
    // |.| = (w_x / w_y)^{1/p}.
    std::vector<double> wx(n);
    for (std::size_t i = 0; i < n; ++i) {
      wx[i] = w.scalar_at(nodes.subspan(i * d, static_cast<std::size_t>(d)));
      if (!(wx[i] > 0.0) || !std::isfinite(wx[i])) fail(ErrorCode::NotPositiveDefinite, "scalar weight not positive");
    }
    double avg_y = 0.0;
    for (double v : wx) avg_y += std::pow(v, -inner / p);
    avg_y /= static_cast<double>(n);
    double acc = 0.0;
    for (double v : wx) acc += std::pow(std::pow(v, inner / p) * avg_y, outer / inner);
    return acc / static_cast<double>(n);
  }
  std::vector<CMatrix> r(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = nodes.subspan(i * d, static_cast<std::size_t>(d));
    r[i] = w.root(x, 1.0 / p);
    s[i] = w.root(x, -1.0 / p);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double in = 0.0;
    for (std::size_t j = 0; j < n; ++j) in += std::pow(spectral_norm(r[i] * s[j]), inner);
    acc += std::pow(in / static_cast<double>(n), outer / inner);
  }
  return acc / static_cast<double>(n);
}

double ap_generic(const MatrixWeightField& w, double p, const BallFamily& bf, std::span<const Ball> balls,
                  std::size_t quadrature_points, bool dual) {
  if (!(p > 1.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "A_p needs p in (1, inf)");
  const double pp = conj_exponent(p);
  const int d = bf.dilation().dim();
  double best = 0.0;
  for (const Ball& b : balls) {
    const auto nodes = ball_nodes(bf, b, quadrature_points);
    const double v = dual ? double_average(w, p, nodes, d, p, pp) : double_average(w, p, nodes, d, pp, p);
    best = std::max(best, v);
  }
  return best;
}

}  // namespace

double ap_estimate(const MatrixWeightField& w, double p, const BallFamily& bf, std::span<const Ball> balls,
                   std::size_t quadrature_points) {
  return ap_generic(w, p, bf, balls, quadrature_points, false);
}

double ap_estimate_dual(const MatrixWeightField& w, double p, const BallFamily& bf, std::span<const Ball> balls,
                        std::size_t quadrature_points) {
  return ap_generic(w, p, bf, balls, quadrature_points, true);
}

ApClassification classify_ap(const std::function<double(std::size_t)>& estimate, std::size_t base, int levels,
                             double growth_cap) {
  if (levels < 2) fail(ErrorCode::InvalidArgument, "classification needs at least two levels");
  ApClassification out;
  std::size_t q = base;
  for (int l = 0; l < levels; ++l, q *= 4) out.ladder.push_back(estimate(q));
  const double last = out.ladder.back(), prev = out.ladder[out.ladder.size() - 2];
  out.bounded = std::isfinite(last) && last < growth_cap * prev;
  return out;
}

std::vector<CVector> direction_grid(int m, int count) {
  if (m < 1 || count < 1) fail(ErrorCode::InvalidArgument, "direction grid shape");
  std::vector<CVector> out;
  if (m == 1) {
    out.push_back(CVector::Ones(1));
    return out;
  }
  if (m == 2) {
    for (int i = 0; i < count; ++i) {
      const double t = kPi * i / count;
      CVector u(2);
      u << std::cos(t), std::sin(t);
      out.push_back(u);
    }
    return out;
  }
  if (m == 3) {
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      CVector u(3);
      u << r * std::cos(golden * i), r * std::sin(golden * i), z;
      out.push_back(u);
    }
    return out;
  }
  std::mt19937_64 rng(0xD1E);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < count; ++i) {
    Vector u(m);
    for (int a = 0; a < m; ++a) u(a) = gauss(rng);
    out.push_back(u.normalized().cast<cplx>());
  }
  return out;
}

namespace {

// avg over nodes of |W^{1/p}(x) y|^p.
double directional_average(const MatrixWeightField& w, double p, std::span<const double> nodes, int d,
                           const CVector& y) {
  const std::size_t n = nodes.size() / static_cast<std::size_t>(d);
  double acc = 0.0;
  const double ny = y.norm();
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = nodes.subspan(i * d, static_cast<std::size_t>(d));
    if (w.is_scalar()) {
      acc += w.scalar_at(x) * std::pow(ny, p);
    } else {
      acc += std::pow((w.root(x, 1.0 / p) * y).norm(), p);
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace

DoublingProfile doubling_profile(const MatrixWeightField& w, double p, const BallFamily& bf, int k_lo, int k_hi,
                                 std::span<const Vector> centers, std::span<const CVector> directions,
                                 std::size_t quadrature_points) {
  if (!(p >= 1.0)) fail(ErrorCode::InvalidArgument, "doubling needs p >= 1");
  if (k_hi <= k_lo) fail(ErrorCode::InvalidArgument, "doubling needs at least two scales");
  const int d = bf.dilation().dim();
  const double ld = std::log(bf.dilation().abs_det());
  const double vol_ratio = std::pow(2.0, d);
  DoublingProfile prof;
  for (const Vector& c : centers) {
    std::vector<std::vector<double>> small, big;
    for (int k = k_lo; k <= k_hi; ++k) {
      small.push_back(ball_nodes(bf, Ball{c, k}, quadrature_points, 1.0));
      big.push_back(ball_nodes(bf, Ball{c, k}, quadrature_points, 2.0));
    }
    for (const CVector& y : directions) {
      std::vector<double> xs, ys;
      for (int k = k_lo; k <= k_hi; ++k) {
        const auto idx = static_cast<std::size_t>(k - k_lo);
        const double a1 = directional_average(w, p, small[idx], d, y);
        const double a2 = directional_average(w, p, big[idx], d, y);
        prof.constant = std::max(prof.constant, vol_ratio * a2 / a1);
        xs.push_back(k * ld);
        ys.push_back(k * ld + std::log(a1));
      }
      // Least-squares slope of log integral against k log|det A|.
      const double n = static_cast<double>(xs.size());
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
      }
      mx /= n;
      my /= n;
      double sxy = 0, sxx = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
      }
      prof.beta = std::max(prof.beta, sxy / sxx);
    }
  }
  return prof;
}

double averaged_norm(const MatrixWeightField& w, double p, const Dilation& dil, const DilatedCube& q,
                     const CVector& u, int n_side) {
  const auto nodes = cube_nodes(dil, q, n_side);
  return std::pow(directional_average(w, p, nodes, dil.dim(), u), 1.0 / p);
}

Matrix mvee_centered(const Matrix& pts, double tol, int max_iter) {
  const auto m = pts.rows();
  const auto n = pts.cols();
  if (n < m) fail(ErrorCode::FitDegenerate, "too few points for an ellipsoid fit");
  Vector u = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Matrix h;
  for (int it = 0; it < max_iter; ++it) {
    const Matrix x = pts * u.asDiagonal() * pts.transpose();
    Eigen::LLT<Matrix> llt(x);
    if (llt.info() != Eigen::Success) fail(ErrorCode::FitDegenerate, "ellipsoid fit became singular");
    const Matrix sol = llt.solve(pts);
    Eigen::Index j = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = pts.col(i).dot(sol.col(i));
      if (v > best) {
        best = v;
        j = i;
      }
    }
    const double md = static_cast<double>(m);
    const double step = (best - md) / (md * (best - 1.0));
    h = llt.solve(Matrix::Identity(m, m));
    if (!(step > tol)) break;
    u *= (1.0 - step);
    u(j) += step;
  }
  // Rescale so every point lies inside.
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) worst = std::max(worst, pts.col(i).dot(h * pts.col(i)));
  return h / worst;
}

ReducingOperator reducing_operator(const MatrixWeightField& w, double p, const Dilation& dil, const DilatedCube& q,
                                   std::span<const CVector> directions, int n_side) {
  if (!(p >= 1.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "p must lie in [1, inf)");
  const int m = w.vec_dim();
  const int d = dil.dim();
  const auto nodes = cube_nodes(dil, q, n_side);
  const std::size_t nn = nodes.size() / static_cast<std::size_t>(d);
  ReducingOperator out;

  if (p == 2.0) {
    CMatrix avg = CMatrix::Zero(m, m);
    for (std::size_t i = 0; i < nn; ++i) avg += w.at(std::span<const double>(&nodes[i * d], static_cast<std::size_t>(d)));
    avg /= static_cast<double>(nn);
    out.matrix = hermitian_power(0.5 * (avg + avg.adjoint()), 0.5);
  } else {
    std::vector<double> omega(directions.size());
    for (std::size_t i = 0; i < directions.size(); ++i) {
      omega[i] = std::pow(directional_average(w, p, nodes, d, directions[i]), 1.0 / p);
    }
    const auto [lo, hi] = std::minmax_element(omega.begin(), omega.end());
    if (!(*lo > 0.0) || *hi / *lo > 1e12) fail(ErrorCode::FitDegenerate, "averaged norm dynamic range exceeds 1e12");
    if (m == 1) {
      out.matrix = CMatrix::Identity(1, 1) * omega[0];
    } else {
      Matrix pts(m, static_cast<Eigen::Index>(directions.size()));
      for (std::size_t i = 0; i < directions.size(); ++i) {
        pts.col(static_cast<Eigen::Index>(i)) = directions[i].real() / omega[i];
      }
      const Matrix h = mvee_centered(pts);
      Eigen::SelfAdjointEigenSolver<Matrix> es(h);
      const Matrix root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
      out.matrix = (std::pow(static_cast<double>(m), 0.25) * root).cast<cplx>();
    }
  }

  for (const CVector& u : directions) {
    const double om = std::pow(directional_average(w, p, nodes, d, u), 1.0 / p);
    const double au = (out.matrix * u).norm();
    out.sandwich = std::max({out.sandwich, au / om, om / au});
  }
  if (out.sandwich > std::sqrt(static_cast<double>(m)) * (1.0 + 1e-9)) {
    fail(ErrorCode::FitDegenerate, "reducing operator sandwich constant exceeds sqrt(m)");
  }
  return out;
}

ReducingFamily build_reducing_family(const MatrixWeightField& w, double p, const Dilation& dil,
                                     std::span<const DilatedCube> cubes, std::span<const CVector> directions,
                                     int n_side) {
  ReducingFamily fam;
  fam.p = p;
  for (const DilatedCube& q : cubes) {
    auto op = reducing_operator(w, p, dil, q, directions, n_side);
    fam.equivalence_constant = std::max(fam.equivalence_constant, op.sandwich);
    fam.ops.emplace(q, std::move(op.matrix));
  }
  return fam;
}

}  // namespace aniso
