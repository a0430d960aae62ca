#include "aniso/dilation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "aniso/error.hpp"

namespace aniso {

namespace {

// Generalised cross product: a vector orthogonal to the d-1 columns of g.
Vector cofactor_normal(const Matrix& g) {
  const int d = static_cast<int>(g.rows());
  Vector n(d);
  Matrix minor(d - 1, d - 1);
  for (int i = 0; i < d; ++i) {
    for (int r = 0, rr = 0; r < d; ++r) {
      if (r == i) continue;
      minor.row(rr++) = g.row(r);
    }
    const double det = d == 1 ? 1.0 : minor.determinant();
    n(i) = (i % 2 == 0 ? 1.0 : -1.0) * det;
  }
  return n;
}

void for_each_subset(int n, int r, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> idx(r);
  for (int i = 0; i < r; ++i) idx[i] = i;
  if (r == 0) {
    fn(idx);
    return;
  }
  while (true) {
    fn(idx);
    int i = r - 1;
    while (i >= 0 && idx[i] == n - r + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int t = i + 1; t < r; ++t) idx[t] = idx[t - 1] + 1;
  }
}

}  // namespace

Dilation Dilation::validate(const Matrix& a, const DilationOptions& opts) {
  if (a.rows() == 0 || a.rows() != a.cols()) fail(ErrorCode::InvalidArgument, "dilation must be square");
  if (!a.allFinite()) fail(ErrorCode::InvalidArgument, "dilation has non-finite entries");
  if (!(opts.minus_exponent > 0.0 && opts.minus_exponent < 1.0) || !(opts.plus_exponent > 1.0)) {
    fail(ErrorCode::InvalidArgument, "bracketing exponents must satisfy 0 < minus < 1 < plus");
  }
  const double det = a.determinant();
  if (det == 0.0) fail(ErrorCode::Singular, "det A = 0");

  Eigen::EigenSolver<Matrix> es(a, false);
  if (es.info() != Eigen::Success) fail(ErrorCode::InvalidArgument, "eigenvalue computation failed");
  const Vector moduli = es.eigenvalues().cwiseAbs();
  const double lo = moduli.minCoeff();
  const double hi = moduli.maxCoeff();
  // Defective matrices (shears) put eigenvalues 1 +- O(sqrt(eps)) off the unit circle.
  if (lo <= 1.0 + 1e-7) fail(ErrorCode::NotExpansive, "eigenvalue modulus <= 1");

  auto data = std::make_shared<Data>();
  data->a = a;
  data->opts = opts;
  data->abs_det = std::abs(det);
  data->min_modulus = lo;
  data->max_modulus = hi;
  data->lambda_minus = std::pow(lo, opts.minus_exponent);
  data->lambda_plus = std::pow(hi, opts.plus_exponent);
  const double ld = std::log(data->abs_det);
  data->zeta_minus = std::log(data->lambda_minus) / ld;
  data->zeta_plus = std::log(data->lambda_plus) / ld;
  data->integer_lattice = is_integer_matrix(a) && data->abs_det >= 2.0 - 1e-9;
  if (data->integer_lattice) data->abs_det = std::round(data->abs_det);

  const int d = static_cast<int>(a.rows());
  data->powers.assign(2 * kMaxPower + 1, Matrix::Identity(d, d));
  const Matrix inv = a.inverse();
  for (int k = 1; k <= kMaxPower; ++k) {
    data->powers[kMaxPower + k] = data->powers[kMaxPower + k - 1] * a;
    data->powers[kMaxPower - k] = data->powers[kMaxPower - k + 1] * inv;
  }
  data->hash = hash_doubles(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));

  Dilation out;
  out.data_ = std::move(data);
  return out;
}

const Matrix& Dilation::power(int k) const {
  if (k < -kMaxPower || k > kMaxPower) fail(ErrorCode::InvalidArgument, "dilation power out of table range");
  return data_->powers[static_cast<std::size_t>(k + kMaxPower)];
}

Dilation Dilation::adjoint() const { return validate(data_->a.transpose(), data_->opts); }

bool ellipsoid_contains(const Matrix& outer_form, const Matrix& inner_form, double rel_tol) {
  return max_generalized_eigenvalue(outer_form, inner_form) <= 1.0 + rel_tol;
}

BallFamily BallFamily::build(const Dilation& dil) {
  const int d = dil.dim();
  const double c = dil.lambda_minus() * dil.lambda_minus();
  const Matrix inv = dil.power(-1);

  // M = sum_i c^i (A^{-i})^T A^{-i}, so that A^{-T} M A^{-1} = (M - I) / c.
  // Iterate on B_i = c^{i/2} A^{-i} to avoid overflow in c^i.
  const Matrix step = std::sqrt(c) * inv;
  Matrix m = Matrix::Identity(d, d);
  Matrix bi = Matrix::Identity(d, d);
  bool converged = false;
  for (int i = 1; i < 2'000'000; ++i) {
    bi = step * bi;
    const Matrix term = bi.transpose() * bi;
    m += term;
    const double size = term.norm();
    if (!std::isfinite(size) || size > 1e200) break;
    if (size < 1e-12 * m.norm()) {
      converged = true;
      break;
    }
  }
  if (!converged || !m.allFinite()) fail(ErrorCode::ConstructionFailed, "Lyapunov series did not converge");
  m = 0.5 * (m + m.transpose());

  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) fail(ErrorCode::ConstructionFailed, "Lyapunov form is not positive definite");
  // |{x : x^T M x < 1}| = V_d / sqrt(det M); scale so this equals 1.
  const double vd = unit_ball_volume(d);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double s = std::exp((2.0 * std::log(vd) - logdet) / d);
  m *= s;
  Eigen::LLT<Matrix> llt2(m);
  if (llt2.info() != Eigen::Success) fail(ErrorCode::ConstructionFailed, "rescaled form is not positive definite");

  auto data = std::make_shared<Data>();
  data->dil = dil;
  data->m = m;
  data->p = llt2.matrixU();
  data->r = dil.lambda_minus();

  // r Delta subset A Delta: form of A Delta is A^{-T} M A^{-1}, form of r Delta is M / r^2.
  const Matrix a_form = inv.transpose() * m * inv;
  if (!ellipsoid_contains(a_form, m / (data->r * data->r), 1e-9)) {
    fail(ErrorCode::ConstructionFailed, "r Delta is not contained in A Delta");
  }

  // sigma: smallest integer with 2 B_0 subset A^sigma B_0.
  data->sigma = -1;
  for (int sg = 0; sg <= Dilation::kMaxPower; ++sg) {
    const Matrix& as = dil.power(-sg);
    if (ellipsoid_contains(as.transpose() * m * as, m / 4.0, 1e-9)) {
      data->sigma = sg;
      break;
    }
  }
  if (data->sigma < 0) fail(ErrorCode::ConstructionFailed, "no sigma within table range");

  data->gauges.resize(2 * kScaleClamp + 2);
  for (int k = -kScaleClamp; k <= kScaleClamp + 1; ++k) {
    const Matrix g = data->p * dil.power(-k);
    std::vector<double> flat(static_cast<std::size_t>(d * d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) flat[static_cast<std::size_t>(i * d + j)] = g(i, j);
    data->gauges[static_cast<std::size_t>(k + kScaleClamp)] = std::move(flat);
  }

  BallFamily out;
  out.data_ = std::move(data);
  return out;
}

double BallFamily::gauge(std::span<const double> x, int k) const {
  const int d = data_->dil.dim();
  if (static_cast<int>(x.size()) != d) fail(ErrorCode::DimensionMismatch, "point dimension");
  if (k < -kScaleClamp || k > kScaleClamp + 1) {
    const Vector v = data_->p * data_->dil.power(-k) * Eigen::Map<const Vector>(x.data(), d);
    return v.norm();
  }
  const double* g = data_->gauges[static_cast<std::size_t>(k + kScaleClamp)].data();
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += g[i * d + j] * x[static_cast<std::size_t>(j)];
    acc += s * s;
  }
  return std::sqrt(acc);
}

int BallFamily::shell(std::span<const double> x) const {
  // Smallest K in [-clamp, clamp + 1] with x in B_K; balls are nested.
  int lo = -kScaleClamp, hi = kScaleClamp + 1;
  if (gauge(x, hi) >= 1.0) return kScaleClamp;
  if (gauge(x, lo) < 1.0) return -kScaleClamp;
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (gauge(x, mid) < 1.0)
      hi = mid;
    else
      lo = mid;
  }
  return std::max(hi - 1, -kScaleClamp);
}

double BallFamily::quasi_norm(std::span<const double> x) const {
  bool zero = true;
  for (double v : x) zero = zero && v == 0.0;
  if (zero) return 0.0;
  return std::pow(data_->dil.abs_det(), shell(x));
}

double BallFamily::eccentricity_constant(std::span<const Vector> samples) const {
  const double ld = std::log(data_->dil.abs_det());
  const double zm = data_->dil.zeta_minus(), zp = data_->dil.zeta_plus();
  double best = 1.0;
  for (const Vector& x : samples) {
    const double nx = x.norm();
    if (nx == 0.0) continue;
    const double lr = shell(std::span<const double>(x.data(), x.size())) * ld;
    const double lx = std::log(nx);
    double c;
    if (lr >= 0.0)
      c = std::max(zm * lr - lx, lx - zp * lr);
    else
      c = std::max(zp * lr - lx, lx - zm * lr);
    best = std::max(best, std::exp(c));
  }
  return best;
}

double BallFamily::eccentricity_constant(std::size_t sample_count, std::uint64_t seed) const {
  const int d = data_->dil.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> logr(std::log(1e-3), std::log(1e3));
  std::vector<Vector> pts;
  pts.reserve(sample_count);
  for (std::size_t s = 0; s < sample_count; ++s) {
    Vector u(d);
    for (int i = 0; i < d; ++i) u(i) = gauss(rng);
    const double n = u.norm();
    const double r = std::exp(logr(rng));
    if (n == 0.0) continue;
    pts.push_back(u * (r / n));
  }
  return eccentricity_constant(pts);
}

Vector cube_corner(const Dilation& dil, const DilatedCube& q) {
  const int d = dil.dim();
  Vector j(d);
  for (int i = 0; i < d; ++i) j(i) = q.j[static_cast<std::size_t>(i)];
  return dil.power(-q.k) * j;
}

double cube_volume(const Dilation& dil, int k) { return std::pow(dil.abs_det(), -k); }

Vector cube_point(const Dilation& dil, const DilatedCube& q, const Vector& u) {
  const int d = dil.dim();
  Vector j(d);
  for (int i = 0; i < d; ++i) j(i) = q.j[static_cast<std::size_t>(i)] + u(i);
  return dil.power(-q.k) * j;
}

std::vector<DilatedCube> cubes_at_scale(const Dilation& dil, int k, const Box& region, std::size_t cap) {
  const int d = dil.dim();
  if (region.dim() != d || region.hi.size() != d) fail(ErrorCode::DimensionMismatch, "region dimension");
  for (int i = 0; i < d; ++i) {
    if (!(region.hi(i) > region.lo(i))) fail(ErrorCode::InvalidArgument, "region must have positive extent");
  }
  const Matrix& ak = dil.power(k);

  // In A^k coordinates the region is a parallelotope and cube j is j + [0,1)^d.
  // Interiors meet iff 0 is interior to the zonotope (cube - region), tested on
  // the facet normals spanned by d-1 of the 2d generators.
  Matrix gens(d, 2 * d);
  for (int i = 0; i < d; ++i) {
    gens.col(i) = 0.5 * (region.hi(i) - region.lo(i)) * ak.col(i);
    gens.col(d + i) = 0.5 * Vector::Unit(d, i);
  }
  const Vector center_r = ak * (0.5 * (region.lo + region.hi));

  std::vector<Vector> normals;
  std::vector<double> widths;
  for_each_subset(2 * d, d - 1, [&](const std::vector<int>& idx) {
    Matrix g(d, d - 1);
    for (int t = 0; t < d - 1; ++t) g.col(t) = gens.col(idx[static_cast<std::size_t>(t)]);
    Vector n = cofactor_normal(g);
    const double nn = n.norm();
    if (nn < 1e-12) return;
    n /= nn;
    double w = 0.0;
    for (int c = 0; c < 2 * d; ++c) w += std::abs(n.dot(gens.col(c)));
    normals.push_back(n);
    widths.push_back(w);
  });

  // Bounding box of A^k region.
  Vector bmin = Vector::Constant(d, std::numeric_limits<double>::infinity());
  Vector bmax = -bmin;
  for (int corner = 0; corner < (1 << d); ++corner) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x(i) = (corner >> i) & 1 ? region.hi(i) : region.lo(i);
    const Vector y = ak * x;
    bmin = bmin.cwiseMin(y);
    bmax = bmax.cwiseMax(y);
  }
  std::vector<long long> jlo(d), jhi(d);
  double count = 1.0;
  for (int i = 0; i < d; ++i) {
    jlo[static_cast<std::size_t>(i)] = static_cast<long long>(std::floor(bmin(i))) - 1;
    jhi[static_cast<std::size_t>(i)] = static_cast<long long>(std::ceil(bmax(i)));
    count *= static_cast<double>(jhi[static_cast<std::size_t>(i)] - jlo[static_cast<std::size_t>(i)] + 1);
  }
  if (count > static_cast<double>(cap)) fail(ErrorCode::RegionTooLarge, "cube enumeration exceeds cap");
  for (int i = 0; i < d; ++i) {
    if (jlo[static_cast<std::size_t>(i)] < std::numeric_limits<int>::min() / 2 ||
        jhi[static_cast<std::size_t>(i)] > std::numeric_limits<int>::max() / 2) {
      fail(ErrorCode::RegionTooLarge, "cube index overflow");
    }
  }

  std::vector<DilatedCube> out;
  std::vector<int> j(d);
  for (int i = 0; i < d; ++i) j[static_cast<std::size_t>(i)] = static_cast<int>(jlo[static_cast<std::size_t>(i)]);
  Vector c(d);
  while (true) {
    for (int i = 0; i < d; ++i) c(i) = j[static_cast<std::size_t>(i)] + 0.5 - center_r(i);
    bool hit = true;
    for (std::size_t t = 0; t < normals.size() && hit; ++t) {
      const double w = widths[t];
      hit = std::abs(normals[t].dot(c)) < w * (1.0 - 1e-12) - 1e-12;
    }
    if (hit) out.push_back(DilatedCube{k, j});
    // Odometer with the last coordinate fastest gives lexicographic order.
    int i = d - 1;
    while (i >= 0) {
      if (++j[static_cast<std::size_t>(i)] <= jhi[static_cast<std::size_t>(i)]) break;
      j[static_cast<std::size_t>(i)] = static_cast<int>(jlo[static_cast<std::size_t>(i)]);
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

DilatedCube cube_containing(const Dilation& dil, int k, const Vector& x) {
  const int d = dil.dim();
  if (x.size() != d) fail(ErrorCode::DimensionMismatch, "point dimension");
  const Vector y = dil.power(k) * x;
  DilatedCube q;
  q.k = k;
  q.j.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    const double f = std::floor(y(i));
    if (std::abs(f) > 2e9) fail(ErrorCode::RegionTooLarge, "cube index overflow");
    q.j[static_cast<std::size_t>(i)] = static_cast<int>(f);
  }
  return q;
}

}  // namespace aniso
