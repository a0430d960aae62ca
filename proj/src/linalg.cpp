#include "aniso/linalg.hpp"

#include <cmath>
#include <cstring>

#include "aniso/error.hpp"

namespace aniso {

double unit_ball_volume(int d) {
  return std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

CMatrix hermitian_power(const CMatrix& w, double t, double rel_tol) {
  if (w.rows() != w.cols()) fail(ErrorCode::DimensionMismatch, "weight matrix is not square");
  if (w.rows() == 1) {
    const double v = w(0, 0).real();
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::NotPositiveDefinite, "scalar weight <= 0");
    CMatrix out(1, 1);
    out(0, 0) = std::pow(v, t);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(w);
  if (es.info() != Eigen::Success) fail(ErrorCode::NotPositiveDefinite, "eigendecomposition failed");
  const Vector& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0) || ev.minCoeff() <= rel_tol * top) {
    fail(ErrorCode::NotPositiveDefinite, "eigenvalue below tolerance");
  }
  Vector powered = ev.array().pow(t).matrix();
  const CMatrix& u = es.eigenvectors();
  return u * powered.cast<cplx>().asDiagonal() * u.adjoint();
}

double spectral_norm(const CMatrix& a) {
  if (a.size() == 1) return std::abs(a(0, 0));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a.adjoint() * a, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

double max_generalized_eigenvalue(const Matrix& n, const Matrix& m) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(n, m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(ErrorCode::ConstructionFailed, "generalized eigenproblem failed");
  return es.eigenvalues().maxCoeff();
}

bool is_integer_matrix(const Matrix& a, double tol) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = a.data()[i];
    if (std::abs(v - std::round(v)) > tol) return false;
  }
  return true;
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    unsigned char buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    h = fnv1a(buf, h);
  }
  return h;
}

}  // namespace aniso
