#pragma once

#include <complex>
#include <cstdint>
#include <span>

#include <Eigen/Dense>

namespace aniso {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;

// Volume of the Euclidean unit ball in R^d.
double unit_ball_volume(int d);

// U diag(lambda_i^t) U^* for Hermitian positive-definite W. Eigenvalues at or
// below rel_tol * lambda_max (or non-positive) raise NotPositiveDefinite.
CMatrix hermitian_power(const CMatrix& w, double t, double rel_tol = 1e-13);

// Largest singular value.
double spectral_norm(const CMatrix& a);

// lambda_max(M^{-1/2} N M^{-1/2}) for symmetric N and symmetric PD M.
double max_generalized_eigenvalue(const Matrix& n, const Matrix& m);

// Smallest integer-coordinate check used for lattice tests.
bool is_integer_matrix(const Matrix& a, double tol = 0.0);

// FNV-1a over raw bytes; stable across runs and platforms with the same
// floating-point representation.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace aniso
