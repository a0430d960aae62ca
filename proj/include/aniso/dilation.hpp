#pragma once

// Expansive dilations, the dilated-ball family B_k = A^k Delta, the step
// homogeneous quasi-norm and dilated-cube enumeration.

#include <compare>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "aniso/linalg.hpp"

namespace aniso {

struct DilationOptions {
  // lambda_- = (min|lambda|)^minus_exponent, lambda_+ = (max|lambda|)^plus_exponent.
  double minus_exponent = 0.99;
  double plus_exponent = 1.01;
};

class Dilation {
 public:
  // Largest |k| for which A^k is tabulated.
  static constexpr int kMaxPower = 64;

  // Throws NotExpansive when some eigenvalue has modulus <= 1, Singular when
  // det A == 0 and InvalidArgument for non-square or non-finite input.
  static Dilation validate(const Matrix& a, const DilationOptions& opts = {});

  int dim() const { return static_cast<int>(data_->a.rows()); }
  const Matrix& matrix() const { return data_->a; }
  double abs_det() const { return data_->abs_det; }
  double min_modulus() const { return data_->min_modulus; }
  double max_modulus() const { return data_->max_modulus; }
  double lambda_minus() const { return data_->lambda_minus; }
  double lambda_plus() const { return data_->lambda_plus; }
  double zeta_minus() const { return data_->zeta_minus; }
  double zeta_plus() const { return data_->zeta_plus; }
  bool integer_lattice() const { return data_->integer_lattice; }
  const DilationOptions& options() const { return data_->opts; }

  // A^k for |k| <= kMaxPower.
  const Matrix& power(int k) const;

  // The adjoint dilation A^* = A^T acting on frequencies.
  Dilation adjoint() const;

  std::uint64_t hash() const { return data_->hash; }

 private:
  struct Data {
    Matrix a;
    DilationOptions opts;
    double abs_det = 0, min_modulus = 0, max_modulus = 0;
    double lambda_minus = 0, lambda_plus = 0, zeta_minus = 0, zeta_plus = 0;
    bool integer_lattice = false;
    std::vector<Matrix> powers;  // index k + kMaxPower
    std::uint64_t hash = 0;
  };
  std::shared_ptr<const Data> data_;
};

// Containment of same-centred ellipsoids {x : x^T inner x < 1} subset of
// {x : x^T outer x < 1}, i.e. outer <= inner in the Loewner order.
bool ellipsoid_contains(const Matrix& outer_form, const Matrix& inner_form, double rel_tol = 1e-10);

class BallFamily {
 public:
  static constexpr int kScaleClamp = 60;

  // Throws ConstructionFailed if the Lyapunov-type series yields a form that
  // is not positive definite or fails the containment checks.
  static BallFamily build(const Dilation& dil);

  const Dilation& dilation() const { return data_->dil; }
  // Delta = {x : |P x| < 1}, |Delta| = 1.
  const Matrix& shape() const { return data_->p; }
  // M = P^T P.
  const Matrix& form() const { return data_->m; }
  double ratio() const { return data_->r; }
  int sigma() const { return data_->sigma; }

  // |P A^{-k} x|, i.e. x is in B_k iff gauge(x, k) < 1.
  double gauge(std::span<const double> x, int k) const;
  bool in_ball(std::span<const double> x, int k) const { return gauge(x, k) < 1.0; }

  // The k with x in B_{k+1} \ B_k, clamped to [-kScaleClamp, kScaleClamp].
  // x must be non-zero.
  int shell(std::span<const double> x) const;

  // rho(x) = |det A|^k on B_{k+1} \ B_k, rho(0) = 0.
  double quasi_norm(std::span<const double> x) const;
  double quasi_norm(const Vector& x) const { return quasi_norm(std::span<const double>(x.data(), x.size())); }

  // Smallest C with (1/C) rho^{zeta_-} <= |x| <= C rho^{zeta_+} when rho >= 1
  // and (1/C) rho^{zeta_+} <= |x| <= C rho^{zeta_-} when rho < 1, over samples.
  double eccentricity_constant(std::span<const Vector> samples) const;
  // Same, over sample_count points drawn log-uniformly in |x| from [1e-3, 1e3]
  // with uniformly random direction. The first n points for a given seed are
  // the same for any sample_count >= n, so the result is monotone in
  // sample_count.
  double eccentricity_constant(std::size_t sample_count, std::uint64_t seed = 0x5EED) const;

 private:
  struct Data {
    Dilation dil;
    Matrix p, m;
    double r = 0;
    int sigma = 0;
    // P A^{-k} for k in [-kScaleClamp, kScaleClamp + 1], row-major flattened.
    std::vector<std::vector<double>> gauges;
  };
  std::shared_ptr<const Data> data_;
};

inline Dilation validate_dilation(const Matrix& a, const DilationOptions& opts = {}) {
  return Dilation::validate(a, opts);
}
inline BallFamily build_ball_family(const Dilation& dil) { return BallFamily::build(dil); }
inline double step_quasi_norm(const BallFamily& bf, const Vector& x) { return bf.quasi_norm(x); }
inline double eccentricity_constants(const BallFamily& bf, std::size_t sample_count, std::uint64_t seed = 0x5EED) {
  return bf.eccentricity_constant(sample_count, seed);
}

// Q_{j,k} = A^{-k}([0,1)^d + j).
struct DilatedCube {
  int k = 0;
  std::vector<int> j;

  auto operator<=>(const DilatedCube&) const = default;
  bool operator==(const DilatedCube&) const = default;
};

struct Box {
  Vector lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const { return (hi - lo).prod(); }
};

// x_Q = A^{-k} j.
Vector cube_corner(const Dilation& dil, const DilatedCube& q);
// |Q| = |det A|^{-k}.
double cube_volume(const Dilation& dil, int k);
// Point of Q with preimage coordinates u in [0,1)^d: A^{-k}(u + j).
Vector cube_point(const Dilation& dil, const DilatedCube& q, const Vector& u);

// Cubes at scale k whose interiors meet the interior of region, in
// lexicographic order of j. Throws RegionTooLarge when the candidate count
// exceeds cap.
std::vector<DilatedCube> cubes_at_scale(const Dilation& dil, int k, const Box& region,
                                        std::size_t cap = 4'000'000);

// The unique cube at scale k containing x (half-open convention).
DilatedCube cube_containing(const Dilation& dil, int k, const Vector& x);

}  // namespace aniso
