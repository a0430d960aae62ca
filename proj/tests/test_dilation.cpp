#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "aniso/dilation.hpp"
#include "aniso/error.hpp"

using namespace aniso;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

std::vector<Matrix> presets() { return {mat2(2, 0, 0, 2), mat2(2, 0, 0, 3), mat2(1, -1, 1, 1)}; }

Vector random_point(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> lr(-3, 3);
  Vector x(d);
  for (int a = 0; a < d; ++a) x(a) = g(rng);
  return x.normalized() * std::pow(10.0, lr(rng));
}

}  // namespace

TEST(Dilation, RejectsNonExpansive) {
  try {
    Dilation::validate(mat2(2, 0, 0, 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotExpansive);
  }
  // Rotation has modulus one.
  EXPECT_THROW(Dilation::validate(mat2(0, -1, 1, 0)), Error);
}

TEST(Dilation, RejectsSingularAndMalformed) {
  try {
    Dilation::validate(mat2(2, 4, 1, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Singular);
  }
  try {
    Dilation::validate(Matrix::Ones(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  try {
    Dilation::validate(mat2(2, 0, 0, NAN));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Dilation, Scalars) {
  const auto d = Dilation::validate(mat2(2, 0, 0, 3));
  EXPECT_DOUBLE_EQ(d.abs_det(), 6.0);
  EXPECT_NEAR(d.min_modulus(), 2.0, 1e-12);
  EXPECT_NEAR(d.max_modulus(), 3.0, 1e-12);
  EXPECT_NEAR(d.lambda_minus(), std::pow(2.0, 0.99), 1e-12);
  EXPECT_NEAR(d.lambda_plus(), std::pow(3.0, 1.01), 1e-12);
  EXPECT_NEAR(d.zeta_minus(), std::log(d.lambda_minus()) / std::log(6.0), 1e-12);
  EXPECT_NEAR(d.zeta_plus(), std::log(d.lambda_plus()) / std::log(6.0), 1e-12);
  EXPECT_TRUE(d.integer_lattice());
  const auto q = Dilation::validate(mat2(1, -1, 1, 1));
  EXPECT_NEAR(q.abs_det(), 2.0, 1e-15);
  EXPECT_NEAR(q.min_modulus(), std::sqrt(2.0), 1e-12);
}

TEST(Dilation, PowersCompose) {
  const auto d = Dilation::validate(mat2(1, -1, 1, 1));
  for (int k = -5; k <= 5; ++k) {
    const Matrix prod = d.power(k) * d.power(-k);
    EXPECT_LT((prod - Matrix::Identity(2, 2)).norm(), 1e-12);
    EXPECT_LT((d.power(k + 1) - d.matrix() * d.power(k)).norm(), 1e-9 * d.power(k + 1).norm());
  }
  EXPECT_THROW(d.power(Dilation::kMaxPower + 1), Error);
  EXPECT_LT((d.adjoint().matrix() - d.matrix().transpose()).norm(), 1e-15);
}

TEST(Dilation, HashDependsOnMatrix) {
  EXPECT_EQ(Dilation::validate(mat2(2, 0, 0, 2)).hash(), Dilation::validate(mat2(2, 0, 0, 2)).hash());
  EXPECT_NE(Dilation::validate(mat2(2, 0, 0, 2)).hash(), Dilation::validate(mat2(2, 0, 0, 3)).hash());
}

TEST(BallFamily, UnitVolumeAndContainment) {
  for (const auto& a : presets()) {
    const auto bf = BallFamily::build(Dilation::validate(a));
    // |Delta| = vol(unit ball) / |det P| = 1.
    EXPECT_NEAR(std::abs(bf.shape().determinant()), unit_ball_volume(2), 1e-9);
    // B_k subset of B_{k+1}: the form of B_{k+1} is dominated by that of B_k.
    const Matrix ainv = bf.dilation().power(-1);
    const Matrix next = ainv.transpose() * bf.form() * ainv;
    EXPECT_TRUE(ellipsoid_contains(next, bf.form()));
    EXPECT_GE(bf.sigma(), 1);
  }
}

TEST(BallFamily, EllipsoidContains) {
  const Matrix unit = Matrix::Identity(2, 2);
  EXPECT_TRUE(ellipsoid_contains(unit, 4.0 * unit));
  EXPECT_FALSE(ellipsoid_contains(4.0 * unit, unit));
  EXPECT_TRUE(ellipsoid_contains(unit, unit));
}

TEST(BallFamily, GaugeShellAndQuasiNorm) {
  const auto bf = BallFamily::build(Dilation::validate(mat2(2, 0, 0, 3)));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    const Vector x = random_point(rng, 2);
    const std::span<const double> xs(x.data(), 2);
    const int k = bf.shell(xs);
    EXPECT_FALSE(bf.in_ball(xs, k));
    EXPECT_TRUE(bf.in_ball(xs, k + 1));
    EXPECT_DOUBLE_EQ(bf.quasi_norm(xs), std::pow(6.0, k));
  }
  const double zero[2] = {0, 0};
  EXPECT_EQ(bf.quasi_norm(zero), 0.0);
}

TEST(BallFamily, HomogeneityProperty) {
  for (const auto& a : presets()) {
    const auto dil = Dilation::validate(a);
    const auto bf = BallFamily::build(dil);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 1000; ++t) {
      const Vector x = random_point(rng, 2);
      const Vector ax = dil.matrix() * x;
      EXPECT_NEAR(bf.quasi_norm(ax) / bf.quasi_norm(x), dil.abs_det(), 1e-12 * dil.abs_det());
    }
  }
}

TEST(BallFamily, QuasiTriangleProperty) {
  for (const auto& a : presets()) {
    const auto dil = Dilation::validate(a);
    const auto bf = BallFamily::build(dil);
    const double c = std::pow(dil.abs_det(), bf.sigma());
    std::mt19937_64 rng(12);
    for (int t = 0; t < 1000; ++t) {
      const Vector x = random_point(rng, 2), y = random_point(rng, 2);
      EXPECT_LE(bf.quasi_norm(Vector(x + y)), c * (bf.quasi_norm(x) + bf.quasi_norm(y)));
    }
  }
}

TEST(BallFamily, EccentricityMonotoneInSamples) {
  const auto bf = BallFamily::build(Dilation::validate(mat2(2, 0, 0, 3)));
  const double a = bf.eccentricity_constant(256), b = bf.eccentricity_constant(1024);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_LE(a, b);
  EXPECT_GE(a, 1.0);
}

TEST(BallFamily, EccentricityOnGivenSamples) {
  // For A = 2I the quasi-norm is within a factor |det A| of |x|^2, so the
  // constant over points on a sphere of radius 1 is bounded by that.
  const auto bf = BallFamily::build(Dilation::validate(mat2(2, 0, 0, 2)));
  std::vector<Vector> pts;
  for (int t = 0; t < 16; ++t) {
    Vector x(2);
    x << std::cos(0.4 * t), std::sin(0.4 * t);
    pts.push_back(x);
  }
  const double c = bf.eccentricity_constant(pts);
  EXPECT_GE(c, 1.0);
  EXPECT_LE(c, 4.0);
}

TEST(Cubes, CornerVolumeAndPoint) {
  const auto dil = Dilation::validate(mat2(2, 0, 0, 3));
  const DilatedCube q{1, {3, -2}};
  const Vector x = cube_corner(dil, q);
  EXPECT_NEAR(x(0), 1.5, 1e-15);
  EXPECT_NEAR(x(1), -2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(cube_volume(dil, 1), 1.0 / 6.0);
  Vector u(2);
  u << 0.5, 0.5;
  const Vector mid = cube_point(dil, q, u);
  EXPECT_EQ(cube_containing(dil, 1, mid), q);
}

TEST(Cubes, EnumerationCoversRegion) {
  const auto dil = Dilation::validate(mat2(1, -1, 1, 1));
  Box box{Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)};
  for (int k = -1; k <= 2; ++k) {
    const auto cubes = cubes_at_scale(dil, k, box);
    EXPECT_TRUE(std::is_sorted(cubes.begin(), cubes.end(), [](const auto& a, const auto& b) { return a.j < b.j; }));
    // Every sample of the box lies in one of the listed cubes.
    std::mt19937_64 rng(k + 10);
    std::uniform_real_distribution<double> u(-0.999, 0.999);
    for (int t = 0; t < 200; ++t) {
      Vector x(2);
      x << u(rng), u(rng);
      const auto q = cube_containing(dil, k, x);
      EXPECT_TRUE(std::binary_search(cubes.begin(), cubes.end(), q,
                                     [](const auto& a, const auto& b) { return a.j < b.j; }));
    }
    // Total volume at least that of the box.
    EXPECT_GE(static_cast<double>(cubes.size()) * cube_volume(dil, k), 4.0 - 1e-9);
  }
}

TEST(Cubes, RegionTooLarge) {
  const auto dil = Dilation::validate(mat2(2, 0, 0, 2));
  Box box{Vector::Constant(2, -100.0), Vector::Constant(2, 100.0)};
  try {
    cubes_at_scale(dil, 4, box, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RegionTooLarge);
  }
}
