#include <cstdlib>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "aniso/kernels.hpp"

using namespace aniso::kernels;

namespace {

std::vector<cplx> random_complex(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<cplx> v(n);
  for (auto& z : v) z = cplx(g(rng), g(rng));
  return v;
}

std::vector<double> random_real(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Lengths around the vector width, including remainders.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 31, 64, 1001};

double max_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Kernels, ScalarReference) {
  const Table& s = scalar();
  std::vector<cplx> z{cplx(1, 2), cplx(-1, 0.5)};
  const std::vector<double> r{2.0, -1.0};
  s.mul_real(z, r);
  EXPECT_EQ(z[0], cplx(2, 4));
  EXPECT_EQ(z[1], cplx(1, -0.5));
  const std::vector<cplx> w{cplx(0, 1), cplx(2, 0)};
  s.mul_complex(z, w, true);
  EXPECT_EQ(z[0], cplx(4, -2));
  EXPECT_EQ(s.dot(w, w), cplx(3, 0));
  EXPECT_DOUBLE_EQ(s.sumsq(w), 5.0);
  EXPECT_DOUBLE_EQ(s.weighted_sumsq(w, r), 2.0 - 4.0);
  std::vector<cplx> y{cplx(1, 1), cplx(0, 0)};
  s.axpy(cplx(0, 1), w, y);
  EXPECT_EQ(y[0], cplx(0, 1));
  EXPECT_EQ(y[1], cplx(0, 2));
}

TEST(Kernels, ActiveTableIsKnown) {
  const Table& a = active();
  EXPECT_TRUE(a.name == scalar().name || (avx2() && a.name == avx2()->name));
  const char* force = std::getenv("ANISO_FORCE_SCALAR");
  if (force && std::string(force) == "1") EXPECT_EQ(a.name, scalar().name);
}

class Avx2Equivalence : public ::testing::TestWithParam<std::size_t> {
 protected:
  void SetUp() override {
    if (!avx2()) GTEST_SKIP() << "AVX2 kernels not available on this CPU";
  }
};

TEST_P(Avx2Equivalence, MulReal) {
  const std::size_t n = GetParam();
  auto a = random_complex(n, 1), b = a;
  const auto r = random_real(n, 2);
  scalar().mul_real(a, r);
  avx2()->mul_real(b, r);
  EXPECT_LE(max_diff(a, b), 1e-15);
}

TEST_P(Avx2Equivalence, MulComplex) {
  const std::size_t n = GetParam();
  const auto w = random_complex(n, 3);
  for (bool conj : {false, true}) {
    auto a = random_complex(n, 4), b = a;
    scalar().mul_complex(a, w, conj);
    avx2()->mul_complex(b, w, conj);
    EXPECT_LE(max_diff(a, b), 1e-14);
  }
}

TEST_P(Avx2Equivalence, Axpy) {
  const std::size_t n = GetParam();
  const auto x = random_complex(n, 5);
  auto a = random_complex(n, 6), b = a;
  scalar().axpy(cplx(0.3, -1.7), x, a);
  avx2()->axpy(cplx(0.3, -1.7), x, b);
  EXPECT_LE(max_diff(a, b), 1e-14);
}

TEST_P(Avx2Equivalence, Reductions) {
  const std::size_t n = GetParam();
  const auto x = random_complex(n, 7), y = random_complex(n, 8);
  const auto w = random_real(n, 9);
  const double tol = 1e-13 * (1.0 + static_cast<double>(n));
  EXPECT_LE(std::abs(scalar().dot(x, y) - avx2()->dot(x, y)), tol);
  EXPECT_NEAR(scalar().sumsq(x), avx2()->sumsq(x), tol);
  EXPECT_NEAR(scalar().weighted_sumsq(x, w), avx2()->weighted_sumsq(x, w), tol);
}

INSTANTIATE_TEST_SUITE_P(Sizes, Avx2Equivalence, ::testing::ValuesIn(kSizes));
