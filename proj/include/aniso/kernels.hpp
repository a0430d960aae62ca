#pragma once

// Data-parallel inner loops used by the spectral pipeline.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA implementation. The active table is chosen once at first use from
// the CPU feature bits; ANISO_FORCE_SCALAR=1 in the environment pins the
// scalar table. Both tables are always reachable through kernels::scalar()
// and kernels::avx2() so the equivalence tests can run them side by side.

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>

namespace aniso::kernels {

using cplx = std::complex<double>;

struct Table {
  std::string_view name;

  // z[i] *= r[i]
  void (*mul_real)(std::span<cplx> z, std::span<const double> r);
  // z[i] *= w[i], or z[i] *= conj(w[i]) when conj_w is set
  void (*mul_complex)(std::span<cplx> z, std::span<const cplx> w, bool conj_w);
  // y[i] += a * x[i]
  void (*axpy)(cplx a, std::span<const cplx> x, std::span<cplx> y);
  // sum_i x[i] * y[i]   (no conjugation)
  cplx (*dot)(std::span<const cplx> x, std::span<const cplx> y);
  // sum_i w[i] * |z[i]|^2
  double (*weighted_sumsq)(std::span<const cplx> z, std::span<const double> w);
  // sum_i |z[i]|^2
  double (*sumsq)(std::span<const cplx> z);
};

const Table& scalar();
// Returns nullptr when the AVX2 translation unit was not built or the CPU
// lacks avx2/fma.
const Table* avx2();
const Table& active();

}  // namespace aniso::kernels
