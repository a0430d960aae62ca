#pragma once

#include "aniso/kernels.hpp"

namespace aniso::kernels::detail {

void mul_real_scalar(std::span<cplx> z, std::span<const double> r);
void mul_complex_scalar(std::span<cplx> z, std::span<const cplx> w, bool conj_w);
void axpy_scalar(cplx a, std::span<const cplx> x, std::span<cplx> y);
cplx dot_scalar(std::span<const cplx> x, std::span<const cplx> y);
double weighted_sumsq_scalar(std::span<const cplx> z, std::span<const double> w);
double sumsq_scalar(std::span<const cplx> z);

#if defined(ANISO_HAVE_AVX2_TU)
void mul_real_avx2(std::span<cplx> z, std::span<const double> r);
void mul_complex_avx2(std::span<cplx> z, std::span<const cplx> w, bool conj_w);
void axpy_avx2(cplx a, std::span<const cplx> x, std::span<cplx> y);
cplx dot_avx2(std::span<const cplx> x, std::span<const cplx> y);
double weighted_sumsq_avx2(std::span<const cplx> z, std::span<const double> w);
double sumsq_avx2(std::span<const cplx> z);
#endif

}  // namespace aniso::kernels::detail
