// Compiled with -mavx2 -mfma. Only reached through the dispatcher after a
// CPU feature check.

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace aniso::kernels::detail {

namespace {

// [r0, r1] -> [r0, r0, r1, r1]
inline __m256d dup_pairs(const double* r) {
  __m256d v = _mm256_castpd128_pd256(_mm_loadu_pd(r));
  return _mm256_permute4x64_pd(v, 0x50);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

inline double* as_doubles(cplx* p) { return reinterpret_cast<double*>(p); }
inline const double* as_doubles(const cplx* p) { return reinterpret_cast<const double*>(p); }

}  // namespace

void mul_real_avx2(std::span<cplx> z, std::span<const double> r) {
  const std::size_t n = z.size();
  double* zp = as_doubles(z.data());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d zv = _mm256_loadu_pd(zp + 2 * i);
    _mm256_storeu_pd(zp + 2 * i, _mm256_mul_pd(zv, dup_pairs(r.data() + i)));
  }
  for (; i < n; ++i) z[i] *= r[i];
}

void mul_complex_avx2(std::span<cplx> z, std::span<const cplx> w, bool conj_w) {
  const std::size_t n = z.size();
  double* zp = as_doubles(z.data());
  const double* wp = as_doubles(w.data());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d zv = _mm256_loadu_pd(zp + 2 * i);
    __m256d wv = _mm256_loadu_pd(wp + 2 * i);
    __m256d wr = _mm256_movedup_pd(wv);
    __m256d wi = _mm256_permute_pd(wv, 0xF);
    __m256d zs = _mm256_permute_pd(zv, 0x5);
    __m256d t = _mm256_mul_pd(zs, wi);
    __m256d out = conj_w ? _mm256_fmsubadd_pd(zv, wr, t) : _mm256_fmaddsub_pd(zv, wr, t);
    _mm256_storeu_pd(zp + 2 * i, out);
  }
  for (; i < n; ++i) z[i] *= conj_w ? std::conj(w[i]) : w[i];
}

void axpy_avx2(cplx a, std::span<const cplx> x, std::span<cplx> y) {
  const std::size_t n = x.size();
  const double* xp = as_doubles(x.data());
  double* yp = as_doubles(y.data());
  const __m256d ar = _mm256_set1_pd(a.real());
  const __m256d ai = _mm256_set1_pd(a.imag());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xp + 2 * i);
    __m256d xs = _mm256_permute_pd(xv, 0x5);
    __m256d t = _mm256_fmaddsub_pd(xv, ar, _mm256_mul_pd(xs, ai));
    _mm256_storeu_pd(yp + 2 * i, _mm256_add_pd(_mm256_loadu_pd(yp + 2 * i), t));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

cplx dot_avx2(std::span<const cplx> x, std::span<const cplx> y) {
  const std::size_t n = x.size();
  const double* xp = as_doubles(x.data());
  const double* yp = as_doubles(y.data());
  __m256d acc_r = _mm256_setzero_pd();  // [xr*yr, xi*yr, ...]
  __m256d acc_i = _mm256_setzero_pd();  // [xi*yi, xr*yi, ...]
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xp + 2 * i);
    __m256d yv = _mm256_loadu_pd(yp + 2 * i);
    __m256d yr = _mm256_movedup_pd(yv);
    __m256d yi = _mm256_permute_pd(yv, 0xF);
    __m256d xs = _mm256_permute_pd(xv, 0x5);
    acc_r = _mm256_fmadd_pd(xv, yr, acc_r);
    acc_i = _mm256_fmadd_pd(xs, yi, acc_i);
  }
  alignas(32) double r[4], s[4];
  _mm256_store_pd(r, acc_r);
  _mm256_store_pd(s, acc_i);
  double re = (r[0] + r[2]) - (s[0] + s[2]);
  double im = (r[1] + r[3]) + (s[1] + s[3]);
  for (; i < n; ++i) {
    re += x[i].real() * y[i].real() - x[i].imag() * y[i].imag();
    im += x[i].real() * y[i].imag() + x[i].imag() * y[i].real();
  }
  return {re, im};
}

double weighted_sumsq_avx2(std::span<const cplx> z, std::span<const double> w) {
  const std::size_t n = z.size();
  const double* zp = as_doubles(z.data());
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d zv = _mm256_loadu_pd(zp + 2 * i);
    acc = _mm256_fmadd_pd(_mm256_mul_pd(zv, zv), dup_pairs(w.data() + i), acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += w[i] * std::norm(z[i]);
  return total;
}

double sumsq_avx2(std::span<const cplx> z) {
  const std::size_t n = z.size();
  const double* zp = as_doubles(z.data());
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d zv = _mm256_loadu_pd(zp + 2 * i);
    acc = _mm256_fmadd_pd(zv, zv, acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += std::norm(z[i]);
  return total;
}

}  // namespace aniso::kernels::detail
