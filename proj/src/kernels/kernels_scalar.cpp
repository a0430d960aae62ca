#include "kernels_impl.hpp"

namespace aniso::kernels::detail {

void mul_real_scalar(std::span<cplx> z, std::span<const double> r) {
  for (std::size_t i = 0; i < z.size(); ++i) z[i] *= r[i];
}

void mul_complex_scalar(std::span<cplx> z, std::span<const cplx> w, bool conj_w) {
  if (conj_w) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= std::conj(w[i]);
  } else {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= w[i];
  }
}

void axpy_scalar(cplx a, std::span<const cplx> x, std::span<cplx> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

cplx dot_scalar(std::span<const cplx> x, std::span<const cplx> y) {
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    re += x[i].real() * y[i].real() - x[i].imag() * y[i].imag();
    im += x[i].real() * y[i].imag() + x[i].imag() * y[i].real();
  }
  return {re, im};
}

double weighted_sumsq_scalar(std::span<const cplx> z, std::span<const double> w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += w[i] * std::norm(z[i]);
  return acc;
}

double sumsq_scalar(std::span<const cplx> z) {
  double acc = 0.0;
  for (const auto& v : z) acc += std::norm(v);
  return acc;
}

}  // namespace aniso::kernels::detail
