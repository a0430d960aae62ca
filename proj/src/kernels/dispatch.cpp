#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"

namespace aniso::kernels {

namespace {

const Table kScalar{
    "scalar",
    &detail::mul_real_scalar,
    &detail::mul_complex_scalar,
    &detail::axpy_scalar,
    &detail::dot_scalar,
    &detail::weighted_sumsq_scalar,
    &detail::sumsq_scalar,
};

#if defined(ANISO_HAVE_AVX2_TU)
const Table kAvx2{
    "avx2",
    &detail::mul_real_avx2,
    &detail::mul_complex_avx2,
    &detail::axpy_avx2,
    &detail::dot_avx2,
    &detail::weighted_sumsq_avx2,
    &detail::sumsq_avx2,
};

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

bool force_scalar() {
  const char* env = std::getenv("ANISO_FORCE_SCALAR");
  return env != nullptr && std::strcmp(env, "0") != 0 && env[0] != '\0';
}

}  // namespace

const Table& scalar() { return kScalar; }

const Table* avx2() {
#if defined(ANISO_HAVE_AVX2_TU)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const Table& active() {
  static const Table* chosen = [] {
    if (force_scalar()) return &kScalar;
    const Table* fast = avx2();
    return fast != nullptr ? fast : &kScalar;
  }();
  return *chosen;
}

}  // namespace aniso::kernels
