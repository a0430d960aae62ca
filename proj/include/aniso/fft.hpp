#pragma once

#include <span>

#include "aniso/linalg.hpp"

namespace aniso {

// In-place unnormalised DFT over a row-major array with the given extents.
// sign = -1 computes sum_n x_n e^{-2 pi i k n / N}, sign = +1 the conjugate kernel.
// Plans are cached per (extents, sign) and created with FFTW_ESTIMATE so that
// results do not depend on timing.
void dft(std::span<cplx> data, std::span<const int> extents, int sign);

}  // namespace aniso
