#include "aniso/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "aniso/error.hpp"

namespace aniso {

namespace {

struct PlanCache {
  std::mutex mu;
  std::map<std::pair<std::vector<int>, int>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }

  fftw_plan get(const std::vector<int>& extents, int sign, std::size_t total) {
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(extents, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    std::vector<cplx> scratch(total);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft(static_cast<int>(extents.size()), extents.data(), buf, buf,
                                   sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) fail(ErrorCode::InvalidArgument, "FFT planning failed");
    plans.emplace(key, plan);
    return plan;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

void dft(std::span<cplx> data, std::span<const int> extents, int sign) {
  std::size_t total = 1;
  for (int e : extents) {
    if (e <= 0) fail(ErrorCode::InvalidArgument, "FFT extent must be positive");
    total *= static_cast<std::size_t>(e);
  }
  if (total != data.size()) fail(ErrorCode::DimensionMismatch, "FFT buffer size");
  fftw_plan plan = cache().get(std::vector<int>(extents.begin(), extents.end()), sign, total);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace aniso
