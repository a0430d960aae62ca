#include "aniso/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "aniso/error.hpp"
#include "aniso/fft.hpp"
#include "aniso/kernels.hpp"

namespace aniso {

GridSpec GridSpec::cube(int d, int n, double L) {
  if (d < 1) fail(ErrorCode::InvalidArgument, "grid dimension must be >= 1");
  if (n < 2 || n % 2 != 0) fail(ErrorCode::InvalidArgument, "grid size must be even and >= 2");
  if (!(L > 0.0)) fail(ErrorCode::InvalidArgument, "grid period must be positive");
  GridSpec g;
  g.n.assign(static_cast<std::size_t>(d), n);
  g.L.assign(static_cast<std::size_t>(d), L);
  return g;
}

std::size_t GridSpec::size() const {
  std::size_t s = 1;
  for (int v : n) s *= static_cast<std::size_t>(v);
  return s;
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim(); ++a) v *= spacing(a);
  return v;
}

double GridSpec::volume() const {
  double v = 1.0;
  for (double l : L) v *= l;
  return v;
}

double GridSpec::freq(int a, int i) const {
  return 2.0 * kPi * signed_index(a, i) / L[static_cast<std::size_t>(a)];
}

void GridSpec::unflatten(std::size_t flat, std::span<int> idx) const {
  for (int a = dim() - 1; a >= 0; --a) {
    const auto na = static_cast<std::size_t>(n[static_cast<std::size_t>(a)]);
    idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % na);
    flat /= na;
  }
}

std::size_t GridSpec::flatten(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < dim(); ++a) {
    flat = flat * static_cast<std::size_t>(n[static_cast<std::size_t>(a)]) +
           static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
  }
  return flat;
}

Vector GridSpec::point(std::size_t flat) const {
  std::vector<int> idx(static_cast<std::size_t>(dim()));
  unflatten(flat, idx);
  Vector x(dim());
  for (int a = 0; a < dim(); ++a) x(a) = coord(a, idx[static_cast<std::size_t>(a)]);
  return x;
}

Vector GridSpec::frequency(std::size_t flat) const {
  std::vector<int> idx(static_cast<std::size_t>(dim()));
  unflatten(flat, idx);
  Vector x(dim());
  for (int a = 0; a < dim(); ++a) x(a) = freq(a, idx[static_cast<std::size_t>(a)]);
  return x;
}

std::vector<double> GridSpec::points() const {
  const int d = dim();
  std::vector<double> out(size() * static_cast<std::size_t>(d));
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (std::size_t f = 0; f < size(); ++f) {
    unflatten(f, idx);
    for (int a = 0; a < d; ++a) out[f * d + a] = coord(a, idx[static_cast<std::size_t>(a)]);
  }
  return out;
}

std::vector<double> GridSpec::frequencies() const {
  const int d = dim();
  std::vector<double> out(size() * static_cast<std::size_t>(d));
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (std::size_t f = 0; f < size(); ++f) {
    unflatten(f, idx);
    for (int a = 0; a < d; ++a) out[f * d + a] = freq(a, idx[static_cast<std::size_t>(a)]);
  }
  return out;
}

Box GridSpec::box() const {
  Box b;
  b.lo.resize(dim());
  b.hi.resize(dim());
  for (int a = 0; a < dim(); ++a) {
    b.lo(a) = -0.5 * L[static_cast<std::size_t>(a)];
    b.hi(a) = 0.5 * L[static_cast<std::size_t>(a)];
  }
  return b;
}

namespace {

// (-1)^{sum of indices}; equals (-1)^{sum of signed indices} for even n.
void apply_checkerboard(const GridSpec& grid, std::span<cplx> data, double scale) {
  std::vector<int> idx(static_cast<std::size_t>(grid.dim()));
  for (std::size_t f = 0; f < data.size(); ++f) {
    grid.unflatten(f, idx);
    int parity = 0;
    for (int v : idx) parity += v;
    data[f] *= (parity & 1) ? -scale : scale;
  }
}

void check_grid(const GridSpec& grid) {
  if (grid.n.empty() || grid.n.size() != grid.L.size()) fail(ErrorCode::InvalidArgument, "grid spec");
  for (int v : grid.n)
    if (v < 2 || v % 2 != 0) fail(ErrorCode::InvalidArgument, "grid size must be even");
}

}  // namespace

std::vector<cplx> values_to_spectrum(const GridSpec& grid, std::span<const cplx> values) {
  if (values.size() != grid.size()) fail(ErrorCode::DimensionMismatch, "channel length");
  std::vector<cplx> out(values.begin(), values.end());
  dft(out, grid.n, -1);
  apply_checkerboard(grid, out, grid.cell_volume());
  return out;
}

std::vector<cplx> spectrum_to_values(const GridSpec& grid, std::span<const cplx> spectrum) {
  if (spectrum.size() != grid.size()) fail(ErrorCode::DimensionMismatch, "channel length");
  std::vector<cplx> out(spectrum.begin(), spectrum.end());
  apply_checkerboard(grid, out, 1.0 / grid.volume());
  dft(out, grid.n, +1);
  return out;
}

GridFunction GridFunction::from_values(GridSpec grid, Channels values) {
  check_grid(grid);
  if (values.empty()) fail(ErrorCode::InvalidArgument, "grid function needs at least one channel");
  GridFunction f;
  f.spectrum_.reserve(values.size());
  for (const auto& ch : values) f.spectrum_.push_back(values_to_spectrum(grid, ch));
  f.values_ = std::move(values);
  f.grid_ = std::move(grid);
  return f;
}

GridFunction GridFunction::from_spectrum(GridSpec grid, Channels spectrum) {
  check_grid(grid);
  if (spectrum.empty()) fail(ErrorCode::InvalidArgument, "grid function needs at least one channel");
  GridFunction f;
  f.values_.reserve(spectrum.size());
  for (const auto& ch : spectrum) f.values_.push_back(spectrum_to_values(grid, ch));
  f.spectrum_ = std::move(spectrum);
  f.grid_ = std::move(grid);
  return f;
}

GridFunction GridFunction::zeros(GridSpec grid, int m) {
  check_grid(grid);
  GridFunction f;
  f.values_.assign(static_cast<std::size_t>(m), std::vector<cplx>(grid.size()));
  f.spectrum_ = f.values_;
  f.grid_ = std::move(grid);
  return f;
}

double GridFunction::mass_outside(const GridFunction& f, int k, const BallFamily& adjoint_family) {
  const int d = f.dim();
  if (adjoint_family.dilation().dim() != d) fail(ErrorCode::DimensionMismatch, "band-limit family dimension");
  const std::vector<double> xi = f.grid().frequencies();
  double total = 0.0, outside = 0.0;
  for (std::size_t i = 0; i < f.grid().size(); ++i) {
    double e = 0.0;
    for (const auto& ch : f.spectrum_) e += std::norm(ch[i]);
    total += e;
    if (e > 0.0 && !adjoint_family.in_ball(std::span<const double>(&xi[i * d], static_cast<std::size_t>(d)), k + 1))
      outside += e;
  }
  return total > 0.0 ? outside / total : 0.0;
}

GridFunction GridFunction::with_bandlimit(int k, const BallFamily& adjoint_family) const {
  const double frac = mass_outside(*this, k, adjoint_family);
  if (!(frac < 1e-10)) fail(ErrorCode::HypothesisViolated, "spectrum not contained in the adjoint ball B_{k+1}");
  GridFunction out = *this;
  out.bandlimit_ = k;
  return out;
}

double GridFunction::l2_norm() const {
  const auto& kern = kernels::active();
  double s = 0.0;
  for (const auto& ch : values_) s += kern.sumsq(ch);
  return std::sqrt(s * grid_.cell_volume());
}

double GridFunction::roundtrip_error() const {
  double err = 0.0, scale = 0.0;
  for (std::size_t c = 0; c < values_.size(); ++c) {
    const auto back = spectrum_to_values(grid_, values_to_spectrum(grid_, values_[c]));
    for (std::size_t i = 0; i < back.size(); ++i) {
      err = std::max(err, std::abs(back[i] - values_[c][i]));
      scale = std::max(scale, std::abs(values_[c][i]));
    }
  }
  return scale > 0.0 ? err / scale : err;
}

GridFunction GridFunction::scaled(cplx a) const {
  GridFunction out = *this;
  for (auto& ch : out.values_)
    for (auto& v : ch) v *= a;
  for (auto& ch : out.spectrum_)
    for (auto& v : ch) v *= a;
  return out;
}

GridFunction GridFunction::plus(const GridFunction& other, cplx a) const {
  if (!(other.grid_ == grid_) || other.vec_dim() != vec_dim()) fail(ErrorCode::DimensionMismatch, "grid function shapes");
  GridFunction out = *this;
  const auto& kern = kernels::active();
  for (std::size_t c = 0; c < values_.size(); ++c) {
    kern.axpy(a, other.values_[c], out.values_[c]);
    kern.axpy(a, other.spectrum_[c], out.spectrum_[c]);
  }
  if (other.bandlimit_ != bandlimit_) out.bandlimit_.reset();
  return out;
}

namespace {

// Groups point indices by their coordinate on one axis (exact value match).
std::map<double, std::vector<std::size_t>> group_by(std::span<const double> points, int d, int axis,
                                                     std::span<const std::size_t> subset) {
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i : subset) groups[points[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(axis)]].push_back(i);
  return groups;
}

std::vector<cplx> phases(const GridSpec& grid, int axis, double x, double sign) {
  const int na = grid.n[static_cast<std::size_t>(axis)];
  std::vector<cplx> e(static_cast<std::size_t>(na));
  for (int i = 0; i < na; ++i) e[static_cast<std::size_t>(i)] = std::polar(1.0, sign * grid.freq(axis, i) * x);
  return e;
}

std::size_t tail_size(const GridSpec& grid, int axis) {
  std::size_t s = 1;
  for (int a = axis + 1; a < grid.dim(); ++a) s *= static_cast<std::size_t>(grid.n[static_cast<std::size_t>(a)]);
  return s;
}

void evaluate_rec(const GridSpec& grid, std::span<const cplx> tensor, int axis, std::span<const double> points,
                  std::span<const std::size_t> subset, std::vector<cplx>& out) {
  const int d = grid.dim();
  const auto& kern = kernels::active();
  auto groups = group_by(points, d, axis, subset);
  if (axis == d - 1) {
    for (const auto& [x, members] : groups) {
      const auto e = phases(grid, axis, x, +1.0);
      const cplx v = kern.dot(e, tensor);
      for (std::size_t i : members) out[i] = v;
    }
    return;
  }
  const std::size_t tail = tail_size(grid, axis);
  const int na = grid.n[static_cast<std::size_t>(axis)];
  std::vector<cplx> contracted(tail);
  for (const auto& [x, members] : groups) {
    const auto e = phases(grid, axis, x, +1.0);
    std::fill(contracted.begin(), contracted.end(), cplx(0.0));
    for (int m = 0; m < na; ++m) {
      kern.axpy(e[static_cast<std::size_t>(m)], tensor.subspan(static_cast<std::size_t>(m) * tail, tail), contracted);
    }
    evaluate_rec(grid, contracted, axis + 1, points, members, out);
  }
}

void accumulate_rec(const GridSpec& grid, std::span<const double> points, std::span<const cplx> coeffs,
                    std::span<const std::size_t> subset, int axis, std::span<cplx> tensor) {
  const int d = grid.dim();
  const auto& kern = kernels::active();
  auto groups = group_by(points, d, axis, subset);
  if (axis == d - 1) {
    for (const auto& [x, members] : groups) {
      cplx c = 0.0;
      for (std::size_t i : members) c += coeffs[i];
      const auto e = phases(grid, axis, x, -1.0);
      kern.axpy(c, e, tensor);
    }
    return;
  }
  const std::size_t tail = tail_size(grid, axis);
  const int na = grid.n[static_cast<std::size_t>(axis)];
  std::vector<cplx> partial(tail);
  for (const auto& [x, members] : groups) {
    std::fill(partial.begin(), partial.end(), cplx(0.0));
    accumulate_rec(grid, points, coeffs, members, axis + 1, partial);
    const auto e = phases(grid, axis, x, -1.0);
    for (int m = 0; m < na; ++m) {
      kern.axpy(e[static_cast<std::size_t>(m)], partial, tensor.subspan(static_cast<std::size_t>(m) * tail, tail));
    }
  }
}

}  // namespace

std::vector<cplx> evaluate_series(const GridSpec& grid, std::span<const cplx> spectrum, std::span<const double> points) {
  const auto d = static_cast<std::size_t>(grid.dim());
  if (spectrum.size() != grid.size() || points.size() % d != 0) fail(ErrorCode::DimensionMismatch, "series evaluation");
  const std::size_t count = points.size() / d;
  std::vector<std::size_t> all(count);
  for (std::size_t i = 0; i < count; ++i) all[i] = i;
  std::vector<cplx> out(count);
  if (count == 0) return out;
  evaluate_rec(grid, spectrum, 0, points, all, out);
  const double inv = 1.0 / grid.volume();
  for (auto& v : out) v *= inv;
  return out;
}

std::vector<cplx> accumulate_series(const GridSpec& grid, std::span<const double> points, std::span<const cplx> coeffs) {
  const auto d = static_cast<std::size_t>(grid.dim());
  if (points.size() != coeffs.size() * d) fail(ErrorCode::DimensionMismatch, "series accumulation");
  std::vector<std::size_t> all(coeffs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<cplx> out(grid.size());
  if (!all.empty()) accumulate_rec(grid, points, coeffs, all, 0, out);
  return out;
}

std::optional<std::size_t> grid_index_of(const GridSpec& grid, std::span<const double> x) {
  const int d = grid.dim();
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    const double h = grid.spacing(a);
    const double t = (x[static_cast<std::size_t>(a)] + 0.5 * grid.L[static_cast<std::size_t>(a)]) / h;
    const double r = std::round(t);
    if (std::abs(t - r) > 1e-9) return std::nullopt;
    const long long na = grid.n[static_cast<std::size_t>(a)];
    long long i = static_cast<long long>(r) % na;
    if (i < 0) i += na;
    idx[static_cast<std::size_t>(a)] = static_cast<int>(i);
  }
  return grid.flatten(idx);
}

}  // namespace aniso
