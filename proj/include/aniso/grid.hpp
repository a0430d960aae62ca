#pragma once

// Periodic sample grids and vector-valued grid functions held in both the
// sample and the frequency domain.
//
// Conventions: sample i on axis a sits at x = -L_a/2 + i L_a/n_a, frequency
// slot i carries xi = 2 pi m / L_a with m the signed index in [-n_a/2, n_a/2).
// Stored spectra are samples of the continuous transform
// f^(xi) = int f(x) e^{-i xi.x} dx of the periodic function over one period.

#include <optional>
#include <span>
#include <vector>

#include "aniso/dilation.hpp"
#include "aniso/linalg.hpp"

namespace aniso {

struct GridSpec {
  std::vector<int> n;
  std::vector<double> L;

  static GridSpec cube(int d, int n, double L);

  int dim() const { return static_cast<int>(n.size()); }
  std::size_t size() const;
  double spacing(int a) const { return L[static_cast<std::size_t>(a)] / n[static_cast<std::size_t>(a)]; }
  double cell_volume() const;
  double volume() const;
  double coord(int a, int i) const { return -0.5 * L[static_cast<std::size_t>(a)] + i * spacing(a); }
  int signed_index(int a, int i) const {
    const int na = n[static_cast<std::size_t>(a)];
    return i < na / 2 ? i : i - na;
  }
  double freq(int a, int i) const;
  // Largest representable |xi_a|.
  double nyquist(int a) const { return kPi * n[static_cast<std::size_t>(a)] / L[static_cast<std::size_t>(a)]; }

  void unflatten(std::size_t flat, std::span<int> idx) const;
  std::size_t flatten(std::span<const int> idx) const;
  Vector point(std::size_t flat) const;
  Vector frequency(std::size_t flat) const;
  // All sample points / frequencies, d values per entry, row-major.
  std::vector<double> points() const;
  std::vector<double> frequencies() const;
  Box box() const;

  bool operator==(const GridSpec&) const = default;
};

using Channels = std::vector<std::vector<cplx>>;

class GridFunction {
 public:
  GridFunction() = default;
  static GridFunction from_values(GridSpec grid, Channels values);
  static GridFunction from_spectrum(GridSpec grid, Channels spectrum);
  static GridFunction zeros(GridSpec grid, int m);

  const GridSpec& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  int vec_dim() const { return static_cast<int>(values_.size()); }
  const std::vector<cplx>& values(int c) const { return values_[static_cast<std::size_t>(c)]; }
  const std::vector<cplx>& spectrum(int c) const { return spectrum_[static_cast<std::size_t>(c)]; }
  const Channels& all_values() const { return values_; }
  const Channels& all_spectra() const { return spectrum_; }

  // E_k tag: spectral energy outside the adjoint ball B*_{k+1} is below
  // 1e-10 of the total. with_bandlimit throws HypothesisViolated otherwise.
  std::optional<int> bandlimit() const { return bandlimit_; }
  GridFunction with_bandlimit(int k, const BallFamily& adjoint_family) const;
  static double mass_outside(const GridFunction& f, int k, const BallFamily& adjoint_family);

  // (sum_x |f(x)|^2 h^d)^{1/2} with |.| the Euclidean norm on C^m.
  double l2_norm() const;
  // Max over channels and samples of the DFT round-trip discrepancy.
  double roundtrip_error() const;

  GridFunction scaled(cplx a) const;
  GridFunction plus(const GridFunction& other, cplx a = 1.0) const;

 private:
  GridSpec grid_;
  Channels values_, spectrum_;
  std::optional<int> bandlimit_;
};

// Unnormalised-DFT based conversions following the conventions above.
std::vector<cplx> values_to_spectrum(const GridSpec& grid, std::span<const cplx> values);
std::vector<cplx> spectrum_to_values(const GridSpec& grid, std::span<const cplx> spectrum);

// Evaluates the trigonometric series (1/|T|) sum_m s_m e^{i xi_m.x} at the
// given points (d doubles each). Points sharing a coordinate value share the
// partial contractions.
std::vector<cplx> evaluate_series(const GridSpec& grid, std::span<const cplx> spectrum,
                                  std::span<const double> points);
// Adjoint of evaluate_series without the 1/|T|: S_m = sum_i c_i e^{-i xi_m.x_i}.
std::vector<cplx> accumulate_series(const GridSpec& grid, std::span<const double> points,
                                    std::span<const cplx> coeffs);

// Index of the grid sample equal to x (up to 1e-9 spacing), if any, with
// periodic wrap.
std::optional<std::size_t> grid_index_of(const GridSpec& grid, std::span<const double> x);

}  // namespace aniso
