#pragma once

// Littlewood-Paley filter pairs built on the adjoint dilation.
//
// g(xi) is a C-infinity bump in log q*(xi), q*(xi) = |P* xi| with P* the
// ellipsoid shape of the adjoint ball family, supported in c1 < q* < c2.
// D(xi) = sum_j g((A*)^{-j} xi)^2 is A*-invariant, and phi^ = g u / sqrt(D),
// psi^ = g / (u sqrt(D)) with u = exp(split * t), t the bump coordinate.
// The scale-k multiplier is phi^((A*)^{-k} xi).

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "aniso/dilation.hpp"
#include "aniso/grid.hpp"

namespace aniso {

struct FilterOptions {
  // Derivative order used by the smoothness checks; the bump itself is C-infinity.
  int smoothness = 4;
  // Outer ellipsoid {q* < c2} has half-widths outer_fraction * pi.
  double outer_fraction = 0.9;
  // c2 / c1 = kappa * |P* A* P*^{-1}|_2; kappa > 1 guarantees coverage.
  double kappa = 1.5;
  // Zero gives the self-dual pair phi = psi.
  double split = 0.0;
  bool homogeneous = true;
  // Inhomogeneous banks report residuals over k >= 1 up to k_max.
  int k_max = 8;
};

enum class Band { Phi, Psi, PhiTilde, LowPhi, LowPsi };

struct CalderonReport {
  double max_residual = 0.0;
  std::size_t samples = 0;
  int max_overlap = 0;
};

class FilterBank {
 public:
  // Throws AnnulusEmpty when the annulus degenerates and NormalizationSingular
  // when D vanishes on the support (neither happens for valid dilations).
  static FilterBank synthesize(const Dilation& dil, const FilterOptions& opts = {});

  const Dilation& dilation() const { return dil_; }
  const Dilation& adjoint() const { return adj_; }
  const BallFamily& adjoint_family() const { return adj_bf_; }
  const FilterOptions& options() const { return opts_; }
  bool homogeneous() const { return opts_.homogeneous; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }
  // |P* A* P*^{-1}|_2, the largest one-step growth of q*.
  double step_growth() const { return s_op_; }

  // Bump value and log-coordinate t in (-1, 1) (t is only meaningful where g > 0).
  double bump(std::span<const double> xi) const;
  // Nonzero terms (j, g((A*)^{-j} xi)) of the orbit, ascending j. Empty at xi = 0.
  std::vector<std::pair<int, double>> orbit(std::span<const double> xi) const;
  // D(xi); zero at xi = 0.
  double partition(std::span<const double> xi) const;

  double phi_hat(std::span<const double> xi) const { return dilated(Band::Phi, 0, xi); }
  double psi_hat(std::span<const double> xi) const { return dilated(Band::Psi, 0, xi); }
  // Low-pass Phi^ = Psi^ = (1 - sum_{k>=1} phi^_k psi^_k)^{1/2}; throws NegativeMass
  // if the argument falls below -1e-12.
  double low_hat(std::span<const double> xi) const;

  // Multiplier of band at scale k evaluated at xi, i.e. b^((A*)^{-k} xi).
  // PhiTilde gives conj(phi^), which is phi^ since the bank is real. Low-pass
  // bands ignore k.
  double dilated(Band band, int k, std::span<const double> xi) const;

  // Multiplier table over the grid's frequency slots. Throws AliasRisk if the
  // scale-k support is not inside the representable frequency box.
  const std::vector<double>& multiplier(const GridSpec& grid, Band band, int k) const;
  void check_alias(const GridSpec& grid, int k) const;
  // Largest k whose support fits the grid; smallest k whose support reaches a
  // nonzero grid frequency.
  int finest_scale(const GridSpec& grid) const;
  int coarsest_scale(const GridSpec& grid) const;
  // Half-widths of the ellipsoid {q*((A*)^{-k} xi) < c2}.
  Vector support_halfwidths(int k) const;

  // max |1 - sum_{k in window} phi^_k psi^_k| over sample_count frequencies
  // whose shells are covered by the window, plus the largest per-frequency
  // count of nonzero terms. For inhomogeneous banks the sum is the low-pass
  // term plus k = 1..k_hi and samples are drawn from the cube [-pi, pi]^d
  // (the interior of the low-pass ellipsoid union the covered shells).
  CalderonReport verify_calderon(std::size_t sample_count, int k_lo, int k_hi, std::uint64_t seed = 0xCA1D) const;

  // JSON descriptor; regenerating from it reproduces the bank bit for bit.
  std::string descriptor() const;

 private:
  Dilation dil_, adj_;
  BallFamily adj_bf_;
  FilterOptions opts_;
  double c1_ = 0, c2_ = 0, s_op_ = 0;
  double log_c1_ = 0, log_c2_ = 0;

  double bump_coord(double q, double* t) const;

  // Multiplier tables are pure functions of (grid, band, k); shared between copies.
  struct TableCache {
    std::mutex mu;
    std::map<std::tuple<std::vector<int>, std::vector<double>, int, int>, std::shared_ptr<const std::vector<double>>> tables;
  };
  std::shared_ptr<TableCache> cache_ = std::make_shared<TableCache>();
};

inline FilterBank synthesize_homogeneous_pair(const Dilation& dil, int smoothness) {
  FilterOptions o;
  o.smoothness = smoothness;
  return FilterBank::synthesize(dil, o);
}

inline FilterBank synthesize_inhomogeneous_pair(const Dilation& dil, int smoothness, int k_max) {
  FilterOptions o;
  o.smoothness = smoothness;
  o.homogeneous = false;
  o.k_max = k_max;
  return FilterBank::synthesize(dil, o);
}

}  // namespace aniso
