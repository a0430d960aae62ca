#pragma once

// phi-transform analysis S_phi, synthesis T_psi and the sampling lemmas on
// periodic grids.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "aniso/dilation.hpp"
#include "aniso/filters.hpp"
#include "aniso/grid.hpp"
#include "aniso/weights.hpp"

namespace aniso {

struct CoefficientSet {
  int dim = 0;
  int vec_dim = 1;
  int k_min = 0, k_max = 0;
  Box region;
  std::uint64_t dilation_hash = 0;
  // Inhomogeneous sets use the low-pass pair at k = 0.
  bool homogeneous = true;
  std::map<DilatedCube, CVector> entries;

  std::size_t size() const { return entries.size(); }
};

// f * b_k with b the requested band; the spectrum is multiplied by the scale-k
// multiplier (low-pass bands ignore k). Throws AliasRisk if the multiplier
// does not fit the grid.
GridFunction band_convolve(const GridFunction& f, const FilterBank& fb, int k, Band which);

// Cubes at scale k whose corner x_Q lies in the grid's fundamental domain
// [-L/2, L/2)^d. Throws HypothesisViolated unless A^k maps the period lattice
// into Z^d, which makes the torus sum over these cubes equal the sum over Z^d.
std::vector<DilatedCube> periodic_cubes(const Dilation& dil, int k, const GridSpec& grid);

struct AnalysisWindow {
  int k_min = 0;
  int k_max = 0;
  // Cubes meeting this region; the periodic fundamental domain when empty.
  std::optional<Box> region;
};

// s_Q = |det A|^{-k/2} (f * phi~_k)(x_Q). On-grid corners are read from the
// inverse FFT, other corners by evaluating the trigonometric series.
CoefficientSet analyze(const GridFunction& f, const FilterBank& fb, const AnalysisWindow& window);

// sum_Q s_Q psi_Q on the given grid. Each scale is accumulated as
// S_k(xi) = sum_j s_Q e^{-i xi.x_Q} (FFT of an impulse train when every
// corner is a grid point) times |det A|^{-k/2} psi^_k.
GridFunction synthesize(const CoefficientSet& s, const FilterBank& fb, const GridSpec& grid);

// Seeded random spectrum on the frequencies whose filter orbit stays inside
// [k_lo, k_hi] (inhomogeneous banks also keep the low-pass region), under a
// log-Gaussian envelope whose centre moves with id. Each coefficient is drawn
// from its own signed frequency index, so refining the grid with the same
// box keeps the function. Tagged E_k with the smallest k in k_hi..k_hi+4
// that holds; untagged if none does.
GridFunction bandlimited_test_function(const GridSpec& grid, const FilterBank& fb, int k_lo, int k_hi, int id,
                                       int m = 1, std::uint64_t seed = 0);

// psi_Q (or phi_Q) sampled on the grid: e_1 in the given channel.
GridFunction atom(const FilterBank& fb, const GridSpec& grid, const DilatedCube& q, Band band, int m = 1,
                  int channel = 0);

// max over x of |f*g(x) - sum_j |det A|^{-k} f(A^{-k} j) g(x - A^{-k} j)|, the sum
// running over the periodic cubes at scale k. Throws HypothesisViolated when
// either input lacks a band-limit tag.
double sampling_identity_check(const GridFunction& f, const GridFunction& g, int k, const Dilation& dil,
                               std::span<const double> x_samples);

// (sum_j int_{Q_{j,0}} |W^{1/p}(x) f(j)|^p dx)^{1/p} / |f|_{L^p(W)} over the
// periodic unit cubes. Returns 0 for f = 0; throws HypothesisViolated unless f
// is tagged E_0.
double sampling_inequality_probe(const GridFunction& f, const MatrixWeightField& w, double p, const Dilation& dil,
                                 int n_side = 8);

}  // namespace aniso
