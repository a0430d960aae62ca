#pragma once

// Continuous and sequence Besov norms under matrix weights, the reducing
// operator variant, the equivalence harness and a Cauchy-sequence demo.

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "aniso/filters.hpp"
#include "aniso/transform.hpp"
#include "aniso/weights.hpp"

namespace aniso {

struct BesovParams {
  double alpha = 0.0;
  double p = 2.0;
  // q = infinity means the supremum over scales.
  double q = 2.0;
  bool homogeneous = true;

  void validate() const;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// l^q aggregate (sup for q = infinity).
double lq_aggregate(const std::vector<double>& terms, double q);

// Homogeneous: l^q over k in [k_min, k_max] of |det A|^{k alpha} |f * phi_k|_{L^p(W)}.
// Inhomogeneous: |f * Phi|_{L^p(W)} plus the l^q aggregate over k = 1..k_max.
// root tabulates W^{1/p} on f's grid.
double continuous_norm(const GridFunction& f, const GridWeight& root, const BesovParams& params, const FilterBank& fb,
                       int k_min, int k_max);
double continuous_norm(const GridFunction& f, const MatrixWeightField& w, const BesovParams& params,
                       const FilterBank& fb, int k_min, int k_max);

// Per-cube averages used by sequence_norm, cached across calls.
class CubeWeightCache {
 public:
  CubeWeightCache(MatrixWeightField w, double p, Dilation dil, int n_side = 8);
  // |Q|^{-p/2} int_Q |W^{1/p}(x) v|^p dx.
  double term(const DilatedCube& q, const CVector& v);
  const MatrixWeightField& weight() const { return w_; }
  double p() const { return p_; }

 private:
  struct Entry {
    double scalar_avg = 0.0;        // scalar weights
    CMatrix matrix_avg;             // p = 2
    std::vector<CMatrix> roots;     // general p
  };
  const Entry& entry(const DilatedCube& q);
  MatrixWeightField w_;
  double p_;
  Dilation dil_;
  int n_side_;
  std::map<DilatedCube, Entry> cache_;
};

// Per-scale t_k = (sum_Q |Q|^{-p/2} int_Q |W^{1/p} s_Q|^p)^{1/p}; returns the
// l^q aggregate of |det A|^{k alpha} t_k over the scales present (k >= 0 only
// for inhomogeneous params).
double sequence_norm(const CoefficientSet& s, CubeWeightCache& cache, const BesovParams& params, const Dilation& dil);
double sequence_norm(const CoefficientSet& s, const MatrixWeightField& w, const BesovParams& params,
                     const Dilation& dil);

// Same aggregate with the per-cube term |Q|^{1/p - 1/2} |A_Q s_Q|. Throws
// MissingCube when the family lacks a cube of s.
double sequence_norm_reducing(const CoefficientSet& s, const ReducingFamily& rf, const BesovParams& params,
                              const Dilation& dil);

struct HarnessRow {
  int test_id = 0;
  double r1 = 0, r2 = 0, r3 = 0;
};

struct HarnessReport {
  std::vector<HarnessRow> rows;
  double r1_min = 0, r1_max = 0, r2_min = 0, r2_max = 0, r3_min = 0, r3_max = 0;
};

// r1 = |S_phi f|_b / |f|_B, r2 = |T_psi s|_B / |s|_b for seeded random s on the
// interior scales of the window, r3 = |f|_B(bank a) / |f|_B(bank b). Zero
// test functions are skipped.
HarnessReport equivalence_harness(const std::vector<GridFunction>& tests, const FilterBank& bank_a,
                                  const FilterBank& bank_b, const MatrixWeightField& w, const BesovParams& params,
                                  int k_min, int k_max, std::uint64_t seed);

struct CauchyReport {
  std::vector<double> distances;    // |f_i - f|_B
  std::vector<double> cube_errors;  // max_Q |A_Q (s_Q(f_i) - s_Q(f))|
  double rate = 0.0;                // exp of the log-distance regression slope
  bool operators_invertible = true;
};

// f_i = T_psi(sum_{l <= i} ratio^l c_l) with c_l seeded random sequences of unit
// b({A_Q}) norm on the cubes of rf; the limit sums `terms` corrections.
CauchyReport cauchy_convergence_demo(const BesovParams& params, const MatrixWeightField& w, const ReducingFamily& rf,
                                     const FilterBank& fb, const GridSpec& grid, int k_min, int k_max, double ratio,
                                     int steps, int terms, std::uint64_t seed);

}  // namespace aniso
