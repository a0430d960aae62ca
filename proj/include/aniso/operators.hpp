#pragma once

// Smooth-molecule verification and almost diagonal matrices on dilated cubes.

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aniso/dilation.hpp"
#include "aniso/filters.hpp"
#include "aniso/grid.hpp"
#include "aniso/norms.hpp"
#include "aniso/transform.hpp"
#include "aniso/weights.hpp"

namespace aniso {

// J = beta/p + max{0, 1 - 1/p}.
double decay_threshold(double beta, double p);

struct MoleculeParams {
  double alpha = 0.0;
  double p = 2.0;
  double beta = 1.0;
  double M = 3.0;
  double delta = 1.0;
  double zeta_minus = 0.5;
  double zeta_plus = 0.5;

  static MoleculeParams make(double alpha, double p, double beta, double M, double delta, const Dilation& dil);

  double J() const { return decay_threshold(beta, p); }
  // max{floor((J - alpha - 1) / zeta_-), -1}.
  int N() const;
  // Exponent of the decay condition, max{M, (M - alpha) zeta_+ / zeta_-}.
  double decay_exponent() const;
  // floor(alpha / zeta_-): the Hoelder order; derivatives run up to one more.
  int holder_order() const;
  // Throws InvalidArgument unless M > J and alpha - floor(alpha) < delta <= 1.
  void validate() const;
};

struct MoleculeOptions {
  // Envelope conditions (i), (iii), (iv) are judged on the shell-wise maximum
  // R_j of |value| / envelope, j the shell of rho(A^k(x - x_Q)): the log-log
  // slope of R_j against rho over the outermost tail_shells populated shells
  // must not exceed slope_tol, i.e. the observed decay keeps up with the
  // envelope. The free constant is reported as max_j R_j.
  int tail_shells = 3;
  double slope_tol = 0.1;
  // Only points with |x_a - x_Q,a| <= window_fraction * L_a / 2 (periodic
  // image) enter, which keeps neighbouring periods out of the tail.
  double window_fraction = 0.75;
  // Values below noise_floor times the largest one are round-off.
  double noise_floor = 1e-10;
  // Moments pass below moment_tol times int |x - x_Q|^|gamma| |g|.
  double moment_tol = 1e-6;
  // Hoelder pairs use grid offsets in [-holder_reach, holder_reach]^d.
  int holder_reach = 1;
  // Relative spectral magnitude allowed on the two outermost frequency layers.
  double resolve_tol = 1e-8;
};

struct ConditionReport {
  bool checked = false;
  bool pass = true;
  // Tail slope for (i), (iii), (iv); largest relative moment for (ii).
  double margin = 0.0;
  // max_j R_j for (i), (iii), (iv); the moment tolerance for (ii).
  double constant = 0.0;
};

struct MoleculeReport {
  bool pass = true;
  // Conditions (i)-(iv) in order.
  std::array<ConditionReport, 4> conditions;
};

// Checks g as a molecule for Q. Derivatives of g(A^{-k} .) are spectral;
// distances to x_Q use the periodic image in the grid's box. Throws
// GridTooCoarse when the spectrum has not decayed at the Nyquist layers.
MoleculeReport molecule_check(const GridFunction& g, const DilatedCube& q, const MoleculeParams& mp,
                              const BallFamily& bf, const MoleculeOptions& opts = {});

struct AdParams {
  double alpha = 0.0;
  double p = 2.0;
  double beta = 1.0;
  double c = 0.5;

  double J() const { return decay_threshold(beta, p); }
  void validate() const;
};

// (|Q|/|P|)^alpha [1 + rho(x_Q - x_P)/max{|P|,|Q|}]^{-J-c}
//   min{(|Q|/|P|)^{(1+c)/2}, (|P|/|Q|)^{(1+c)/2+J-1}}.
// With a period, x_Q - x_P is replaced by its image in [-L/2, L/2)^d.
double ad_envelope(const DilatedCube& q, const DilatedCube& p, const AdParams& ap, const BallFamily& bf,
                   std::span<const double> period = {});

struct AdEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  cplx value;
};

struct AdMatrix {
  std::vector<DilatedCube> rows;  // Q
  std::vector<DilatedCube> cols;  // P
  // Sorted by (row, col), no duplicates.
  std::vector<AdEntry> entries;
  AdParams params;
  // Torus period for distances; empty means R^d.
  std::vector<double> period;
  std::optional<double> verified_c;
  double verified_constant = 0.0;

  // Builds the matrix from f(Q, P), keeping nonzero values.
  static AdMatrix tabulate(std::vector<DilatedCube> rows, std::vector<DilatedCube> cols, const AdParams& params,
                           const std::function<cplx(const DilatedCube&, const DilatedCube&)>& f,
                           std::vector<double> period = {});
  // Entrywise product a_{Q,P} b_Q.
  AdMatrix scaled_rows(std::span<const cplx> b) const;
  void sort_entries();
};

struct CertifyOptions {
  // Bisection range for c.
  double c_floor = 1e-3;
  double c_ceiling = 10.0;
  int iterations = 40;
  // A log-log slope above this along distance or scale counts as divergence.
  double slope_tol = 0.05;
  // Entries below this fraction of the largest are treated as round-off.
  double noise_floor = 1e-6;
  // Slope fits need at least this many distinct distance or scale bins. The
  // distance fit of a scale pair uses its outermost tail_bins bins among those
  // with 1 + rho / max{|P|,|Q|} >= tail_start; pairs with fewer such bins are
  // not resolved far enough and only enter the constant.
  int min_bins = 3;
  int tail_bins = 3;
  double tail_start = 16.0;
  // On a torus only pairs with |x_Q,a - x_P,a| <= window_fraction * L_a / 2
  // enter the slope fits, which keeps neighbouring periods out of the tail.
  double window_fraction = 0.75;
};

struct AdCertificate {
  std::optional<double> c;
  // max |a| / envelope(c) at the certified c (or at c_floor when not certified).
  double constant = 0.0;
  // Worst fitted slopes at the reported c; a positive distance slope at
  // c_floor is the decay deficit.
  double distance_slope = 0.0;
  double scale_slope = 0.0;
  // Scale pairs that entered the distance fit.
  std::size_t distance_groups = 0;
  // Scale pairs whose cube positions reach min_bins distance bins beyond
  // tail_start. Zero means the family cannot show decay and nothing is
  // certified.
  std::size_t resolvable_groups = 0;
};

// Largest c in [c_floor, c_ceiling] with no diverging envelope ratio; sets
// verified_c and verified_constant on success.
AdCertificate ad_certify(AdMatrix& a, const AdParams& ap, const BallFamily& bf, const CertifyOptions& opts = {});

// t_Q = sum_P a_{Q,P} s_P over the row cubes. Throws IndexMismatch when s has
// a cube outside the column set.
CoefficientSet ad_apply(const AdMatrix& a, const CoefficientSet& s);

struct OperatorSpec {
  enum class Kind { Identity, Zero, Multiplier, Kernel };
  Kind kind = Kind::Identity;
  // Multiplier: (T f)^ = m f^.
  std::function<cplx(std::span<const double>)> symbol;
  // Kernel: T f = K * f with K sampled on the grid.
  std::function<cplx(std::span<const double>)> kernel;
  std::string name = "identity";

  static OperatorSpec identity();
  static OperatorSpec zero();
  static OperatorSpec multiplier(std::function<cplx(std::span<const double>)> m, std::string name = "multiplier");
  static OperatorSpec convolution(std::function<cplx(std::span<const double>)> k, std::string name = "kernel");
};

// a_{Q,P} = <T psi_P, phi_Q> over all pairs of the cube family, one inverse
// FFT per scale pair. Throws AliasRisk when a scale does not fit the grid.
AdMatrix ad_from_operator(const OperatorSpec& t, const FilterBank& fb, const GridSpec& grid,
                          std::span<const DilatedCube> cubes, const AdParams& params);

// The periodic cube family for scales k_min..k_max.
std::vector<DilatedCube> periodic_family(const Dilation& dil, const GridSpec& grid, int k_min, int k_max);

struct ProbeReport {
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  std::size_t samples = 0;
};

// max over seeded random s on the column cubes of |A s|_b / |s|_b.
ProbeReport ad_norm_probe(const AdMatrix& a, const MatrixWeightField& w, const BesovParams& params,
                          const Dilation& dil, std::size_t samples = 50, std::uint64_t seed = 0xAD);

}  // namespace aniso
