#pragma once

// Matrix weights, weighted L^p norms, A_p / doubling estimates over the
// dilated-ball family and reducing operators on dilated cubes.

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aniso/dilation.hpp"
#include "aniso/grid.hpp"
#include "aniso/linalg.hpp"

namespace aniso {

enum class WeightKind { Identity, Constant, ScalarPower, BlockDiag, RotatedDiag, GridSampled, Power };

std::string to_string(WeightKind kind);

class MatrixWeightField {
 public:
  static MatrixWeightField identity(int m);
  // Throws NotPositiveDefinite unless w is Hermitian positive definite.
  static MatrixWeightField constant(const CMatrix& w);
  // rho(x)^a I_m. At the origin rho is replaced by |det A|^{-60}, the
  // smallest shell value, so W stays positive definite everywhere.
  static MatrixWeightField scalar_power(const BallFamily& bf, double a, int m = 1);
  static MatrixWeightField block_diag(std::vector<MatrixWeightField> blocks);
  // R(theta(x)) diag(rho^{a_1}, rho^{a_2}) R(theta(x))^T with theta(x) = theta0 + g.x.
  static MatrixWeightField rotated_diag(const BallFamily& bf, double theta0, const Vector& gradient,
                                        double a1, double a2);
  // Nearest-sample lookup with periodic wrap.
  static MatrixWeightField grid_sampled(const GridSpec& grid, std::vector<CMatrix> samples);

  // Pointwise spectral power W(x)^t.
  MatrixWeightField power(double t) const;

  int vec_dim() const { return impl_->m; }
  WeightKind kind() const { return impl_->kind; }
  // Scalar weights are w(x) I.
  bool is_scalar() const { return impl_->scalar != nullptr; }
  bool is_constant() const { return impl_->constant; }
  std::string describe() const { return impl_->label; }

  CMatrix at(std::span<const double> x) const;
  // Requires is_scalar().
  double scalar_at(std::span<const double> x) const;
  // W(x)^t; NotPositiveDefinite when an eigenvalue is at or below tolerance.
  CMatrix root(std::span<const double> x, double t) const;

 private:
  struct Impl {
    WeightKind kind = WeightKind::Identity;
    int m = 1;
    bool constant = false;
    std::string label;
    std::function<double(std::span<const double>)> scalar;  // set for scalar kinds
    std::function<CMatrix(std::span<const double>)> matrix;
    // Power wrapper bookkeeping.
    std::shared_ptr<const Impl> base;
    double exponent = 1.0;
  };
  std::shared_ptr<const Impl> impl_;
};

inline CMatrix weight_root(const MatrixWeightField& w, std::span<const double> x, double t) { return w.root(x, t); }

// W^{-p'/p} pointwise.
MatrixWeightField dual_weight(const MatrixWeightField& w, double p);

// Tabulated W(x)^t over a grid.
class GridWeight {
 public:
  GridWeight(const MatrixWeightField& w, const GridSpec& grid, double t);
  bool scalar() const { return scalar_; }
  int vec_dim() const { return m_; }
  const GridSpec& grid() const { return grid_; }
  double exponent() const { return t_; }
  const std::vector<double>& scalar_table() const { return s_; }
  // Row-major m x m block of sample i.
  std::span<const cplx> block(std::size_t i) const {
    const auto mm = static_cast<std::size_t>(m_ * m_);
    return std::span<const cplx>(mats_.data() + i * mm, mm);
  }

 private:
  GridSpec grid_;
  int m_ = 1;
  double t_ = 1.0;
  bool scalar_ = true;
  std::vector<double> s_;
  std::vector<cplx> mats_;
};

// (sum_x |W^{1/p}(x) f(x)|^p h^d)^{1/p}; root must tabulate W^{1/p}.
double weighted_lp_norm(const GridFunction& f, const GridWeight& root, double p);
double weighted_lp_norm(const GridFunction& f, const MatrixWeightField& w, double p);

// x0 + B_k.
struct Ball {
  Vector center;
  int k = 0;
};

// Midpoint lattice of the Euclidean unit ball mapped affinely onto
// center + scale * A^k Delta; at least target nodes. Throws
// QuadratureUnderflow when target < 8. Nodes are flattened (d per node).
std::vector<double> ball_nodes(const BallFamily& bf, const Ball& ball, std::size_t target, double scale = 1.0);

// Midpoint lattice with n_side nodes per axis of the unit cube mapped onto Q.
// Throws QuadratureUnderflow below 8 nodes.
std::vector<double> cube_nodes(const Dilation& dil, const DilatedCube& q, int n_side);

double ap_estimate(const MatrixWeightField& w, double p, const BallFamily& bf, std::span<const Ball> balls,
                   std::size_t quadrature_points);
double ap_estimate_dual(const MatrixWeightField& w, double p, const BallFamily& bf, std::span<const Ball> balls,
                        std::size_t quadrature_points);

// Boundedness classification of an A_p-type estimate: the estimate is
// recomputed with base * 4^l quadrature points, l = 0..levels-1, and called
// bounded when the last refinement grows the value by less than growth_cap.
struct ApClassification {
  std::vector<double> ladder;
  bool bounded = false;
};
ApClassification classify_ap(const std::function<double(std::size_t)>& estimate, std::size_t base, int levels,
                             double growth_cap = 1.5);

// Real unit directions: {1} for m = 1, equally spaced half-circle angles for
// m = 2, a Fibonacci half-sphere for m = 3 and random Gaussian directions
// (seeded) otherwise.
std::vector<CVector> direction_grid(int m, int count);

struct DoublingProfile {
  double constant = 0.0;
  double beta = 0.0;
};
DoublingProfile doubling_profile(const MatrixWeightField& w, double p, const BallFamily& bf, int k_lo, int k_hi,
                                 std::span<const Vector> centers, std::span<const CVector> directions,
                                 std::size_t quadrature_points = 256);

struct ReducingOperator {
  CMatrix matrix;
  // max over the direction grid of max(|A u| / omega(u), omega(u) / |A u|).
  double sandwich = 1.0;
};

// omega_{p,Q}(u) = (avg_Q |W^{1/p}(x) u|^p)^{1/p}.
double averaged_norm(const MatrixWeightField& w, double p, const Dilation& dil, const DilatedCube& q,
                     const CVector& u, int n_side = 8);

// p = 2: (avg_Q W)^{1/2}. Otherwise the minimum-volume enclosing ellipsoid of
// {u / omega(u)} over the real direction grid, scaled by m^{1/4}. Throws
// FitDegenerate when omega spans more than 1e12 or the sandwich exceeds sqrt(m).
ReducingOperator reducing_operator(const MatrixWeightField& w, double p, const Dilation& dil, const DilatedCube& q,
                                   std::span<const CVector> directions, int n_side = 8);

struct ReducingFamily {
  double p = 2.0;
  std::map<DilatedCube, CMatrix> ops;
  double equivalence_constant = 1.0;
};
ReducingFamily build_reducing_family(const MatrixWeightField& w, double p, const Dilation& dil,
                                     std::span<const DilatedCube> cubes, std::span<const CVector> directions,
                                     int n_side = 8);

// Centred minimum-volume enclosing ellipsoid {x : x^T H x <= 1} of the
// columns of pts (Khachiyan iteration), rescaled to contain every point.
Matrix mvee_centered(const Matrix& pts, double tol = 1e-7, int max_iter = 100000);

}  // namespace aniso
