#include "aniso/filters.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "aniso/error.hpp"

namespace aniso {

FilterBank FilterBank::synthesize(const Dilation& dil, const FilterOptions& opts) {
  if (opts.smoothness < 2) fail(ErrorCode::InvalidArgument, "smoothness must be >= 2");
  if (!(opts.outer_fraction > 0.0 && opts.outer_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "outer_fraction must lie in (0, 1)");
  }
  if (!(opts.kappa > 1.0)) fail(ErrorCode::InvalidArgument, "kappa must exceed 1");
  if (!std::isfinite(opts.split)) fail(ErrorCode::InvalidArgument, "split must be finite");
  if (!opts.homogeneous && opts.k_max < 1) fail(ErrorCode::InvalidArgument, "k_max must be >= 1");

  FilterBank fb;
  fb.dil_ = dil;
  fb.adj_ = dil.adjoint();
  fb.adj_bf_ = BallFamily::build(fb.adj_);
  fb.opts_ = opts;

  const Matrix& p = fb.adj_bf_.shape();
  const Matrix minv = fb.adj_bf_.form().inverse();
  const double widest = std::sqrt(minv.diagonal().maxCoeff());
  fb.c2_ = opts.outer_fraction * kPi / widest;
  const Matrix step = p * fb.adj_.matrix() * p.inverse();
  Eigen::JacobiSVD<Matrix> svd(step);
  fb.s_op_ = svd.singularValues()(0);
  fb.c1_ = fb.c2_ / (fb.s_op_ * opts.kappa);
  if (!(fb.c1_ > 0.0) || !(fb.c2_ > fb.c1_) || !std::isfinite(fb.c2_)) {
    fail(ErrorCode::AnnulusEmpty, "annulus constants degenerate");
  }
  fb.log_c1_ = std::log(fb.c1_);
  fb.log_c2_ = std::log(fb.c2_);

  // Spot check: D must stay positive on the annulus.
  std::mt19937_64 rng(0xF17);
  std::normal_distribution<double> gauss;
  const int d = dil.dim();
  for (int s = 0; s < 256; ++s) {
    Vector u(d);
    for (int i = 0; i < d; ++i) u(i) = gauss(rng);
    const Vector w = p.inverse() * u.normalized();
    const double q = std::exp(fb.log_c1_ + (fb.log_c2_ - fb.log_c1_) * (s + 0.5) / 256.0);
    const Vector xi = q * w;
    if (!(fb.partition(std::span<const double>(xi.data(), xi.size())) > 1e-300)) {
      fail(ErrorCode::NormalizationSingular, "partition sum vanishes on the annulus");
    }
  }
  return fb;
}

double FilterBank::bump_coord(double q, double* t) const {
  if (!(q > c1_ && q < c2_)) return 0.0;
  const double s = (2.0 * std::log(q) - log_c1_ - log_c2_) / (log_c2_ - log_c1_);
  if (t != nullptr) *t = s;
  const double one = 1.0 - s * s;
  if (one <= 0.0) return 0.0;
  return std::exp(1.0 - 1.0 / one);
}

double FilterBank::bump(std::span<const double> xi) const { return bump_coord(adj_bf_.gauge(xi, 0), nullptr); }

std::vector<std::pair<int, double>> FilterBank::orbit(std::span<const double> xi) const {
  std::vector<std::pair<int, double>> out;
  const int d = dil_.dim();
  bool zero = true;
  for (double v : xi) zero = zero && v == 0.0;
  if (zero) return out;
  // Smallest j with q_j(xi) < c2, i.e. xi / c2 in B*_j.
  std::vector<double> scaled(xi.begin(), xi.end());
  for (double& v : scaled) v /= c2_;
  int j = adj_bf_.shell(std::span<const double>(scaled.data(), static_cast<std::size_t>(d))) + 1;
  while (j > -BallFamily::kScaleClamp && adj_bf_.gauge(xi, j - 1) < c2_) --j;
  while (j <= BallFamily::kScaleClamp + 1 && adj_bf_.gauge(xi, j) >= c2_) ++j;
  for (; j <= BallFamily::kScaleClamp + 1; ++j) {
    const double q = adj_bf_.gauge(xi, j);
    if (q <= c1_) break;
    const double g = bump_coord(q, nullptr);
    if (g > 0.0) out.emplace_back(j, g);
  }
  return out;
}

double FilterBank::partition(std::span<const double> xi) const {
  double s = 0.0;
  for (const auto& [j, g] : orbit(xi)) s += g * g;
  return s;
}

double FilterBank::low_hat(std::span<const double> xi) const { return dilated(Band::LowPhi, 0, xi); }

double FilterBank::dilated(Band band, int k, std::span<const double> xi) const {
  const auto terms = orbit(xi);
  if (band == Band::LowPhi || band == Band::LowPsi) {
    if (terms.empty()) return 1.0;
    double dsum = 0.0, high = 0.0;
    for (const auto& [j, g] : terms) {
      dsum += g * g;
      if (j >= 1) high += g * g;
    }
    const double rest = 1.0 - high / dsum;
    if (rest < -1e-12) fail(ErrorCode::NegativeMass, "low-pass mass negative");
    return std::sqrt(std::max(0.0, rest));
  }
  double dsum = 0.0, gk = 0.0;
  for (const auto& [j, g] : terms) {
    dsum += g * g;
    if (j == k) gk = g;
  }
  if (gk == 0.0) return 0.0;
  double value = gk / std::sqrt(dsum);
  if (opts_.split != 0.0) {
    double t = 0.0;
    bump_coord(adj_bf_.gauge(xi, k), &t);
    const double u = std::exp(opts_.split * t);
    value = band == Band::Psi ? value / u : value * u;
  }
  return value;
}

Vector FilterBank::support_halfwidths(int k) const {
  const Matrix& ak = adj_.power(k);
  const Matrix cov = ak * adj_bf_.form().inverse() * ak.transpose();
  return c2_ * cov.diagonal().cwiseSqrt();
}

void FilterBank::check_alias(const GridSpec& grid, int k) const {
  if (grid.dim() != dil_.dim()) fail(ErrorCode::DimensionMismatch, "grid dimension");
  const Vector hw = support_halfwidths(k);
  for (int a = 0; a < grid.dim(); ++a) {
    if (!(hw(a) < grid.nyquist(a))) {
      fail(ErrorCode::AliasRisk, "scale " + std::to_string(k) + " multiplier exceeds the grid's frequency box");
    }
  }
}

int FilterBank::finest_scale(const GridSpec& grid) const {
  int k = 0;
  const auto fits = [&](int kk) {
    const Vector hw = support_halfwidths(kk);
    for (int a = 0; a < grid.dim(); ++a)
      if (!(hw(a) < grid.nyquist(a))) return false;
    return true;
  };
  if (fits(k)) {
    while (k < Dilation::kMaxPower && fits(k + 1)) ++k;
  } else {
    while (k > -Dilation::kMaxPower && !fits(k)) --k;
  }
  return k;
}

int FilterBank::coarsest_scale(const GridSpec& grid) const {
  // Largest k whose outer ellipsoid misses every axis-neighbour frequency, plus one.
  const int d = grid.dim();
  const auto reaches = [&](int kk) {
    for (int a = 0; a < d; ++a) {
      Vector xi = Vector::Zero(d);
      xi(a) = 2.0 * kPi / grid.L[static_cast<std::size_t>(a)];
      if (adj_bf_.gauge(std::span<const double>(xi.data(), xi.size()), kk) < c2_) return true;
    }
    return false;
  };
  int k = finest_scale(grid);
  while (k > -BallFamily::kScaleClamp && reaches(k - 1)) --k;
  return k;
}

const std::vector<double>& FilterBank::multiplier(const GridSpec& grid, Band band, int k) const {
  const bool low = band == Band::LowPhi || band == Band::LowPsi;
  if (!low) check_alias(grid, k);
  // Psi differs from Phi only when the pair is split; PhiTilde equals Phi.
  if (band == Band::PhiTilde || (band == Band::Psi && opts_.split == 0.0)) band = Band::Phi;
  if (band == Band::LowPsi) band = Band::LowPhi;
  auto key = std::make_tuple(grid.n, grid.L, static_cast<int>(band), low ? 0 : k);
  {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->tables.find(key);
    if (it != cache_->tables.end()) return *it->second;
  }
  const int d = grid.dim();
  const std::vector<double> xi = grid.frequencies();
  auto out = std::make_shared<std::vector<double>>(grid.size());
  for (std::size_t i = 0; i < out->size(); ++i) {
    (*out)[i] = dilated(band, k, std::span<const double>(&xi[i * static_cast<std::size_t>(d)], static_cast<std::size_t>(d)));
  }
  std::lock_guard<std::mutex> lock(cache_->mu);
  return *cache_->tables.emplace(key, std::move(out)).first->second;
}

CalderonReport FilterBank::verify_calderon(std::size_t sample_count, int k_lo, int k_hi, std::uint64_t seed) const {
  CalderonReport rep;
  const int d = dil_.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Vector hw0 = support_halfwidths(0);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 200 * sample_count + 1000;
  while (rep.samples < sample_count && attempts++ < max_attempts) {
    Vector xi(d);
    if (opts_.homogeneous) {
      // Point of the base annulus pushed to a random scale of the window.
      Vector eta(d);
      for (int a = 0; a < d; ++a) eta(a) = hw0(a) * unit(rng);
      const double g = bump(std::span<const double>(eta.data(), eta.size()));
      if (g <= 0.0) continue;
      std::uniform_int_distribution<int> pick(k_lo, k_hi);
      xi = adj_.power(pick(rng)) * eta;
    } else {
      for (int a = 0; a < d; ++a) xi(a) = kPi * unit(rng);
    }
    const std::span<const double> x(xi.data(), xi.size());
    const auto terms = orbit(x);
    bool covered = true;
    for (const auto& [j, g] : terms) {
      if (opts_.homogeneous ? (j < k_lo || j > k_hi) : (j > k_hi)) covered = false;
    }
    if (!covered) continue;
    double sum = 0.0;
    int count = 0;
    if (!opts_.homogeneous) {
      const double low = dilated(Band::LowPhi, 0, x);
      sum += low * dilated(Band::LowPsi, 0, x);
    }
    for (const auto& [j, g] : terms) {
      if (!opts_.homogeneous && j < 1) continue;
      const double term = dilated(Band::Phi, j, x) * dilated(Band::Psi, j, x);
      if (term != 0.0) ++count;
      sum += term;
    }
    rep.max_residual = std::max(rep.max_residual, std::abs(1.0 - sum));
    rep.max_overlap = std::max(rep.max_overlap, count);
    ++rep.samples;
  }
  return rep;
}

std::string FilterBank::descriptor() const {
  nlohmann::ordered_json j;
  j["kind"] = "log-bump";
  j["convention"] = "phi_k(xi) = phi((A^T)^{-k} xi)";
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < dil_.dim(); ++r) {
    std::vector<double> row;
    for (int c = 0; c < dil_.dim(); ++c) row.push_back(dil_.matrix()(r, c));
    rows.push_back(row);
  }
  j["dilation"] = rows;
  j["smoothness"] = opts_.smoothness;
  j["outer_fraction"] = opts_.outer_fraction;
  j["kappa"] = opts_.kappa;
  j["split"] = opts_.split;
  j["homogeneous"] = opts_.homogeneous;
  j["k_max"] = opts_.k_max;
  j["c1"] = c1_;
  j["c2"] = c2_;
  j["step_growth"] = s_op_;
  return j.dump(2);
}

}  // namespace aniso
