#include "aniso/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <fftw3.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "aniso/dilation.hpp"
#include "aniso/error.hpp"
#include "aniso/filters.hpp"
#include "aniso/io.hpp"
#include "aniso/norms.hpp"
#include "aniso/operators.hpp"
#include "aniso/transform.hpp"
#include "aniso/weights.hpp"
#include "config.hpp"

#ifndef ANISO_VERSION
#define ANISO_VERSION "0.0.0"
#endif

namespace aniso::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Flags {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<int> grid_n;
  std::string format = "json";
  bool roundtrip = false;
  std::vector<std::string> inputs;
};

// Name of the step in progress, reported with any error.
std::string g_operation = "startup";

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON numbers must be finite; non-finite values become strings.
ojson jnum(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

class Csv {
 public:
  Csv(std::uint64_t config_hash, std::vector<std::string> columns) : cols_(columns.size()) {
    os_ << "# config_hash: " << hex_hash(config_hash) << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << '\n';
  }
  Csv& operator<<(double v) { return cell(num(v)); }
  Csv& operator<<(int v) { return cell(std::to_string(v)); }
  Csv& operator<<(std::size_t v) { return cell(std::to_string(v)); }
  Csv& operator<<(const std::string& s) { return cell(s); }
  Csv& operator<<(const char* s) { return cell(s); }
  std::string str() const { return os_.str(); }

 private:
  Csv& cell(const std::string& s) {
    os_ << (filled_ ? "," : "") << s;
    if (++filled_ == cols_) {
      os_ << '\n';
      filled_ = 0;
    }
    return *this;
  }
  std::ostringstream os_;
  std::size_t cols_ = 0, filled_ = 0;
};

class Run {
 public:
  Run(std::string command, ExperimentConfig cfg, const Flags& flags)
      : command_(std::move(command)), cfg_(std::move(cfg)), flags_(flags) {
    hash_ = cfg_.hash();
    dir_ = flags.out.empty() ? fs::path(cfg_.output) : fs::path(flags.out);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  std::uint64_t hash() const { return hash_; }

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  void add_json(const std::string& name, ojson j) {
    j["config_hash"] = hex_hash(hash_);
    add(name, j.dump(2) + "\n");
  }

  void finish(const ojson& summary) {
    g_operation = "write artifacts";
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + dir_.string() + ": " + ec.message());
    ojson arts = ojson::array();
    for (const auto& [name, content] : files_) {
      const fs::path p = dir_ / name;
      std::ofstream os(p, std::ios::binary | std::ios::trunc);
      if (!os || !os.write(content.data(), static_cast<std::streamsize>(content.size()))) {
        fail(ErrorCode::Io, "cannot write " + p.string());
      }
      const auto h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(content.data()),
                                                           content.size()));
      arts.push_back({{"file", name}, {"bytes", content.size()}, {"fnv1a", hex_hash(h)}});
    }
    ojson m;
    m["command"] = command_;
    m["config_hash"] = hex_hash(hash_);
    m["config"] = cfg_.canonical();
    m["seeds"] = {{"seed", cfg_.seed}};
    m["threads"] = flags_.threads;
    m["versions"] = {{"aniso", ANISO_VERSION},
                     {"format", std::to_string(kFormatVersion)},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"fftw", std::string(fftw_version)}};
    m["artifacts"] = arts;
    // The timestamp is the only non-reproducible field.
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["created"] = ts;
    const std::string text = m.dump(2) + "\n";
    std::ofstream os(dir_ / ("manifest_" + command_ + ".json"), std::ios::trunc);
    if (!os || !(os << text)) fail(ErrorCode::Io, "cannot write manifest");

    ojson out = summary;
    out["config_hash"] = hex_hash(hash_);
    if (flags_.format == "csv") {
      for (const auto& [k, v] : out.items()) {
        if (!v.is_structured()) std::cout << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
      }
    } else {
      std::cout << out.dump(2) << '\n';
    }
  }

 private:
  std::string command_;
  ExperimentConfig cfg_;
  Flags flags_;
  std::uint64_t hash_ = 0;
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

ojson matrix_json(const Matrix& a) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(jnum(a(r, c)));
    rows.push_back(row);
  }
  return rows;
}

struct Setup {
  Dilation dil;
  BallFamily bf;
  FilterBank fb, fb2;
  GridSpec grid;
  int k_min = 0, k_max = 0;
};

Setup setup(const ExperimentConfig& cfg, bool banks = true) {
  g_operation = "validate_dilation";
  Setup s{Dilation::validate(cfg.dilation), {}, {}, {}, {}, 0, 0};
  g_operation = "build_ball_family";
  s.bf = BallFamily::build(s.dil);
  s.grid = GridSpec::cube(cfg.dim(), cfg.n, cfg.L);
  if (!banks) return s;
  g_operation = "synthesize_filters";
  s.fb = FilterBank::synthesize(s.dil, cfg.filters);
  s.fb2 = FilterBank::synthesize(s.dil, cfg.second_bank);
  s.k_max = cfg.k_max.value_or(std::min(s.fb.finest_scale(s.grid), s.fb2.finest_scale(s.grid)));
  s.k_min = cfg.k_min.value_or(std::max(s.fb.coarsest_scale(s.grid), s.fb2.coarsest_scale(s.grid)));
  if (!cfg.filters.homogeneous) s.k_min = std::max(s.k_min, 0);
  if (s.k_min > s.k_max) fail(ErrorCode::HypothesisViolated, "empty scale window on this grid");
  return s;
}

std::vector<GridFunction> test_functions(const ExperimentConfig& cfg, const Setup& s) {
  g_operation = "bandlimited_test_function";
  std::vector<GridFunction> out;
  for (int id = 0; id < cfg.tests; ++id) {
    out.push_back(bandlimited_test_function(s.grid, s.fb, s.k_min, s.k_max, id, cfg.weight.m, cfg.seed));
  }
  return out;
}

void cmd_validate_dilation(Run& run) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg, false);
  g_operation = "eccentricity_constants";
  const double ecc = s.bf.eccentricity_constant(static_cast<std::size_t>(cfg.eccentricity_samples), cfg.seed);
  ojson j;
  j["matrix"] = matrix_json(s.dil.matrix());
  j["abs_det"] = s.dil.abs_det();
  j["min_modulus"] = s.dil.min_modulus();
  j["max_modulus"] = s.dil.max_modulus();
  j["lambda_minus"] = s.dil.lambda_minus();
  j["lambda_plus"] = s.dil.lambda_plus();
  j["zeta_minus"] = s.dil.zeta_minus();
  j["zeta_plus"] = s.dil.zeta_plus();
  j["integer_lattice"] = s.dil.integer_lattice();
  j["sigma"] = s.bf.sigma();
  j["ball_shape"] = matrix_json(s.bf.shape());
  j["eccentricity_constant"] = jnum(ecc);
  j["eccentricity_samples"] = cfg.eccentricity_samples;
  run.add_json("validate-dilation.json", j);
  run.finish(j);
}

void cmd_build_filters(Run& run) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg);
  g_operation = "verify_calderon";
  const int hi = cfg.filters.homogeneous ? s.k_max : std::min(s.k_max, cfg.filters.k_max);
  const auto cal = s.fb.verify_calderon(static_cast<std::size_t>(cfg.calderon_samples), s.k_min, hi, cfg.seed);
  ojson j;
  j["bank"] = ojson::parse(s.fb.descriptor());
  j["second_bank"] = ojson::parse(s.fb2.descriptor());
  j["k_min"] = s.k_min;
  j["k_max"] = s.k_max;
  j["calderon_residual"] = jnum(cal.max_residual);
  j["calderon_samples"] = cal.samples;
  j["max_overlap"] = cal.max_overlap;
  run.add_json("build-filters.json", j);

  // Profiles along the first axis for plotting.
  g_operation = "filter_profile";
  std::vector<std::string> cols{"xi"};
  for (int k = s.k_min; k <= s.k_max; ++k) cols.push_back("phi_" + std::to_string(k));
  cols.push_back("calderon_sum");
  Csv csv(run.hash(), cols);
  const int d = cfg.dim();
  const double top = s.grid.nyquist(0);
  const int samples = 512;
  for (int i = 1; i <= samples; ++i) {
    Vector xi = Vector::Zero(d);
    xi(0) = top * i / samples;
    const std::span<const double> x(xi.data(), xi.size());
    csv << xi(0);
    double sum = cfg.filters.homogeneous ? 0.0 : std::pow(s.fb.low_hat(x), 2);
    for (int k = s.k_min; k <= s.k_max; ++k) {
      const double v = s.fb.dilated(Band::Phi, k, x);
      if (cfg.filters.homogeneous || k >= 1) sum += v * s.fb.dilated(Band::Psi, k, x);
      csv << v;
    }
    csv << sum;
  }
  run.add("filter_profile.csv", csv.str());
  run.finish(j);
}

void cmd_transform(Run& run, bool roundtrip) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg);
  const auto tests = test_functions(cfg, s);
  const AnalysisWindow win{s.k_min, s.k_max, std::nullopt};
  Csv csv(run.hash(), {"test_id", "coefficients", "rel_error", "rel_error_stored"});
  double worst = 0.0, worst_stored = 0.0;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const GridFunction& f = tests[t];
    g_operation = "analyze";
    const CoefficientSet coef = analyze(f, s.fb, win);
    g_operation = "synthesize";
    const GridFunction back = synthesize(coef, s.fb, s.grid);
    const double norm = f.l2_norm();
    const double err = norm > 0.0 ? back.plus(f, -1.0).l2_norm() / norm : 0.0;
    double err_stored = 0.0;
    std::ostringstream bin(std::ios::binary);
    g_operation = "write_coefficients";
    write_coefficients(bin, coef);
    if (roundtrip) {
      g_operation = "read_coefficients";
      std::istringstream in(bin.str(), std::ios::binary);
      const CoefficientSet loaded = read_coefficients(in);
      g_operation = "synthesize";
      const GridFunction back2 = synthesize(loaded, s.fb, s.grid);
      err_stored = norm > 0.0 ? back2.plus(f, -1.0).l2_norm() / norm : 0.0;
    }
    worst = std::max(worst, err);
    worst_stored = std::max(worst_stored, err_stored);
    csv << static_cast<int>(t) << coef.size() << err << (roundtrip ? num(err_stored) : std::string("nan"));
    if (t == 0) {
      run.add("coefficients.anbc", bin.str());
      run.add("coefficients.json", coefficients_to_json(coef));
      std::ostringstream field(std::ios::binary);
      g_operation = "write_grid_function";
      write_grid_function(field, f);
      run.add("input.anbg", field.str());
    }
  }
  run.add("transform.csv", csv.str());
  ojson j;
  j["k_min"] = s.k_min;
  j["k_max"] = s.k_max;
  j["tests"] = tests.size();
  j["max_rel_error"] = jnum(worst);
  if (roundtrip) j["max_rel_error_stored"] = jnum(worst_stored);
  run.add_json("transform.json", j);
  run.finish(j);
}

void cmd_norms(Run& run) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg);
  const auto tests = test_functions(cfg, s);
  g_operation = "weight";
  const MatrixWeightField w = make_weight(cfg.weight, s.bf);
  Csv csv(run.hash(), {"besov_id", "alpha", "p", "q", "test_id", "r1", "r2", "r3"});
  ojson rows = ojson::array();
  const int lo = cfg.filters.homogeneous ? s.k_min - 1 : 0;
  for (std::size_t b = 0; b < cfg.besov.size(); ++b) {
    const BesovParams& bp = cfg.besov[b];
    g_operation = "equivalence_harness";
    const HarnessReport rep = equivalence_harness(tests, s.fb, s.fb2, w, bp, lo, s.k_max, cfg.seed);
    for (const auto& r : rep.rows) {
      csv << static_cast<int>(b) << bp.alpha << bp.p << bp.q << r.test_id << r.r1 << r.r2 << r.r3;
    }
    rows.push_back({{"alpha", bp.alpha},
                    {"p", bp.p},
                    {"q", jnum(bp.q)},
                    {"r1", {jnum(rep.r1_min), jnum(rep.r1_max)}},
                    {"r2", {jnum(rep.r2_min), jnum(rep.r2_max)}},
                    {"r3", {jnum(rep.r3_min), jnum(rep.r3_max)}}});
  }
  run.add("norms.csv", csv.str());
  ojson j;
  j["weight"] = w.describe();
  j["k_min"] = lo;
  j["k_max"] = s.k_max;
  j["besov"] = rows;
  run.add_json("norms.json", j);
  run.finish(j);
}

void cmd_check_weight(Run& run) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg, false);
  const auto& cw = cfg.check_weight;
  g_operation = "weight";
  const MatrixWeightField w = make_weight(cfg.weight, s.bf);
  const double p = cfg.besov.front().p;
  const int d = cfg.dim();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-0.25 * cfg.L, 0.25 * cfg.L);
  std::uniform_int_distribution<int> scale(-2, 2);
  std::vector<Ball> balls;
  std::vector<Vector> centers;
  for (int b = 0; b < cw.balls; ++b) {
    Vector c(d);
    for (int a = 0; a < d; ++a) c(a) = unit(rng);
    balls.push_back({c, scale(rng)});
    centers.push_back(c);
  }
  const auto base = static_cast<std::size_t>(cw.quadrature);
  g_operation = "ap_estimate";
  const auto primal = classify_ap([&](std::size_t n) { return ap_estimate(w, p, s.bf, balls, n); }, base, cw.levels);
  g_operation = "ap_estimate_dual";
  const auto dual = classify_ap([&](std::size_t n) { return ap_estimate_dual(w, p, s.bf, balls, n); }, base, cw.levels);
  const auto dirs = direction_grid(w.vec_dim(), cw.directions);
  g_operation = "doubling_profile";
  const DoublingProfile dp = doubling_profile(w, p, s.bf, -2, 2, centers, dirs, base);
  g_operation = "reducing_operator";
  std::vector<DilatedCube> cubes;
  for (int c = 0; c < cw.cubes; ++c) {
    DilatedCube q;
    q.k = 0;
    q.j.assign(static_cast<std::size_t>(d), 0);
    q.j[0] = c - cw.cubes / 2;
    cubes.push_back(q);
  }
  double worst_sandwich = 0.0;
  Csv csv(run.hash(), {"level", "quadrature", "ap", "ap_dual"});
  for (std::size_t l = 0; l < primal.ladder.size(); ++l) {
    csv << static_cast<int>(l) << base * (std::size_t{1} << (2 * l)) << primal.ladder[l] << dual.ladder[l];
  }
  for (const auto& q : cubes) {
    worst_sandwich = std::max(worst_sandwich, reducing_operator(w, p, s.dil, q, dirs).sandwich);
  }
  const ReducingFamily rf = build_reducing_family(w, p, s.dil, cubes, dirs);
  ojson j;
  j["weight"] = w.describe();
  j["p"] = p;
  j["ap_bounded"] = primal.bounded;
  j["ap_dual_bounded"] = dual.bounded;
  j["ap"] = jnum(primal.ladder.back());
  j["ap_dual"] = jnum(dual.ladder.back());
  j["doubling_constant"] = jnum(dp.constant);
  j["doubling_beta"] = jnum(dp.beta);
  j["reducing_sandwich_max"] = jnum(worst_sandwich);
  j["reducing_equivalence_constant"] = jnum(rf.equivalence_constant);
  run.add("check-weight.csv", csv.str());
  run.add_json("check-weight.json", j);
  run.finish(j);
}

std::vector<DilatedCube> cubes_near_origin(int d, int k, int count) {
  std::vector<std::vector<int>> js;
  int r = 0;
  while (true) {
    const int side = 2 * r + 1;
    if (std::pow(side, d) >= count) break;
    ++r;
  }
  std::vector<int> j(static_cast<std::size_t>(d), -r);
  while (true) {
    js.push_back(j);
    int a = 0;
    while (a < d && ++j[static_cast<std::size_t>(a)] > r) j[static_cast<std::size_t>(a++)] = -r;
    if (a == d) break;
  }
  std::stable_sort(js.begin(), js.end(), [](const auto& x, const auto& y) {
    int nx = 0, ny = 0;
    for (int v : x) nx = std::max(nx, std::abs(v));
    for (int v : y) ny = std::max(ny, std::abs(v));
    return nx < ny;
  });
  std::vector<DilatedCube> out;
  for (int i = 0; i < count && i < static_cast<int>(js.size()); ++i) out.push_back({k, js[static_cast<std::size_t>(i)]});
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_molecules(Run& run) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg);
  const auto& mc = cfg.molecules;
  g_operation = "molecule_params";
  const MoleculeParams mp = MoleculeParams::make(mc.alpha, mc.p, mc.beta, mc.M, mc.delta, s.dil);
  const int d = cfg.dim();
  std::vector<std::string> cols{"k"};
  for (int a = 0; a < d; ++a) cols.push_back("j" + std::to_string(a));
  cols.push_back("pass");
  for (const char* c : {"i", "ii", "iii", "iv"}) {
    cols.push_back(std::string("pass_") + c);
    cols.push_back(std::string("margin_") + c);
    cols.push_back(std::string("constant_") + c);
  }
  Csv csv(run.hash(), cols);
  int checked = 0, passed = 0;
  std::array<double, 4> worst{};
  worst.fill(-kInf);
  for (int k = s.k_max - mc.scales + 1; k <= s.k_max; ++k) {
    for (const auto& q : cubes_near_origin(d, k, mc.cubes_per_scale)) {
      g_operation = "atom";
      const GridFunction g = atom(s.fb, s.grid, q, Band::Psi);
      g_operation = "molecule_check";
      const MoleculeReport rep = molecule_check(g, q, mp, s.bf);
      ++checked;
      if (rep.pass) ++passed;
      csv << q.k;
      for (int v : q.j) csv << v;
      csv << (rep.pass ? 1 : 0);
      for (std::size_t c = 0; c < 4; ++c) {
        const auto& cr = rep.conditions[c];
        csv << (cr.checked ? (cr.pass ? 1 : 0) : -1) << cr.margin << cr.constant;
        if (cr.checked) worst[c] = std::max(worst[c], cr.margin);
      }
    }
  }
  run.add("molecules.csv", csv.str());
  ojson j;
  j["J"] = mp.J();
  j["N"] = mp.N();
  j["decay_exponent"] = mp.decay_exponent();
  j["holder_order"] = mp.holder_order();
  j["k_min"] = s.k_max - mc.scales + 1;
  j["k_max"] = s.k_max;
  j["checked"] = checked;
  j["passed"] = passed;
  j["all_pass"] = checked == passed;
  j["worst_margin"] = {jnum(worst[0]), jnum(worst[1]), jnum(worst[2]), jnum(worst[3])};
  run.add_json("molecules.json", j);
  run.finish(j);
}

void cmd_ad(Run& run) {
  const auto& cfg = run.cfg();
  Setup s = setup(cfg);
  const auto& ac = cfg.ad;
  const AdParams ap{ac.alpha, ac.p, ac.beta, ac.c};
  g_operation = "ad_params";
  ap.validate();
  // Cubes per scale on the torus: |T| |det A|^k.
  const auto family_size = [&](int lo, int hi) {
    double n = 0.0;
    for (int k = lo; k <= hi; ++k) n += s.grid.volume() * std::pow(s.dil.abs_det(), k);
    return n;
  };
  int k_hi = s.k_max;
  if (ac.k_max) {
    k_hi = *ac.k_max;
  } else {
    while (k_hi > s.k_min + 2 && family_size(ac.k_min.value_or(k_hi - 2), k_hi) > ac.max_cubes) --k_hi;
  }
  const int k_lo = ac.k_min.value_or(k_hi - 2);
  if (k_lo > k_hi) fail(ErrorCode::ConfigInvalid, "/ad: k_min exceeds k_max");
  if (family_size(k_lo, k_hi) > ac.max_cubes + 0.5) {
    fail(ErrorCode::RegionTooLarge, "cube family exceeds /ad/max_cubes");
  }
  g_operation = "periodic_family";
  const auto family = periodic_family(s.dil, s.grid, k_lo, k_hi);
  OperatorSpec op;
  if (ac.op == "identity") {
    op = OperatorSpec::identity();
  } else if (ac.op == "zero") {
    op = OperatorSpec::zero();
  } else {
    // C-infinity bump in log|xi| over the family's frequency range.
    const int d = cfg.dim();
    const double lo = std::log(s.fb.c1()) + k_lo * std::log(s.dil.abs_det()) / d;
    const double hi = std::log(s.fb.c2()) + k_hi * std::log(s.dil.abs_det()) / d;
    op = OperatorSpec::multiplier(
        [lo, hi](std::span<const double> xi) {
          double r2 = 0.0;
          for (double v : xi) r2 += v * v;
          if (r2 == 0.0) return cplx(0.0);
          const double t = (std::log(std::sqrt(r2)) - 0.5 * (lo + hi)) / (0.5 * (hi - lo));
          if (std::abs(t) >= 1.0) return cplx(0.0);
          return cplx(std::exp(1.0 - 1.0 / (1.0 - t * t)));
        },
        "band_multiplier");
  }
  g_operation = "ad_from_operator";
  AdMatrix a = ad_from_operator(op, s.fb, s.grid, family, ap);
  g_operation = "ad_certify";
  const AdCertificate cert = ad_certify(a, ap, s.bf);
  g_operation = "weight";
  const MatrixWeightField w = make_weight(cfg.weight, s.bf);
  const BesovParams bp{ac.alpha, ac.p, cfg.besov.front().q, true};
  g_operation = "ad_norm_probe";
  const ProbeReport probe = ad_norm_probe(a, w, bp, s.dil, static_cast<std::size_t>(ac.probe_samples), cfg.seed);

  std::ostringstream csv;
  csv << std::setprecision(17);
  g_operation = "write_ad_csv";
  write_ad_csv(csv, a, ojson{{"config_hash", hex_hash(run.hash())}, {"operator", ac.op}}.dump());
  run.add("ad_matrix.csv", csv.str());
  ojson j;
  j["operator"] = ac.op;
  j["k_min"] = k_lo;
  j["k_max"] = k_hi;
  j["cubes"] = family.size();
  j["entries"] = a.entries.size();
  j["J"] = ap.J();
  j["certified"] = cert.c.has_value();
  j["c_star"] = cert.c ? ojson(*cert.c) : ojson(nullptr);
  j["constant"] = jnum(cert.constant);
  j["distance_slope"] = jnum(cert.distance_slope);
  j["scale_slope"] = jnum(cert.scale_slope);
  j["distance_groups"] = cert.distance_groups;
  j["resolvable_groups"] = cert.resolvable_groups;
  j["probe_max_ratio"] = jnum(probe.max_ratio);
  j["probe_mean_ratio"] = jnum(probe.mean_ratio);
  j["probe_samples"] = probe.samples;
  run.add_json("ad.json", j);
  run.finish(j);
}

// Hash stamped on a CSV artifact: the "# config_hash:" line or the
// config_hash member of a "# params:" header.
std::string csv_hash(const std::string& first_line, const std::string& file) {
  const std::string tag = "# config_hash: ";
  if (first_line.rfind(tag, 0) == 0) return first_line.substr(tag.size());
  const std::string params = "# params: ";
  if (first_line.rfind(params, 0) == 0) {
    try {
      const auto j = nlohmann::json::parse(first_line.substr(params.size()));
      if (j.contains("config_hash")) return j.at("config_hash").get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
  }
  fail(ErrorCode::ConfigInvalid, file + ": no config hash");
}

int cmd_report(const Flags& flags) {
  g_operation = "collect inputs";
  std::vector<fs::path> files;
  for (const auto& in : flags.inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
      }
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      fail(ErrorCode::Io, "no such input " + in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::ConfigInvalid, "report needs at least one CSV input");

  g_operation = "merge";
  std::string hash;
  ojson summary;
  ojson per_file = ojson::array();
  std::map<std::string, std::string> plots;
  for (const auto& f : files) {
    std::ifstream is(f);
    if (!is) fail(ErrorCode::Io, "cannot open " + f.string());
    std::string first, header, line;
    std::getline(is, first);
    const std::string h = csv_hash(first, f.string());
    if (hash.empty()) hash = h;
    if (h != hash) {
      fail(ErrorCode::ConfigInvalid, "config hash mismatch: " + f.string() + " has " + h + ", expected " + hash);
    }
    std::getline(is, header);
    std::vector<std::string> cols;
    {
      std::stringstream ss(header);
      std::string c;
      while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    std::vector<double> lo(cols.size(), kInf), hi(cols.size(), -kInf), sum(cols.size(), 0.0);
    std::vector<std::size_t> count(cols.size(), 0);
    std::ostringstream plot;
    plot << "#";
    for (const auto& c : cols) plot << ' ' << c;
    plot << '\n';
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      ++rows;
      std::stringstream ss(line);
      std::string cell;
      std::size_t i = 0;
      bool first_cell = true;
      while (std::getline(ss, cell, ',') && i < cols.size()) {
        plot << (first_cell ? "" : " ") << cell;
        first_cell = false;
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end != cell.c_str() && std::isfinite(v)) {
          lo[i] = std::min(lo[i], v);
          hi[i] = std::max(hi[i], v);
          sum[i] += v;
          ++count[i];
        }
        ++i;
      }
      plot << '\n';
    }
    ojson stats = ojson::object();
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (count[i] == 0) continue;
      stats[cols[i]] = {{"min", lo[i]}, {"max", hi[i]}, {"mean", sum[i] / static_cast<double>(count[i])}};
    }
    per_file.push_back({{"file", f.filename().string()}, {"rows", rows}, {"columns", stats}});
    plots["plot_" + f.stem().string() + ".dat"] = plot.str();
  }
  summary["config_hash"] = hash;
  summary["inputs"] = per_file;

  g_operation = "write report";
  const fs::path dir = flags.out.empty() ? fs::path("report") : fs::path(flags.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string());
  {
    std::ofstream os(dir / "summary.json", std::ios::trunc);
    if (!os || !(os << summary.dump(2) << '\n')) fail(ErrorCode::Io, "cannot write summary");
  }
  for (const auto& [name, content] : plots) {
    std::ofstream os(dir / name, std::ios::trunc);
    if (!os || !(os << content)) fail(ErrorCode::Io, "cannot write " + name);
  }
  if (flags.format == "csv") {
    std::cout << "config_hash," << hash << "\ninputs," << files.size() << '\n';
  } else {
    std::cout << summary.dump(2) << '\n';
  }
  return 0;
}

int exit_code(ErrorCode code) {
  switch (classify(code)) {
    case ErrorClass::Config: return 2;
    case ErrorClass::Numeric: return 3;
    case ErrorClass::Io: return 4;
  }
  return 3;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Matrix-weighted anisotropic Besov experiments"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;
  int grid_n = 0;
  const auto add_common = [&](CLI::App* sub, bool config) {
    if (config) {
      auto* c = sub->add_option("--config", flags.config, "experiment config (JSON)");
      auto* p = sub->add_option("--preset", flags.preset, "dilation preset instead of a config file");
      c->excludes(p);
    }
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", flags.threads, "worker pool size")->check(CLI::Range(1, 1024));
    sub->add_option("--grid-n", grid_n, "override samples per axis");
    sub->add_option("--format", flags.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
  };
  std::map<std::string, CLI::App*> subs;
  for (const char* name :
       {"validate-dilation", "build-filters", "transform", "norms", "check-weight", "molecules", "ad"}) {
    subs[name] = app.add_subcommand(name);
    add_common(subs[name], true);
  }
  subs["transform"]->add_flag("--roundtrip", flags.roundtrip, "reload stored coefficients and resynthesize");
  auto* report = app.add_subcommand("report", "merge CSV artifacts, emit summary JSON and plot data");
  add_common(report, false);
  report->add_option("inputs", flags.inputs, "CSV files or directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (grid_n > 0) flags.grid_n = grid_n;
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) flags.seed = seed;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "report") return cmd_report(flags);
    g_operation = "load config";
    ExperimentConfig cfg;
    if (!flags.config.empty()) {
      cfg = load_config(flags.config);
    } else if (!flags.preset.empty()) {
      cfg = preset_config(flags.preset);
    } else {
      fail(ErrorCode::ConfigInvalid, "give --config or --preset");
    }
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.grid_n) {
      if (*flags.grid_n < 8 || *flags.grid_n % 2 != 0) fail(ErrorCode::ConfigInvalid, "--grid-n must be even and >= 8");
      cfg.n = *flags.grid_n;
    }
    Run r(name, cfg, flags);
    if (name == "validate-dilation") cmd_validate_dilation(r);
    if (name == "build-filters") cmd_build_filters(r);
    if (name == "transform") cmd_transform(r, flags.roundtrip);
    if (name == "norms") cmd_norms(r);
    if (name == "check-weight") cmd_check_weight(r);
    if (name == "molecules") cmd_molecules(r);
    if (name == "ad") cmd_ad(r);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error during " << g_operation << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error during " << g_operation << ": " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error during " << g_operation << ": " << e.what() << '\n';
    return 3;
  }
}

}  // namespace aniso::cli
