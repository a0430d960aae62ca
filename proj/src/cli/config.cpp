#include "config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "aniso/error.hpp"
#include "aniso/linalg.hpp"

namespace aniso::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void invalid(const std::string& pointer, const std::string& what) {
  fail(ErrorCode::ConfigInvalid, (pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

// Walks one JSON object, rejecting members nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
    if (!j_.is_object()) invalid(ptr_, "expected an object");
  }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) invalid(ptr_ + "/" + k, "unknown member");
    }
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }
  const json& at(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }
  std::string path(const std::string& k) const { return ptr_ + "/" + k; }

  double number(const std::string& k, double def, double lo, double hi, bool open_lo = false) {
    if (!has(k)) return def;
    const json& v = at(k);
    if (!v.is_number()) invalid(path(k), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi || (open_lo && x == lo)) {
      std::ostringstream os;
      os << "must lie in " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
      invalid(path(k), os.str());
    }
    return x;
  }
  int integer(const std::string& k, int def, int lo, int hi) {
    if (!has(k)) return def;
    const json& v = at(k);
    if (!v.is_number_integer()) invalid(path(k), "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) invalid(path(k), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(x);
  }
  std::optional<int> opt_integer(const std::string& k, int lo, int hi) {
    if (!has(k)) return std::nullopt;
    return integer(k, 0, lo, hi);
  }
  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const json& v = at(k);
    if (!v.is_boolean()) invalid(path(k), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& k, const std::string& def, const std::vector<std::string>& allowed = {}) {
    if (!has(k)) return def;
    const json& v = at(k);
    if (!v.is_string()) invalid(path(k), "expected a string");
    auto s = v.get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      invalid(path(k), "must be one of " + list);
    }
    return s;
  }
  std::vector<double> numbers(const std::string& k) {
    const json& v = at(k);
    if (!v.is_array()) invalid(path(k), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) invalid(path(k) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }
  std::vector<std::vector<double>> square(const std::string& k, int max_dim) {
    const json& v = at(k);
    if (!v.is_array() || v.empty() || static_cast<int>(v.size()) > max_dim) {
      invalid(path(k), "expected a square matrix of size 1.." + std::to_string(max_dim));
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < v.size(); ++r) {
      const std::string pr = path(k) + "/" + std::to_string(r);
      if (!v[r].is_array() || v[r].size() != v.size()) invalid(pr, "row length must equal the row count");
      std::vector<double> row;
      for (std::size_t c = 0; c < v.size(); ++c) {
        if (!v[r][c].is_number() || !std::isfinite(v[r][c].get<double>())) {
          invalid(pr + "/" + std::to_string(c), "expected a finite number");
        }
        row.push_back(v[r][c].get<double>());
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

 private:
  const json& j_;
  std::string ptr_;
  std::set<std::string> seen_;
};

FilterOptions parse_filters(const json& j, const std::string& ptr, FilterOptions def) {
  Obj o(j, ptr);
  FilterOptions f = def;
  f.smoothness = o.integer("smoothness", def.smoothness, 2, 64);
  f.outer_fraction = o.number("outer_fraction", def.outer_fraction, 0.0, 0.999, true);
  f.kappa = o.number("kappa", def.kappa, 1.0, 100.0, true);
  f.split = o.number("split", def.split, -4.0, 4.0);
  f.homogeneous = o.boolean("homogeneous", def.homogeneous);
  f.k_max = o.integer("k_max", def.k_max, 1, 30);
  o.finish();
  return f;
}

ojson filters_json(const FilterOptions& f) {
  ojson j;
  j["smoothness"] = f.smoothness;
  j["outer_fraction"] = f.outer_fraction;
  j["kappa"] = f.kappa;
  j["split"] = f.split;
  j["homogeneous"] = f.homogeneous;
  j["k_max"] = f.k_max;
  return j;
}

ojson matrix_json(const Matrix& a) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
    rows.push_back(row);
  }
  return rows;
}

FilterOptions default_second_bank() {
  FilterOptions f;
  f.kappa = 2.2;
  f.outer_fraction = 0.8;
  f.split = 0.4;
  return f;
}

}  // namespace

std::string hex_hash(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<std::string> dilation_presets() { return {"dyadic1d", "dyadic2d", "diag23", "quincunx"}; }

Matrix preset_matrix(const std::string& name) {
  if (name == "dyadic1d") return Matrix::Constant(1, 1, 2.0);
  Matrix a(2, 2);
  if (name == "dyadic2d") {
    a << 2, 0, 0, 2;
  } else if (name == "diag23") {
    a << 2, 0, 0, 3;
  } else if (name == "quincunx") {
    a << 1, -1, 1, 1;
  } else {
    fail(ErrorCode::ConfigInvalid, "/dilation/preset: unknown preset " + name);
  }
  return a;
}

double preset_box(const std::string& name) {
  if (name == "diag23") return 36.0;
  if (name == "dyadic1d") return 64.0;
  return 32.0;
}

ojson ExperimentConfig::canonical() const {
  ojson j;
  j["name"] = name;
  // A preset is a name for its matrix; both spellings hash alike.
  j["dilation"] = {{"matrix", matrix_json(dilation)}};
  j["grid"] = {{"n", n}, {"L", L}};
  j["filters"] = filters_json(filters);
  j["second_bank"] = filters_json(second_bank);
  ojson w;
  w["kind"] = weight.kind;
  w["m"] = weight.m;
  w["a"] = weight.a;
  if (!weight.matrix.empty()) w["matrix"] = weight.matrix;
  w["theta0"] = weight.theta0;
  if (!weight.gradient.empty()) w["gradient"] = weight.gradient;
  w["a1"] = weight.a1;
  w["a2"] = weight.a2;
  j["weight"] = w;
  ojson b = ojson::array();
  for (const auto& p : besov) {
    ojson e;
    e["alpha"] = p.alpha;
    e["p"] = p.p;
    if (std::isinf(p.q)) {
      e["q"] = "inf";
    } else {
      e["q"] = p.q;
    }
    b.push_back(e);
  }
  j["besov"] = b;
  ojson sc = ojson::object();
  if (k_min) sc["k_min"] = *k_min;
  if (k_max) sc["k_max"] = *k_max;
  j["scales"] = sc;
  j["tests"] = tests;
  j["seed"] = seed;
  j["eccentricity_samples"] = eccentricity_samples;
  j["calderon_samples"] = calderon_samples;
  j["molecules"] = {{"alpha", molecules.alpha}, {"p", molecules.p},         {"beta", molecules.beta},
                    {"M", molecules.M},         {"delta", molecules.delta}, {"scales", molecules.scales},
                    {"cubes_per_scale", molecules.cubes_per_scale}};
  ojson ad_j;
  ad_j["alpha"] = ad.alpha;
  ad_j["p"] = ad.p;
  ad_j["beta"] = ad.beta;
  ad_j["c"] = ad.c;
  ad_j["operator"] = ad.op;
  if (ad.k_min) ad_j["k_min"] = *ad.k_min;
  if (ad.k_max) ad_j["k_max"] = *ad.k_max;
  ad_j["probe_samples"] = ad.probe_samples;
  ad_j["max_cubes"] = ad.max_cubes;
  j["ad"] = ad_j;
  j["check_weight"] = {{"balls", check_weight.balls},
                       {"quadrature", check_weight.quadrature},
                       {"levels", check_weight.levels},
                       {"directions", check_weight.directions},
                       {"cubes", check_weight.cubes}};
  // The output directory does not change results and stays out of the hash.
  return j;
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string s = canonical().dump();
  return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  Obj root(j, "");
  cfg.name = root.string("name", cfg.name);
  if (root.has("$schema")) root.string("$schema", "");

  if (!root.has("dilation")) invalid("/dilation", "required");
  {
    Obj d(root.at("dilation"), "/dilation");
    const bool preset = d.has("preset");
    const bool matrix = d.has("matrix");
    if (preset == matrix) invalid("/dilation", "give exactly one of preset or matrix");
    if (preset) {
      cfg.dilation_preset = d.string("preset", "", dilation_presets());
      cfg.dilation = preset_matrix(cfg.dilation_preset);
    } else {
      const auto rows = d.square("matrix", 4);
      cfg.dilation.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows.size(); ++c)
          cfg.dilation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    d.finish();
  }
  const int d = cfg.dim();

  cfg.L = cfg.dilation_preset.empty() ? 32.0 : preset_box(cfg.dilation_preset);
  if (root.has("grid")) {
    Obj g(root.at("grid"), "/grid");
    if (g.has("d") && g.integer("d", d, 1, 4) != d) invalid("/grid/d", "does not match the dilation's dimension");
    cfg.n = g.integer("n", cfg.n, 8, d == 1 ? (1 << 16) : 1024);
    if (cfg.n % 2 != 0) invalid("/grid/n", "must be even");
    cfg.L = g.number("L", cfg.L, 0.0, 1e6, true);
    g.finish();
  }

  cfg.second_bank = default_second_bank();
  if (root.has("filters")) cfg.filters = parse_filters(root.at("filters"), "/filters", cfg.filters);
  if (root.has("second_bank")) cfg.second_bank = parse_filters(root.at("second_bank"), "/second_bank", cfg.second_bank);
  cfg.second_bank.homogeneous = cfg.filters.homogeneous;
  cfg.second_bank.k_max = cfg.filters.k_max;

  if (root.has("weight")) {
    Obj w(root.at("weight"), "/weight");
    auto& wc = cfg.weight;
    wc.kind = w.string("kind", wc.kind, {"identity", "constant", "scalar_power", "rotated_diag"});
    wc.m = w.integer("m", wc.m, 1, 3);
    wc.a = w.number("a", 0.0, -10.0, 10.0);
    if (w.has("matrix")) {
      wc.matrix = w.square("matrix", 3);
      if (static_cast<int>(wc.matrix.size()) != wc.m) invalid("/weight/matrix", "size must equal m");
    }
    wc.theta0 = w.number("theta0", 0.0, -100.0, 100.0);
    if (w.has("gradient")) {
      wc.gradient = w.numbers("gradient");
      if (static_cast<int>(wc.gradient.size()) != d) invalid("/weight/gradient", "length must equal the dimension");
    }
    wc.a1 = w.number("a1", 0.0, -10.0, 10.0);
    wc.a2 = w.number("a2", 0.0, -10.0, 10.0);
    if (wc.kind == "constant" && wc.matrix.empty()) invalid("/weight/matrix", "required for a constant weight");
    if (wc.kind == "rotated_diag") {
      if (wc.m != 2) invalid("/weight/m", "rotated_diag weights are 2 x 2");
      if (wc.gradient.empty()) wc.gradient.assign(static_cast<std::size_t>(d), 0.0);
    }
    w.finish();
  }

  if (root.has("besov")) {
    const json& b = root.at("besov");
    if (!b.is_array() || b.empty()) invalid("/besov", "expected a non-empty array");
    for (std::size_t i = 0; i < b.size(); ++i) {
      const std::string ptr = "/besov/" + std::to_string(i);
      Obj e(b[i], ptr);
      BesovParams p;
      p.alpha = e.number("alpha", 0.0, -20.0, 20.0);
      p.p = e.number("p", 2.0, 1.0, 1e3);
      if (e.has("q")) {
        const json& q = e.at("q");
        if (q.is_string() && q.get<std::string>() == "inf") {
          p.q = kInf;
        } else if (q.is_number() && q.get<double>() >= 1.0 && std::isfinite(q.get<double>())) {
          p.q = q.get<double>();
        } else {
          invalid(ptr + "/q", "expected a number >= 1 or \"inf\"");
        }
      }
      p.homogeneous = cfg.filters.homogeneous;
      e.finish();
      cfg.besov.push_back(p);
    }
  } else {
    cfg.besov.push_back(BesovParams{0.0, 2.0, 2.0, cfg.filters.homogeneous});
  }

  if (root.has("scales")) {
    Obj s(root.at("scales"), "/scales");
    cfg.k_min = s.opt_integer("k_min", -40, 40);
    cfg.k_max = s.opt_integer("k_max", -40, 40);
    if (cfg.k_min && cfg.k_max && *cfg.k_min > *cfg.k_max) invalid("/scales", "k_min exceeds k_max");
    s.finish();
  }
  cfg.tests = root.integer("tests", cfg.tests, 1, 100);
  if (root.has("seed")) {
    const json& s = root.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      invalid("/seed", "expected a non-negative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  cfg.output = root.string("output", cfg.output);
  cfg.eccentricity_samples = root.integer("eccentricity_samples", cfg.eccentricity_samples, 16, 1 << 20);
  cfg.calderon_samples = root.integer("calderon_samples", cfg.calderon_samples, 16, 1 << 20);

  if (root.has("molecules")) {
    Obj m(root.at("molecules"), "/molecules");
    auto& mc = cfg.molecules;
    mc.alpha = m.number("alpha", mc.alpha, -10.0, 10.0);
    mc.p = m.number("p", mc.p, 0.05, 1e3);
    mc.beta = m.number("beta", mc.beta, 0.0, 100.0);
    mc.M = m.number("M", mc.M, 0.0, 100.0, true);
    mc.delta = m.number("delta", mc.delta, 0.0, 1.0, true);
    mc.scales = m.integer("scales", mc.scales, 1, 8);
    mc.cubes_per_scale = m.integer("cubes_per_scale", mc.cubes_per_scale, 1, 400);
    m.finish();
  }
  if (root.has("ad")) {
    Obj a(root.at("ad"), "/ad");
    auto& ac = cfg.ad;
    ac.alpha = a.number("alpha", ac.alpha, -10.0, 10.0);
    ac.p = a.number("p", ac.p, 0.05, 1e3);
    ac.beta = a.number("beta", ac.beta, 0.0, 100.0);
    ac.c = a.number("c", ac.c, 0.0, 100.0, true);
    ac.op = a.string("operator", ac.op, {"identity", "zero", "band_multiplier"});
    ac.k_min = a.opt_integer("k_min", -40, 40);
    ac.k_max = a.opt_integer("k_max", -40, 40);
    if (ac.k_min && ac.k_max && *ac.k_min > *ac.k_max) invalid("/ad", "k_min exceeds k_max");
    ac.probe_samples = a.integer("probe_samples", ac.probe_samples, 1, 10000);
    ac.max_cubes = a.integer("max_cubes", ac.max_cubes, 1, 1 << 16);
    a.finish();
  }
  if (root.has("check_weight")) {
    Obj c(root.at("check_weight"), "/check_weight");
    auto& cw = cfg.check_weight;
    cw.balls = c.integer("balls", cw.balls, 1, 1000);
    cw.quadrature = c.integer("quadrature", cw.quadrature, 8, 1 << 20);
    cw.levels = c.integer("levels", cw.levels, 2, 8);
    cw.directions = c.integer("directions", cw.directions, 1, 1024);
    cw.cubes = c.integer("cubes", cw.cubes, 1, 1000);
    c.finish();
  }

  root.finish();

  // Cross-member consistency.
  if (cfg.weight.kind == "rotated_diag" && d != 2) invalid("/weight/kind", "rotated_diag needs d = 2");
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigInvalid, std::string("/: not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig preset_config(const std::string& name) {
  json j;
  j["name"] = name;
  j["dilation"] = {{"preset", name}};
  return parse_config(j);
}

MatrixWeightField make_weight(const WeightConfig& w, const BallFamily& bf) {
  if (w.kind == "identity") return MatrixWeightField::identity(w.m);
  if (w.kind == "scalar_power") return MatrixWeightField::scalar_power(bf, w.a, w.m);
  if (w.kind == "constant") {
    CMatrix c(w.m, w.m);
    for (int r = 0; r < w.m; ++r)
      for (int k = 0; k < w.m; ++k) c(r, k) = w.matrix[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
    try {
      return MatrixWeightField::constant(c);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigInvalid, std::string("/weight/matrix: ") + e.what());
    }
  }
  Vector g(static_cast<Eigen::Index>(w.gradient.size()));
  for (std::size_t i = 0; i < w.gradient.size(); ++i) g(static_cast<Eigen::Index>(i)) = w.gradient[i];
  return MatrixWeightField::rotated_diag(bf, w.theta0, g, w.a1, w.a2);
}

}  // namespace aniso::cli
