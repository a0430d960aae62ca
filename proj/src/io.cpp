#include "aniso/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "aniso/error.hpp"

namespace aniso {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<char, 4> kCoefMagic = {'A', 'N', 'B', 'C'};
constexpr std::array<char, 4> kGridMagic = {'A', 'N', 'B', 'G'};
constexpr int kMaxDim = 16;

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(b.data(), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  std::array<char, sizeof(T)> b;
  if (!is.read(b.data(), sizeof(T))) fail(ErrorCode::Io, "truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

void put_complex(std::ostream& os, cplx z) {
  put(os, static_cast<float>(z.real()));
  put(os, static_cast<float>(z.imag()));
}

cplx get_complex(std::istream& is) {
  const float re = get<float>(is);
  const float im = get<float>(is);
  return {re, im};
}

void expect_magic(std::istream& is, const std::array<char, 4>& magic) {
  std::array<char, 4> m{};
  if (!is.read(m.data(), 4) || m != magic) {
    fail(ErrorCode::Io, std::string("bad magic, expected ") + std::string(magic.begin(), magic.end()));
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kFormatVersion) fail(ErrorCode::Io, "unsupported format version " + std::to_string(version));
}

int checked_dim(std::int32_t d) {
  if (d < 1 || d > kMaxDim) fail(ErrorCode::Io, "implausible dimension " + std::to_string(d));
  return d;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + path);
  return is;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

void write_coefficients(std::ostream& os, const CoefficientSet& s) {
  const int d = s.dim;
  checked_dim(d);
  os.write(kCoefMagic.data(), 4);
  put<std::uint32_t>(os, kFormatVersion);
  put<std::int32_t>(os, d);
  put<std::int32_t>(os, s.vec_dim);
  put<std::uint64_t>(os, s.dilation_hash);
  put<std::int32_t>(os, s.k_min);
  put<std::int32_t>(os, s.k_max);
  put<std::uint8_t>(os, s.homogeneous ? 1 : 0);
  for (int a = 0; a < d; ++a) put<double>(os, s.region.lo.size() == d ? s.region.lo(a) : 0.0);
  for (int a = 0; a < d; ++a) put<double>(os, s.region.hi.size() == d ? s.region.hi(a) : 0.0);
  put<std::uint64_t>(os, s.entries.size());
  for (const auto& [q, v] : s.entries) {
    if (static_cast<int>(q.j.size()) != d || v.size() != s.vec_dim) {
      fail(ErrorCode::DimensionMismatch, "coefficient record does not match the set's dimensions");
    }
    put<std::int32_t>(os, q.k);
    for (int j : q.j) put<std::int32_t>(os, j);
    for (Eigen::Index c = 0; c < v.size(); ++c) put_complex(os, v(c));
  }
  if (!os) fail(ErrorCode::Io, "write failed");
}

CoefficientSet read_coefficients(std::istream& is) {
  expect_magic(is, kCoefMagic);
  CoefficientSet s;
  s.dim = checked_dim(get<std::int32_t>(is));
  s.vec_dim = get<std::int32_t>(is);
  if (s.vec_dim < 1 || s.vec_dim > 1024) fail(ErrorCode::Io, "implausible channel count");
  s.dilation_hash = get<std::uint64_t>(is);
  s.k_min = get<std::int32_t>(is);
  s.k_max = get<std::int32_t>(is);
  s.homogeneous = get<std::uint8_t>(is) != 0;
  s.region.lo.resize(s.dim);
  s.region.hi.resize(s.dim);
  for (int a = 0; a < s.dim; ++a) s.region.lo(a) = get<double>(is);
  for (int a = 0; a < s.dim; ++a) s.region.hi(a) = get<double>(is);
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t r = 0; r < count; ++r) {
    DilatedCube q;
    q.k = get<std::int32_t>(is);
    q.j.resize(static_cast<std::size_t>(s.dim));
    for (int& j : q.j) j = get<std::int32_t>(is);
    CVector v(s.vec_dim);
    for (int c = 0; c < s.vec_dim; ++c) v(c) = get_complex(is);
    s.entries.emplace(std::move(q), std::move(v));
  }
  return s;
}

void save_coefficients(const std::string& path, const CoefficientSet& s) {
  auto os = open_out(path);
  write_coefficients(os, s);
}

CoefficientSet load_coefficients(const std::string& path) {
  auto is = open_in(path);
  return read_coefficients(is);
}

std::string coefficients_to_json(const CoefficientSet& s) {
  json j;
  j["format"] = "ANBC";
  j["version"] = kFormatVersion;
  j["dim"] = s.dim;
  j["vec_dim"] = s.vec_dim;
  j["dilation_hash"] = hex64(s.dilation_hash);
  j["k_min"] = s.k_min;
  j["k_max"] = s.k_max;
  j["homogeneous"] = s.homogeneous;
  j["region"] = {{"lo", to_std(s.region.lo)}, {"hi", to_std(s.region.hi)}};
  json recs = json::array();
  for (const auto& [q, v] : s.entries) {
    json vals = json::array();
    for (Eigen::Index c = 0; c < v.size(); ++c) vals.push_back({v(c).real(), v(c).imag()});
    recs.push_back({{"k", q.k}, {"j", q.j}, {"values", vals}});
  }
  j["records"] = std::move(recs);
  return j.dump(1);
}

CoefficientSet coefficients_from_json(const std::string& text) {
  CoefficientSet s;
  try {
    const json j = json::parse(text);
    s.dim = checked_dim(j.at("dim").get<int>());
    s.vec_dim = j.at("vec_dim").get<int>();
    s.dilation_hash = std::stoull(j.at("dilation_hash").get<std::string>(), nullptr, 16);
    s.k_min = j.at("k_min").get<int>();
    s.k_max = j.at("k_max").get<int>();
    s.homogeneous = j.at("homogeneous").get<bool>();
    s.region.lo = from_std(j.at("region").at("lo").get<std::vector<double>>());
    s.region.hi = from_std(j.at("region").at("hi").get<std::vector<double>>());
    for (const auto& r : j.at("records")) {
      DilatedCube q{r.at("k").get<int>(), r.at("j").get<std::vector<int>>()};
      const auto& vals = r.at("values");
      if (static_cast<int>(q.j.size()) != s.dim || static_cast<int>(vals.size()) != s.vec_dim) {
        fail(ErrorCode::Io, "record dimensions disagree with the header");
      }
      CVector v(s.vec_dim);
      for (int c = 0; c < s.vec_dim; ++c) v(c) = cplx(vals[c].at(0).get<double>(), vals[c].at(1).get<double>());
      s.entries.emplace(std::move(q), std::move(v));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("coefficient JSON: ") + e.what());
  }
  return s;
}

void write_grid_function(std::ostream& os, const GridFunction& f) {
  const GridSpec& g = f.grid();
  const int d = checked_dim(g.dim());
  os.write(kGridMagic.data(), 4);
  put<std::uint32_t>(os, kFormatVersion);
  put<std::int32_t>(os, d);
  put<std::int32_t>(os, f.vec_dim());
  for (int a = 0; a < d; ++a) put<std::int32_t>(os, g.n[static_cast<std::size_t>(a)]);
  for (int a = 0; a < d; ++a) put<double>(os, g.L[static_cast<std::size_t>(a)]);
  put<std::uint8_t>(os, f.bandlimit() ? 1 : 0);
  put<std::int32_t>(os, f.bandlimit().value_or(0));
  for (int c = 0; c < f.vec_dim(); ++c) {
    for (const cplx& z : f.values(c)) put_complex(os, z);
  }
  if (!os) fail(ErrorCode::Io, "write failed");
}

GridFunction read_grid_function(std::istream& is, std::optional<int>* band_tag) {
  expect_magic(is, kGridMagic);
  const int d = checked_dim(get<std::int32_t>(is));
  const int m = get<std::int32_t>(is);
  if (m < 1 || m > 1024) fail(ErrorCode::Io, "implausible channel count");
  GridSpec g;
  g.n.resize(static_cast<std::size_t>(d));
  g.L.resize(static_cast<std::size_t>(d));
  for (int& n : g.n) {
    n = get<std::int32_t>(is);
    if (n < 1 || n > (1 << 20)) fail(ErrorCode::Io, "implausible sample count");
  }
  for (double& L : g.L) {
    L = get<double>(is);
    if (!(L > 0.0) || !std::isfinite(L)) fail(ErrorCode::Io, "implausible period");
  }
  const bool tagged = get<std::uint8_t>(is) != 0;
  const int band = get<std::int32_t>(is);
  Channels values(static_cast<std::size_t>(m), std::vector<cplx>(g.size()));
  for (auto& ch : values) {
    for (cplx& z : ch) z = get_complex(is);
  }
  if (band_tag != nullptr) *band_tag = tagged ? std::optional<int>(band) : std::nullopt;
  return GridFunction::from_values(g, std::move(values));
}

void save_grid_function(const std::string& path, const GridFunction& f) {
  auto os = open_out(path);
  write_grid_function(os, f);
}

GridFunction load_grid_function(const std::string& path, std::optional<int>* band_tag) {
  auto is = open_in(path);
  return read_grid_function(is, band_tag);
}

void write_ad_csv(std::ostream& os, const AdMatrix& a, const std::string& extra_json) {
  json header;
  header["alpha"] = a.params.alpha;
  header["p"] = a.params.p;
  header["beta"] = a.params.beta;
  header["c"] = a.params.c;
  header["period"] = a.period;
  if (a.verified_c) {
    header["verified_c"] = *a.verified_c;
    header["verified_constant"] = a.verified_constant;
  } else {
    header["verified_c"] = nullptr;
  }
  try {
    const json extra = json::parse(extra_json);
    if (!extra.is_object()) fail(ErrorCode::InvalidArgument, "extra header must be a JSON object");
    for (const auto& [k, v] : extra.items()) header[k] = v;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("extra header: ") + e.what());
  }
  const int d = a.rows.empty() ? (a.cols.empty() ? 0 : static_cast<int>(a.cols[0].j.size()))
                               : static_cast<int>(a.rows[0].j.size());
  os << "# params: " << header.dump() << '\n';
  os << "kQ";
  for (int i = 0; i < d; ++i) os << ",jQ" << i;
  os << ",kP";
  for (int i = 0; i < d; ++i) os << ",jP" << i;
  os << ",re,im\n";
  os << std::setprecision(17);
  for (const auto& e : a.entries) {
    const DilatedCube& q = a.rows[e.row];
    const DilatedCube& p = a.cols[e.col];
    os << q.k;
    for (int j : q.j) os << ',' << j;
    os << ',' << p.k;
    for (int j : p.j) os << ',' << j;
    os << ',' << e.value.real() << ',' << e.value.imag() << '\n';
  }
  if (!os) fail(ErrorCode::Io, "write failed");
}

AdMatrix read_ad_csv(std::istream& is) {
  AdMatrix a;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# params: ", 0) != 0) fail(ErrorCode::Io, "missing params header");
  try {
    const json h = json::parse(line.substr(10));
    a.params.alpha = h.at("alpha").get<double>();
    a.params.p = h.at("p").get<double>();
    a.params.beta = h.at("beta").get<double>();
    a.params.c = h.at("c").get<double>();
    a.period = h.at("period").get<std::vector<double>>();
    if (h.contains("verified_c") && !h.at("verified_c").is_null()) {
      a.verified_c = h.at("verified_c").get<double>();
      a.verified_constant = h.value("verified_constant", 0.0);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("params header: ") + e.what());
  }
  if (!std::getline(is, line)) fail(ErrorCode::Io, "missing column header");
  const auto columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 6 || columns % 2 != 0) fail(ErrorCode::Io, "unexpected column count");
  const int d = (columns - 4) / 2;

  struct Raw {
    DilatedCube q, p;
    cplx v;
  };
  std::vector<Raw> raw;
  std::map<DilatedCube, std::size_t> rows, cols;
  std::size_t line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (static_cast<int>(fields.size()) != columns) fail(ErrorCode::Io, "line " + std::to_string(line_no) + ": field count");
    try {
      Raw r;
      std::size_t i = 0;
      r.q.k = std::stoi(fields[i++]);
      for (int c = 0; c < d; ++c) r.q.j.push_back(std::stoi(fields[i++]));
      r.p.k = std::stoi(fields[i++]);
      for (int c = 0; c < d; ++c) r.p.j.push_back(std::stoi(fields[i++]));
      const double re = std::stod(fields[i++]);
      const double im = std::stod(fields[i++]);
      r.v = cplx(re, im);
      rows.emplace(r.q, 0);
      cols.emplace(r.p, 0);
      raw.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(ErrorCode::Io, "line " + std::to_string(line_no) + ": not a number");
    }
  }
  for (auto& [q, idx] : rows) {
    idx = a.rows.size();
    a.rows.push_back(q);
  }
  for (auto& [p, idx] : cols) {
    idx = a.cols.size();
    a.cols.push_back(p);
  }
  a.entries.reserve(raw.size());
  for (const auto& r : raw) a.entries.push_back({rows.at(r.q), cols.at(r.p), r.v});
  a.sort_entries();
  return a;
}

}  // namespace aniso
