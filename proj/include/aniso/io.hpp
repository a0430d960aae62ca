#pragma once

// On-disk forms: coefficient sets (binary "ANBC" and JSON), grid functions
// (binary "ANBG") and almost diagonal matrices (triplet CSV).
//
// Binary files are little-endian. Complex values are stored as two float32,
// so a round trip keeps about seven significant digits.

#include <iosfwd>
#include <optional>
#include <string>

#include "aniso/grid.hpp"
#include "aniso/operators.hpp"
#include "aniso/transform.hpp"

namespace aniso {

inline constexpr std::uint32_t kFormatVersion = 1;

void write_coefficients(std::ostream& os, const CoefficientSet& s);
CoefficientSet read_coefficients(std::istream& is);
void save_coefficients(const std::string& path, const CoefficientSet& s);
CoefficientSet load_coefficients(const std::string& path);

std::string coefficients_to_json(const CoefficientSet& s);
CoefficientSet coefficients_from_json(const std::string& text);

// The E_k tag is stored but not trusted on load: it is handed back through
// band_tag and callers re-establish it with with_bandlimit.
void write_grid_function(std::ostream& os, const GridFunction& f);
GridFunction read_grid_function(std::istream& is, std::optional<int>* band_tag = nullptr);
void save_grid_function(const std::string& path, const GridFunction& f);
GridFunction load_grid_function(const std::string& path, std::optional<int>* band_tag = nullptr);

// First line "# params: {...}" holds AdParams, the period, verified_c and any
// members of extra_json (an object); then the column header and one row per
// entry: kQ, jQ..., kP, jP..., re, im. Values are printed with 17 digits.
void write_ad_csv(std::ostream& os, const AdMatrix& a, const std::string& extra_json = "{}");
// Rows and columns are the cubes that occur in the entries, in sorted order.
AdMatrix read_ad_csv(std::istream& is);

}  // namespace aniso
