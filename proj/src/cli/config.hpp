#pragma once

// Experiment configuration: parsing, validation against the published schema
// (schema/experiment.schema.json) and the canonical hash stamped on artifacts.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aniso/dilation.hpp"
#include "aniso/filters.hpp"
#include "aniso/norms.hpp"
#include "aniso/weights.hpp"

namespace aniso::cli {

struct WeightConfig {
  std::string kind = "identity";
  int m = 1;
  double a = 0.0;  // scalar_power exponent
  std::vector<std::vector<double>> matrix;  // constant (real symmetric)
  double theta0 = 0.0;  // rotated_diag
  std::vector<double> gradient;
  double a1 = 0.0, a2 = 0.0;
};

struct MoleculeConfig {
  double alpha = 0.0, p = 2.0, beta = 0.0, M = 1.1, delta = 0.5;
  int scales = 3;
  // Cubes per scale, taken around the origin.
  int cubes_per_scale = 9;
};

struct AdConfig {
  double alpha = 0.0, p = 2.0, beta = 1.0, c = 0.5;
  // identity | zero | band_multiplier
  std::string op = "identity";
  std::optional<int> k_min, k_max;
  int probe_samples = 50;
  // Matrices are dense over the family; larger families are refused.
  int max_cubes = 4096;
};

struct WeightCheckConfig {
  int balls = 12;
  int quadrature = 256;
  int levels = 3;
  int directions = 16;
  int cubes = 8;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string dilation_preset;  // empty when given by matrix
  Matrix dilation;
  int n = 128;
  double L = 32.0;
  FilterOptions filters;
  FilterOptions second_bank;
  WeightConfig weight;
  std::vector<BesovParams> besov;
  std::optional<int> k_min, k_max;
  int tests = 3;
  std::uint64_t seed = 0;
  std::string output = "out";
  int eccentricity_samples = 4096;
  int calderon_samples = 1000;
  MoleculeConfig molecules;
  AdConfig ad;
  WeightCheckConfig check_weight;

  int dim() const { return static_cast<int>(dilation.rows()); }
  // Canonical JSON (every field, defaults filled in) and its FNV-1a hash.
  nlohmann::ordered_json canonical() const;
  std::uint64_t hash() const;
};

// Names accepted by "dilation": {"preset": ...}.
std::vector<std::string> dilation_presets();
Matrix preset_matrix(const std::string& name);
// Default box side for a preset, chosen so the preset's scale window fits
// a 128-point grid.
double preset_box(const std::string& name);

// Throws ConfigInvalid with the JSON pointer of the offending member.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// A complete config for a dilation preset with default settings.
ExperimentConfig preset_config(const std::string& name);

MatrixWeightField make_weight(const WeightConfig& w, const BallFamily& bf);

std::string hex_hash(std::uint64_t h);

}  // namespace aniso::cli
