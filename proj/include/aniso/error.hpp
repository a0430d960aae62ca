#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aniso {

enum class ErrorCode {
  // dilation
  NotExpansive,
  Singular,
  ConstructionFailed,
  RegionTooLarge,
  // weights
  NotPositiveDefinite,
  DimensionMismatch,
  QuadratureUnderflow,
  FitDegenerate,
  // filters
  AnnulusEmpty,
  NormalizationSingular,
  NegativeMass,
  // transform
  AliasRisk,
  HypothesisViolated,
  // norms / operators
  MissingCube,
  GridTooCoarse,
  IndexMismatch,
  // artifacts
  ConfigInvalid,
  Io,
  InvalidArgument,
};

// Coarse grouping used by the CLI to pick an exit status.
enum class ErrorClass { Config, Numeric, Io };

std::string_view to_string(ErrorCode code);
ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace aniso
