#include "aniso/error.hpp"

namespace aniso {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotExpansive: return "NotExpansive";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::ConstructionFailed: return "ConstructionFailed";
    case ErrorCode::RegionTooLarge: return "RegionTooLarge";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::QuadratureUnderflow: return "QuadratureUnderflow";
    case ErrorCode::FitDegenerate: return "FitDegenerate";
    case ErrorCode::AnnulusEmpty: return "AnnulusEmpty";
    case ErrorCode::NormalizationSingular: return "NormalizationSingular";
    case ErrorCode::NegativeMass: return "NegativeMass";
    case ErrorCode::AliasRisk: return "AliasRisk";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::MissingCube: return "MissingCube";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::IndexMismatch: return "IndexMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidArgument:
      return ErrorClass::Config;
    case ErrorCode::Io:
      return ErrorClass::Io;
    default:
      return ErrorClass::Numeric;
  }
}

}  // namespace aniso
