#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace expsel {

enum class ErrorCode {
  // feature-store
  BadMagic,
  VersionUnsupported,
  InvalidHeader,
  TruncatedPayload,
  TrailingBytes,
  ManifestMismatch,
  ManifestInvalid,
  NonFiniteValue,
  ValueOutOfRange,
  EmptyExperience,
  // vdna / gaussian / baselines
  NeuronCountMismatch,
  EdgeMismatch,
  EmptySet,
  TooFewImages,
  DimMismatch,
  EigenFailure,
  TooManyCandidates,
  // localisation
  PoseVariantMismatch,
  MissingPose,
  // ranking
  TooFewExperiences,
  SetMismatch,
  EmptyInput,
  // map-store / cli
  IncompatibleFeatureSet,
  InvalidArgument,
  Io,
};

/// Coarse class of an error, used by the CLI to choose an exit code.
enum class ErrorClass { Validation, Numerical, Io };

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::InvalidHeader: return "InvalidHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::EmptyExperience: return "EmptyExperience";
    case ErrorCode::NeuronCountMismatch: return "NeuronCountMismatch";
    case ErrorCode::EdgeMismatch: return "EdgeMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::TooFewImages: return "TooFewImages";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::TooManyCandidates: return "TooManyCandidates";
    case ErrorCode::PoseVariantMismatch: return "PoseVariantMismatch";
    case ErrorCode::MissingPose: return "MissingPose";
    case ErrorCode::TooFewExperiences: return "TooFewExperiences";
    case ErrorCode::SetMismatch: return "SetMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IncompatibleFeatureSet: return "IncompatibleFeatureSet";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

constexpr ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::EigenFailure: return ErrorClass::Numerical;
    case ErrorCode::Io: return ErrorClass::Io;
    default: return ErrorClass::Validation;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return classify(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace expsel
