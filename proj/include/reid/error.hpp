#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reid {

enum class ErrorKind {
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  TrailingData,
  NonFiniteFeature,
  LabelLengthMismatch,
  InvalidLabel,
  HeaderMismatch,
  ParseError,
  IoError,
  ZeroNormRow,
  MaskLengthMismatch,
  UnknownGroupName,
  MissingGroupStats,
  GroupTooSmall,
  SingleCamera,
  DimOutOfRange,
  DuplicateDim,
  TooFewSamples,
  LengthMismatch,
  InvalidParams,
  MissingIdentityLabels,
  DimensionMismatch,
  EmptyGallery,
  GalleryTooSmall,
  UnknownCamera,
  InsufficientOverlap,
  TooFewLevels,
  TargetTooLarge,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::TrailingData: return "TrailingData";
    case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorKind::LabelLengthMismatch: return "LabelLengthMismatch";
    case ErrorKind::InvalidLabel: return "InvalidLabel";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ZeroNormRow: return "ZeroNormRow";
    case ErrorKind::MaskLengthMismatch: return "MaskLengthMismatch";
    case ErrorKind::UnknownGroupName: return "UnknownGroupName";
    case ErrorKind::MissingGroupStats: return "MissingGroupStats";
    case ErrorKind::GroupTooSmall: return "GroupTooSmall";
    case ErrorKind::SingleCamera: return "SingleCamera";
    case ErrorKind::DimOutOfRange: return "DimOutOfRange";
    case ErrorKind::DuplicateDim: return "DuplicateDim";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::MissingIdentityLabels: return "MissingIdentityLabels";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyGallery: return "EmptyGallery";
    case ErrorKind::GalleryTooSmall: return "GalleryTooSmall";
    case ErrorKind::UnknownCamera: return "UnknownCamera";
    case ErrorKind::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorKind::TooFewLevels: return "TooFewLevels";
    case ErrorKind::TargetTooLarge: return "TargetTooLarge";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is the stable,
/// machine-checkable part; `what()` reads "<Kind>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace reid
