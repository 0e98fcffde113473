#pragma once

#include <stdexcept>
#include <string>

namespace csrvolsr {

enum class ErrorKind {
  MissingFile,
  MalformedHeader,
  NonFiniteData,
  ShapeMismatch,
  EmptyB0List,
  AllZeroVolume,
  SpacingMismatch,
  PreconditionViolated,
  VolumeTooSmall,
  NoForeground,
  ScaleOutOfRange,
  InsufficientSubjects,
  CoordOutOfRange,
  ShapeTooSmall,
  InvalidConfig,
  NonFiniteInput,
  EpochOutOfRange,
  NonFiniteLoss,
  CheckpointError,
  InvalidScale,
  CheckpointIncompatible,
  EmptySplit,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure surfaced by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace csrvolsr
