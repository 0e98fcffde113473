#include "csrvolsr/error.hpp"

namespace csrvolsr {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::NonFiniteData: return "NonFiniteData";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyB0List: return "EmptyB0List";
    case ErrorKind::AllZeroVolume: return "AllZeroVolume";
    case ErrorKind::SpacingMismatch: return "SpacingMismatch";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::VolumeTooSmall: return "VolumeTooSmall";
    case ErrorKind::NoForeground: return "NoForeground";
    case ErrorKind::ScaleOutOfRange: return "ScaleOutOfRange";
    case ErrorKind::InsufficientSubjects: return "InsufficientSubjects";
    case ErrorKind::CoordOutOfRange: return "CoordOutOfRange";
    case ErrorKind::ShapeTooSmall: return "ShapeTooSmall";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::EpochOutOfRange: return "EpochOutOfRange";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::CheckpointError: return "CheckpointError";
    case ErrorKind::InvalidScale: return "InvalidScale";
    case ErrorKind::CheckpointIncompatible: return "CheckpointIncompatible";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace csrvolsr
