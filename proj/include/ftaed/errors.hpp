#pragma once

#include <stdexcept>
#include <string>

namespace ftaed {

// Every failure mode the library reports deliberately. Kinds are stable so
// callers (and tests) can dispatch on them instead of parsing messages.
enum class ErrorKind {
  MissingHeader,
  MalformedRow,
  OutOfRangeValue,
  UnknownKind,
  EmptyInput,
  InconsistentCadence,
  DegenerateFeature,
  SplitOverflow,
  ShapeMismatch,
  InvalidSegment,
  NonScalarLoss,
  NonFiniteProbe,
  MissingRelationWeight,
  ConfigMismatch,
  EmptyTrainingSet,
  DivergedLoss,
  MissingThreshold,
  DegenerateLabels,
  UnattainableTarget,
  OutOfBounds,
  IsolatedCell,
  UnknownCommand,
  ConfigError,
  IoError,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingHeader: return "MissingHeader";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::OutOfRangeValue: return "OutOfRangeValue";
    case ErrorKind::UnknownKind: return "UnknownKind";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InconsistentCadence: return "InconsistentCadence";
    case ErrorKind::DegenerateFeature: return "DegenerateFeature";
    case ErrorKind::SplitOverflow: return "SplitOverflow";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidSegment: return "InvalidSegment";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::NonFiniteProbe: return "NonFiniteProbe";
    case ErrorKind::MissingRelationWeight: return "MissingRelationWeight";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::MissingThreshold: return "MissingThreshold";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::UnattainableTarget: return "UnattainableTarget";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::IsolatedCell: return "IsolatedCell";
    case ErrorKind::UnknownCommand: return "UnknownCommand";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ftaed
