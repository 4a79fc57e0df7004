#pragma once

#include <stdexcept>
#include <string>

namespace dcvdn {

enum class ErrorKind {
  InvalidInput,
  ParseError,
  EmptyInput,
  SingularCovariance,
  BatchTooSmall,
  SchemaError,
  AlignmentError,
  OovError,
  FormatError,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::OovError: return "OovError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` distinguishes failure classes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

  /// Validation failures map to CLI exit code 2, everything else to 1.
  bool is_validation() const noexcept {
    switch (kind_) {
      case ErrorKind::InvalidInput:
      case ErrorKind::ParseError:
      case ErrorKind::EmptyInput:
      case ErrorKind::SchemaError:
      case ErrorKind::AlignmentError:
      case ErrorKind::FormatError:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace dcvdn
