#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsplice {

enum class ErrorKind {
  MissingFile,
  DimensionMismatch,
  ValueOutOfRange,
  ParseError,
  MissingField,
  IoError,
  InvalidDepth,
  Degenerate,
  DegenerateDepth,
  EmptyMask,
  ImageTooSmall,
  EnhancerFailure,
  InterpolatorFailure,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the engine. `subject` names the offending path,
/// index or parameter when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string subject, const std::string& detail = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorKind kind_;
  std::string subject_;
};

}  // namespace gsplice
