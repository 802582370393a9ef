#pragma once

#include <stdexcept>
#include <string>

namespace trident {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a value invariant (non-finite entries, bad labels).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operand dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown name.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File-system or stream failure, including malformed tensor files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The promptable decoder backend failed or is unavailable.
class DecoderError : public Error {
 public:
  using Error::Error;
};

}  // namespace trident
