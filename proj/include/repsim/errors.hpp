#pragma once

#include <stdexcept>
#include <string>

namespace repsim {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value or argument violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. `kind()` tells which check failed.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, version_mismatch, bad_dtype, truncated, non_finite };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Views of a dataset disagree on row count or ids.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// The input makes a measure undefined (zero norm, zero variance, ...).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// The encoder produced an output that cannot be normalized.
class DegenerateOutput : public Error {
 public:
  using Error::Error;
};

/// CCA-family measures need more rows than columns.
class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration; a ValidationError so callers can treat both as usage errors.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace repsim
