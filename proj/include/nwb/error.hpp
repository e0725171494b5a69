#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nwb {

/// Base class for every error raised by the workbench.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside its declared domain. Carries the offending field names.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> fields)
      : Error(what), fields_(std::move(fields)) {}
  explicit ValidationError(const std::string& what) : Error(what) {}

  const std::vector<std::string>& fields() const noexcept { return fields_; }

 private:
  std::vector<std::string> fields_;
};

/// A sample without mass (CV undefined).
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

/// Singular systems, non-convergence, overflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incompatible persisted data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Model file holds a different regression family than requested.
class FamilyMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Illegal state transition or operation in the current state.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace nwb
