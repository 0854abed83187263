#pragma once

#include <stdexcept>
#include <string>

namespace adaptkf {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreement between operands. Message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Missing or mis-shaped parameter, invalid range, bad run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API contract violated (non-scalar loss, absent gradient, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Cholesky failed even after jitter escalation.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& msg, double smallest_pivot)
      : Error(msg), smallest_pivot_(smallest_pivot) {}
  double smallest_pivot() const { return smallest_pivot_; }

 private:
  double smallest_pivot_ = 0.0;
};

// Adapter asked for fewer support samples than one batch.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Operation not supported by this adapter (e.g. belief sampling on LSTM).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Training aborted on NaN/Inf loss. Carries a diagnostic record.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Config schema violation (unknown key, wrong type). Message carries the field path.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace adaptkf
