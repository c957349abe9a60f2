#pragma once

#include <stdexcept>
#include <string>

namespace chainimp {

/// Malformed input text (CSV cells, config JSON). Messages carry 1-based
/// row/column coordinates where the format defines them.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric-domain failure: non-PSD matrix, zero denominator, degenerate
/// scatter, and similar conditions that make a computation undefined.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Design matrix has linearly dependent columns.
class SingularDesignError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Logistic likelihood diverged: complete or quasi-complete separation.
class SeparationError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Observed-data estimation cannot proceed (e.g. non-identifiable
/// missingness pattern).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem-level failure; message names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chainimp
