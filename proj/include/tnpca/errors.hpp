#pragma once

#include <stdexcept>
#include <string>

namespace tnpca {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested rank is outside the admissible range for the input.
class RankError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input violates a documented precondition (bad parameter, too few rows, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file or on-disk payload.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A slice is not symmetric within the accepted tolerance.
class AsymmetryError : public std::invalid_argument {
 public:
  AsymmetryError(const std::string& what, long row, long col, long slice, double violation)
      : std::invalid_argument(what), row(row), col(col), slice(slice), violation(violation) {}

  long row;
  long col;
  long slice;
  double violation;
};

// The computation itself failed: singular systems, undefined directions, non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tnpca
