#pragma once

#include <stdexcept>
#include <string>

namespace snapspec {

// Incompatible tensor or cube shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad magic, truncated payload or inconsistent header in one of the binary formats.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A spectrum with zero variance reached the Pearson statistics.
class DegenerateSpectrumError : public std::runtime_error {
 public:
  DegenerateSpectrumError(std::size_t row, const std::string& what)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// The synthetic generator could not produce a valid spectrum within its attempt cap.
class RejectionBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf detected in a computation that must stay finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace snapspec
