#pragma once

#include <stdexcept>
#include <string>

namespace grea {

/// Tensor shapes that do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range segment, node or row index.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// API misuse, e.g. backward on a non-scalar or un-zeroed gradients.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data. Carries the 1-based line number when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, long line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// Non-finite values where finite ones are required (loss, probe point).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Metric undefined for the given inputs (constant targets, single class).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace grea
