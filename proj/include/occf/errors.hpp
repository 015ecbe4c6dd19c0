#pragma once

#include <stdexcept>
#include <string>

namespace occf {

/// Shape or identity mismatch between objects (variable spaces, dimensions).
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller-supplied setting cannot produce a well-posed problem.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed text input, carrying the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Floating-point breakdown inside an iterative method.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solve result cannot be turned into a counterfactual (status, missing data).
class ExtractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Equality multipliers are absent, so no value function can be rebuilt.
class UnavailableDualError : public ExtractionError {
 public:
  using ExtractionError::ExtractionError;
};

}  // namespace occf
