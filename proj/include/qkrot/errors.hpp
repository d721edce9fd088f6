#pragma once

#include <stdexcept>
#include <string>

namespace qkrot {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input or configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (e.g. J < 0).
class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Anything that fails while computing. The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Population reached the top of the truncated basis.
class LeakageError : public NumericalError {
 public:
  LeakageError(const std::string& what, int kick_index, double leaked)
      : NumericalError(what), kick_index_(kick_index), leaked_(leaked) {}
  int kick_index() const noexcept { return kick_index_; }
  double leaked_population() const noexcept { return leaked_; }

 private:
  int kick_index_;
  double leaked_;
};

// tan(phi) evaluated at (or within 1e-9 of) its pole.
class PoleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A randomized pulse-train generator could not satisfy its constraints.
class GenerationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace qkrot
