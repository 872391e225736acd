#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bmix {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Cholesky factorization of a matrix that must be SPD failed.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidData : public Error {
 public:
  using Error::Error;
};

class DegeneratePrior : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown inside a sampling step (e.g. all classification
// densities underflowing for one observation).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class EmptySelection : public Error {
 public:
  using Error::Error;
};

class IdentificationFailure : public Error {
 public:
  using Error::Error;
};

// Wraps any step error raised inside run_chain with the sweep index.
class SamplerFailure : public Error {
 public:
  SamplerFailure(long iteration, const std::string& what)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace bmix
