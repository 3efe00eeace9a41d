#pragma once

#include <stdexcept>
#include <string>

namespace lre {

// Base of every error raised by the library. The CLI maps the concrete
// types onto exit codes (input -> 2, numerical/identification -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data / configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

// Matrix failed the positive-definiteness check. Carries the estimated
// smallest eigenvalue so callers can report it.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, double min_eig)
      : Error(what), min_eigenvalue_(min_eig) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

// A first-stage fit that cannot be computed from the data it was given
// (single-class labels, zero-variance residuals, ...).
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

}  // namespace lre
