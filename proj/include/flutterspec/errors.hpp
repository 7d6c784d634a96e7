#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace flutterspec {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input outside the admissible domain of a parameterization.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Decomposition failure, singular system, step underflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iteration ran out of budget. Carries the best iterate seen as
/// (U, chi_R, chi_I) together with its residual.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::array<double, 3> best, double best_residual)
      : NumericalError(what), best_(best), best_residual_(best_residual) {}

  const std::array<double, 3>& best() const noexcept { return best_; }
  double best_residual() const noexcept { return best_residual_; }

 private:
  std::array<double, 3> best_;
  double best_residual_;
};

/// Continuation could not take even its first step.
class ContinuationError : public Error {
 public:
  using Error::Error;
};

}  // namespace flutterspec
