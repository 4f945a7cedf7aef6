#pragma once

#include <stdexcept>
#include <string>

namespace pidb {

/// Base class for every error raised by the library. `exit_code()` is the
/// process status the CLI reports for the error's category.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return 4; }
};

// Input / validation failures (exit 2).
class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class InvalidDimension : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class UnknownArm : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class InvalidAssumption : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class RouteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// The data (or data plus assumptions) admit no solution (exit 3).
class InfeasibleInput : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};
class InfeasibleSystem : public InfeasibleInput {
 public:
  InfeasibleSystem(const std::string& what, std::string family)
      : InfeasibleInput(what), family_(std::move(family)) {}
  /// Row family carrying the largest violation at the phase-1 optimum.
  const std::string& family() const { return family_; }

 private:
  std::string family_;
};

// Solver breakdowns (exit 4).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};
class SolverFailure : public Error {
 public:
  using Error::Error;
};
class StudyFailure : public Error {
 public:
  using Error::Error;
};

// Non-fatal conditions that callers are expected to catch.
class EmptyOracle : public Error {
 public:
  using Error::Error;
};
class DegenerateSample : public Error {
 public:
  using Error::Error;
};

}  // namespace pidb
