#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace linkinfer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad file syntax, out-of-range values, violated preconditions.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A token (or concept index) that is not part of the loaded vocabulary.
class OutOfVocabulary : public Error {
 public:
  explicit OutOfVocabulary(std::vector<std::string> tokens);
  explicit OutOfVocabulary(std::string token) : OutOfVocabulary(std::vector<std::string>{std::move(token)}) {}

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

/// The feasible set of an inference problem is empty.
class InfeasibleProblem : public Error {
 public:
  InfeasibleProblem(const std::string& what, double max_violation)
      : Error(what), max_violation_(max_violation) {}

  double max_violation() const noexcept { return max_violation_; }

 private:
  double max_violation_;
};

/// An iterative method hit its iteration cap. Carries the last residuals.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, int iterations, double primal_residual, double dual_residual)
      : Error(what),
        iterations_(iterations),
        primal_residual_(primal_residual),
        dual_residual_(dual_residual) {}

  int iterations() const noexcept { return iterations_; }
  double primal_residual() const noexcept { return primal_residual_; }
  double dual_residual() const noexcept { return dual_residual_; }

 private:
  int iterations_;
  double primal_residual_;
  double dual_residual_;
};

}  // namespace linkinfer
