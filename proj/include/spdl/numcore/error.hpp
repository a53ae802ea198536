#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdl {

// Argument shapes or dimensions do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition on a scalar argument was violated.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Factorization hit a zero (or numerically zero) pivot.
class SingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A user-supplied function produced a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that must come from the same source do not (trace vs network).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative method ran out of iterations. Carries the last residual.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Non-finite objective during training or evaluation; index locates the
// offending layer (or step), npos when unknown.
class DiagnosticsError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  DiagnosticsError(const std::string& what, std::size_t index = npos)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace spdl
