#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace driftlab {

/// Invalid shapes, fields, or scenario descriptions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested resolution cannot represent the operation (kernel radius, dyadic bands).
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation needs a finite critical Sobolev exponent (N >= 3).
class UnsupportedDimension : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite coefficients met while building the discrete operator.
class AssemblyError : public std::runtime_error {
 public:
  AssemblyError(const std::string& what, long long cell)
      : std::runtime_error(what), cell_(cell) {}
  long long cell() const { return cell_; }

 private:
  long long cell_;
};

/// Fixed-point or eigen iteration did not converge.
class IterationError : public std::runtime_error {
 public:
  IterationError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// Linear solve failed. Carries the best iterate seen and its residual.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::vector<double> best_iterate,
              double best_residual)
      : std::runtime_error(what),
        best_iterate_(std::move(best_iterate)),
        best_residual_(best_residual) {}
  const std::vector<double>& best_iterate() const { return best_iterate_; }
  double best_residual() const { return best_residual_; }

 private:
  std::vector<double> best_iterate_;
  double best_residual_;
};

}  // namespace driftlab
