#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "driftlab/grid.hpp"
#include "driftlab/operator.hpp"

namespace driftlab {

enum class SolveMethod { Auto, Direct, Bicgstab };

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 5000;
  /// Auto uses the direct path up to this many unknowns.
  std::size_t direct_threshold = 20000;
  SolveMethod method = SolveMethod::Auto;
};

struct SolveReport {
  ScalarField u;
  /// ||A u - f|| / ||f|| from a fresh product (0 when f = 0).
  double relative_residual = 0.0;
  int iterations = 0;
  std::string method;
  double wall_time = 0.0;
};

/// Throws SolverError (best iterate attached) on breakdown, on max_iter, or on a
/// singular factorization.
SolveReport solve(const SparseOperator& op, const ScalarField& rhs, const SolverOptions& opts = {});
SolveReport solve(const SparseOperator& op, const ScalarField& rhs, double tol, int max_iter);

double relative_residual(const SparseMatrix& A, std::span<const double> u, std::span<const double> f);

}  // namespace driftlab
