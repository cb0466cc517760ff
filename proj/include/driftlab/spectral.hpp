#pragma once

#include <memory>

#include "driftlab/estimates_report.hpp"
#include "driftlab/grid.hpp"

namespace driftlab {

/// Principal Dirichlet eigenpair of the discrete -Laplacian, scaled so the
/// largest face gradient of phi1 is exactly 1.
struct Eigenpair {
  double lambda1 = 0.0;
  ScalarField phi1;
  double max_gradient = 0.0;
  /// Smallest |grad phi1| over boundary faces (outermost layer).
  double min_boundary_gradient = 0.0;
  double rayleigh_residual = 0.0;
  int iterations = 0;
};

using EigenpairPtr = std::shared_ptr<const Eigenpair>;

/// Inverse power iteration with a reused sparse factorization. Stops when the
/// eigenvalue increment drops below tol; throws IterationError otherwise.
Eigenpair principal_eigenpair(const GridPtr& grid, double tol = 1e-10, int max_iter = 500);

/// Largest face gradient magnitude, one-sided at boundary faces.
double max_face_gradient(const ScalarField& u);

/// Bounds C_low = min phi1/delta and C_high = max phi1/delta; passes if
/// 0 < C_low <= C_high < inf.
EstimateReport comparison_bounds_check(const Eigenpair& pair, const GridPtr& grid);

}  // namespace driftlab
