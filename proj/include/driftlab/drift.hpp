#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "driftlab/estimates_report.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/spectral.hpp"

namespace driftlab {

/// E = A x / |x|^2, div E = A (N-2) / |x|^2.
struct PointSingular {
  double A = 1.0;
};

/// E_l = -(phi1 + 1/l)^(-1-gamma) grad phi1. ell = +inf gives the unregularized field,
/// which is finite at cell centers but not on boundary faces.
struct BoundarySingular {
  double gamma = 1.0;
  double ell = std::numeric_limits<double>::infinity();
  EigenpairPtr eigenpair;
};

/// E = (c0 / N) x, div E = c0.
struct LinearCoercive {
  double c0 = 1.0;
};

/// Closed-form field; divergence is optional (discrete divergence otherwise).
struct CustomDrift {
  std::string name;
  std::function<Point(const Point&)> field;
  std::function<double(const Point&)> divergence;
};

struct DriftSpec {
  std::variant<PointSingular, BoundarySingular, LinearCoercive, CustomDrift> family;
  /// Apply rho_n * E after evaluation.
  std::optional<int> mollify_n;

  std::string family_name() const;
};

/// Evaluated drift: cell vectors, cell divergence, and face-normal components
/// on the face lattices (index with Grid::face_flatten). The assembler reads the
/// face values; cell values feed norms and diagnostics.
struct DriftFields {
  VectorField E;
  ScalarField divE;
  /// Minimum of divE over active cells (may be negative for unsigned drifts).
  double c0 = 0.0;
  bool analytic_divergence = false;
  std::array<std::vector<double>, 3> face_normal;
  std::string family;

  const Grid& grid() const { return E.grid(); }
  const GridPtr& grid_ptr() const { return E.grid_ptr(); }

  /// E . e_axis at the (axis, side) face of a cell.
  double face(std::size_t cell, int axis, int side) const {
    return face_normal[axis][grid().face_index(cell, axis, side)];
  }

  /// max_i |E(x_i)|.
  double sup_norm() const;
};

/// Zero field on a grid.
DriftFields zero_drift(const GridPtr& grid);

/// Evaluate at cell and face centers. Throws ConfigError for a PointSingular
/// cell center at the origin or a BoundarySingular eigenpair from another grid.
DriftFields evaluate_drift(const DriftSpec& spec, const GridPtr& grid);

/// Flux divergence sum_d (E_d(+face) - E_d(-face)) / h_d from face values.
ScalarField discrete_divergence(const DriftFields& fields);

/// Convolve with a tensor-product quartic bump of radius 1/n (field extended by
/// zero outside the domain). Throws ResolutionError if 1/n < 2h.
DriftFields mollify(const DriftFields& fields, int n);

/// Pointwise clamp to [-k, k].
ScalarField truncate_scalar(const ScalarField& field, double k);

/// Sample nonnegative bumps phi compactly supported inside the domain and
/// report max over trials of the discrete integral of E . grad phi. Passes when
/// that maximum is <= a quadrature tolerance.
EstimateReport check_divergence_sign_distributional(const DriftFields& fields, int trials,
                                                    std::uint64_t seed);

}  // namespace driftlab
