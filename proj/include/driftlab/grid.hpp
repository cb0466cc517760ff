#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace driftlab {

using Point = std::array<double, 3>;
using Index3 = std::array<int, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

enum class DomainKind { Box, Ball };

/// Box (per-axis extents) or ball in dimension 1..3. Unused coordinates stay 0.
struct DomainShape {
  DomainKind kind = DomainKind::Box;
  int dim = 1;
  Point lower{};
  Point upper{};
  Point center{};
  double radius = 0.0;

  static DomainShape box(int dim, const Point& lower, const Point& upper);
  static DomainShape unit_box(int dim);
  static DomainShape ball(int dim, const Point& center, double radius);

  /// Throws ConfigError on a bad dimension or non-positive extents.
  void validate() const;

  Point bbox_lower() const;
  Point bbox_upper() const;

  /// Strict interior test.
  bool contains(const Point& x) const;

  /// Exact Euclidean distance to the boundary for interior points.
  double distance_to_boundary(const Point& x) const;

  /// Distance from x to the boundary walking along axis in direction side (+1/-1).
  double axis_gap(const Point& x, int axis, int side) const;
};

/// Uniform cell-centered grid over the bounding box of a shape. Cells whose
/// center lies strictly inside the domain are active and get a flat index.
class Grid {
 public:
  Grid(const DomainShape& shape, int cells_per_axis);

  const DomainShape& shape() const { return shape_; }
  int dim() const { return shape_.dim; }
  int cells_per_axis() const { return n_; }
  const Point& spacing() const { return spacing_; }
  double h() const;
  double cell_volume() const { return volume_; }

  std::size_t size() const { return active_to_lattice_.size(); }
  const Point& center(std::size_t i) const { return centers_[i]; }
  Index3 lattice(std::size_t i) const { return unflatten(active_to_lattice_[i]); }

  const Index3& dims() const { return dims_; }
  std::size_t lattice_size() const { return lattice_to_active_.size(); }
  std::size_t flatten(const Index3& ijk) const;
  Index3 unflatten(std::size_t lin) const;
  Point lattice_center(const Index3& ijk) const;

  /// Active index at a lattice position, or -1 when outside the box or inactive.
  long long active_index(const Index3& ijk) const;

  /// Face neighbor across (axis, side), or -1 for a boundary face.
  long long neighbor(std::size_t i, int axis, int side) const {
    return neighbors_[6 * i + slot(axis, side)];
  }

  /// Center-to-boundary distance across a boundary face (h/2 on box faces).
  double boundary_gap(std::size_t i, int axis, int side) const {
    return gaps_[6 * i + slot(axis, side)];
  }

  bool boundary_adjacent(std::size_t i) const;

  // Face lattices: for axis d there are n+1 faces along d and n along the others.
  Index3 face_dims(int axis) const;
  std::size_t face_count(int axis) const;
  std::size_t face_index(std::size_t cell, int axis, int side) const;
  std::size_t face_flatten(int axis, const Index3& fijk) const;
  Index3 face_unflatten(int axis, std::size_t lin) const;
  Point face_center(int axis, const Index3& fijk) const;
  Point face_center(std::size_t cell, int axis, int side) const;

  bool same_layout(const Grid& other) const;

 private:
  static int slot(int axis, int side) { return 2 * axis + (side > 0 ? 1 : 0); }

  DomainShape shape_;
  int n_;
  Point spacing_{};
  Point origin_{};
  Index3 dims_{1, 1, 1};
  double volume_ = 1.0;
  std::vector<long long> lattice_to_active_;
  std::vector<std::size_t> active_to_lattice_;
  std::vector<Point> centers_;
  std::vector<long long> neighbors_;
  std::vector<double> gaps_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Cell-centered grid; for a ball only centers strictly inside are active.
GridPtr build_grid(const DomainShape& shape, int cells_per_axis);

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridPtr grid, double fill = 0.0);
  ScalarField(GridPtr grid, std::vector<double> values);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& data() { return values_; }

  double min() const;
  double max() const;

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(GridPtr grid);
  VectorField(GridPtr grid, std::vector<Point> values);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  const Point& operator[](std::size_t i) const { return values_[i]; }
  Point& operator[](std::size_t i) { return values_[i]; }

  /// Pointwise Euclidean magnitude.
  ScalarField magnitude() const;

 private:
  GridPtr grid_;
  std::vector<Point> values_;
};

/// Symmetric N x N tensor per cell with a declared ellipticity constant.
class DiffusionTensorField {
 public:
  DiffusionTensorField() = default;
  /// Throws ConfigError unless every cell's smallest eigenvalue is >= alpha_ell > 0
  /// and every tensor is symmetric.
  DiffusionTensorField(GridPtr grid, std::vector<Mat3> values, double alpha_ell);

  static DiffusionTensorField identity(GridPtr grid);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  const Mat3& operator[](std::size_t i) const { return values_[i]; }
  double alpha_ell() const { return alpha_ell_; }
  bool is_diagonal() const { return diagonal_; }

  /// Smallest eigenvalue of the cell tensor restricted to the active dimension.
  double min_eigenvalue(std::size_t i) const;

 private:
  GridPtr grid_;
  std::vector<Mat3> values_;
  double alpha_ell_ = 1.0;
  bool diagonal_ = true;
};

/// Exact distance from each active cell center to the domain boundary.
ScalarField distance_to_boundary(const GridPtr& grid);

ScalarField sample(const GridPtr& grid, const std::function<double(const Point&)>& fn);

double norm(const Point& x, int dim);

/// Difference quotient of u across (axis, side) in the direction side*e_axis.
/// Boundary faces use the zero Dirichlet value at the boundary crossing.
double outward_difference(const ScalarField& u, std::size_t i, int axis, int side);

/// Second-order cell-center gradient on the (possibly uneven) three-point
/// stencil, with zero Dirichlet values at boundary crossings.
Point cell_gradient(const ScalarField& u, std::size_t i);

}  // namespace driftlab
