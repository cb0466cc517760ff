#include "driftlab/grid.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

// Ball cut cells can have a boundary crossing arbitrarily close to the center.
constexpr double kMinGapFraction = 1e-2;

}  // namespace

double norm(const Point& x, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) s += x[d] * x[d];
  return std::sqrt(s);
}

DomainShape DomainShape::box(int dim, const Point& lower, const Point& upper) {
  DomainShape s;
  s.kind = DomainKind::Box;
  s.dim = dim;
  s.lower = lower;
  s.upper = upper;
  for (int d = dim; d < 3; ++d) {
    s.lower[d] = 0.0;
    s.upper[d] = 0.0;
  }
  s.validate();
  return s;
}

DomainShape DomainShape::unit_box(int dim) {
  return box(dim, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
}

DomainShape DomainShape::ball(int dim, const Point& center, double radius) {
  DomainShape s;
  s.kind = DomainKind::Ball;
  s.dim = dim;
  s.center = center;
  for (int d = dim; d < 3; ++d) s.center[d] = 0.0;
  s.radius = radius;
  s.validate();
  return s;
}

void DomainShape::validate() const {
  if (dim < 1 || dim > 3)
    throw ConfigError("domain dimension must be 1, 2 or 3, got " + std::to_string(dim));
  if (kind == DomainKind::Box) {
    for (int d = 0; d < dim; ++d) {
      if (!(upper[d] > lower[d]) || !std::isfinite(upper[d] - lower[d]))
        throw ConfigError("box extent along axis " + std::to_string(d) +
                          " must be strictly positive");
    }
  } else {
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw ConfigError("ball radius must be strictly positive");
  }
}

Point DomainShape::bbox_lower() const {
  if (kind == DomainKind::Box) return lower;
  Point p{};
  for (int d = 0; d < dim; ++d) p[d] = center[d] - radius;
  return p;
}

Point DomainShape::bbox_upper() const {
  if (kind == DomainKind::Box) return upper;
  Point p{};
  for (int d = 0; d < dim; ++d) p[d] = center[d] + radius;
  return p;
}

bool DomainShape::contains(const Point& x) const {
  if (kind == DomainKind::Box) {
    for (int d = 0; d < dim; ++d)
      if (!(x[d] > lower[d] && x[d] < upper[d])) return false;
    return true;
  }
  double r2 = 0.0;
  for (int d = 0; d < dim; ++d) r2 += (x[d] - center[d]) * (x[d] - center[d]);
  return r2 < radius * radius;
}

double DomainShape::distance_to_boundary(const Point& x) const {
  if (kind == DomainKind::Box) {
    double best = std::numeric_limits<double>::infinity();
    for (int d = 0; d < dim; ++d)
      best = std::min({best, x[d] - lower[d], upper[d] - x[d]});
    return best;
  }
  Point y{};
  for (int d = 0; d < dim; ++d) y[d] = x[d] - center[d];
  return radius - norm(y, dim);
}

double DomainShape::axis_gap(const Point& x, int axis, int side) const {
  if (kind == DomainKind::Box) return side > 0 ? upper[axis] - x[axis] : x[axis] - lower[axis];
  // |y + t*side*e_axis| = R for t > 0
  double r2 = 0.0;
  for (int d = 0; d < dim; ++d) r2 += (x[d] - center[d]) * (x[d] - center[d]);
  const double ya = (x[axis] - center[axis]) * side;
  const double disc = ya * ya - (r2 - radius * radius);
  return -ya + std::sqrt(std::max(disc, 0.0));
}

Grid::Grid(const DomainShape& shape, int cells_per_axis) : shape_(shape), n_(cells_per_axis) {
  shape_.validate();
  if (cells_per_axis < 2)
    throw ConfigError("cells_per_axis must be >= 2, got " + std::to_string(cells_per_axis));
  const Point lo = shape_.bbox_lower();
  const Point hi = shape_.bbox_upper();
  origin_ = lo;
  for (int d = 0; d < dim(); ++d) {
    dims_[d] = n_;
    spacing_[d] = (hi[d] - lo[d]) / n_;
    volume_ *= spacing_[d];
  }

  const std::size_t total = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  lattice_to_active_.assign(total, -1);
  for (std::size_t lin = 0; lin < total; ++lin) {
    const Point c = lattice_center(unflatten(lin));
    if (shape_.contains(c)) {
      lattice_to_active_[lin] = static_cast<long long>(active_to_lattice_.size());
      active_to_lattice_.push_back(lin);
      centers_.push_back(c);
    }
  }
  if (active_to_lattice_.empty()) throw ConfigError("grid has no active cells");

  neighbors_.assign(6 * size(), -1);
  gaps_.assign(6 * size(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const Index3 ijk = lattice(i);
    for (int d = 0; d < dim(); ++d) {
      for (int side : {-1, 1}) {
        Index3 nb = ijk;
        nb[d] += side;
        const long long j = active_index(nb);
        neighbors_[6 * i + slot(d, side)] = j;
        if (j < 0) {
          double gap = shape_.axis_gap(centers_[i], d, side);
          gap = std::clamp(gap, kMinGapFraction * spacing_[d], spacing_[d]);
          gaps_[6 * i + slot(d, side)] = gap;
        } else {
          gaps_[6 * i + slot(d, side)] = spacing_[d];
        }
      }
    }
  }
}

double Grid::h() const {
  double h = 0.0;
  for (int d = 0; d < dim(); ++d) h = std::max(h, spacing_[d]);
  return h;
}

std::size_t Grid::flatten(const Index3& ijk) const {
  return static_cast<std::size_t>(ijk[0]) +
         static_cast<std::size_t>(dims_[0]) *
             (static_cast<std::size_t>(ijk[1]) + static_cast<std::size_t>(dims_[1]) * ijk[2]);
}

Index3 Grid::unflatten(std::size_t lin) const {
  Index3 ijk{};
  ijk[0] = static_cast<int>(lin % dims_[0]);
  lin /= dims_[0];
  ijk[1] = static_cast<int>(lin % dims_[1]);
  ijk[2] = static_cast<int>(lin / dims_[1]);
  return ijk;
}

Point Grid::lattice_center(const Index3& ijk) const {
  Point c{};
  for (int d = 0; d < dim(); ++d) c[d] = origin_[d] + (ijk[d] + 0.5) * spacing_[d];
  return c;
}

long long Grid::active_index(const Index3& ijk) const {
  for (int d = 0; d < 3; ++d)
    if (ijk[d] < 0 || ijk[d] >= dims_[d]) return -1;
  return lattice_to_active_[flatten(ijk)];
}

bool Grid::boundary_adjacent(std::size_t i) const {
  for (int d = 0; d < dim(); ++d)
    if (neighbor(i, d, -1) < 0 || neighbor(i, d, 1) < 0) return true;
  return false;
}

Index3 Grid::face_dims(int axis) const {
  Index3 fd = dims_;
  fd[axis] += 1;
  return fd;
}

std::size_t Grid::face_count(int axis) const {
  const Index3 fd = face_dims(axis);
  return static_cast<std::size_t>(fd[0]) * fd[1] * fd[2];
}

std::size_t Grid::face_flatten(int axis, const Index3& f) const {
  const Index3 fd = face_dims(axis);
  return static_cast<std::size_t>(f[0]) +
         static_cast<std::size_t>(fd[0]) *
             (static_cast<std::size_t>(f[1]) + static_cast<std::size_t>(fd[1]) * f[2]);
}

Index3 Grid::face_unflatten(int axis, std::size_t lin) const {
  const Index3 fd = face_dims(axis);
  Index3 f{};
  f[0] = static_cast<int>(lin % fd[0]);
  lin /= fd[0];
  f[1] = static_cast<int>(lin % fd[1]);
  f[2] = static_cast<int>(lin / fd[1]);
  return f;
}

std::size_t Grid::face_index(std::size_t cell, int axis, int side) const {
  Index3 f = lattice(cell);
  if (side > 0) f[axis] += 1;
  return face_flatten(axis, f);
}

Point Grid::face_center(int axis, const Index3& f) const {
  Point c{};
  for (int d = 0; d < dim(); ++d) {
    const double off = d == axis ? 0.0 : 0.5;
    c[d] = origin_[d] + (f[d] + off) * spacing_[d];
  }
  return c;
}

Point Grid::face_center(std::size_t cell, int axis, int side) const {
  Point c = centers_[cell];
  c[axis] += 0.5 * side * spacing_[axis];
  return c;
}

bool Grid::same_layout(const Grid& o) const {
  if (this == &o) return true;
  if (dim() != o.dim() || n_ != o.n_ || shape_.kind != o.shape_.kind) return false;
  if (size() != o.size()) return false;
  for (int d = 0; d < dim(); ++d)
    if (spacing_[d] != o.spacing_[d] || origin_[d] != o.origin_[d]) return false;
  return active_to_lattice_ == o.active_to_lattice_;
}

GridPtr build_grid(const DomainShape& shape, int cells_per_axis) {
  return std::make_shared<const Grid>(shape, cells_per_axis);
}

ScalarField::ScalarField(GridPtr grid, double fill)
    : grid_(std::move(grid)), values_(grid_->size(), fill) {}

ScalarField::ScalarField(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_->size())
    throw ConfigError("scalar field size does not match grid");
}

double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

VectorField::VectorField(GridPtr grid) : grid_(std::move(grid)), values_(grid_->size(), Point{}) {}

VectorField::VectorField(GridPtr grid, std::vector<Point> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_->size())
    throw ConfigError("vector field size does not match grid");
}

ScalarField VectorField::magnitude() const {
  ScalarField m(grid_);
  for (std::size_t i = 0; i < size(); ++i) m[i] = norm(values_[i], grid_->dim());
  return m;
}

DiffusionTensorField::DiffusionTensorField(GridPtr grid, std::vector<Mat3> values,
                                           double alpha_ell)
    : grid_(std::move(grid)), values_(std::move(values)), alpha_ell_(alpha_ell) {
  if (values_.size() != grid_->size())
    throw ConfigError("diffusion tensor field size does not match grid");
  if (!(alpha_ell_ > 0.0)) throw ConfigError("ellipticity constant must be positive");
  const int n = grid_->dim();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (values_[i][a][b] != values_[i][b][a])
          throw ConfigError("diffusion tensor is not symmetric at cell " + std::to_string(i));
        if (a != b && values_[i][a][b] != 0.0) diagonal_ = false;
      }
    const double lmin = min_eigenvalue(i);
    if (lmin < alpha_ell_ * (1.0 - 1e-12))
      throw ConfigError("diffusion tensor at cell " + std::to_string(i) +
                        " has eigenvalue " + std::to_string(lmin) +
                        " below the declared ellipticity constant");
  }
}

DiffusionTensorField DiffusionTensorField::identity(GridPtr grid) {
  Mat3 eye{};
  for (int d = 0; d < 3; ++d) eye[d][d] = 1.0;
  const std::size_t n = grid->size();
  return DiffusionTensorField(std::move(grid), std::vector<Mat3>(n, eye), 1.0);
}

double DiffusionTensorField::min_eigenvalue(std::size_t i) const {
  const int n = grid_->dim();
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) m(a, b) = values_[i][a][b];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.topLeftCorner(n, n));
  return es.eigenvalues().minCoeff();
}

ScalarField distance_to_boundary(const GridPtr& grid) {
  ScalarField d(grid);
  for (std::size_t i = 0; i < grid->size(); ++i)
    d[i] = grid->shape().distance_to_boundary(grid->center(i));
  return d;
}

ScalarField sample(const GridPtr& grid, const std::function<double(const Point&)>& fn) {
  ScalarField s(grid);
  for (std::size_t i = 0; i < grid->size(); ++i) s[i] = fn(grid->center(i));
  return s;
}

double outward_difference(const ScalarField& u, std::size_t i, int axis, int side) {
  const Grid& g = u.grid();
  const long long j = g.neighbor(i, axis, side);
  if (j >= 0) return (u[static_cast<std::size_t>(j)] - u[i]) / g.spacing()[axis];
  return -u[i] / g.boundary_gap(i, axis, side);
}

Point cell_gradient(const ScalarField& u, std::size_t i) {
  const Grid& g = u.grid();
  Point grad{};
  for (int d = 0; d < g.dim(); ++d) {
    const long long jp = g.neighbor(i, d, 1);
    const long long jm = g.neighbor(i, d, -1);
    const double hp = jp >= 0 ? g.spacing()[d] : g.boundary_gap(i, d, 1);
    const double hm = jm >= 0 ? g.spacing()[d] : g.boundary_gap(i, d, -1);
    const double up = jp >= 0 ? u[static_cast<std::size_t>(jp)] : 0.0;
    const double um = jm >= 0 ? u[static_cast<std::size_t>(jm)] : 0.0;
    grad[d] = (hm * hm * (up - u[i]) + hp * hp * (u[i] - um)) / (hp * hm * (hp + hm));
  }
  return grad;
}

}  // namespace driftlab
