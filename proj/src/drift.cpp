#include "driftlab/drift.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::array<std::vector<double>, 3> empty_faces(const Grid& g) {
  std::array<std::vector<double>, 3> faces;
  for (int d = 0; d < g.dim(); ++d) faces[d].assign(g.face_count(d), 0.0);
  return faces;
}

// Fills every face touching an active cell with value(cell, axis, side).
template <class Fn>
void fill_faces(const Grid& g, std::array<std::vector<double>, 3>& faces, Fn&& value) {
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int d = 0; d < g.dim(); ++d)
      for (int side : {-1, 1}) {
        if (side < 0 && g.neighbor(i, d, -1) >= 0) continue;  // owned by the neighbor's + face
        faces[d][g.face_index(i, d, side)] = value(i, d, side);
      }
}

double min_value(const ScalarField& s) { return s.size() ? s.min() : 0.0; }

DriftFields closed_form(const GridPtr& grid, const std::string& family,
                        const std::function<Point(const Point&)>& field,
                        const std::function<double(const Point&)>& divergence) {
  const Grid& g = *grid;
  DriftFields out;
  out.family = family;
  out.E = VectorField(grid);
  for (std::size_t i = 0; i < g.size(); ++i) out.E[i] = field(g.center(i));
  out.face_normal = empty_faces(g);
  fill_faces(g, out.face_normal, [&](std::size_t i, int d, int side) {
    return field(g.face_center(i, d, side))[d];
  });
  if (divergence) {
    out.divE = sample(grid, divergence);
    out.analytic_divergence = true;
  } else {
    out.divE = discrete_divergence(out);
  }
  out.c0 = min_value(out.divE);
  return out;
}

DriftFields point_singular(const PointSingular& p, const GridPtr& grid) {
  const int n = grid->dim();
  for (std::size_t i = 0; i < grid->size(); ++i)
    if (norm(grid->center(i), n) == 0.0)
      throw ConfigError("point-singular drift: cell " + std::to_string(i) +
                        " is centered at the origin");
  const double A = p.A;
  auto field = [A, n](const Point& x) {
    const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    Point e{};
    for (int d = 0; d < n; ++d) e[d] = A * x[d] / r2;  // non-finite at the origin
    return e;
  };
  auto div = [A, n](const Point& x) {
    const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    return A * (n - 2) / r2;
  };
  return closed_form(grid, "point_singular", field, div);
}

DriftFields linear_coercive(const LinearCoercive& p, const GridPtr& grid) {
  const int n = grid->dim();
  const double c0 = p.c0;
  auto field = [c0, n](const Point& x) {
    Point e{};
    for (int d = 0; d < n; ++d) e[d] = c0 * x[d] / n;
    return e;
  };
  auto div = [c0](const Point&) { return c0; };
  return closed_form(grid, "linear_coercive", field, div);
}

DriftFields boundary_singular(const BoundarySingular& p, const GridPtr& grid) {
  if (!p.eigenpair) throw ConfigError("boundary-singular drift needs an eigenpair");
  const Grid& g = *grid;
  const ScalarField& phi = p.eigenpair->phi1;
  if (!phi.grid().same_layout(g))
    throw ConfigError("boundary-singular drift: eigenpair computed on a different grid");
  if (!(p.gamma > 0.0)) throw ConfigError("boundary-singular drift needs gamma > 0");
  if (!(p.ell >= 1.0)) throw ConfigError("boundary-singular drift needs ell >= 1");

  const double shift = std::isinf(p.ell) ? 0.0 : 1.0 / p.ell;
  const double gamma = p.gamma;
  const double lambda1 = p.eigenpair->lambda1;

  DriftFields out;
  out.family = "boundary_singular";
  out.analytic_divergence = true;
  out.E = VectorField(grid);
  out.divE = ScalarField(grid);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point grad = cell_gradient(phi, i);
    const double base = phi[i] + shift;
    const double w = std::pow(base, -1.0 - gamma);
    double g2 = 0.0;
    for (int d = 0; d < g.dim(); ++d) {
      out.E[i][d] = -w * grad[d];
      g2 += grad[d] * grad[d];
    }
    out.divE[i] = (1.0 + gamma) * std::pow(base, -2.0 - gamma) * g2 + lambda1 * w * phi[i];
  }
  out.face_normal = empty_faces(g);
  fill_faces(g, out.face_normal, [&](std::size_t i, int d, int side) {
    const long long j = g.neighbor(i, d, side);
    double phi_face = 0.0;
    double dphi = 0.0;  // derivative along +e_d
    if (j >= 0) {
      phi_face = 0.5 * (phi[i] + phi[static_cast<std::size_t>(j)]);
      dphi = side * (phi[static_cast<std::size_t>(j)] - phi[i]) / g.spacing()[d];
    } else {
      dphi = -side * phi[i] / g.boundary_gap(i, d, side);
    }
    return -std::pow(phi_face + shift, -1.0 - gamma) * dphi;
  });
  out.c0 = min_value(out.divE);
  return out;
}

// Zero-extended separable convolution along one lattice axis.
void convolve_axis(std::vector<double>& data, const Index3& dims, int axis,
                   const std::vector<double>& taps) {
  const int half = static_cast<int>(taps.size() / 2);
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(dims[0])
                                                       : static_cast<std::size_t>(dims[0]) * dims[1];
  const int len = dims[axis];
  std::vector<double> line(len), result(len);
  Index3 outer = dims;
  outer[axis] = 1;
  for (int c = 0; c < outer[2]; ++c)
    for (int b = 0; b < outer[1]; ++b)
      for (int a = 0; a < outer[0]; ++a) {
        const std::size_t base = static_cast<std::size_t>(a) +
                                 static_cast<std::size_t>(dims[0]) *
                                     (static_cast<std::size_t>(b) + static_cast<std::size_t>(dims[1]) * c);
        for (int t = 0; t < len; ++t) line[t] = data[base + t * stride];
        for (int t = 0; t < len; ++t) {
          double s = 0.0;
          const int lo = std::max(0, t - half);
          const int hi = std::min(len - 1, t + half);
          for (int q = lo; q <= hi; ++q) s += taps[q - t + half] * line[q];
          result[t] = s;
        }
        for (int t = 0; t < len; ++t) data[base + t * stride] = result[t];
      }
}

// Quartic bump (1 - (x/r)^2)^2 sampled at multiples of h.
std::vector<double> bump_taps(double radius, double h) {
  const int half = static_cast<int>(std::ceil(radius / h)) - 1;
  std::vector<double> taps(2 * half + 1);
  double sum = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double s = k * h / radius;
    const double w = s * s < 1.0 ? (1.0 - s * s) * (1.0 - s * s) : 0.0;
    taps[k + half] = w;
    sum += w;
  }
  // Unit-mass kernel with the quadrature weight h folded in.
  for (double& w : taps) w /= sum;
  return taps;
}

}  // namespace

std::string DriftSpec::family_name() const {
  return std::visit(Overloaded{[](const PointSingular&) { return std::string("point_singular"); },
                               [](const BoundarySingular&) { return std::string("boundary_singular"); },
                               [](const LinearCoercive&) { return std::string("linear_coercive"); },
                               [](const CustomDrift& c) { return "custom:" + c.name; }},
                    family);
}

double DriftFields::sup_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < E.size(); ++i) s = std::max(s, norm(E[i], grid().dim()));
  return s;
}

DriftFields zero_drift(const GridPtr& grid) {
  DriftFields out;
  out.family = "zero";
  out.E = VectorField(grid);
  out.divE = ScalarField(grid);
  out.analytic_divergence = true;
  out.face_normal = empty_faces(*grid);
  out.c0 = 0.0;
  return out;
}

DriftFields evaluate_drift(const DriftSpec& spec, const GridPtr& grid) {
  DriftFields out = std::visit(
      Overloaded{[&](const PointSingular& p) { return point_singular(p, grid); },
                 [&](const BoundarySingular& p) { return boundary_singular(p, grid); },
                 [&](const LinearCoercive& p) { return linear_coercive(p, grid); },
                 [&](const CustomDrift& c) {
                   if (!c.field) throw ConfigError("custom drift '" + c.name + "' has no field");
                   return closed_form(grid, "custom:" + c.name, c.field, c.divergence);
                 }},
      spec.family);
  if (spec.mollify_n) out = mollify(out, *spec.mollify_n);
  return out;
}

ScalarField discrete_divergence(const DriftFields& fields) {
  const Grid& g = fields.grid();
  ScalarField div(fields.grid_ptr());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (int d = 0; d < g.dim(); ++d)
      s += (fields.face(i, d, 1) - fields.face(i, d, -1)) / g.spacing()[d];
    div[i] = s;
  }
  return div;
}

DriftFields mollify(const DriftFields& fields, int n) {
  if (n < 1) throw ConfigError("mollification index must be >= 1");
  const Grid& g = fields.grid();
  const double radius = 1.0 / n;
  if (radius < 2.0 * g.h())
    throw ResolutionError("mollifier radius 1/" + std::to_string(n) +
                          " is below twice the grid spacing " + std::to_string(g.h()));

  std::array<std::vector<double>, 3> taps;
  for (int d = 0; d < g.dim(); ++d) taps[d] = bump_taps(radius, g.spacing()[d]);

  DriftFields out;
  out.family = fields.family + "*rho_" + std::to_string(n);
  out.E = VectorField(fields.grid_ptr());
  for (int c = 0; c < g.dim(); ++c) {
    std::vector<double> lattice(g.lattice_size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) lattice[g.flatten(g.lattice(i))] = fields.E[i][c];
    for (int d = 0; d < g.dim(); ++d) convolve_axis(lattice, g.dims(), d, taps[d]);
    for (std::size_t i = 0; i < g.size(); ++i) out.E[i][c] = lattice[g.flatten(g.lattice(i))];
  }
  for (int a = 0; a < g.dim(); ++a) {
    out.face_normal[a] = fields.face_normal[a];
    for (int d = 0; d < g.dim(); ++d) convolve_axis(out.face_normal[a], g.face_dims(a), d, taps[d]);
  }
  out.divE = discrete_divergence(out);
  out.analytic_divergence = false;
  out.c0 = min_value(out.divE);
  return out;
}

ScalarField truncate_scalar(const ScalarField& field, double k) {
  if (!(k > 0.0)) throw PreconditionError("truncation level must be positive");
  ScalarField out = field;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], -k, k);
  return out;
}

EstimateReport check_divergence_sign_distributional(const DriftFields& fields, int trials,
                                                    std::uint64_t seed) {
  const Grid& g = fields.grid();
  const int n = g.dim();
  const double h = g.h();
  const ScalarField delta = distance_to_boundary(fields.grid_ptr());

  // Centers far enough inside to host a bump resolved by a few cells.
  std::vector<std::size_t> hosts;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (0.9 * delta[i] / std::sqrt(static_cast<double>(n)) >= 2.0 * h) hosts.push_back(i);
  if (hosts.empty())
    throw ResolutionError("grid too coarse to host compactly supported test bumps");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, hosts.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double worst = -std::numeric_limits<double>::infinity();
  double worst_raw = 0.0;
  std::vector<double> phi(g.size());
  for (int t = 0; t < trials; ++t) {
    const std::size_t c = hosts[pick(rng)];
    const double rmax = 0.9 * delta[c] / std::sqrt(static_cast<double>(n));
    const double radius = 2.0 * h + unit(rng) * (rmax - 2.0 * h);
    const Point x0 = g.center(c);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double v = 1.0;
      for (int d = 0; d < n; ++d) {
        const double s = (g.center(i)[d] - x0[d]) / radius;
        v *= s * s < 1.0 ? (1.0 - s * s) * (1.0 - s * s) : 0.0;
      }
      phi[i] = v;
    }
    double integral = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (int d = 0; d < n; ++d) {
        const long long j = g.neighbor(i, d, 1);
        const double phij = j >= 0 ? phi[static_cast<std::size_t>(j)] : 0.0;
        const double term = fields.face(i, d, 1) * (phij - phi[i]) / g.spacing()[d];
        integral += term;
        scale += std::abs(term);
      }
    integral *= g.cell_volume();
    scale *= g.cell_volume();
    const double normalized = scale > 0.0 ? integral / scale : 0.0;
    if (normalized > worst) {
      worst = normalized;
      worst_raw = integral;
    }
  }

  // Midpoint quadrature of a smooth integrand: relative error O(h^2).
  const double tolerance = h * h;
  EstimateReport r;
  r.name = "divergence_sign_distributional";
  r.lhs = worst;
  r.rhs = tolerance;
  r.margin = 0.0;
  r.pass = worst <= tolerance;
  r.slack = worst > 0.0 ? tolerance / worst : std::numeric_limits<double>::infinity();
  r.metadata = {{"trials", static_cast<double>(trials)},
                {"max_integral", worst_raw},
                {"h", h}};
  r.note = "lhs = max over bumps of (int E.grad phi) / (int |E.grad phi|)";
  return r;
}

}  // namespace driftlab
