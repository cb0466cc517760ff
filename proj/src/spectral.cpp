#include "driftlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/operator.hpp"

namespace driftlab {

namespace {

double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Eigenpair principal_eigenpair(const GridPtr& grid, double tol, int max_iter) {
  ProblemSpec lap;
  lap.grid = grid;
  lap.M = DiffusionTensorField::identity(grid);
  lap.drift = zero_drift(grid);
  lap.source = ScalarField(grid);
  lap.scheme = Scheme::Upwind;
  const SparseOperator op = assemble(lap);

  // The Laplacian is symmetric positive definite, so LDL^T is enough.
  const Eigen::SparseMatrix<double> L(op.matrix);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(L);
  if (ldlt.info() != Eigen::Success)
    throw IterationError("Laplacian factorization failed", std::numeric_limits<double>::quiet_NaN());

  const Eigen::Index n = L.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  x /= std::sqrt(dot(x, x));
  double lambda = 0.0;
  double increment = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < max_iter) {
    ++it;
    Eigen::VectorXd y = ldlt.solve(x);
    // L y = x, so the Rayleigh quotient of y is (y.x)/(y.y).
    const double next = dot(y, x) / dot(y, y);
    x = y / std::sqrt(dot(y, y));
    increment = std::abs(next - lambda);
    lambda = next;
    if (increment < tol * lambda) break;
  }
  if (!(increment < tol * lambda))
    throw IterationError("inverse power iteration did not converge", increment);

  if (x.sum() < 0.0) x = -x;
  const Eigen::VectorXd Lx = L * x;
  Eigenpair pair;
  pair.lambda1 = lambda;
  pair.iterations = it;
  pair.rayleigh_residual = std::sqrt(dot(Lx - lambda * x, Lx - lambda * x));

  ScalarField phi(grid, std::vector<double>(x.data(), x.data() + n));
  const double scale = 1.0 / max_face_gradient(phi);
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] *= scale;
  pair.max_gradient = max_face_gradient(phi);

  const Grid& g = *grid;
  double min_bnd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int d = 0; d < g.dim(); ++d)
      for (int side : {-1, 1})
        if (g.neighbor(i, d, side) < 0)
          min_bnd = std::min(min_bnd, std::abs(phi[i]) / g.boundary_gap(i, d, side));
  pair.min_boundary_gradient = min_bnd;
  pair.phi1 = std::move(phi);
  return pair;
}

double max_face_gradient(const ScalarField& u) {
  const Grid& g = u.grid();
  double m = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int d = 0; d < g.dim(); ++d)
      for (int side : {-1, 1}) m = std::max(m, std::abs(outward_difference(u, i, d, side)));
  return m;
}

EstimateReport comparison_bounds_check(const Eigenpair& pair, const GridPtr& grid) {
  const ScalarField delta = distance_to_boundary(grid);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double q = pair.phi1[i] / delta[i];
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  EstimateReport r;
  r.name = "phi1_comparable_to_delta";
  r.lhs = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  r.rhs = std::numeric_limits<double>::infinity();
  r.slack = std::numeric_limits<double>::infinity();
  r.pass = lo > 0.0 && std::isfinite(hi) && lo <= hi;
  r.metadata = {{"C_low", lo}, {"C_high", hi}, {"lambda1", pair.lambda1}};
  r.note = "C_low delta <= phi1 <= C_high delta; lhs = C_high / C_low";
  return r;
}

}  // namespace driftlab
