#include <doctest.h>

#include <cmath>
#include <cstring>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/operator.hpp"
#include "driftlab/solver.hpp"

using namespace driftlab;

namespace {

ProblemSpec problem(const GridPtr& g, DriftFields drift, Scheme scheme) {
  ProblemSpec p;
  p.grid = g;
  p.M = DiffusionTensorField::identity(g);
  p.drift = std::move(drift);
  p.source = ScalarField(g, 1.0);
  p.scheme = scheme;
  return p;
}

SolverOptions with(SolveMethod m, double tol = 1e-10) {
  SolverOptions o;
  o.method = m;
  o.tol = tol;
  return o;
}

}  // namespace

TEST_CASE("1D Poisson with unit source peaks at 1/8") {
  const GridPtr g = build_grid(DomainShape::unit_box(1), 256);
  const ProblemSpec p = problem(g, zero_drift(g), Scheme::Central);
  const SolveReport r = solve(assemble(p), p.source);
  CHECK(r.method == "direct");
  CHECK(r.relative_residual <= 1e-10);
  // Centers 127 and 128 straddle x = 1/2; both sit within O(h^2) of 1/8.
  const double h = 1.0 / 256;
  CHECK(std::abs(0.5 * (r.u[127] + r.u[128]) - 0.125) < h * h);
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double x = g->center(i)[0];
    CHECK(std::abs(r.u[i] - 0.5 * x * (1 - x)) < h * h);
  }
}

TEST_CASE("zero right-hand side gives exactly zero") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 10);
  const SparseOperator op = assemble(problem(g, evaluate_drift(DriftSpec{PointSingular{2.0}, {}}, g), Scheme::Upwind));
  for (SolveMethod m : {SolveMethod::Direct, SolveMethod::Bicgstab}) {
    const SolveReport r = solve(op, ScalarField(g), with(m));
    CHECK(r.u.min() == 0.0);
    CHECK(r.u.max() == 0.0);
    CHECK(r.relative_residual == 0.0);
  }
}

TEST_CASE("direct and iterative paths agree") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 20);
  const ProblemSpec p = problem(g, evaluate_drift(DriftSpec{PointSingular{5.0}, {}}, g), Scheme::Exponential);
  const SparseOperator op = assemble(p);
  const SolveReport d = solve(op, p.source, with(SolveMethod::Direct, 1e-12));
  const SolveReport k = solve(op, p.source, with(SolveMethod::Bicgstab, 1e-12));
  CHECK(d.method == "direct");
  CHECK(k.method == "bicgstab");
  CHECK(k.iterations > 0);
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    diff = std::max(diff, std::abs(d.u[i] - k.u[i]));
    scale = std::max(scale, std::abs(d.u[i]));
  }
  CHECK(diff <= 1e-8 * scale);
}

TEST_CASE("auto picks the path by size") {
  const GridPtr g = build_grid(DomainShape::unit_box(2), 30);
  const ProblemSpec p = problem(g, zero_drift(g), Scheme::Upwind);
  const SparseOperator op = assemble(p);
  SolverOptions o;
  o.direct_threshold = 100;
  CHECK(solve(op, p.source, o).method == "bicgstab");
  o.direct_threshold = 1000;
  CHECK(solve(op, p.source, o).method == "direct");
}

TEST_CASE("M-matrix systems with nonnegative data give nonnegative solutions") {
  const GridPtr g = build_grid(DomainShape::unit_box(2), 40);
  const ProblemSpec p = problem(g, evaluate_drift(DriftSpec{CustomDrift{"swirl", [](const Point& x) {
                                                                return Point{50 * (x[1] - 0.5), -50 * (x[0] - 0.5), 0};
                                                              }, {}}, {}}, g),
                                Scheme::Upwind);
  const SparseOperator op = assemble(p);
  REQUIRE(op.m_matrix_flag());
  ScalarField f(g);
  f[17] = 1.0;  // a point source is the hardest case for positivity
  const SolveReport r = solve(op, f, with(SolveMethod::Direct));
  CHECK(r.u.min() >= 0.0);
}

TEST_CASE("repeated solves are bit-identical") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 16);
  const ProblemSpec p = problem(g, evaluate_drift(DriftSpec{LinearCoercive{2.0}, {}}, g), Scheme::Upwind);
  const SparseOperator op = assemble(p);
  for (SolveMethod m : {SolveMethod::Direct, SolveMethod::Bicgstab}) {
    const SolveReport a = solve(op, p.source, with(m));
    const SolveReport b = solve(op, p.source, with(m));
    CHECK(std::memcmp(a.u.values().data(), b.u.values().data(), a.u.size() * sizeof(double)) == 0);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("iteration cap raises a solver error carrying the best iterate") {
  const GridPtr g = build_grid(DomainShape::unit_box(2), 40);
  const ProblemSpec p = problem(g, zero_drift(g), Scheme::Upwind);
  SolverOptions o = with(SolveMethod::Bicgstab, 1e-14);
  o.max_iter = 2;
  try {
    solve(assemble(p), p.source, o);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.best_iterate().size() == g->size());
    CHECK(std::isfinite(e.best_residual()));
    CHECK(e.best_residual() > 1e-14);
  }
}

TEST_CASE("singular matrix is diagnosed") {
  const GridPtr g = build_grid(DomainShape::unit_box(1), 4);
  SparseOperator op;
  op.grid = g;
  op.matrix.resize(4, 4);
  op.matrix.insert(0, 0) = 1.0;
  op.matrix.makeCompressed();
  CHECK_THROWS_AS(solve(op, ScalarField(g, 1.0), with(SolveMethod::Direct)), SolverError);
}

TEST_CASE("preconditions") {
  const GridPtr g = build_grid(DomainShape::unit_box(1), 4);
  const SparseOperator op = assemble(problem(g, zero_drift(g), Scheme::Upwind));
  CHECK_THROWS_AS(solve(op, ScalarField(build_grid(DomainShape::unit_box(1), 5), 1.0)), PreconditionError);
  CHECK_THROWS_AS(solve(op, ScalarField(g, 1.0), with(SolveMethod::Direct, 0.0)), PreconditionError);
}
