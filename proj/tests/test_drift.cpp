#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/spectral.hpp"

using namespace driftlab;

namespace {

long long cell_at(const Grid& g, const Point& x) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    double d = 0.0;
    for (int k = 0; k < g.dim(); ++k) d += std::abs(g.center(i)[k] - x[k]);
    if (d < 1e-12) return static_cast<long long>(i);
  }
  return -1;
}

}  // namespace

TEST_CASE("point-singular drift at (1,0,0)") {
  const GridPtr g = build_grid(DomainShape::box(3, Point{0, -1, -1}, Point{2, 1, 1}), 3);
  const DriftFields f = evaluate_drift(DriftSpec{PointSingular{1.0}, {}}, g);
  const long long i = cell_at(*g, Point{1, 0, 0});
  REQUIRE(i >= 0);
  CHECK(f.E[static_cast<std::size_t>(i)][0] == doctest::Approx(1.0));
  CHECK(f.E[static_cast<std::size_t>(i)][1] == 0.0);
  CHECK(f.divE[static_cast<std::size_t>(i)] == doctest::Approx(1.0));
  CHECK(f.analytic_divergence);
}

TEST_CASE("point-singular magnitude is |A|/|x| and the divergence is nonnegative") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 12);
  for (double A : {0.5, 3.0, -2.0}) {
    const DriftFields f = evaluate_drift(DriftSpec{PointSingular{A}, {}}, g);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double r = norm(g->center(i), 3);
      CHECK(norm(f.E[i], 3) == doctest::Approx(std::abs(A) / r));
      if (A > 0) CHECK(f.divE[i] >= 0.0);
    }
    CHECK(f.c0 == doctest::Approx(f.divE.min()));
  }
}

TEST_CASE("zero amplitude gives the zero field") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 8);
  const DriftFields f = evaluate_drift(DriftSpec{PointSingular{0.0}, {}}, g);
  CHECK(f.sup_norm() == 0.0);
  CHECK(f.divE.min() == 0.0);
  CHECK(f.divE.max() == 0.0);
}

TEST_CASE("a cell centered at the origin is rejected") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 9);
  CHECK_THROWS_AS(evaluate_drift(DriftSpec{PointSingular{1.0}, {}}, g), ConfigError);
}

TEST_CASE("linear coercive drift in 2D") {
  const GridPtr g = build_grid(DomainShape::unit_box(2), 3);
  const DriftFields f = evaluate_drift(DriftSpec{LinearCoercive{2.0}, {}}, g);
  const long long i = cell_at(*g, Point{0.5, 0.5, 0});
  REQUIRE(i >= 0);
  CHECK(f.E[static_cast<std::size_t>(i)][0] == doctest::Approx(0.5));
  CHECK(f.E[static_cast<std::size_t>(i)][1] == doctest::Approx(0.5));
  for (std::size_t k = 0; k < g->size(); ++k) CHECK(f.divE[k] == 2.0);
  CHECK(f.c0 == 2.0);
  // Linear fields are differenced exactly.
  const ScalarField d = discrete_divergence(f);
  for (std::size_t k = 0; k < g->size(); ++k) CHECK(d[k] == doctest::Approx(2.0));
}

TEST_CASE("discrete divergence of the point-singular field converges at second order") {
  // Compare on the fixed shell 0.4 < |x| < 0.6 of the box [-1,1]^3.
  double prev = 0.0;
  for (int n : {16, 32, 64}) {
    const GridPtr g = build_grid(DomainShape::box(3, Point{-1, -1, -1}, Point{1, 1, 1}), n);
    const DriftFields f = evaluate_drift(DriftSpec{PointSingular{1.0}, {}}, g);
    const ScalarField d = discrete_divergence(f);
    double sq = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double r = norm(g->center(i), 3);
      if (r > 0.4 && r < 0.6) {
        sq += std::pow(d[i] - f.divE[i], 2);
        ++cells;
      }
    }
    const double err = std::sqrt(sq / cells);
    if (prev > 0.0) CHECK(prev / err > 3.5);
    prev = err;
  }
}

TEST_CASE("boundary-singular regularization is bounded and increases with ell") {
  const GridPtr g = build_grid(DomainShape::unit_box(2), 24);
  const auto pair = std::make_shared<const Eigenpair>(principal_eigenpair(g));
  std::vector<double> prev(g->size(), 0.0);
  for (double ell : {1.0, 4.0, 16.0, 64.0, std::numeric_limits<double>::infinity()}) {
    const DriftFields f = evaluate_drift(DriftSpec{BoundarySingular{1.5, ell, pair}, {}}, g);
    CHECK(std::isfinite(f.sup_norm()));
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double m = norm(f.E[i], 2);
      CHECK(m >= prev[i]);
      prev[i] = m;
      CHECK(f.divE[i] > 0.0);
    }
    if (std::isfinite(ell)) {
      for (int a = 0; a < 2; ++a)
        for (double v : f.face_normal[a]) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("boundary-singular divergence matches the closed form") {
  const GridPtr g = build_grid(DomainShape::unit_box(1), 64);
  const auto pair = std::make_shared<const Eigenpair>(principal_eigenpair(g));
  const double gamma = 1.0, ell = 8.0;
  const DriftFields f = evaluate_drift(DriftSpec{BoundarySingular{gamma, ell, pair}, {}}, g);
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double phi = pair->phi1[i];
    const double gp = cell_gradient(pair->phi1, i)[0];
    const double base = phi + 1.0 / ell;
    const double expected = (1 + gamma) * std::pow(base, -2 - gamma) * gp * gp +
                            pair->lambda1 * std::pow(base, -1 - gamma) * phi;
    CHECK(f.divE[i] == doctest::Approx(expected));
  }
  // The discrete divergence tracks it away from the boundary.
  const ScalarField d = discrete_divergence(f);
  for (std::size_t i = 8; i < 56; ++i) CHECK(d[i] == doctest::Approx(f.divE[i]).epsilon(0.02));
}

TEST_CASE("an eigenpair from another grid is rejected") {
  const auto pair = std::make_shared<const Eigenpair>(principal_eigenpair(build_grid(DomainShape::unit_box(1), 16)));
  CHECK_THROWS_AS(evaluate_drift(DriftSpec{BoundarySingular{1.0, 4.0, pair}, {}},
                                 build_grid(DomainShape::unit_box(1), 32)),
                  ConfigError);
}

TEST_CASE("mollifying a constant field leaves the interior unchanged") {
  const GridPtr g = build_grid(DomainShape::unit_box(2), 40);
  CustomDrift c{"constant", [](const Point&) { return Point{0.3, -1.2, 0.0}; }, [](const Point&) { return 0.0; }};
  const DriftFields f = evaluate_drift(DriftSpec{c, 5}, g);
  const ScalarField delta = distance_to_boundary(g);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    if (delta[i] <= 0.2 * std::sqrt(2.0) + g->h()) continue;
    CHECK(f.E[i][0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(f.E[i][1] == doctest::Approx(-1.2).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked > 0);
  CHECK_FALSE(f.analytic_divergence);
}

TEST_CASE("mollifier radius must resolve two cells") {
  const GridPtr g = build_grid(DomainShape::unit_box(1), 16);
  CHECK_THROWS_AS(mollify(evaluate_drift(DriftSpec{LinearCoercive{1.0}, {}}, g), 9), ResolutionError);
  CHECK_NOTHROW(mollify(evaluate_drift(DriftSpec{LinearCoercive{1.0}, {}}, g), 8));
  CHECK_THROWS_AS(mollify(evaluate_drift(DriftSpec{LinearCoercive{1.0}, {}}, g), 0), ConfigError);
}

TEST_CASE("mollification keeps the divergence sign away from the boundary") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 32);
  const int n = 4;
  const DriftFields f = evaluate_drift(DriftSpec{PointSingular{1.0}, n}, g);
  const DriftFields raw = evaluate_drift(DriftSpec{PointSingular{1.0}, {}}, g);
  const ScalarField delta = distance_to_boundary(g);
  const double h = g->h();
  for (std::size_t i = 0; i < g->size(); ++i)
    if (delta[i] > std::sqrt(3.0) / n + h) CHECK(f.divE[i] >= -h * h);
  // Smoothing can only lower the peak.
  CHECK(f.sup_norm() <= raw.sup_norm());
  CHECK(std::isfinite(f.sup_norm()));
}

TEST_CASE("truncation") {
  const GridPtr g = build_grid(DomainShape::unit_box(1), 4);
  const ScalarField f(g, std::vector<double>{0.5, -3.0, 1.0, 7.0});
  const ScalarField t = truncate_scalar(f, 1.0);
  CHECK(t[0] == 0.5);
  CHECK(t[1] == -1.0);
  CHECK(t[2] == 1.0);
  CHECK(t[3] == 1.0);
  const ScalarField tt = truncate_scalar(t, 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(tt[i] == t[i]);
  CHECK_THROWS_AS(truncate_scalar(f, 0.0), PreconditionError);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    ScalarField a(g), b(g);
    double sup = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      sup = std::max(sup, std::abs(a[i] - b[i]));
    }
    const double k = 0.1 + std::abs(u(rng));
    const ScalarField ta = truncate_scalar(a, k), tb = truncate_scalar(b, k);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(ta[i] - tb[i]) <= sup);
  }
}

TEST_CASE("distributional sign check") {
  const GridPtr g = build_grid(DomainShape::ball(3, Point{}, 1.0), 20);
  CHECK(check_divergence_sign_distributional(zero_drift(g), 20, 1).pass);
  CHECK(check_divergence_sign_distributional(evaluate_drift(DriftSpec{LinearCoercive{1.0}, {}}, g), 20, 1).pass);
  CHECK(check_divergence_sign_distributional(evaluate_drift(DriftSpec{PointSingular{1.0}, {}}, g), 20, 1).pass);
  const EstimateReport bad = check_divergence_sign_distributional(evaluate_drift(DriftSpec{PointSingular{-1.0}, {}}, g), 20, 1);
  CHECK_FALSE(bad.pass);
  CHECK(bad.lhs > 0.0);
  CHECK_THROWS_AS(check_divergence_sign_distributional(zero_drift(build_grid(DomainShape::unit_box(3), 4)), 5, 1),
                  ResolutionError);
}

TEST_CASE("oracle: a single off-origin bump against A = -1") {
  // For E = -x/|x|^2 in 3D, int E.grad(phi) = int phi/|x|^2 > 0. A fine
  // midpoint rule for the right side agrees with the grid's flux sum.
  const GridPtr g = build_grid(DomainShape::box(3, Point{-1, -1, -1}, Point{1, 1, 1}), 40);
  const DriftFields f = evaluate_drift(DriftSpec{PointSingular{-1.0}, {}}, g);
  const Point x0{0.5, 0.1, -0.2};
  const double rad = 0.25;
  auto bump = [&](const Point& x) {
    double v = 1.0;
    for (int d = 0; d < 3; ++d) {
      const double s = (x[d] - x0[d]) / rad;
      v *= s * s < 1 ? (1 - s * s) * (1 - s * s) : 0.0;
    }
    return v;
  };
  const ScalarField phi = sample(g, bump);
  double lhs = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i)
    for (int d = 0; d < 3; ++d) {
      const long long j = g->neighbor(i, d, 1);
      const double pj = j >= 0 ? phi[static_cast<std::size_t>(j)] : 0.0;
      lhs += f.face(i, d, 1) * (pj - phi[i]) / g->spacing()[d];
    }
  lhs *= g->cell_volume();
  const int m = 120;
  const double hq = 2 * rad / m;
  double rhs = 0.0;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c) {
        const Point x{x0[0] - rad + (a + 0.5) * hq, x0[1] - rad + (b + 0.5) * hq, x0[2] - rad + (c + 0.5) * hq};
        rhs += bump(x) / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
      }
  rhs *= hq * hq * hq;
  CHECK(rhs > 0.0);
  CHECK(lhs == doctest::Approx(rhs).epsilon(0.03));
}
