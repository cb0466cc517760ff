#pragma once

#include <functional>
#include <string>
#include <vector>

#include "driftlab/grid.hpp"

namespace driftlab {

/// Radially symmetric problem on the ball of the given radius centered at 0
/// with E = A x / |x|^2.
struct RadialProblem {
  int N = 3;
  double radius = 1.0;
  double A = 0.0;
  std::function<double(double)> f;
  int cells = 100000;
};

class RadialProfile {
 public:
  RadialProfile() = default;
  RadialProfile(int N, double radius, std::vector<double> r, std::vector<double> u,
                std::vector<double> shell_volume);

  int dim() const { return N_; }
  double radius() const { return radius_; }
  const std::vector<double>& r() const { return r_; }
  const std::vector<double>& u() const { return u_; }

  /// Piecewise-linear interpolation; constant below the first center and
  /// linear to the zero boundary value above the last.
  double operator()(double r) const;

  /// int_ball g(r, u(r)) dx with the exact shell volumes of the 1D cells.
  double integrate(const std::function<double(double r, double u)>& g) const;

  /// Samples u(|x|) at the active cell centers of a ball grid centered at 0.
  ScalarField to_grid(const GridPtr& grid) const;

  /// Two-column (r, u) CSV.
  void write_csv(const std::string& path) const;

 private:
  int N_ = 3;
  double radius_ = 1.0;
  std::vector<double> r_;
  std::vector<double> u_;
  std::vector<double> shell_;  // measure of the radial cell in R^N
};

/// Area of the unit sphere in R^N.
double sphere_area(int N);

/// Exponentially fitted flux-form finite volumes on (0, R): zero flux at the
/// origin, u(R) = 0, tridiagonal solve. Throws ConfigError when A != 0 with
/// N < 3, or without a source.
RadialProfile radial_solve(const RadialProblem& p);

/// Relative weighted L2 difference between the solves at p.cells and 2 p.cells.
double radial_self_convergence(const RadialProblem& p);

/// -(alpha + C)(alpha - 1) x^(alpha - 2): the residual of u = x^alpha under
/// -u'' + (E u)' with E = -C / x. Throws PreconditionError for x <= 0.
double power_law_residual(double alpha, double C, double x);

enum class PoissonKind { Constant, Sine };

/// -u'' = f on (0,1) with u(0) = u(1) = 0: x(1-x)/2 for f = 1, sin(pi x)/pi^2
/// for f = sin(pi x).
double exact_poisson_1d(PoissonKind kind, double x);

}  // namespace driftlab
