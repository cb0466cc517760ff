#include "driftlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

// Bernoulli function z / (e^z - 1), with its limit 1 at z = 0.
double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

}  // namespace

RadialProfile::RadialProfile(int N, double radius, std::vector<double> r, std::vector<double> u,
                             std::vector<double> shell_volume)
    : N_(N), radius_(radius), r_(std::move(r)), u_(std::move(u)), shell_(std::move(shell_volume)) {}

double RadialProfile::operator()(double r) const {
  if (r_.empty()) return 0.0;
  if (r <= r_.front()) return u_.front();
  if (r >= radius_) return 0.0;
  if (r >= r_.back()) return u_.back() * (radius_ - r) / (radius_ - r_.back());
  const auto it = std::upper_bound(r_.begin(), r_.end(), r);
  const std::size_t k = static_cast<std::size_t>(it - r_.begin());
  const double t = (r - r_[k - 1]) / (r_[k] - r_[k - 1]);
  return (1.0 - t) * u_[k - 1] + t * u_[k];
}

double RadialProfile::integrate(const std::function<double(double, double)>& g) const {
  double s = 0.0;
  for (std::size_t i = 0; i < r_.size(); ++i) s += g(r_[i], u_[i]) * shell_[i];
  return s;
}

ScalarField RadialProfile::to_grid(const GridPtr& grid) const {
  return sample(grid, [&](const Point& x) { return (*this)(norm(x, grid->dim())); });
}

void RadialProfile::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write radial profile to " + path);
  out << "r,u\n";
  out.precision(12);
  for (std::size_t i = 0; i < r_.size(); ++i) out << r_[i] << ',' << u_[i] << '\n';
}

double sphere_area(int N) { return 2.0 * std::pow(M_PI, N / 2.0) / std::tgamma(N / 2.0); }

RadialProfile radial_solve(const RadialProblem& p) {
  if (p.N < 1 || p.N > 3) throw ConfigError("radial oracle supports N in {1,2,3}");
  if (p.A != 0.0 && p.N < 3) throw ConfigError("radial oracle with A != 0 needs N >= 3");
  if (!p.f) throw ConfigError("radial oracle needs a source");
  if (p.cells < 2 || !(p.radius > 0.0)) throw ConfigError("radial oracle needs cells >= 2 and radius > 0");

  const std::size_t n = static_cast<std::size_t>(p.cells);
  const double dr = p.radius / p.cells;
  const double area = sphere_area(p.N);
  std::vector<double> r(n), shell(n), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = (i + 0.5) * dr;
    shell[i] = area * (std::pow((i + 1) * dr, p.N) - std::pow(i * dr, p.N)) / p.N;
    rhs[i] = p.f(r[i]) * shell[i] / area;
  }

  // Flux through the face at r_f: w (B(-b dist) u_left - B(b dist) u_right) / dist
  // with w = r_f^(N-1) and b = A / r_f; the cell balance is J_out - J_in = rhs.
  std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double rf = (i + 1) * dr;
    const double w = std::pow(rf, p.N - 1) / dr;
    const double z = p.A / rf * dr;
    const double left = w * bernoulli(-z), right = w * bernoulli(z);
    diag[i] += left;
    upper[i] -= right;
    diag[i + 1] += right;
    lower[i + 1] -= left;
  }
  {
    const double half = 0.5 * dr;
    const double w = std::pow(p.radius, p.N - 1) / half;
    diag[n - 1] += w * bernoulli(-p.A / p.radius * half);
  }

  // Thomas algorithm; the system is a diagonally dominant M-matrix.
  std::vector<double> c(n), d(n), u(n);
  c[0] = upper[0] / diag[0];
  d[0] = rhs[0] / diag[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double m = diag[i] - lower[i] * c[i - 1];
    if (!(std::abs(m) > 0.0) || !std::isfinite(m))
      throw IterationError("radial tridiagonal solve hit a zero pivot", m);
    c[i] = upper[i] / m;
    d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
  }
  u[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) u[i] = d[i] - c[i] * u[i + 1];
  return RadialProfile(p.N, p.radius, std::move(r), std::move(u), std::move(shell));
}

double radial_self_convergence(const RadialProblem& p) {
  const RadialProfile coarse = radial_solve(p);
  RadialProblem q = p;
  q.cells = 2 * p.cells;
  const RadialProfile fine = radial_solve(q);
  double num = 0.0, den = 0.0;
  coarse.integrate([&](double r, double u) {
    const double e = u - fine(r);
    num += e * e * std::pow(r, p.N - 1);
    den += u * u * std::pow(r, p.N - 1);
    return 0.0;
  });
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

double power_law_residual(double alpha, double C, double x) {
  if (!(x > 0.0)) throw PreconditionError("power_law_residual needs x > 0");
  return -(alpha + C) * (alpha - 1.0) * std::pow(x, alpha - 2.0);
}

double exact_poisson_1d(PoissonKind kind, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw PreconditionError("exact_poisson_1d needs x in [0,1]");
  switch (kind) {
    case PoissonKind::Constant: return 0.5 * x * (1.0 - x);
    case PoissonKind::Sine: return std::sin(M_PI * x) / (M_PI * M_PI);
  }
  return 0.0;
}

}  // namespace driftlab
