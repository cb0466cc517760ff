#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/drift.hpp"
#include "driftlab/estimates_report.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/operator.hpp"
#include "driftlab/solver.hpp"

namespace driftlab {

// Midpoint quadrature over active cells.
double lp_norm(const ScalarField& u, double p);
double integral(const ScalarField& u);

/// Per-cell gradient magnitude from face differences. Each interior face is
/// shared half-and-half by its cells; a boundary face weighs gap/h, so the
/// squared L2 norm equals the discrete Dirichlet energy exactly.
ScalarField gradient_magnitude(const ScalarField& u);
double w1p_seminorm(const ScalarField& u, double p);

ScalarField positive_part(const ScalarField& u);

/// Lp norm of |E| at cell centers.
double drift_lp_norm(const VectorField& E, double p);

// Exponent arithmetic. Values >= N give +inf for the conjugate.
double sobolev_conjugate(double m, int N);
double second_conjugate(double m, int N);
/// 2* = 2N/(N-2); throws UnsupportedDimension for N < 3.
double critical_exponent(int N);
/// (2*)' = 2N/(N+2); throws UnsupportedDimension for N < 3.
double dual_critical_exponent(int N);

struct Exponents {
  int N = 3;
  double m = 2.0;
  double m_star = 0.0;
  double m_star_star = 0.0;
};
Exponents exponents(double m, int N);
/// Recomputes m* and m** and checks (m*)* = m**.
bool exponents_consistent(const Exponents& e);

/// Sharp free-space constant S with S ||u||_{2*} <= ||grad u||_2.
double sharp_sobolev_constant(int N);

/// ||grad_h u||_2 / ||u||_{2*}; +inf for u = 0.
double sobolev_quotient(const ScalarField& u);

struct SobolevConstant {
  double discrete = 0.0;
  double analytic = 0.0;
  std::string minimizer;
  int candidates = 0;
};

/// Minimum of the Sobolev quotient over bubbles, Gaussians and the discrete
/// Poisson profile. Throws UnsupportedDimension for N < 3.
SobolevConstant sobolev_constant_discrete(const GridPtr& grid, std::uint64_t seed = 7);

/// 2% plus h for upwind runs.
double default_margin(double h, Scheme scheme);

EstimateReport check_l1_divergence_bound(const ScalarField& u, const ScalarField& divE,
                                         const ScalarField& f, double margin = 0.02);

/// ||u||_m <= (m/(m-1)) ||f||_m / c0. Throws PreconditionError if c0 <= 0 or m <= 1.
EstimateReport check_lm_coercive_bound(const ScalarField& u, const ScalarField& f, double m,
                                       double c0, double margin = 0.02);

/// ||u||_inf <= ||f||_inf / c0. Throws PreconditionError if c0 <= 0.
EstimateReport check_linf_coercive_bound(const ScalarField& u, const ScalarField& f, double c0,
                                         double margin = 0.02);

/// Constants fitted on one calibration run and then frozen.
struct GradientConstant {
  double with_drift = 0.0;
  double drift_free = 0.0;
};

GradientConstant calibrate_gradient_constant(const ScalarField& u, const ScalarField& f,
                                             const VectorField& E);

struct GradientReports {
  EstimateReport with_drift;  // ||grad u||^2 <= C (||E||_N^2 + ||f||^2_{2N/(N+2)})
  EstimateReport drift_free;  // ||grad u||^2 <= C ||f||^2_{2N/(N+2)}
  EstimateReport signed_bound;  // ||grad u+||_2 <= ||f+||_{2N/(N+2)} / (alpha S2)
};

/// The signed bound uses S_eff = min(S2, quotient of u+): the discrete
/// Sobolev constant is an infimum over all grid fields, u+ included.
GradientReports check_gradient_bound(const ScalarField& u, const ScalarField& f,
                                     const VectorField& E, double alpha_ell, double S2,
                                     const GradientConstant& C, double margin = 0.02);

/// ||log(1+|u|)||_{2*}^2 <= (1/(S^2 a^2)) int |E|^2 + (2/(S^2 a)) int |f|, with
/// S = min(S2, quotient of log(1+|u|)).
EstimateReport log_estimate_check(const ScalarField& u, const VectorField& E, const ScalarField& f,
                                  double alpha_ell, double S2, double margin = 0.02);

/// Solves with f1 and f2 and checks u1 <= u2 + tol cellwise. With an M-matrix
/// operator and a direct solve the tolerance is forced to 0.
EstimateReport check_comparison(const ProblemSpec& problem, const ScalarField& f1,
                                const ScalarField& f2, double tol,
                                const SolverOptions& opts = {});

/// u <= ubar on the cells where mask is set; lhs = max(u - ubar), rhs = 0.
EstimateReport check_barrier(const ScalarField& u, const ScalarField& ubar,
                             const std::vector<char>& mask);

struct FlatnessBand {
  double delta_lo = 0.0;
  double delta_hi = 0.0;
  double delta_at_max = 0.0;
  double max_abs_u = 0.0;
  std::size_t cells = 0;
};

struct FlatnessFit {
  double alpha_hat = 0.0;
  std::vector<FlatnessBand> bands;
};

/// Dyadic bands [d0 2^k, d0 2^(k+1)) from the smallest distance d0. The slope
/// of log max|u| against log delta (taken at the maximizing cell) is fitted on
/// the first `bands` nonempty bands. Throws ResolutionError if fewer than 3.
FlatnessFit flatness_fit(const ScalarField& u, const ScalarField& delta, int bands);

/// Smallest Hardy quotient int |grad u|^2 / int u^2/|x|^2 over origin-centered
/// bubbles, compared with the classical ((N-2)/2)^2. The alternative constant
/// ((N-2)/N)^2 is recorded in metadata. Throws UnsupportedDimension for N < 3.
EstimateReport hardy_check(const GridPtr& grid, double margin = 0.02);

}  // namespace driftlab
