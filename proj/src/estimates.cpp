#include "driftlab/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pow_abs(double v, double p) { return p == 2.0 ? v * v : std::pow(std::abs(v), p); }

ScalarField map_field(const ScalarField& u, double (*fn)(double)) {
  ScalarField out = u;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(u[i]);
  return out;
}

void require_3d_theory(int N, const char* what) {
  if (N < 3)
    throw UnsupportedDimension(std::string(what) + " needs N >= 3 (finite 2*), got N = " +
                               std::to_string(N));
}

}  // namespace

double EstimateReport::meta(const std::string& key, double fallback) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return fallback;
}

EstimateReport make_report(std::string name, double lhs, double rhs, double margin) {
  EstimateReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.margin = margin;
  r.slack = lhs == 0.0 ? kInf : rhs / lhs;
  r.pass = lhs <= rhs * (1.0 + margin);
  return r;
}

std::string describe(const EstimateReport& r) {
  std::ostringstream os;
  os.precision(10);
  bool first = true;
  for (const auto& [k, v] : r.metadata) {
    os << (first ? "" : ";") << k << '=' << v;
    first = false;
  }
  if (!r.note.empty()) os << (first ? "" : ";") << r.note;
  return os.str();
}

double lp_norm(const ScalarField& u, double p) {
  if (!(p >= 1.0)) throw PreconditionError("lp_norm needs p >= 1");
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : u.values()) m = std::max(m, std::abs(v));
    return m;
  }
  double s = 0.0;
  for (double v : u.values()) s += pow_abs(v, p);
  return std::pow(s * u.grid().cell_volume(), 1.0 / p);
}

double integral(const ScalarField& u) {
  double s = 0.0;
  for (double v : u.values()) s += v;
  return s * u.grid().cell_volume();
}

ScalarField gradient_magnitude(const ScalarField& u) {
  const Grid& g = u.grid();
  ScalarField out(u.grid_ptr());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (int d = 0; d < g.dim(); ++d)
      for (int side : {-1, 1}) {
        const double diff = outward_difference(u, i, d, side);
        const double weight =
            g.neighbor(i, d, side) >= 0 ? 0.5 : g.boundary_gap(i, d, side) / g.spacing()[d];
        s += weight * diff * diff;
      }
    out[i] = std::sqrt(s);
  }
  return out;
}

double w1p_seminorm(const ScalarField& u, double p) {
  if (!(p >= 1.0)) throw PreconditionError("w1p_seminorm needs p >= 1");
  return lp_norm(gradient_magnitude(u), p);
}

ScalarField positive_part(const ScalarField& u) {
  return map_field(u, [](double v) { return v > 0.0 ? v : 0.0; });
}

double drift_lp_norm(const VectorField& E, double p) { return lp_norm(E.magnitude(), p); }

double sobolev_conjugate(double m, int N) { return m < N ? m * N / (N - m) : kInf; }

double second_conjugate(double m, int N) { return 2.0 * m < N ? m * N / (N - 2.0 * m) : kInf; }

double critical_exponent(int N) {
  require_3d_theory(N, "critical Sobolev exponent");
  return 2.0 * N / (N - 2.0);
}

double dual_critical_exponent(int N) {
  require_3d_theory(N, "dual critical exponent");
  return 2.0 * N / (N + 2.0);
}

Exponents exponents(double m, int N) {
  if (!(m >= 1.0)) throw PreconditionError("exponent m must be >= 1");
  return {N, m, sobolev_conjugate(m, N), second_conjugate(m, N)};
}

bool exponents_consistent(const Exponents& e) {
  const double ms = e.m * e.N / (e.N - e.m);
  const double mss = e.m * e.N / (e.N - 2.0 * e.m);
  if (e.m >= e.N) return std::isinf(e.m_star);
  if (std::abs(ms - e.m_star) > 1e-12 * ms) return false;
  const double again = sobolev_conjugate(e.m_star, e.N);
  if (2.0 * e.m >= e.N) return std::isinf(e.m_star_star) && std::isinf(again);
  return std::abs(mss - e.m_star_star) <= 1e-12 * mss && std::abs(again - mss) <= 1e-12 * mss;
}

double sharp_sobolev_constant(int N) {
  require_3d_theory(N, "sharp Sobolev constant");
  const double n = N;
  return std::sqrt(M_PI * n * (n - 2.0)) * std::pow(std::tgamma(n / 2.0) / std::tgamma(n), 1.0 / n);
}

double sobolev_quotient(const ScalarField& u) {
  const double den = lp_norm(u, critical_exponent(u.grid().dim()));
  return den > 0.0 ? w1p_seminorm(u, 2.0) / den : kInf;
}

SobolevConstant sobolev_constant_discrete(const GridPtr& grid, std::uint64_t seed) {
  const Grid& g = *grid;
  const int N = g.dim();
  require_3d_theory(N, "discrete Sobolev constant");

  SobolevConstant out;
  out.analytic = sharp_sobolev_constant(N);
  out.discrete = kInf;
  ScalarField best;
  auto consider = [&](const ScalarField& u, const std::string& label) {
    ++out.candidates;
    const double q = sobolev_quotient(u);
    if (q < out.discrete) {
      out.discrete = q;
      out.minimizer = label;
      best = u;
    }
  };

  // Discrete Laplacian whose quadratic form is exactly the discrete Dirichlet energy.
  ProblemSpec p;
  p.grid = grid;
  p.M = DiffusionTensorField::identity(grid);
  p.drift = zero_drift(grid);
  p.source = ScalarField(grid, 1.0);
  p.scheme = Scheme::Central;
  const Eigen::SparseMatrix<double> L = assemble(p).matrix;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> inverse;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>> cg;
  if (g.size() <= 40000) {
    ldlt.compute(L);
    inverse = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd { return ldlt.solve(b); };
  } else {
    cg.setTolerance(1e-10);
    cg.compute(L);
    inverse = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd { return cg.solve(b); };
  }
  {
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
    const Eigen::VectorXd v = inverse(one);
    consider(ScalarField(grid, std::vector<double>(v.data(), v.data() + v.size())), "poisson");
  }

  // Centers snap to lattice vertices and widths are multiples of h, so every
  // grid sees the same candidates relative to its own spacing.
  const ScalarField delta = distance_to_boundary(grid);
  const Point lo = g.shape().bbox_lower(), hi = g.shape().bbox_upper();
  std::vector<Point> centers;
  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Point mid{};
    for (int d = 0; d < N; ++d) mid[d] = 0.5 * (lo[d] + hi[d]);
    for (int attempt = 0; centers.size() < 4 && attempt < 1000; ++attempt) {
      Point c = mid;
      if (!centers.empty())
        for (int d = 0; d < N; ++d) c[d] = lo[d] + (0.25 + 0.5 * unit(rng)) * (hi[d] - lo[d]);
      for (int d = 0; d < N; ++d) {
        const double hd = g.spacing()[d];
        c[d] = lo[d] + std::round((c[d] - lo[d]) / hd) * hd;
      }
      if (g.shape().contains(c)) centers.push_back(c);
    }
  }
  double width = 0.0;
  for (int d = 0; d < N; ++d) width = std::max(width, hi[d] - lo[d]);

  for (std::size_t ci = 0; ci < centers.size(); ++ci) {
    const Point c = centers[ci];
    for (int k = 0; g.h() * std::pow(2.0, 0.5 * k) <= 0.5 * width; ++k) {
      const double sigma = g.h() * std::pow(2.0, 0.5 * k);
      ScalarField bubble(grid), gauss(grid);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double r2 = 0.0;
        for (int d = 0; d < N; ++d) r2 += (g.center(i)[d] - c[d]) * (g.center(i)[d] - c[d]);
        const double cutoff = delta[i] / (delta[i] + sigma);
        bubble[i] = std::pow(1.0 + r2 / (sigma * sigma), -(N - 2) / 2.0) * cutoff;
        gauss[i] = std::exp(-r2 / (sigma * sigma)) * cutoff;
      }
      const std::string tag = "c" + std::to_string(ci) + ",sigma=" + std::to_string(sigma);
      consider(bubble, "bubble:" + tag);
      consider(gauss, "gauss:" + tag);
    }
  }

  // Nonlinear inverse iteration u <- L^{-1}(|u|^(2*-2) u) from the best
  // candidate; every iterate is itself a candidate, so the value only drops.
  const double p2 = critical_exponent(N);
  Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(best.values().data(), static_cast<Eigen::Index>(g.size()));
  double last = out.discrete;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd rhs(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) rhs[i] = std::pow(std::abs(u[i]), p2 - 2.0) * u[i];
    u = inverse(rhs);
    const double scale = u.cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || !std::isfinite(scale)) break;
    u /= scale;
    consider(ScalarField(grid, std::vector<double>(u.data(), u.data() + u.size())), "inverse_iteration");
    const double q = sobolev_quotient(ScalarField(grid, std::vector<double>(u.data(), u.data() + u.size())));
    if (std::abs(last - q) <= 1e-9 * q) break;
    last = q;
  }
  return out;
}

double default_margin(double h, Scheme scheme) { return 0.02 + (scheme == Scheme::Central ? 0.0 : h); }

EstimateReport check_l1_divergence_bound(const ScalarField& u, const ScalarField& divE,
                                         const ScalarField& f, double margin) {
  double lhs = 0.0, rhs = 0.0, min_div = kInf;
  for (std::size_t i = 0; i < u.size(); ++i) {
    lhs += std::abs(u[i]) * divE[i];
    rhs += std::abs(f[i]);
    min_div = std::min(min_div, divE[i]);
  }
  const double vol = u.grid().cell_volume();
  EstimateReport r = make_report("l1_divergence", lhs * vol, rhs * vol, margin);
  r.metadata = {{"min_divE", min_div}, {"margin", margin}};
  if (min_div < 0.0) r.note = "divE has negative cells; bound not implied";
  return r;
}

EstimateReport check_lm_coercive_bound(const ScalarField& u, const ScalarField& f, double m,
                                       double c0, double margin) {
  if (!(c0 > 0.0)) throw PreconditionError("L^m coercive bound needs c0 > 0, got " + std::to_string(c0));
  if (!(m > 1.0)) throw PreconditionError("L^m coercive bound needs m > 1");
  const double Cm = m / (m - 1.0);
  EstimateReport r = make_report("lm_coercive", lp_norm(u, m), Cm * lp_norm(f, m) / c0, margin);
  const int N = u.grid().dim();
  r.metadata = {{"m", m}, {"m_star", sobolev_conjugate(m, N)}, {"m_star_star", second_conjugate(m, N)},
                {"C_m", Cm}, {"c0", c0}};
  return r;
}

EstimateReport check_linf_coercive_bound(const ScalarField& u, const ScalarField& f, double c0,
                                         double margin) {
  if (!(c0 > 0.0)) throw PreconditionError("L^inf coercive bound needs c0 > 0, got " + std::to_string(c0));
  EstimateReport r = make_report("linf_coercive", lp_norm(u, kInf), lp_norm(f, kInf) / c0, margin);
  r.metadata = {{"c0", c0}};
  return r;
}

GradientConstant calibrate_gradient_constant(const ScalarField& u, const ScalarField& f,
                                             const VectorField& E) {
  const int N = u.grid().dim();
  const double grad2 = std::pow(w1p_seminorm(u, 2.0), 2);
  const double fn2 = std::pow(lp_norm(f, dual_critical_exponent(N)), 2);
  const double en2 = std::pow(drift_lp_norm(E, N), 2);
  if (!(fn2 > 0.0)) throw PreconditionError("gradient calibration needs f != 0");
  return {grad2 / (en2 + fn2), grad2 / fn2};
}

GradientReports check_gradient_bound(const ScalarField& u, const ScalarField& f,
                                     const VectorField& E, double alpha_ell, double S2,
                                     const GradientConstant& C, double margin) {
  const int N = u.grid().dim();
  const double q = dual_critical_exponent(N);
  const double grad2 = std::pow(w1p_seminorm(u, 2.0), 2);
  const double fn2 = std::pow(lp_norm(f, q), 2);
  const double en2 = std::pow(drift_lp_norm(E, N), 2);

  GradientReports out;
  out.with_drift = make_report("gradient_with_drift", grad2, C.with_drift * (en2 + fn2), margin);
  out.with_drift.metadata = {{"C", C.with_drift}, {"E_LN_sq", en2}, {"f_norm_sq", fn2}};
  out.drift_free = make_report("gradient_drift_free", grad2, C.drift_free * fn2, margin);
  out.drift_free.metadata = {{"C", C.drift_free}, {"f_norm_sq", fn2}};

  const ScalarField up = positive_part(u);
  const double quotient = sobolev_quotient(up);
  const double S = std::min(S2, quotient);
  const double lhs = w1p_seminorm(up, 2.0);
  const double rhs = lp_norm(positive_part(f), q) / (alpha_ell * S);
  out.signed_bound = make_report("gradient_positive_part", lhs, rhs, margin);
  out.signed_bound.metadata = {{"S2", S2}, {"S_eff", S}, {"quotient_u_plus", quotient},
                               {"alpha", alpha_ell}};
  return out;
}

EstimateReport log_estimate_check(const ScalarField& u, const VectorField& E, const ScalarField& f,
                                  double alpha_ell, double S2, double margin) {
  const int N = u.grid().dim();
  const ScalarField w = map_field(u, [](double v) { return std::log1p(std::abs(v)); });
  const double lhs = std::pow(lp_norm(w, critical_exponent(N)), 2);
  const double quotient = sobolev_quotient(w);
  const double S = std::min(S2, quotient);
  const double e2 = std::pow(drift_lp_norm(E, 2.0), 2);
  const double f1 = lp_norm(f, 1.0);
  const double rhs = e2 / (S * S * alpha_ell * alpha_ell) + 2.0 * f1 / (S * S * alpha_ell);
  EstimateReport r = make_report("log_estimate", lhs, rhs, margin);
  r.metadata = {{"S2", S2}, {"S_eff", S}, {"E_L2_sq", e2}, {"f_L1", f1}, {"alpha", alpha_ell}};
  return r;
}

EstimateReport check_comparison(const ProblemSpec& problem, const ScalarField& f1,
                                const ScalarField& f2, double tol, const SolverOptions& opts) {
  for (std::size_t i = 0; i < f1.size(); ++i)
    if (f1[i] > f2[i]) throw PreconditionError("comparison needs f1 <= f2 cellwise");
  const SparseOperator op = assemble(problem);
  const SolveReport s1 = solve(op, f1, opts);
  const SolveReport s2 = solve(op, f2, opts);
  const bool exact = op.m_matrix_flag() && s1.method == "direct" && s2.method == "direct";
  const double used_tol = exact ? 0.0 : tol;
  double worst = -kInf;
  for (std::size_t i = 0; i < f1.size(); ++i) worst = std::max(worst, s1.u[i] - s2.u[i]);
  EstimateReport r;
  r.name = "comparison";
  r.lhs = worst;
  r.rhs = used_tol;
  r.pass = worst <= used_tol;
  r.slack = worst > 0.0 ? used_tol / worst : kInf;
  r.metadata = {{"tol", used_tol}, {"m_matrix", op.m_matrix_flag() ? 1.0 : 0.0}};
  r.note = "lhs = max(u1 - u2)";
  return r;
}

EstimateReport check_barrier(const ScalarField& u, const ScalarField& ubar,
                             const std::vector<char>& mask) {
  double worst = -kInf;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (mask[i]) {
      worst = std::max(worst, u[i] - ubar[i]);
      ++cells;
    }
  EstimateReport r;
  r.name = "barrier";
  r.lhs = cells ? worst : 0.0;
  r.rhs = 0.0;
  r.pass = r.lhs <= 0.0;
  r.slack = kInf;
  r.metadata = {{"cells", static_cast<double>(cells)}};
  r.note = "lhs = max over band of (u - ubar)";
  return r;
}

FlatnessFit flatness_fit(const ScalarField& u, const ScalarField& delta, int bands) {
  if (bands < 3) throw PreconditionError("flatness_fit needs at least 3 bands");
  if (lp_norm(u, kInf) == 0.0) throw PreconditionError("flatness_fit: u is identically zero");
  double d0 = kInf;
  for (double d : delta.values()) d0 = std::min(d0, d);

  std::map<int, FlatnessBand> by_band;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const int k = static_cast<int>(std::floor(std::log2(delta[i] / d0) + 1e-12));
    FlatnessBand& b = by_band[k];
    if (b.cells == 0) {
      b.delta_lo = d0 * std::ldexp(1.0, k);
      b.delta_hi = 2.0 * b.delta_lo;
    }
    ++b.cells;
    if (std::abs(u[i]) > b.max_abs_u || b.cells == 1) {
      b.max_abs_u = std::abs(u[i]);
      b.delta_at_max = delta[i];
    }
  }
  FlatnessFit fit;
  for (const auto& [k, b] : by_band) {
    if (b.max_abs_u <= 0.0) continue;
    fit.bands.push_back(b);
    if (static_cast<int>(fit.bands.size()) == bands) break;
  }
  if (static_cast<int>(fit.bands.size()) < 3)
    throw ResolutionError("flatness_fit: only " + std::to_string(fit.bands.size()) +
                          " nonempty dyadic bands");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(fit.bands.size());
  for (const FlatnessBand& b : fit.bands) {
    const double x = std::log(b.delta_at_max), y = std::log(b.max_abs_u);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.alpha_hat = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

EstimateReport hardy_check(const GridPtr& grid, double margin) {
  const Grid& g = *grid;
  const int N = g.dim();
  require_3d_theory(N, "Hardy check");
  const ScalarField delta = distance_to_boundary(grid);
  const double classical = std::pow((N - 2) / 2.0, 2);
  const double alternative = std::pow((N - 2) / static_cast<double>(N), 2);

  double best = kInf;
  for (double t : {0.5, 0.75, 0.9, 0.97})
    for (double sigma : {g.h(), 2.0 * g.h(), 4.0 * g.h()}) {
      const double beta = t * (N - 2) / 2.0;
      ScalarField u(grid);
      double weighted = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double r2 = std::pow(norm(g.center(i), N), 2);
        if (r2 == 0.0) throw PreconditionError("Hardy check: a cell is centered at the origin");
        u[i] = std::pow(r2 + sigma * sigma, -beta / 2.0) * delta[i];
        weighted += u[i] * u[i] / r2;
      }
      weighted *= g.cell_volume();
      best = std::min(best, std::pow(w1p_seminorm(u, 2.0), 2) / weighted);
    }
  EstimateReport r = make_report("hardy", classical, best, margin);
  r.metadata = {{"empirical", best}, {"classical", classical}, {"alternative_constant", alternative},
                {"alternative_constant_holds", alternative <= best ? 1.0 : 0.0}};
  r.note = "lhs = ((N-2)/2)^2, rhs = smallest discrete Hardy quotient";
  return r;
}

}  // namespace driftlab
