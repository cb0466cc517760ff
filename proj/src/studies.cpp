#include "driftlab/studies.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>

#include "driftlab/errors.hpp"
#include "driftlab/estimates.hpp"
#include "driftlab/oracle.hpp"

namespace driftlab {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kControlTolerance = 0.05;

// Runs fn(0..count-1) on up to `threads` workers and returns results in index
// order. The first exception (by index) is rethrown after all workers join.
template <class T, class Fn>
std::vector<T> run_rows(std::size_t count, int threads, Fn&& fn) {
  std::vector<std::optional<T>> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> result;
  result.reserve(count);
  for (auto& o : out) result.push_back(std::move(*o));
  return result;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }
std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : kNA; }
std::string fmt_pass(const std::optional<bool>& v) { return v ? fmt_bool(*v) : kNA; }

std::string fmt_ell(double ell) { return std::isinf(ell) ? "inf" : fmt(ell); }

// One solve with its operator diagnostics; solver failures are kept, not thrown.
struct SolveRecord {
  std::string label;
  int grid = 0;
  std::size_t unknowns = 0;
  Scheme scheme = Scheme::Upwind;
  bool m_matrix = false;
  double max_peclet = 0.0;
  std::optional<SolveReport> report;
  std::string status = "ok";

  bool ok() const { return report.has_value(); }
  const ScalarField& u() const { return report->u; }
};

SolveRecord run_solve(const std::string& label, int n, const ProblemSpec& problem, const SolverOptions& opts) {
  SolveRecord rec;
  rec.label = label;
  rec.grid = n;
  rec.unknowns = problem.grid->size();
  const SparseOperator op = assemble(problem);
  rec.scheme = op.scheme_used;
  rec.m_matrix = op.m_matrix_flag();
  rec.max_peclet = op.max_peclet;
  try {
    rec.report = solve(op, problem.source, opts);
  } catch (const SolverError& e) {
    rec.status = std::string("solver_failure: ") + e.what();
  }
  return rec;
}

Table solves_table(const std::vector<SolveRecord>& records) {
  Table t{"solves",
          {"label", "grid", "unknowns", "scheme", "method", "iterations", "relative_residual", "m_matrix",
           "max_peclet", "status"},
          {}};
  for (const SolveRecord& r : records)
    t.rows.push_back({r.label, std::to_string(r.grid), std::to_string(r.unknowns), to_string(r.scheme),
                      r.ok() ? r.report->method : kNA, r.ok() ? std::to_string(r.report->iterations) : kNA,
                      r.ok() ? fmt(r.report->relative_residual) : kNA, fmt_bool(r.m_matrix), fmt(r.max_peclet),
                      r.status});
  return t;
}

void note_solver_failures(StudyResult& res, const std::vector<SolveRecord>& records) {
  for (const SolveRecord& r : records)
    if (!r.ok()) {
      res.solver_failure = true;
      res.failures.push_back(r.label + " grid " + std::to_string(r.grid) + ": " + r.status);
    }
}

void record(StudyResult& res, const std::optional<bool>& pass, const std::string& what) {
  if (pass && !*pass) {
    res.all_pass = false;
    res.failures.push_back(what);
  }
}

std::size_t nearest_cell(const Grid& g, const Point& x) {
  std::size_t best = 0;
  double bd = kInf;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double d2 = 0.0;
    for (int d = 0; d < g.dim(); ++d) d2 += std::pow(g.center(i)[d] - x[d], 2);
    if (d2 < bd - 1e-15) {
      bd = d2;
      best = i;
    }
  }
  return best;
}

Point domain_mid(const DomainShape& s) {
  Point m{};
  for (int d = 0; d < s.dim; ++d) m[d] = 0.5 * (s.bbox_lower()[d] + s.bbox_upper()[d]);
  return m;
}

bool origin_ball(const DomainShape& s) {
  if (s.kind != DomainKind::Ball) return false;
  for (int d = 0; d < s.dim; ++d)
    if (s.center[d] != 0.0) return false;
  return true;
}

// Scale applied by normalization on this grid (1 when not normalizing).
double source_scale(const ScenarioConfig& cfg, const GridPtr& grid) {
  if (!cfg.source.normalize) return 1.0;
  SourceConfig raw = cfg.source;
  raw.normalize = false;
  const ScalarField f = build_source(raw, grid, cfg.drift);
  double mass = 0.0;
  for (double v : f.values()) mass += std::abs(v);
  return 1.0 / (mass * grid->cell_volume());
}

RadialProfile oracle_profile(const ScenarioConfig& cfg, double A) {
  if (!origin_ball(cfg.domain)) throw ConfigError("config field 'domain': the radial oracle needs a ball centered at 0");
  RadialProblem rp;
  rp.N = cfg.domain.dim;
  rp.radius = cfg.domain.radius;
  rp.A = A;
  rp.f = radial_source_profile(cfg.source);
  rp.cells = cfg.params.oracle_cells;
  return radial_solve(rp);
}

double relative_l2(const ScalarField& u, const ScalarField& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    num += std::pow(u[i] - ref[i], 2);
    den += ref[i] * ref[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

ScalarField difference(const ScalarField& a, const ScalarField& b) {
  ScalarField d = a;
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= b[i];
  return d;
}

EigenpairPtr eigenpair_for(const ScenarioConfig& cfg, const GridPtr& grid) {
  if (cfg.drift.family != "boundary_singular") return nullptr;
  return std::make_shared<const Eigenpair>(principal_eigenpair(grid));
}

// ---------------------------------------------------------------- single solve

StudyResult single_solve(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  const auto records = run_rows<SolveRecord>(cfg.grids.size(), opts.threads, [&](std::size_t k) {
    const GridPtr grid = build_grid(cfg.domain, cfg.grids[k]);
    const BuiltProblem bp = build_problem(cfg, grid);
    return run_solve("solve", cfg.grids[k], bp.problem, cfg.solver);
  });
  Table t{"solve",
          {"grid", "unknowns", "method", "iterations", "relative_residual", "m_matrix", "u_center", "u_min", "u_max",
           "l1_norm", "l2_norm", "linf_norm", "h1_seminorm", "status"},
          {}};
  for (const SolveRecord& r : records) {
    std::vector<std::string> row{std::to_string(r.grid), std::to_string(r.unknowns)};
    if (r.ok()) {
      const ScalarField& u = r.u();
      const std::size_t c = nearest_cell(u.grid(), domain_mid(cfg.domain));
      for (const std::string& s :
           {r.report->method, std::to_string(r.report->iterations), fmt(r.report->relative_residual),
            fmt_bool(r.m_matrix), fmt(u[c]), fmt(u.min()), fmt(u.max()), fmt(lp_norm(u, 1.0)), fmt(lp_norm(u, 2.0)),
            fmt(lp_norm(u, kInf)), fmt(w1p_seminorm(u, 2.0)), r.status})
        row.push_back(s);
    } else {
      for (int i = 0; i < 3; ++i) row.push_back(kNA);
      row.push_back(fmt_bool(r.m_matrix));
      for (int i = 0; i < 7; ++i) row.push_back(kNA);
      row.push_back(r.status);
    }
    t.rows.push_back(std::move(row));
  }
  res.tables.push_back(std::move(t));
  note_solver_failures(res, records);
  return res;
}

// ----------------------------------------------------------------------- decay

StudyResult decay_study(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  const auto& As = cfg.params.A;
  const std::size_t G = cfg.grids.size();
  const int N = cfg.domain.dim;

  std::vector<GridPtr> grids;
  for (int n : cfg.grids) grids.push_back(build_grid(cfg.domain, n));

  struct Cell {
    SolveRecord rec;
    std::optional<double> weighted, F, l1, oracle_err;
  };
  // Oracle profiles depend on A only; the tridiagonal solves are cheap.
  std::vector<std::optional<RadialProfile>> oracles(As.size());
  if (cfg.params.oracle)
    for (std::size_t a = 0; a < As.size(); ++a) oracles[a] = oracle_profile(cfg, As[a]);

  const auto cells = run_rows<Cell>(As.size() * G, opts.threads, [&](std::size_t idx) {
    const std::size_t a = idx / G, k = idx % G;
    ScenarioConfig c = cfg;
    c.drift.A = As[a];
    const BuiltProblem bp = build_problem(c, grids[k]);
    Cell out;
    out.rec = run_solve("A=" + fmt(As[a]), cfg.grids[k], bp.problem, cfg.solver);
    if (!out.rec.ok()) return out;
    const ScalarField& u = out.rec.u();
    const Grid& g = *grids[k];
    double w = 0.0, F = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = norm(g.center(i), N);
      w += std::abs(u[i]) / (r * r);
      F += std::abs(bp.problem.source[i]);
    }
    out.weighted = w * g.cell_volume();
    out.F = F * g.cell_volume();
    out.l1 = lp_norm(u, 1.0);
    if (oracles[a]) {
      ScalarField ref = oracles[a]->to_grid(grids[k]);
      const double s = source_scale(c, grids[k]);
      for (std::size_t i = 0; i < ref.size(); ++i) ref[i] *= s;
      out.oracle_err = relative_l2(u, ref);
    }
    return out;
  });

  const double h = grids.back()->h();
  const double margin = cfg.params.margin + h;
  Table t{"decay", {"A", "integral_u_over_x2", "bound", "l1_norm", "pass"}, {}};
  std::vector<std::pair<double, double>> l1_by_A;
  bool f_nonneg = true;
  {
    const BuiltProblem bp = build_problem(cfg, grids.back());
    f_nonneg = bp.problem.source.min() >= 0.0;
  }
  json rows = json::array();
  for (std::size_t a = 0; a < As.size(); ++a) {
    const Cell& c = cells[a * G + G - 1];
    std::optional<double> bound;
    std::optional<bool> pass;
    if (As[a] > 0.0 && c.F) bound = *c.F / (As[a] * (N - 2));
    if (bound && c.weighted) pass = *c.weighted <= *bound * (1.0 + margin);
    if (!c.rec.ok()) pass = false;
    t.rows.push_back({fmt(As[a]), fmt_opt(c.weighted), fmt_opt(bound), fmt_opt(c.l1), fmt_pass(pass)});
    record(res, pass, "decay bound at A=" + fmt(As[a]));
    if (c.l1) l1_by_A.emplace_back(As[a], *c.l1);
    rows.push_back({{"A", As[a]}, {"ratio_to_bound", bound && c.weighted ? json(*c.weighted / *bound) : json()}});
  }
  res.tables.push_back(std::move(t));

  std::sort(l1_by_A.begin(), l1_by_A.end());
  bool decreasing = true;
  for (std::size_t i = 1; i < l1_by_A.size(); ++i)
    if (!(l1_by_A[i].second < l1_by_A[i - 1].second)) decreasing = false;
  res.meta["l1_strictly_decreasing"] = decreasing;
  res.meta["source_nonnegative"] = f_nonneg;
  res.meta["margin"] = margin;
  res.meta["rows"] = rows;
  if (f_nonneg && l1_by_A.size() > 1) record(res, decreasing, "l1 norm not strictly decreasing in A");

  if (cfg.params.oracle) {
    Table o{"decay_oracle", {"A", "grid", "oracle_rel_l2", "pass"}, {}};
    for (std::size_t a = 0; a < As.size(); ++a)
      for (std::size_t k = 0; k < G; ++k) {
        const Cell& c = cells[a * G + k];
        std::optional<bool> pass;
        if (k == G - 1) pass = c.oracle_err && *c.oracle_err < cfg.params.oracle_tolerance;
        o.rows.push_back({fmt(As[a]), std::to_string(cfg.grids[k]), fmt_opt(c.oracle_err), fmt_pass(pass)});
        record(res, pass, "oracle agreement at A=" + fmt(As[a]));
      }
    res.tables.push_back(std::move(o));
    res.meta["oracle_tolerance"] = cfg.params.oracle_tolerance;
  }

  std::vector<SolveRecord> recs;
  for (const Cell& c : cells) recs.push_back(c.rec);
  res.tables.push_back(solves_table(recs));
  note_solver_failures(res, recs);
  return res;
}

// -------------------------------------------------------------------- flatness

bool compact_source(const SourceConfig& s) { return s.kind != "distance_power" && s.kind != "constant" && s.kind != "sine"; }

struct FlatRow {
  std::string kind;  // drift | control | barrier
  std::size_t grid_index = 0;
  double ell = kInf;
  SolveRecord rec;
  std::optional<double> alpha_hat, linf, linf_bound;
  std::optional<bool> barrier;
  std::string note;
  json barrier_meta;
};

StudyResult flatness_study(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  const StudyParams& P = cfg.params;
  const double gamma = cfg.drift.gamma;
  const bool compact = compact_source(cfg.source);
  const double alpha_target = compact ? gamma + 1.0 : gamma + 2.0 - cfg.source.omega;

  std::vector<GridPtr> grids;
  std::vector<EigenpairPtr> pairs;
  for (int n : cfg.grids) {
    grids.push_back(build_grid(cfg.domain, n));
    pairs.push_back(std::make_shared<const Eigenpair>(principal_eigenpair(grids.back())));
  }
  const std::size_t G = grids.size();

  std::vector<FlatRow> plan;
  auto planned = [&](const char* kind, std::size_t k, double ell) {
    FlatRow r;
    r.kind = kind;
    r.grid_index = k;
    r.ell = ell;
    plan.push_back(r);
  };
  for (std::size_t k = 0; k < G; ++k) planned("drift", k, kInf);
  if (P.control)
    for (std::size_t k = 0; k < G; ++k) planned("control", k, kInf);
  if (compact)
    for (double ell : P.barrier_ells) planned("barrier", G - 1, ell);

  const auto rows = run_rows<FlatRow>(plan.size(), opts.threads, [&](std::size_t idx) {
    FlatRow row = plan[idx];
    const GridPtr& grid = grids[row.grid_index];
    ScenarioConfig c = cfg;
    if (row.kind == "control") {
      c.drift = DriftConfig{};
    } else if (row.kind == "barrier") {
      c.drift.ell = row.ell;
      c.drift.ell_grid_factor.reset();
    }
    const BuiltProblem bp = build_problem(c, grid, row.kind == "control" ? nullptr : pairs[row.grid_index]);
    if (row.kind != "control")
      row.ell = c.drift.ell_grid_factor ? *c.drift.ell_grid_factor / grid->h() : c.drift.ell;
    row.rec = run_solve(row.kind, cfg.grids[row.grid_index], bp.problem, cfg.solver);
    if (!row.rec.ok()) return row;
    const ScalarField& u = row.rec.u();
    const ScalarField delta = distance_to_boundary(grid);
    try {
      row.alpha_hat = flatness_fit(u, delta, P.bands).alpha_hat;
    } catch (const ResolutionError& e) {
      row.note = e.what();
    }
    row.linf = lp_norm(u, kInf);
    const double c0 = bp.problem.drift.c0;
    const double fmax = lp_norm(bp.problem.source, kInf);
    if (row.kind != "control" && c0 > 0.0) row.linf_bound = fmax / c0;

    if (row.kind == "barrier") {
      // ubar = (C/alpha)(phi + 1/ell)^alpha on the band next to the boundary
      // where f vanishes and phi <= (1/2)((alpha-1)/gamma)^(-1/gamma).
      const double alpha = alpha_target;
      const double need = 2.0 * std::pow((alpha - 1.0) / gamma, 1.0 / gamma);
      row.barrier_meta["admissible_ell_min"] = need;
      if (row.ell < need) {
        row.note = "ell below the admissible bound";
        return row;
      }
      const ScalarField& phi = pairs[row.grid_index]->phi1;
      const ScalarField& f = bp.problem.source;
      double eta = kInf;
      for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i] != 0.0) eta = std::min(eta, delta[i]);
      const double h = grid->h();
      const double phi_cap = 0.5 * std::pow((alpha - 1.0) / gamma, -1.0 / gamma);
      double min_phi_at_eta = kInf, min_phi_inside = kInf;
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (delta[i] >= eta) min_phi_inside = std::min(min_phi_inside, std::pow(phi[i], alpha));
        if (delta[i] >= eta && delta[i] < eta + h) min_phi_at_eta = std::min(min_phi_at_eta, std::pow(phi[i], alpha));
      }
      const double C = alpha / min_phi_at_eta + (alpha / c0) * fmax / min_phi_inside;
      ScalarField ubar(grid);
      std::vector<char> mask(u.size(), 0);
      for (std::size_t i = 0; i < u.size(); ++i) {
        ubar[i] = C / alpha * std::pow(phi[i] + 1.0 / row.ell, alpha);
        mask[i] = delta[i] < eta && phi[i] <= phi_cap;
      }
      const EstimateReport rep = check_barrier(u, ubar, mask);
      row.barrier = rep.pass;
      row.barrier_meta["eta"] = eta;
      row.barrier_meta["C_alpha"] = C;
      row.barrier_meta["max_u_minus_ubar"] = rep.lhs;
      row.barrier_meta["band_cells"] = rep.meta("cells");
    }
    return row;
  });

  Table t{"flatness", {"case", "grid", "gamma", "ell", "alpha_hat", "barrier_dominated", "linf", "linf_bound", "pass"}, {}};
  json notes = json::array();
  std::vector<double> drift_alphas;
  for (const FlatRow& r : rows) {
    std::optional<bool> pass;
    const bool finest = r.grid_index == G - 1;
    if (!r.rec.ok()) {
      pass = false;
    } else if (r.kind == "control") {
      pass = r.alpha_hat && std::abs(*r.alpha_hat - 1.0) <= kControlTolerance;
    } else {
      bool ok = true;
      if (r.linf_bound) ok = ok && *r.linf <= *r.linf_bound * (1.0 + P.margin);
      if (r.kind == "drift" && finest) {
        if (!r.alpha_hat) ok = false;
        else if (compact) ok = ok && *r.alpha_hat >= alpha_target - P.fit_tolerance;
        else ok = ok && *r.alpha_hat > 1.0 && *r.alpha_hat <= alpha_target + P.fit_tolerance;
      }
      if (r.kind == "barrier" && r.barrier) ok = ok && *r.barrier;
      pass = ok;
    }
    if (r.kind == "drift" && r.alpha_hat) drift_alphas.push_back(*r.alpha_hat);
    const bool control = r.kind == "control";
    t.rows.push_back({r.kind, std::to_string(cfg.grids[r.grid_index]), control ? kNA : fmt(gamma),
                      control ? kNA : fmt_ell(r.ell), fmt_opt(r.alpha_hat),
                      r.kind == "barrier" ? fmt_pass(r.barrier) : kNA, fmt_opt(r.linf), fmt_opt(r.linf_bound),
                      fmt_pass(pass)});
    record(res, pass, "flatness " + r.kind + " grid " + std::to_string(cfg.grids[r.grid_index]) +
                          (r.note.empty() ? "" : ": " + r.note));
    json n = {{"case", r.kind}, {"grid", cfg.grids[r.grid_index]}, {"note", r.note}};
    if (!r.barrier_meta.is_null()) n["barrier"] = r.barrier_meta;
    notes.push_back(n);
  }
  bool increasing = true;
  for (std::size_t i = 1; i < drift_alphas.size(); ++i)
    if (drift_alphas[i] < drift_alphas[i - 1]) increasing = false;
  res.meta["alpha_target"] = alpha_target;
  res.meta["alpha_range"] = compact ? json{alpha_target - P.fit_tolerance, kInf} : json{1.0, alpha_target + P.fit_tolerance};
  res.meta["alpha_hat_increasing"] = increasing;
  res.meta["control_tolerance"] = kControlTolerance;
  res.meta["rows"] = notes;
  res.tables.push_back(std::move(t));

  std::vector<SolveRecord> recs;
  for (const FlatRow& r : rows) recs.push_back(r.rec);
  res.tables.push_back(solves_table(recs));
  note_solver_failures(res, recs);
  return res;
}

// ----------------------------------------------------------------- convergence

StudyResult convergence_study(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  const std::string& exact = cfg.params.exact;
  std::optional<RadialProfile> oracle;
  if (exact == "radial_oracle") {
    if (cfg.drift.family != "point_singular" && cfg.drift.family != "zero")
      throw ConfigError("config field 'params.exact': radial_oracle needs a point_singular or zero drift");
    oracle = oracle_profile(cfg, cfg.drift.family == "zero" ? 0.0 : cfg.drift.A);
  } else if (exact == "sine_product") {
    if (cfg.source.kind != "manufactured_sine")
      throw ConfigError("config field 'params.exact': sine_product needs the manufactured_sine source");
    if (cfg.diffusion.kind != "identity") throw ConfigError("config field 'diffusion.kind': sine_product needs identity");
  } else if (exact == "poisson_constant_1d") {
    if (cfg.domain.dim != 1 || cfg.source.kind != "constant" || cfg.drift.family != "zero" ||
        cfg.diffusion.kind != "identity")
      throw ConfigError("config field 'params.exact': poisson_constant_1d needs 1D, constant f, zero drift, identity M");
  }

  struct Row {
    SolveRecord rec;
    double h = 0.0;
    std::optional<double> e2, einf;
  };
  const auto rows = run_rows<Row>(cfg.grids.size(), opts.threads, [&](std::size_t k) {
    const GridPtr grid = build_grid(cfg.domain, cfg.grids[k]);
    const BuiltProblem bp = build_problem(cfg, grid);
    Row r;
    r.h = grid->h();
    r.rec = run_solve("convergence", cfg.grids[k], bp.problem, cfg.solver);
    if (!r.rec.ok()) return r;
    ScalarField ref;
    if (oracle) {
      ref = oracle->to_grid(grid);
      const double s = source_scale(cfg, grid);
      for (std::size_t i = 0; i < ref.size(); ++i) ref[i] *= s;
    } else if (exact == "sine_product") {
      ref = sample(grid, [&](const Point& x) { return manufactured_solution(cfg.domain, x); });
    } else {
      const double a = cfg.domain.lower[0], b = cfg.domain.upper[0], v = cfg.source.value;
      ref = sample(grid, [=](const Point& x) { return 0.5 * v * (x[0] - a) * (b - x[0]); });
    }
    const ScalarField e = difference(r.rec.u(), ref);
    r.e2 = lp_norm(e, 2.0);
    r.einf = lp_norm(e, kInf);
    return r;
  });

  Table t{"convergence", {"grid", "h", "error_l2", "error_linf", "order_l2", "order_linf"}, {}};
  std::optional<double> last_order;
  bool monotone = true;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::optional<double> o2, oinf;
    if (k > 0 && rows[k].e2 && rows[k - 1].e2) {
      const double lh = std::log(rows[k - 1].h / rows[k].h);
      o2 = std::log(*rows[k - 1].e2 / *rows[k].e2) / lh;
      oinf = std::log(*rows[k - 1].einf / *rows[k].einf) / lh;
      last_order = o2;
      if (!(*rows[k].e2 < *rows[k - 1].e2)) monotone = false;
    }
    t.rows.push_back({std::to_string(cfg.grids[k]), fmt(rows[k].h), fmt_opt(rows[k].e2), fmt_opt(rows[k].einf),
                      fmt_opt(o2), fmt_opt(oinf)});
  }
  res.tables.push_back(std::move(t));
  res.meta["error_monotone"] = monotone;
  res.meta["observed_order"] = last_order ? json(*last_order) : json();
  record(res, monotone, "error not decreasing under refinement");
  if (cfg.params.expected_order) {
    const bool ok = last_order && std::abs(*last_order - *cfg.params.expected_order) <= cfg.params.order_tolerance;
    res.meta["expected_order"] = *cfg.params.expected_order;
    res.meta["order_pass"] = ok;
    record(res, ok, "observed order outside the expected band");
  }

  std::vector<SolveRecord> recs;
  for (const Row& r : rows) recs.push_back(r.rec);
  res.tables.push_back(solves_table(recs));
  note_solver_failures(res, recs);
  return res;
}

// --------------------------------------------------------------- approximation

StudyResult approximation_study(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  const StudyParams& P = cfg.params;
  const int n = cfg.grids.back();
  const GridPtr grid = build_grid(cfg.domain, n);
  const EigenpairPtr pair = eigenpair_for(cfg, grid);

  // Sweep values; +inf stands for the unregularized member.
  std::vector<double> values;
  if (P.sweep == "mollify") {
    for (int m : P.mollify) values.push_back(m);
  } else if (P.sweep == "truncate") {
    values = P.truncate;
  } else {
    values = P.ells;
  }
  if (P.control && P.sweep != "ell") values.push_back(kInf);

  struct Row {
    double value = 0.0;
    SolveRecord rec;
    double sup = 0.0, c0 = 0.0;
    std::optional<double> l2, w12, lm;
  };
  const auto rows = run_rows<Row>(values.size(), opts.threads, [&](std::size_t k) {
    ScenarioConfig c = cfg;
    const double v = values[k];
    if (P.sweep == "mollify") {
      if (std::isinf(v)) c.drift.mollify.reset();
      else c.drift.mollify = static_cast<int>(v);
    } else if (P.sweep == "ell") {
      c.drift.ell = v;
      c.drift.ell_grid_factor.reset();
    }
    BuiltProblem bp = build_problem(c, grid, pair);
    if (P.sweep == "truncate" && !std::isinf(v)) bp.problem.source = truncate_scalar(bp.problem.source, v);
    Row r;
    r.value = v;
    r.sup = bp.problem.drift.sup_norm();
    r.c0 = bp.problem.drift.c0;
    r.rec = run_solve(P.sweep + "=" + fmt_ell(v), n, bp.problem, cfg.solver);
    if (!r.rec.ok()) return r;
    r.l2 = lp_norm(r.rec.u(), 2.0);
    r.w12 = w1p_seminorm(r.rec.u(), 2.0);
    r.lm = lp_norm(r.rec.u(), P.lm_exponent);
    return r;
  });

  // Reference: the most resolved member (largest parameter).
  std::size_t ref = 0;
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (rows[k].value > rows[ref].value) ref = k;
  const char* pname = P.sweep == "mollify" ? "n" : P.sweep == "truncate" ? "k" : "ell";

  Table t{"approximation",
          {"parameter", "value", "grid", "sup_drift", "l2_norm", "w12_seminorm", "lm_norm", "diff_to_ref_l2", "c0"},
          {}};
  std::vector<std::optional<double>> diffs(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].rec.ok() && rows[ref].rec.ok())
      diffs[k] = lp_norm(difference(rows[k].rec.u(), rows[ref].rec.u()), 2.0);
    t.rows.push_back({pname, fmt_ell(rows[k].value), std::to_string(n), fmt(rows[k].sup), fmt_opt(rows[k].l2),
                      fmt_opt(rows[k].w12), fmt_opt(rows[k].lm), fmt_opt(diffs[k]), fmt(rows[k].c0)});
  }
  res.tables.push_back(std::move(t));
  res.meta["reference"] = fmt_ell(rows[ref].value);
  res.meta["lm_exponent"] = P.lm_exponent;

  if (P.sweep == "mollify") {
    double wmin = kInf, wmax = 0.0, smin = kInf, smax = 0.0;
    bool complete = true;
    for (const Row& r : rows) {
      if (std::isinf(r.value)) continue;
      if (!r.w12) {
        complete = false;
        continue;
      }
      wmin = std::min(wmin, *r.w12);
      wmax = std::max(wmax, *r.w12);
      smin = std::min(smin, r.sup);
      smax = std::max(smax, r.sup);
    }
    const double variation = wmax > 0.0 ? (wmax - wmin) / wmax : kInf;
    const double ratio = smin > 0.0 ? smax / smin : kInf;
    res.meta["w12_variation"] = variation;
    res.meta["sup_drift_ratio"] = ratio;
    res.meta["variation_tolerance"] = P.variation_tolerance;
    res.meta["sup_ratio_min"] = P.sup_ratio_min;
    record(res, complete && variation < P.variation_tolerance, "W12 column varies beyond tolerance");
    record(res, complete && ratio > P.sup_ratio_min, "sup|E_n| range below the required ratio");
  } else {
    // Distances to the reference shrink as the parameter grows.
    std::vector<std::pair<double, double>> d;
    for (std::size_t k = 0; k < rows.size(); ++k)
      if (k != ref && diffs[k]) d.emplace_back(rows[k].value, *diffs[k]);
    std::sort(d.begin(), d.end());
    bool decreasing = true;
    for (std::size_t k = 1; k < d.size(); ++k)
      if (d[k].second > d[k - 1].second) decreasing = false;
    res.meta["diff_to_ref_nonincreasing"] = decreasing;
    record(res, decreasing, "distance to the reference not decreasing along the sweep");
  }

  std::vector<SolveRecord> recs;
  for (const Row& r : rows) recs.push_back(r.rec);
  res.tables.push_back(solves_table(recs));
  note_solver_failures(res, recs);
  return res;
}

// ------------------------------------------------------------------- estimates

struct EstRow {
  EstimateReport report;
  std::optional<bool> pass;  // empty when the check is informational or skipped
};

StudyResult estimate_suite(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  const StudyParams& P = cfg.params;
  const int N = cfg.domain.dim;

  struct GridRun {
    GridPtr grid;
    BuiltProblem bp;
    SolveRecord rec;
    std::vector<EstRow> checks;  // grid-local checks
  };
  auto runs = run_rows<GridRun>(cfg.grids.size(), opts.threads, [&](std::size_t k) {
    GridRun run;
    run.grid = build_grid(cfg.domain, cfg.grids[k]);
    run.bp = build_problem(cfg, run.grid);
    run.rec = run_solve("estimates", cfg.grids[k], run.bp.problem, cfg.solver);
    if (!run.rec.ok()) return run;
    const ProblemSpec& p = run.bp.problem;
    const ScalarField& u = run.rec.u();
    const ScalarField& f = p.source;
    const double h = run.grid->h();
    const double c0 = p.drift.c0;
    auto add = [&](EstimateReport r, std::optional<bool> asserted) {
      if (asserted) asserted = r.pass;
      run.checks.push_back({std::move(r), asserted});
    };

    if (f.min() >= 0.0) {
      const bool exact = run.rec.m_matrix && run.rec.report->method == "direct";
      EstimateReport r;
      r.name = "nonnegativity";
      r.lhs = -u.min();
      r.rhs = exact ? 0.0 : 1e-12 * lp_norm(u, kInf);
      r.pass = r.lhs <= r.rhs;
      r.slack = r.lhs > 0.0 ? r.rhs / r.lhs : kInf;
      r.metadata = {{"m_matrix", run.rec.m_matrix ? 1.0 : 0.0}, {"zero_tolerance", exact ? 1.0 : 0.0}};
      r.note = "lhs = -min u";
      add(r, run.rec.m_matrix ? std::optional<bool>(true) : std::nullopt);
    }
    if (c0 >= 0.0) add(check_l1_divergence_bound(u, p.drift.divE, f, default_margin(h, run.rec.scheme)), true);
    if (c0 > 0.0) {
      for (double m : P.m) add(check_lm_coercive_bound(u, f, m, c0, P.margin), true);
      add(check_linf_coercive_bound(u, f, c0, P.margin), true);
    }
    if (N >= 3) {
      const SobolevConstant S = sobolev_constant_discrete(run.grid, cfg.seed);
      const GradientReports gr = check_gradient_bound(u, f, p.drift.E, p.M.alpha_ell(), S.discrete, {}, P.margin);
      EstimateReport sb = gr.signed_bound;
      sb.metadata.emplace_back("S2_analytic", S.analytic);
      add(sb, true);
      add(log_estimate_check(u, p.drift.E, f, p.M.alpha_ell(), S.discrete, P.margin), true);
      add(hardy_check(run.grid, P.margin), true);
    }
    try {
      add(check_divergence_sign_distributional(p.drift, P.trials, cfg.seed), c0 >= 0.0 ? std::optional<bool>(true)
                                                                                        : std::nullopt);
    } catch (const ResolutionError& e) {
      EstimateReport r;
      r.name = "divergence_sign_distributional";
      r.lhs = r.rhs = std::numeric_limits<double>::quiet_NaN();
      r.note = std::string("skipped: ") + e.what();
      run.checks.push_back({r, std::nullopt});
    }
    if (run.bp.eigenpair) add(comparison_bounds_check(*run.bp.eigenpair, run.grid), true);
    return run;
  });

  // Gradient constants are fitted on the coarsest solved grid and then frozen.
  std::optional<GradientConstant> C;
  Table t{"estimates", {"grid", "name", "lhs", "rhs", "slack", "pass", "info"}, {}};
  for (std::size_t k = 0; k < runs.size(); ++k) {
    GridRun& run = runs[k];
    const std::string gs = std::to_string(cfg.grids[k]);
    if (!run.rec.ok()) {
      t.rows.push_back({gs, "solve", kNA, kNA, kNA, "false", run.rec.status});
      continue;
    }
    std::vector<EstRow> all = run.checks;
    if (N >= 3 && lp_norm(run.bp.problem.source, 1.0) > 0.0) {
      const ProblemSpec& p = run.bp.problem;
      if (!C) C = calibrate_gradient_constant(run.rec.u(), p.source, p.drift.E);
      const GradientReports gr =
          check_gradient_bound(run.rec.u(), p.source, p.drift.E, p.M.alpha_ell(), kInf, *C, P.margin);
      all.push_back({gr.with_drift, gr.with_drift.pass});
      all.push_back({gr.drift_free, gr.drift_free.pass});
    }
    for (const EstRow& e : all) {
      const EstimateReport& r = e.report;
      t.rows.push_back({gs, r.name, fmt(r.lhs), fmt(r.rhs), fmt(r.slack), fmt_pass(e.pass), describe(r)});
      record(res, e.pass, r.name + " on grid " + gs);
    }
  }
  res.tables.push_back(std::move(t));
  if (C) res.meta["gradient_constants"] = {{"with_drift", C->with_drift}, {"drift_free", C->drift_free}};

  std::vector<SolveRecord> recs;
  for (const GridRun& r : runs) recs.push_back(r.rec);
  res.tables.push_back(solves_table(recs));
  note_solver_failures(res, recs);
  return res;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string fmt(double v) {
  if (std::isnan(v)) return kNA;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

StudyResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts) {
  StudyResult res;
  switch (cfg.study) {
    case StudyKind::SingleSolve: res = single_solve(cfg, opts); break;
    case StudyKind::Decay: res = decay_study(cfg, opts); break;
    case StudyKind::Flatness: res = flatness_study(cfg, opts); break;
    case StudyKind::Convergence: res = convergence_study(cfg, opts); break;
    case StudyKind::Approximation: res = approximation_study(cfg, opts); break;
    case StudyKind::Estimates: res = estimate_suite(cfg, opts); break;
  }
  res.kind = cfg.study;
  if (res.solver_failure) res.all_pass = false;
  res.meta["study"] = to_string(cfg.study);
  res.meta["name"] = cfg.name;
  res.meta["seed"] = cfg.seed;
  res.meta["grids"] = cfg.grids;
  res.meta["threads"] = opts.threads;
  res.meta["config"] = cfg.raw;
  res.meta["warnings"] = cfg.warnings;
  res.meta["all_pass"] = res.all_pass;
  res.meta["solver_failure"] = res.solver_failure;
  res.meta["failures"] = res.failures;
  res.meta["solver"] = {{"tol", cfg.solver.tol},
                        {"max_iter", cfg.solver.max_iter},
                        {"direct_threshold", cfg.solver.direct_threshold}};
  res.meta["version"] = "driftlab 1.0.0";
  return res;
}

void write_result(const StudyResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string study = to_string(result.kind);
  const std::string stamp = timestamp();
  for (const Table& t : result.tables) {
    const std::string path = (std::filesystem::path(dir) / (t.name + ".csv")).string();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "# driftlab " << study << " generated " << stamp << '\n';
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
    out << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::string cell = row[i];
        if (cell.find_first_of(",\"\n") != std::string::npos) {
          std::string q = "\"";
          for (char ch : cell) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
          cell = q + "\"";
        }
        out << (i ? "," : "") << cell;
      }
      out << '\n';
    }
  }
  json meta = result.meta;
  meta["generated"] = stamp;
  std::ofstream out((std::filesystem::path(dir) / (study + ".meta.json")).string());
  out << meta.dump(2) << '\n';
}

}  // namespace driftlab
