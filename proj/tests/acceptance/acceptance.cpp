// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "driftlab/config.hpp"
#include "driftlab/drift.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/estimates.hpp"
#include "driftlab/operator.hpp"
#include "driftlab/oracle.hpp"
#include "driftlab/solver.hpp"
#include "driftlab/spectral.hpp"
#include "driftlab/studies.hpp"

#if !defined(DRIFTLAB_CONFIG_DIR) || !defined(DRIFTLAB_DATA_DIR)
#error "DRIFTLAB_CONFIG_DIR and DRIFTLAB_DATA_DIR must be defined"
#endif

using namespace driftlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& why) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += why;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

StudyResult run_config(const std::string& file) {
  return run_scenario(load_config(std::string(DRIFTLAB_CONFIG_DIR) + "/" + file));
}

const Table* find_table(const StudyResult& r, const std::string& name) {
  for (const Table& t : r.tables)
    if (t.name == name) return &t;
  return nullptr;
}

// Table rows as column-name maps.
std::vector<std::map<std::string, std::string>> records(const Table& t) {
  std::vector<std::map<std::string, std::string>> out;
  for (const auto& row : t.rows) {
    std::map<std::string, std::string> m;
    for (std::size_t i = 0; i < t.header.size() && i < row.size(); ++i) m[t.header[i]] = row[i];
    out.push_back(std::move(m));
  }
  return out;
}

double value(const std::string& s) {
  try {
    return std::stod(s);
  } catch (...) {
    return std::nan("");
  }
}

void report_failures(Outcome& o, const StudyResult& r, const std::string& label) {
  o.require(r.all_pass, label + " study flagged failures");
  for (const std::string& f : r.failures) o.note(label + ": " + f);
}

// ------------------------------------------------------------------ criteria

Outcome manufactured_convergence() {
  Outcome o;
  const std::vector<std::pair<std::string, double>> runs = {{"convergence_poisson_1d.json", 2.0},
                                                            {"convergence_poisson_2d.json", 2.0},
                                                            {"convergence_poisson_3d.json", 2.0},
                                                            {"convergence_drift_1d.json", 1.0}};
  for (const auto& [file, expected] : runs) {
    const StudyResult r = run_config(file);
    const auto& order = r.meta["observed_order"];
    const double p = order.is_number() ? order.get<double>() : std::nan("");
    o.require(std::abs(p - expected) <= 0.2, file + " order " + num(p) + " outside " + num(expected) + " +- 0.2");
    report_failures(o, r, file);
    o.note(file.substr(12, file.size() - 17) + " order " + num(p));
  }
  return o;
}

Outcome power_law_identity() {
  Outcome o;
  const int n = 4096;
  const GridPtr g = build_grid(DomainShape::unit_box(1), n);
  auto residual = [&](double alpha, double C) {
    ProblemSpec p;
    p.grid = g;
    p.M = DiffusionTensorField::identity(g);
    p.drift = evaluate_drift(DriftSpec{CustomDrift{"inverse_distance",
                                                   [C](const Point& x) { return Point{-C / x[0], 0, 0}; },
                                                   [C](const Point& x) { return C / (x[0] * x[0]); }},
                                       {}},
                             g);
    p.source = ScalarField(g);
    p.scheme = Scheme::Central;
    return apply_operator(p, sample(g, [alpha](const Point& x) { return std::pow(x[0], alpha); }));
  };
  // Interior cells: the first and last 5% are excluded. The Dirichlet row at
  // x = 1 sees a nonzero trace of x^alpha and is not part of the identity.
  auto interior = [&](std::size_t i) {
    const double x = g->center(i)[0];
    return x > 0.05 && x < 0.95;
  };

  for (const auto& [alpha, C] : std::vector<std::pair<double, double>>{{2, 1}, {0.5, 1}, {3, 2}}) {
    const ScalarField r = residual(alpha, C);
    double worst = 0.0;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (!interior(i)) continue;
      const double exact = power_law_residual(alpha, C, g->center(i)[0]);
      worst = std::max(worst, std::abs(r[i] - exact) / std::abs(exact));
    }
    o.require(worst <= 0.03, "(" + num(alpha) + "," + num(C) + ") relative error " + num(worst));
    o.note("(" + num(alpha) + "," + num(C) + ") err " + num(worst));
  }

  // Supersolution (nonnegative residual) exactly when alpha <= 1.
  for (double alpha : {0.25, 0.5, 0.9, 1.0, 1.1, 2.0, 3.0}) {
    const ScalarField r = residual(alpha, 1.0);
    double lo = INFINITY, hi = -INFINITY, scale = 0.0;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (!interior(i)) continue;
      lo = std::min(lo, r[i]);
      hi = std::max(hi, r[i]);
      scale = std::max(scale, std::pow(g->center(i)[0], alpha - 2.0));
    }
    if (alpha < 1.0) o.require(lo > 0.0, "alpha " + num(alpha) + " residual not positive");
    else if (alpha > 1.0) o.require(hi < 0.0, "alpha " + num(alpha) + " residual not negative");
    else o.require(std::max(std::abs(lo), std::abs(hi)) <= 1e-9 * scale, "alpha 1 residual not zero");
  }
  return o;
}

// One entry of the problem matrix shared by the comparison and weighted L1 criteria.
struct MatrixProblem {
  std::string label;
  ProblemSpec spec;
};

std::vector<MatrixProblem> problem_matrix() {
  std::vector<MatrixProblem> out;
  const GridPtr cube = build_grid(DomainShape::box(3, Point{-0.5, -0.5, -0.5}, Point{0.5, 0.5, 0.5}), 16);
  const GridPtr ball16 = build_grid(DomainShape::ball(3, Point{}, 1.0), 16);
  const GridPtr ball24 = build_grid(DomainShape::ball(3, Point{}, 1.0), 24);
  const GridPtr disc = build_grid(DomainShape::ball(2, Point{}, 1.0), 48);
  const GridPtr square = build_grid(DomainShape::unit_box(2), 48);

  auto add = [&](const std::string& label, const GridPtr& g, DriftFields drift, ScalarField f, Scheme s) {
    ProblemSpec p;
    p.grid = g;
    p.M = DiffusionTensorField::identity(g);
    p.drift = std::move(drift);
    p.source = std::move(f);
    p.scheme = s;
    out.push_back({label, std::move(p)});
  };
  auto one = [](const GridPtr& g) { return ScalarField(g, 1.0); };
  auto inner = [](const GridPtr& g) {
    return sample(g, [&](const Point& x) { return norm(x, g->dim()) < 0.5 ? 1.0 : 0.0; });
  };
  auto signed_source = [](const GridPtr& g) {
    return sample(g, [](const Point& x) { return std::sin(4.0 * x[0] + 1.0) * std::cos(3.0 * x[1]); });
  };
  auto point = [](double A) { return DriftSpec{PointSingular{A}, {}}; };
  const DriftSpec rotation{CustomDrift{"rotation", [](const Point& x) { return Point{-8.0 * x[1], 8.0 * x[0], 0}; },
                                       [](const Point&) { return 0.0; }},
                           {}};

  add("cube zero f=1 central", cube, zero_drift(cube), one(cube), Scheme::Central);
  add("cube zero f=1 upwind", cube, zero_drift(cube), one(cube), Scheme::Upwind);
  add("cube coercive c0=1 upwind", cube, evaluate_drift(DriftSpec{LinearCoercive{1.0}, {}}, cube), one(cube),
      Scheme::Upwind);
  add("cube coercive c0=5 auto", cube, evaluate_drift(DriftSpec{LinearCoercive{5.0}, {}}, cube), one(cube),
      Scheme::Auto);
  add("cube coercive c0=20 exponential", cube, evaluate_drift(DriftSpec{LinearCoercive{20.0}, {}}, cube),
      signed_source(cube), Scheme::Exponential);
  add("cube rotation upwind", cube, evaluate_drift(rotation, cube), one(cube), Scheme::Upwind);
  add("cube rotation signed f", cube, evaluate_drift(rotation, cube), signed_source(cube), Scheme::Upwind);
  for (double A : {1.0, 5.0, 20.0, 100.0}) {
    add("ball point A=" + num(A) + " f=1 exponential", ball16, evaluate_drift(point(A), ball16), one(ball16),
        Scheme::Exponential);
    add("ball point A=" + num(A) + " chi upwind", ball16, evaluate_drift(point(A), ball16), inner(ball16),
        Scheme::Upwind);
  }
  add("ball point A=5 central", ball16, evaluate_drift(point(5.0), ball16), one(ball16), Scheme::Central);
  add("ball point A=10 signed f", ball16, evaluate_drift(point(10.0), ball16), signed_source(ball16),
      Scheme::Exponential);
  add("ball24 point A=5 mollified n=4", ball24, evaluate_drift(DriftSpec{PointSingular{5.0}, 4}, ball24),
      inner(ball24), Scheme::Upwind);
  add("ball24 point A=20 chi exponential", ball24, evaluate_drift(point(20.0), ball24), inner(ball24),
      Scheme::Exponential);
  {
    const auto pair = std::make_shared<const Eigenpair>(principal_eigenpair(ball16));
    for (double ell : {4.0, 16.0})
      add("ball boundary-singular ell=" + num(ell), ball16,
          evaluate_drift(DriftSpec{BoundarySingular{1.0, ell, pair}, {}}, ball16), one(ball16), Scheme::Upwind);
  }
  add("disc point A=3 upwind", disc, evaluate_drift(point(3.0), disc), one(disc), Scheme::Upwind);
  add("square coercive c0=2 central", square,
      evaluate_drift(DriftSpec{LinearCoercive{2.0}, {}}, square), one(square), Scheme::Central);
  add("square rotation exponential", square, evaluate_drift(rotation, square), inner(square), Scheme::Exponential);
  return out;
}

struct MatrixRun {
  std::string label;
  SparseOperator op;
  SolveReport solve;
  const ProblemSpec* spec = nullptr;
};

std::vector<MatrixRun> solve_matrix(const std::vector<MatrixProblem>& problems) {
  std::vector<MatrixRun> runs;
  SolverOptions direct;
  direct.method = SolveMethod::Direct;
  for (const MatrixProblem& mp : problems) {
    MatrixRun r;
    r.label = mp.label;
    r.spec = &mp.spec;
    r.op = assemble(mp.spec);
    r.solve = solve(r.op, mp.spec.source, direct);
    runs.push_back(std::move(r));
  }
  return runs;
}

Outcome comparison_principle(const std::vector<MatrixRun>& runs) {
  Outcome o;
  std::map<const Grid*, double> S2;  // discrete Sobolev constant per grid
  int positivity = 0, gradient = 0;
  for (const MatrixRun& r : runs) {
    const ProblemSpec& p = *r.spec;
    if (!r.op.m_matrix_flag() || p.source.min() < 0.0) continue;
    ++positivity;
    o.require(r.solve.u.min() >= 0.0, r.label + ": min u = " + num(r.solve.u.min()));
    if (p.grid->dim() < 3) continue;
    auto it = S2.find(p.grid.get());
    if (it == S2.end()) it = S2.emplace(p.grid.get(), sobolev_constant_discrete(p.grid).discrete).first;
    const GradientConstant C = calibrate_gradient_constant(r.solve.u, p.source, p.drift.E);
    const EstimateReport s = check_gradient_bound(r.solve.u, p.source, p.drift.E, 1.0, it->second, C, 0.02).signed_bound;
    ++gradient;
    o.require(s.pass, r.label + ": gradient bound lhs " + num(s.lhs) + " rhs " + num(s.rhs));
  }
  o.require(positivity >= 10, "too few M-matrix problems with f >= 0");
  o.note(std::to_string(positivity) + " positivity cases, " + std::to_string(gradient) + " gradient cases");
  return o;
}

Outcome weighted_l1(const std::vector<MatrixRun>& runs) {
  Outcome o;
  int checked = 0;
  double worst = INFINITY;
  for (const MatrixRun& r : runs) {
    const ProblemSpec& p = *r.spec;
    if (p.drift.divE.min() < 0.0) continue;
    ++checked;
    const EstimateReport e = check_l1_divergence_bound(r.solve.u, p.drift.divE, p.source,
                                                       default_margin(p.grid->h(), r.op.scheme_used));
    worst = std::min(worst, e.slack);
    o.require(e.pass, r.label + ": lhs " + num(e.lhs) + " rhs " + num(e.rhs));
  }
  o.require(runs.size() >= 20, "matrix has fewer than 20 problems");
  o.note(std::to_string(checked) + " of " + std::to_string(runs.size()) + " problems with divE >= 0, min slack " +
         num(worst));
  return o;
}

Outcome coercive_lm() {
  Outcome o;
  const StudyResult r = run_config("estimates_coercive.json");
  const Table* t = find_table(r, "estimates");
  o.require(t != nullptr, "no estimates table");
  if (!t) return o;
  int rows = 0;
  double worst = INFINITY;
  std::map<std::string, int> by_m;
  for (const auto& row : records(*t)) {
    if (row.at("name") != "lm_coercive") continue;
    ++rows;
    const std::string& info = row.at("info");
    const auto at = info.find("m=");
    if (at != std::string::npos) ++by_m[info.substr(at + 2, info.find(';', at) - at - 2)];
    worst = std::min(worst, value(row.at("slack")));
    o.require(row.at("pass") == "true", "grid " + row.at("grid") + " " + info);
  }
  o.require(by_m.size() == 3, "expected three m values");
  o.require(rows >= 9, "expected three m values on three grids");
  o.note(std::to_string(rows) + " rows, min slack " + num(worst));
  return o;
}

Outcome decay() {
  Outcome o;
  const StudyResult r = run_config("decay.json");
  const Table* t = find_table(r, "decay");
  const Table* oracle = find_table(r, "decay_oracle");
  o.require(t && oracle, "missing decay tables");
  if (!t || !oracle) return o;
  const std::map<double, double> expected = {{1, 1.0}, {10, 0.1}, {100, 0.01}};
  double prev_l1 = INFINITY;
  for (const auto& row : records(*t)) {
    const double A = value(row.at("A"));
    const double bound = value(row.at("bound"));
    const double measured = value(row.at("integral_u_over_x2"));
    const double l1 = value(row.at("l1_norm"));
    o.require(expected.count(A) && std::abs(bound - expected.at(A)) <= 1e-9 * expected.at(A),
              "A=" + num(A) + " bound " + num(bound));
    o.require(row.at("pass") == "true", "A=" + num(A) + " measured " + num(measured) + " above " + num(bound));
    o.require(l1 < prev_l1, "l1 not strictly decreasing at A=" + num(A));
    prev_l1 = l1;
    o.note("A=" + num(A) + " " + num(measured) + "<=" + num(bound));
  }
  const std::string finest = std::to_string(r.meta["grids"].back().get<int>());
  for (const auto& row : records(*oracle))
    if (row.at("grid") == finest) {
      const double err = value(row.at("oracle_rel_l2"));
      o.require(err < 0.05, "A=" + row.at("A") + " oracle error " + num(err));
      o.note("oracle A=" + row.at("A") + " " + num(err));
    }
  report_failures(o, r, "decay");
  return o;
}

Outcome flatness() {
  Outcome o;
  for (const std::string file : {"flatness_1d.json", "flatness_2d.json"}) {
    const StudyResult r = run_config(file);
    const Table* t = find_table(r, "flatness");
    o.require(t != nullptr, file + " has no flatness table");
    if (!t) continue;
    const std::string finest = std::to_string(r.meta["grids"].back().get<int>());
    std::map<std::string, bool> barrier_ells;
    bool saw_drift = false, saw_control = false;
    for (const auto& row : records(*t)) {
      const std::string& kind = row.at("case");
      const double a = value(row.at("alpha_hat"));
      if (kind == "drift" && row.at("grid") == finest) {
        saw_drift = true;
        o.require(a >= 2.0 - 0.15, file + " drift alpha " + num(a));
        o.note(file + " drift alpha " + num(a));
      }
      if (kind == "control") {
        saw_control = true;
        o.require(std::abs(a - 1.0) <= 0.05, file + " control alpha " + num(a) + " at grid " + row.at("grid"));
      }
      if (kind == "barrier") barrier_ells[row.at("ell")] = row.at("barrier_dominated") == "true";
      if (kind != "control" && row.at("linf_bound") != kNA) {
        const double linf = value(row.at("linf")), bound = value(row.at("linf_bound"));
        o.require(linf <= bound * 1.02, file + " " + kind + " linf " + num(linf) + " above " + num(bound));
      }
    }
    o.require(saw_drift && saw_control, file + " missing drift or control rows");
    for (const std::string ell : {"4", "8", "16"})
      o.require(barrier_ells.count(ell) && barrier_ells[ell], file + " barrier at ell=" + ell);
    report_failures(o, r, file);
  }
  return o;
}

Outcome omega_range() {
  Outcome o;
  const std::vector<std::pair<std::string, double>> runs = {{"flatness_omega0_1d.json", 0.0},
                                                            {"flatness_omega0_2d.json", 0.0},
                                                            {"flatness_omega05_1d.json", 0.5},
                                                            {"flatness_omega05_2d.json", 0.5}};
  for (const auto& [file, omega] : runs) {
    const StudyResult r = run_config(file);
    const Table* t = find_table(r, "flatness");
    o.require(t != nullptr, file + " has no flatness table");
    if (!t) continue;
    const std::string finest = std::to_string(r.meta["grids"].back().get<int>());
    const double top = 1.0 + 2.0 - omega + 0.2;
    for (const auto& row : records(*t))
      if (row.at("case") == "drift" && row.at("grid") == finest) {
        const double a = value(row.at("alpha_hat"));
        o.require(a > 1.0 && a <= top, file + " alpha " + num(a) + " outside (1, " + num(top) + "]");
        o.note(file + " alpha " + num(a));
      }
  }
  return o;
}

Outcome approximation() {
  Outcome o;
  const StudyResult r = run_config("approximation_mollify.json");
  const double variation = r.meta.value("w12_variation", INFINITY);
  const double ratio = r.meta.value("sup_drift_ratio", 0.0);
  o.require(variation < 0.10, "W12 variation " + num(variation));
  o.require(ratio > 10.0, "sup drift ratio " + num(ratio));
  o.note("W12 variation " + num(variation) + ", sup ratio " + num(ratio));
  report_failures(o, r, "approximation");
  return o;
}

std::vector<std::string> body_lines(const fs::path& file) {
  std::ifstream in(file);
  std::vector<std::string> lines;
  std::string line;
  std::getline(in, line);  // timestamp comment
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "driftlab_acceptance_determinism";
  fs::remove_all(root);
  const ScenarioConfig cfg = load_config(std::string(DRIFTLAB_DATA_DIR) + "/decay_small.json");
  write_result(run_scenario(cfg, RunOptions{2}), (root / "a").string());
  write_result(run_scenario(cfg, RunOptions{2}), (root / "b").string());
  int files = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    const fs::path other = root / "b" / entry.path().filename();
    o.require(fs::exists(other), "missing " + other.filename().string());
    o.require(body_lines(entry.path()) == body_lines(other), entry.path().filename().string() + " differs");
  }
  o.require(files >= 2, "expected at least two CSV files");
  o.note(std::to_string(files) + " CSV files compared");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  std::vector<MatrixProblem> problems;
  std::vector<MatrixRun> runs;
  auto matrix = [&]() -> const std::vector<MatrixRun>& {
    if (runs.empty()) {
      problems = problem_matrix();
      runs = solve_matrix(problems);
    }
    return runs;
  };

  const std::vector<Criterion> criteria = {
      {"AC1 manufactured-solution convergence", manufactured_convergence},
      {"AC2 power-law residual under E = -C/x", power_law_identity},
      {"AC3 discrete comparison principle", [&] { return comparison_principle(matrix()); }},
      {"AC4 weighted L1 estimate", [&] { return weighted_l1(matrix()); }},
      {"AC5 coercive Lm estimate", coercive_lm},
      {"AC6 decay in A on the ball", decay},
      {"AC7 boundary flatness", flatness},
      {"AC8 omega-dependent flatness range", omega_range},
      {"AC9 approximation stability", approximation},
      {"AC10 deterministic CSV output", determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
