#include "driftlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>

#include "driftlab/errors.hpp"

namespace driftlab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double get_number(const json& obj, const char* key, const std::string& path, double fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (v->is_string()) {
    const std::string s = v->get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    fail(path + "." + key, "expected a number, got \"" + s + "\"");
  }
  if (!v->is_number()) fail(path + "." + key, "expected a number");
  return v->get<double>();
}

int get_int(const json& obj, const char* key, const std::string& path, int fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(path + "." + key, "expected an integer");
  return v->get<int>();
}

bool get_bool(const json& obj, const char* key, const std::string& path, bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) fail(path + "." + key, "expected true or false");
  return v->get<bool>();
}

std::string get_string(const json& obj, const char* key, const std::string& path,
                       const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) fail(path + "." + key, "expected a string");
  return v->get<std::string>();
}

std::vector<double> get_numbers(const json& obj, const char* key, const std::string& path) {
  std::vector<double> out;
  const json* v = find(obj, key);
  if (!v) return out;
  if (!v->is_array() || v->empty()) fail(path + "." + key, "expected a nonempty array");
  for (const json& e : *v) {
    if (e.is_string() && e.get<std::string>() == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else if (e.is_number()) {
      out.push_back(e.get<double>());
    } else {
      fail(path + "." + key, "array entries must be numbers");
    }
  }
  return out;
}

Point get_point(const json& obj, const char* key, const std::string& path, int dim, Point fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_array() || static_cast<int>(v->size()) != dim)
    fail(path + "." + key, "expected an array of " + std::to_string(dim) + " numbers");
  Point p{};
  for (int d = 0; d < dim; ++d) {
    if (!(*v)[d].is_number()) fail(path + "." + key, "expected numbers");
    p[d] = (*v)[d].get<double>();
  }
  return p;
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      fail(path + "." + it.key(), "unknown key");
  }
}

DomainShape parse_domain(const json& d) {
  check_keys(d, "domain", {"kind", "dim", "lower", "upper", "center", "radius"});
  const std::string kind = get_string(d, "kind", "domain", "box");
  const int dim = get_int(d, "dim", "domain", 0);
  if (dim < 1 || dim > 3) fail("domain.dim", "must be 1, 2 or 3");
  DomainShape s;
  if (kind == "box") {
    Point lo{}, hi{};
    for (int k = 0; k < dim; ++k) hi[k] = 1.0;
    s = DomainShape::box(dim, get_point(d, "lower", "domain", dim, lo),
                         get_point(d, "upper", "domain", dim, hi));
  } else if (kind == "ball") {
    s = DomainShape::ball(dim, get_point(d, "center", "domain", dim, Point{}),
                          get_number(d, "radius", "domain", 1.0));
  } else {
    fail("domain.kind", "expected box or ball, got \"" + kind + "\"");
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    fail("domain", e.what());
  }
  return s;
}

DiffusionConfig parse_diffusion(const json& d, int dim) {
  check_keys(d, "diffusion", {"kind", "alpha", "values", "matrix"});
  DiffusionConfig c;
  c.kind = get_string(d, "kind", "diffusion", "identity");
  for (int k = 0; k < 3; ++k) c.matrix[k][k] = 1.0;
  if (c.kind == "identity") {
  } else if (c.kind == "scaled") {
    const double a = get_number(d, "alpha", "diffusion", 1.0);
    for (int k = 0; k < 3; ++k) c.matrix[k][k] = a;
  } else if (c.kind == "diagonal") {
    const auto v = get_numbers(d, "values", "diffusion");
    if (static_cast<int>(v.size()) != dim) fail("diffusion.values", "needs one value per axis");
    for (int k = 0; k < dim; ++k) c.matrix[k][k] = v[k];
  } else if (c.kind == "constant") {
    const json* m = find(d, "matrix");
    if (!m || !m->is_array() || static_cast<int>(m->size()) != dim)
      fail("diffusion.matrix", "expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " array");
    for (int r = 0; r < dim; ++r) {
      if (!(*m)[r].is_array() || static_cast<int>((*m)[r].size()) != dim)
        fail("diffusion.matrix", "rows must have " + std::to_string(dim) + " entries");
      for (int k = 0; k < dim; ++k) c.matrix[r][k] = (*m)[r][k].get<double>();
    }
  } else {
    fail("diffusion.kind", "expected identity, scaled, diagonal or constant");
  }
  if (c.kind != "identity" && find(d, "alpha") && c.kind != "scaled")
    c.alpha = get_number(d, "alpha", "diffusion", 1.0);
  return c;
}

DriftConfig parse_drift(const json& d, int dim) {
  check_keys(d, "drift", {"family", "A", "gamma", "ell", "c0", "vector", "C", "mollify"});
  DriftConfig c;
  c.family = get_string(d, "family", "drift", "zero");
  if (c.family == "zero") {
  } else if (c.family == "point_singular") {
    c.A = get_number(d, "A", "drift", 1.0);
    if (dim < 3 && c.A != 0.0)
      fail("drift.A", "point_singular needs N >= 3 when A != 0 (div E = A(N-2)/|x|^2 is degenerate for N = " +
                          std::to_string(dim) + ")");
  } else if (c.family == "boundary_singular") {
    c.gamma = get_number(d, "gamma", "drift", 1.0);
    if (!(c.gamma > 0.0)) fail("drift.gamma", "must be > 0");
    const json* ell = find(d, "ell");
    if (ell && ell->is_object()) {
      check_keys(*ell, "drift.ell", {"per_h"});
      c.ell_grid_factor = get_number(*ell, "per_h", "drift.ell", 2.0);
      if (!(*c.ell_grid_factor > 0.0)) fail("drift.ell.per_h", "must be > 0");
    } else {
      c.ell = get_number(d, "ell", "drift", std::numeric_limits<double>::infinity());
      if (!(c.ell >= 1.0)) fail("drift.ell", "must be >= 1 or \"inf\"");
    }
  } else if (c.family == "linear_coercive") {
    c.c0 = get_number(d, "c0", "drift", 1.0);
    if (!(c.c0 > 0.0)) fail("drift.c0", "must be > 0");
  } else if (c.family == "constant") {
    c.vector = get_point(d, "vector", "drift", dim, Point{});
  } else if (c.family == "rotation") {
    if (dim < 2) fail("drift.family", "rotation needs N >= 2");
    c.C = get_number(d, "C", "drift", 1.0);
  } else if (c.family == "inverse_distance") {
    if (dim != 1) fail("drift.family", "inverse_distance (E = -C/x) is one-dimensional");
    c.C = get_number(d, "C", "drift", 1.0);
  } else {
    fail("drift.family", "unknown family \"" + c.family + "\"");
  }
  if (find(d, "mollify")) {
    c.mollify = get_int(d, "mollify", "drift", 1);
    if (*c.mollify < 1) fail("drift.mollify", "must be >= 1");
  }
  return c;
}

SourceConfig parse_source(const json& d) {
  check_keys(d, "source", {"kind", "value", "center", "width", "radius", "margin", "omega", "normalize"});
  SourceConfig c;
  c.kind = get_string(d, "kind", "source", "constant");
  static const char* kinds[] = {"constant", "radial_bump", "ball_indicator", "interior_bump",
                                "sine", "distance_power", "manufactured_sine"};
  if (std::none_of(std::begin(kinds), std::end(kinds), [&](const char* k) { return c.kind == k; }))
    fail("source.kind", "unknown source \"" + c.kind + "\"");
  c.value = get_number(d, "value", "source", 1.0);
  c.center = get_number(d, "center", "source", 0.5);
  c.width = get_number(d, "width", "source", 0.3);
  c.radius = get_number(d, "radius", "source", 0.5);
  c.margin = get_number(d, "margin", "source", 0.25);
  c.omega = get_number(d, "omega", "source", 0.0);
  c.normalize = get_bool(d, "normalize", "source", false);
  if (!(c.width > 0.0)) fail("source.width", "must be > 0");
  return c;
}

StudyParams parse_params(const json& d, StudyKind study, int dim, std::vector<std::string>& warnings) {
  check_keys(d, "params",
             {"A", "barrier_ells", "mollify", "truncate", "ells", "m", "sweep", "bands", "fit_tolerance",
              "margin", "control", "oracle", "oracle_cells", "oracle_tolerance", "exact", "expected_order",
              "order_tolerance", "variation_tolerance", "sup_ratio_min", "trials", "lm_exponent"});
  StudyParams p;
  p.A = get_numbers(d, "A", "params");
  p.barrier_ells = get_numbers(d, "barrier_ells", "params");
  for (double v : get_numbers(d, "mollify", "params")) {
    if (v != std::floor(v) || v < 1) fail("params.mollify", "entries must be integers >= 1");
    p.mollify.push_back(static_cast<int>(v));
  }
  p.truncate = get_numbers(d, "truncate", "params");
  p.ells = get_numbers(d, "ells", "params");
  if (find(d, "m")) p.m = get_numbers(d, "m", "params");
  p.sweep = get_string(d, "sweep", "params", "mollify");
  p.bands = get_int(d, "bands", "params", 3);
  p.fit_tolerance = get_number(d, "fit_tolerance", "params", 0.15);
  p.margin = get_number(d, "margin", "params", 0.02);
  p.control = get_bool(d, "control", "params", true);
  p.oracle = get_bool(d, "oracle", "params", true);
  p.oracle_cells = get_int(d, "oracle_cells", "params", 100000);
  p.oracle_tolerance = get_number(d, "oracle_tolerance", "params", 0.05);
  p.exact = get_string(d, "exact", "params", "sine_product");
  if (find(d, "expected_order")) p.expected_order = get_number(d, "expected_order", "params", 2.0);
  p.order_tolerance = get_number(d, "order_tolerance", "params", 0.2);
  p.variation_tolerance = get_number(d, "variation_tolerance", "params", 0.10);
  p.sup_ratio_min = get_number(d, "sup_ratio_min", "params", 10.0);
  p.trials = get_int(d, "trials", "params", 16);
  p.lm_exponent = get_number(d, "lm_exponent", "params", 2.0);

  if (p.bands < 3) fail("params.bands", "must be >= 3");
  for (double a : p.A)
    if (a < 0.0) fail("params.A", "entries must be >= 0");
  for (double l : p.barrier_ells)
    if (!(l >= 1.0)) fail("params.barrier_ells", "entries must be >= 1");
  for (double l : p.ells)
    if (!(l >= 1.0)) fail("params.ells", "entries must be >= 1");
  for (double k : p.truncate)
    if (!(k > 0.0)) fail("params.truncate", "entries must be > 0");
  for (double m : p.m) {
    if (!(m > 1.0)) fail("params.m", "entries must be > 1");
    if (dim >= 3) {
      const double lo = static_cast<double>(dim) / (dim + 2), hi = 2.0 * dim / (dim + 2);
      if (m >= lo && m < hi)
        warnings.push_back("params.m = " + std::to_string(m) + " lies in [N/(N+2), 2N/(N+2)); accepted, the "
                           "stricter reading of the existence range starts at 2N/(N+2)");
    }
  }
  if (p.sweep != "mollify" && p.sweep != "truncate" && p.sweep != "ell")
    fail("params.sweep", "expected mollify, truncate or ell");
  if (p.exact != "poisson_constant_1d" && p.exact != "sine_product" && p.exact != "radial_oracle")
    fail("params.exact", "expected poisson_constant_1d, sine_product or radial_oracle");
  if (p.oracle_cells < 100) fail("params.oracle_cells", "must be >= 100");

  switch (study) {
    case StudyKind::Decay:
      if (p.A.empty()) fail("params.A", "decay study needs a nonempty A list");
      break;
    case StudyKind::Approximation:
      if (p.sweep == "mollify" && p.mollify.empty()) fail("params.mollify", "mollification sweep needs n values");
      if (p.sweep == "truncate" && p.truncate.empty()) fail("params.truncate", "truncation sweep needs k values");
      if (p.sweep == "ell" && p.ells.size() < 2) fail("params.ells", "ell sweep needs at least two values");
      break;
    default:
      break;
  }
  return p;
}

double bump(double s) { return std::abs(s) < 1.0 ? std::pow(std::cos(0.5 * M_PI * s), 2) : 0.0; }

}  // namespace

std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::SingleSolve: return "solve";
    case StudyKind::Decay: return "decay";
    case StudyKind::Flatness: return "flatness";
    case StudyKind::Convergence: return "convergence";
    case StudyKind::Approximation: return "approximation";
    case StudyKind::Estimates: return "estimates";
  }
  return "?";
}

StudyKind parse_study(const std::string& name) {
  if (name == "single_solve" || name == "solve") return StudyKind::SingleSolve;
  if (name == "decay_study" || name == "decay") return StudyKind::Decay;
  if (name == "flatness_study" || name == "flatness") return StudyKind::Flatness;
  if (name == "mesh_convergence" || name == "convergence") return StudyKind::Convergence;
  if (name == "approximation_study" || name == "approximation") return StudyKind::Approximation;
  if (name == "estimate_suite" || name == "estimates") return StudyKind::Estimates;
  throw ConfigError("config field 'study': unknown study \"" + name + "\"");
}

ScenarioConfig parse_config(const json& doc) {
  check_keys(doc, "<root>",
             {"name", "study", "domain", "grids", "diffusion", "drift", "potential", "source", "scheme",
              "solver", "seed", "params"});
  ScenarioConfig c;
  c.raw = doc;
  c.name = get_string(doc, "name", "<root>", "scenario");
  c.study = parse_study(get_string(doc, "study", "<root>", "single_solve"));

  const json* dom = find(doc, "domain");
  if (!dom) fail("domain", "missing");
  c.domain = parse_domain(*dom);
  const int dim = c.domain.dim;

  const json* grids = find(doc, "grids");
  if (!grids || !grids->is_array() || grids->empty()) fail("grids", "expected a nonempty array");
  for (const json& g : *grids) {
    if (!g.is_number_integer() || g.get<int>() < 2) fail("grids", "entries must be integers >= 2");
    c.grids.push_back(g.get<int>());
  }
  for (std::size_t i = 1; i < c.grids.size(); ++i)
    if (c.grids[i] <= c.grids[i - 1]) fail("grids", "sizes must be strictly ascending");
  if (c.study == StudyKind::Convergence && c.grids.size() < 3)
    fail("grids", "mesh convergence needs at least 3 grid sizes");

  c.diffusion = parse_diffusion(find(doc, "diffusion") ? doc["diffusion"] : json::object(), dim);
  c.drift = parse_drift(find(doc, "drift") ? doc["drift"] : json::object(), dim);
  c.source = parse_source(find(doc, "source") ? doc["source"] : json::object());
  if (const json* pot = find(doc, "potential")) {
    check_keys(*pot, "potential", {"kind", "value"});
    c.potential.kind = get_string(*pot, "kind", "potential", "none");
    if (c.potential.kind != "none" && c.potential.kind != "constant")
      fail("potential.kind", "expected none or constant");
    c.potential.value = get_number(*pot, "value", "potential", 0.0);
    if (!(c.potential.value >= 0.0)) fail("potential.value", "must be >= 0");
  }
  try {
    c.scheme = parse_scheme(get_string(doc, "scheme", "<root>", "auto"));
  } catch (const ConfigError& e) {
    fail("scheme", e.what());
  }
  if (const json* s = find(doc, "solver")) {
    check_keys(*s, "solver", {"tol", "max_iter", "direct_threshold", "method"});
    c.solver.tol = get_number(*s, "tol", "solver", 1e-10);
    c.solver.max_iter = get_int(*s, "max_iter", "solver", 5000);
    c.solver.direct_threshold =
        static_cast<std::size_t>(get_int(*s, "direct_threshold", "solver", 20000));
    const std::string m = get_string(*s, "method", "solver", "auto");
    if (m == "auto") c.solver.method = SolveMethod::Auto;
    else if (m == "direct") c.solver.method = SolveMethod::Direct;
    else if (m == "bicgstab") c.solver.method = SolveMethod::Bicgstab;
    else fail("solver.method", "expected auto, direct or bicgstab");
    if (!(c.solver.tol > 0.0)) fail("solver.tol", "must be > 0");
    if (c.solver.max_iter < 1) fail("solver.max_iter", "must be >= 1");
  }
  if (const json* s = find(doc, "seed")) {
    if (!s->is_number_unsigned()) fail("seed", "expected a nonnegative integer");
    c.seed = s->get<std::uint64_t>();
  }
  c.params = parse_params(find(doc, "params") ? doc["params"] : json::object(), c.study, dim, c.warnings);

  if (c.study == StudyKind::Decay && c.drift.family != "point_singular")
    fail("drift.family", "decay study needs the point_singular family");
  if (c.study == StudyKind::Decay && dim != 3) fail("domain.dim", "decay study runs in N = 3");
  if (c.study == StudyKind::Flatness && c.drift.family != "boundary_singular")
    fail("drift.family", "flatness study needs the boundary_singular family");
  if (c.study == StudyKind::Approximation && c.params.sweep == "ell" && c.drift.family != "boundary_singular")
    fail("params.sweep", "ell sweep needs the boundary_singular family");
  if (c.source.kind == "manufactured_sine" &&
      !(c.drift.family == "zero" || c.drift.family == "constant"))
    fail("source.kind", "manufactured_sine supports zero or constant drift only");
  if (c.source.kind == "sine" && c.domain.kind != DomainKind::Box) fail("source.kind", "sine needs a box");
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

DiffusionTensorField build_diffusion(const DiffusionConfig& cfg, const GridPtr& grid) {
  if (cfg.kind == "identity") return DiffusionTensorField::identity(grid);
  const int n = grid->dim();
  Mat3 m{};
  Eigen::MatrixXd dense(n, n);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < n; ++k) dense(r, k) = m[r][k] = cfg.matrix[r][k];
  // Default ellipticity: smallest eigenvalue of the active block.
  const double alpha =
      cfg.alpha ? *cfg.alpha : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense).eigenvalues().minCoeff();
  try {
    return DiffusionTensorField(grid, std::vector<Mat3>(grid->size(), m), alpha);
  } catch (const ConfigError& e) {
    fail("diffusion", e.what());
  }
}

DriftSpec build_drift_spec(const DriftConfig& cfg, const GridPtr& grid, const EigenpairPtr& eigenpair) {
  DriftSpec spec;
  spec.mollify_n = cfg.mollify;
  if (cfg.family == "zero") {
    spec.family = LinearCoercive{0.0};
  } else if (cfg.family == "point_singular") {
    spec.family = PointSingular{cfg.A};
  } else if (cfg.family == "boundary_singular") {
    BoundarySingular b;
    b.gamma = cfg.gamma;
    b.ell = cfg.ell_grid_factor ? *cfg.ell_grid_factor / grid->h() : cfg.ell;
    b.eigenpair = eigenpair;
    spec.family = b;
  } else if (cfg.family == "linear_coercive") {
    spec.family = LinearCoercive{cfg.c0};
  } else if (cfg.family == "constant") {
    const Point v = cfg.vector;
    spec.family = CustomDrift{"constant", [v](const Point&) { return v; },
                              [](const Point&) { return 0.0; }};
  } else if (cfg.family == "rotation") {
    const double c = cfg.C;
    spec.family = CustomDrift{"rotation",
                              [c](const Point& x) { return Point{-c * x[1], c * x[0], 0.0}; },
                              [](const Point&) { return 0.0; }};
  } else if (cfg.family == "inverse_distance") {
    const double c = cfg.C;
    spec.family = CustomDrift{"inverse_distance", [c](const Point& x) { return Point{-c / x[0], 0.0, 0.0}; },
                              [c](const Point& x) { return c / (x[0] * x[0]); }};
  } else {
    throw ConfigError("unknown drift family " + cfg.family);
  }
  return spec;
}

double manufactured_solution(const DomainShape& shape, const Point& x) {
  double u = 1.0;
  for (int d = 0; d < shape.dim; ++d)
    u *= std::sin(M_PI * (x[d] - shape.lower[d]) / (shape.upper[d] - shape.lower[d]));
  return u;
}

std::function<double(double)> radial_source_profile(const SourceConfig& cfg) {
  const double value = cfg.value, center = cfg.center, width = cfg.width, radius = cfg.radius;
  if (cfg.kind == "constant") return [value](double) { return value; };
  if (cfg.kind == "radial_bump")
    return [=](double r) { return value * bump((r - center) / width); };
  if (cfg.kind == "ball_indicator") return [=](double r) { return r < radius ? value : 0.0; };
  throw ConfigError("config field 'source.kind': \"" + cfg.kind + "\" has no radial profile");
}

ScalarField build_source(const SourceConfig& cfg, const GridPtr& grid, const DriftConfig& drift) {
  const DomainShape& shape = grid->shape();
  const int n = shape.dim;
  Point mid{};
  for (int d = 0; d < n; ++d) mid[d] = 0.5 * (shape.bbox_lower()[d] + shape.bbox_upper()[d]);
  std::function<double(const Point&)> fn;
  if (cfg.kind == "constant") {
    fn = [&](const Point&) { return cfg.value; };
  } else if (cfg.kind == "radial_bump" || cfg.kind == "ball_indicator") {
    fn = [&, profile = radial_source_profile(cfg)](const Point& x) {
      Point y{};
      for (int d = 0; d < n; ++d) y[d] = x[d] - mid[d];
      return profile(norm(y, n));
    };
  } else if (cfg.kind == "interior_bump") {
    fn = [&](const Point& x) {
      double v = cfg.value;
      for (int d = 0; d < n; ++d) {
        const double half = 0.5 * (shape.bbox_upper()[d] - shape.bbox_lower()[d]) - cfg.margin;
        if (!(half > 0.0)) throw ConfigError("config field 'source.margin': leaves no support");
        v *= bump((x[d] - mid[d]) / half);
      }
      return v;
    };
  } else if (cfg.kind == "sine") {
    fn = [&](const Point& x) { return cfg.value * manufactured_solution(shape, x); };
  } else if (cfg.kind == "distance_power") {
    fn = [&](const Point& x) { return cfg.value * std::pow(shape.distance_to_boundary(x), cfg.omega); };
  } else if (cfg.kind == "manufactured_sine") {
    // -Laplace(u) + v . grad(u) for u = prod sin(pi (x - lo) / L).
    if (shape.kind != DomainKind::Box) throw ConfigError("config field 'source.kind': manufactured_sine needs a box");
    const Point v = drift.family == "constant" ? drift.vector : Point{};
    fn = [&, v](const Point& x) {
      double lap = 0.0, conv = 0.0;
      const double u = manufactured_solution(shape, x);
      for (int d = 0; d < n; ++d) {
        const double L = shape.upper[d] - shape.lower[d];
        const double k = M_PI / L;
        lap += k * k * u;
        double du = k * std::cos(k * (x[d] - shape.lower[d]));
        for (int e = 0; e < n; ++e)
          if (e != d) du *= std::sin(M_PI * (x[e] - shape.lower[e]) / (shape.upper[e] - shape.lower[e]));
        conv += v[d] * du;
      }
      return lap + conv;
    };
  } else {
    throw ConfigError("unknown source kind " + cfg.kind);
  }
  ScalarField f = sample(grid, fn);
  if (cfg.normalize) {
    double mass = 0.0;
    for (double v : f.values()) mass += std::abs(v);
    mass *= grid->cell_volume();
    if (!(mass > 0.0)) throw ConfigError("config field 'source.normalize': source has no mass on this grid");
    for (std::size_t i = 0; i < f.size(); ++i) f[i] /= mass;
  }
  return f;
}

BuiltProblem build_problem(const ScenarioConfig& cfg, const GridPtr& grid, const EigenpairPtr& eigenpair) {
  BuiltProblem out;
  out.eigenpair = eigenpair;
  if (cfg.drift.family == "boundary_singular" && !out.eigenpair)
    out.eigenpair = std::make_shared<const Eigenpair>(principal_eigenpair(grid));
  ProblemSpec& p = out.problem;
  p.grid = grid;
  p.M = build_diffusion(cfg.diffusion, grid);
  p.drift = cfg.drift.family == "zero" && !cfg.drift.mollify
                ? zero_drift(grid)
                : evaluate_drift(build_drift_spec(cfg.drift, grid, out.eigenpair), grid);
  if (cfg.potential.kind == "constant") p.potential = ScalarField(grid, cfg.potential.value);
  p.source = build_source(cfg.source, grid, cfg.drift);
  p.scheme = cfg.scheme;
  return out;
}

}  // namespace driftlab
