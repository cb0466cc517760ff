#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftlab/drift.hpp"
#include "driftlab/grid.hpp"
#include "driftlab/operator.hpp"
#include "driftlab/solver.hpp"
#include "driftlab/spectral.hpp"

namespace driftlab {

enum class StudyKind { SingleSolve, Decay, Flatness, Convergence, Approximation, Estimates };

std::string to_string(StudyKind k);
/// Accepts the config spellings (single_solve, decay_study, ...) and the CLI
/// names (solve, decay, flatness, convergence, approximation, estimates).
StudyKind parse_study(const std::string& name);

struct DiffusionConfig {
  /// identity | scaled | diagonal | constant
  std::string kind = "identity";
  Mat3 matrix{};
  /// Declared ellipticity; defaults to the smallest eigenvalue.
  std::optional<double> alpha;
};

struct DriftConfig {
  /// zero | point_singular | boundary_singular | linear_coercive | constant | rotation | inverse_distance
  std::string family = "zero";
  double A = 0.0;
  double gamma = 1.0;
  /// Finite value, +inf, or tied to the grid as ell_grid_factor / h.
  double ell = std::numeric_limits<double>::infinity();
  std::optional<double> ell_grid_factor;
  double c0 = 1.0;
  Point vector{};
  double C = 1.0;
  std::optional<int> mollify;
};

struct SourceConfig {
  /// constant | radial_bump | ball_indicator | interior_bump | sine | distance_power | manufactured_sine
  std::string kind = "constant";
  double value = 1.0;
  double center = 0.5;
  double width = 0.3;
  double radius = 0.5;
  double margin = 0.25;
  double omega = 0.0;
  bool normalize = false;
};

struct PotentialConfig {
  /// none | constant
  std::string kind = "none";
  double value = 0.0;
};

struct StudyParams {
  std::vector<double> A;
  std::vector<double> barrier_ells;
  std::vector<int> mollify;
  std::vector<double> truncate;
  std::vector<double> ells;
  std::vector<double> m = {2.0};
  /// mollify | truncate | ell
  std::string sweep = "mollify";
  int bands = 3;
  double fit_tolerance = 0.15;
  double margin = 0.02;
  bool control = true;
  bool oracle = true;
  int oracle_cells = 100000;
  double oracle_tolerance = 0.05;
  /// poisson_constant_1d | sine_product | radial_oracle
  std::string exact = "sine_product";
  std::optional<double> expected_order;
  double order_tolerance = 0.2;
  double variation_tolerance = 0.10;
  double sup_ratio_min = 10.0;
  int trials = 16;
  double lm_exponent = 2.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  StudyKind study = StudyKind::SingleSolve;
  DomainShape domain;
  std::vector<int> grids;
  DiffusionConfig diffusion;
  DriftConfig drift;
  PotentialConfig potential;
  SourceConfig source;
  Scheme scheme = Scheme::Auto;
  SolverOptions solver;
  std::uint64_t seed = 1;
  StudyParams params;
  std::vector<std::string> warnings;
  nlohmann::json raw;
};

/// Throws ConfigError naming the offending field.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::string& path);

/// Problem on one grid. The eigenpair is computed on demand for boundary-singular drifts.
struct BuiltProblem {
  ProblemSpec problem;
  EigenpairPtr eigenpair;
};

BuiltProblem build_problem(const ScenarioConfig& cfg, const GridPtr& grid,
                           const EigenpairPtr& eigenpair = nullptr);

DiffusionTensorField build_diffusion(const DiffusionConfig& cfg, const GridPtr& grid);
DriftSpec build_drift_spec(const DriftConfig& cfg, const GridPtr& grid, const EigenpairPtr& eigenpair);
ScalarField build_source(const SourceConfig& cfg, const GridPtr& grid, const DriftConfig& drift);

/// Radial profile f(r) of the constant, radial_bump and ball_indicator
/// sources (before normalization). Throws ConfigError for other kinds.
std::function<double(double)> radial_source_profile(const SourceConfig& cfg);

/// Closed-form solution for manufactured sources on unit-scaled boxes.
double manufactured_solution(const DomainShape& shape, const Point& x);

}  // namespace driftlab
