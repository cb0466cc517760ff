#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "driftlab/drift.hpp"
#include "driftlab/grid.hpp"

namespace driftlab {

/// Exponential is the Scharfetter-Gummel flux: exact for 1D constant
/// coefficients across each face and an M-matrix for every Peclet number.
enum class Scheme { Upwind, Central, Auto, Exponential };

std::string to_string(Scheme s);
/// "upwind" | "central" | "auto" | "exponential"; throws ConfigError otherwise.
Scheme parse_scheme(const std::string& name);

struct ProblemSpec {
  GridPtr grid;
  DiffusionTensorField M;
  DriftFields drift;
  std::optional<ScalarField> potential;
  ScalarField source;
  Scheme scheme = Scheme::Auto;

  /// Shared grid, a >= 0, matching sizes. Throws ConfigError.
  void validate() const;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct MMatrixReport {
  bool m_matrix = false;
  bool offdiag_nonpositive = false;
  bool positive_diagonal = false;
  bool row_dominant = false;
  bool column_dominant = false;
  /// Rows with a positive off-diagonal or a row-dominance deficit (first 32).
  std::vector<long long> offending_rows;
};

struct SparseOperator {
  SparseMatrix matrix;
  GridPtr grid;
  Scheme scheme_used = Scheme::Upwind;
  /// max over interior faces of |E.n| h / (2 alpha_ell).
  double max_peclet = 0.0;
  /// True when the stencil touches face neighbors only (diagonal M).
  bool compact = true;
  MMatrixReport report;
  bool m_matrix_flag() const { return report.m_matrix; }
};

double max_mesh_peclet(const ProblemSpec& problem);

/// Scheme actually used: Auto becomes Central when the mesh Peclet number is
/// below 1 on every interior face, Upwind otherwise.
Scheme resolve_scheme(const ProblemSpec& problem);

/// Throws AssemblyError naming the cell when a used drift value is non-finite.
SparseOperator assemble(const ProblemSpec& problem);

/// Matrix-free flux evaluation of the same discretization.
ScalarField apply_operator(const ProblemSpec& problem, const ScalarField& u);

/// Off-diagonals <= 0, positive diagonal, and weak diagonal dominance by rows.
/// Column dominance is accepted in place of row dominance: A^T is then an
/// M-matrix, so A^{-1} >= 0 as well.
MMatrixReport m_matrix_check(const SparseMatrix& A);

}  // namespace driftlab
