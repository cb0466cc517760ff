#include "driftlab/operator.hpp"

#include <algorithm>
#include <cmath>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

constexpr std::size_t kMaxOffendingRows = 32;

struct Term {
  long long col;  // -1: boundary value, which is zero
  double weight;
};

// Centered derivative along axis k at cell i as a combination of cell values.
void cell_derivative(const Grid& g, std::size_t i, int k, double scale, std::vector<Term>& out) {
  const long long jp = g.neighbor(i, k, 1);
  const long long jm = g.neighbor(i, k, -1);
  const double dp = jp >= 0 ? g.spacing()[k] : g.boundary_gap(i, k, 1);
  const double dm = jm >= 0 ? g.spacing()[k] : g.boundary_gap(i, k, -1);
  out.push_back({jp, 0.5 * scale / dp});
  out.push_back({jm, -0.5 * scale / dm});
  out.push_back({static_cast<long long>(i), 0.5 * scale * (1.0 / dm - 1.0 / dp)});
}

double checked_face(const ProblemSpec& p, std::size_t i, int d, int side) {
  const double e = p.drift.face(i, d, side);
  if (!std::isfinite(e))
    throw AssemblyError("non-finite drift on face (axis " + std::to_string(d) + ", side " +
                            std::to_string(side) + ") of cell " + std::to_string(i),
                        static_cast<long long>(i));
  return e;
}

double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

// Combined diffusive and convective outward flux across a face at distance
// dist with coefficient m: (m / dist) (B(-z) u_i - B(z) u_j), z = en dist / m.
struct Fitted {
  double self;
  double other;
};

Fitted fitted(double m, double en, double dist) {
  const double z = en * dist / m;
  return {m / dist * bernoulli(-z), -m / dist * bernoulli(z)};
}

// Outward convective coefficients across one face: flux = c_self u_i + c_other u_j.
struct Convective {
  double self = 0.0;
  double other = 0.0;
};

Convective convective(const ProblemSpec& p, Scheme scheme, std::size_t i, int d, int side,
                      bool boundary) {
  if (boundary) {
    if (scheme == Scheme::Central) return {};  // face value is the Dirichlet zero
    // Inflow carries the zero boundary value, so only outflow faces are read.
    const double en = side * p.drift.face(i, d, side);
    if (std::isnan(en) || en > 0.0) return {side * checked_face(p, i, d, side), 0.0};
    return {};
  }
  const double en = side * checked_face(p, i, d, side);
  if (scheme == Scheme::Central) return {0.5 * en, 0.5 * en};
  return en > 0.0 ? Convective{en, 0.0} : Convective{0.0, en};
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Upwind: return "upwind";
    case Scheme::Central: return "central";
    case Scheme::Auto: return "auto";
    case Scheme::Exponential: return "exponential";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "upwind") return Scheme::Upwind;
  if (name == "central") return Scheme::Central;
  if (name == "auto") return Scheme::Auto;
  if (name == "exponential") return Scheme::Exponential;
  throw ConfigError("unknown scheme '" + name + "' (expected upwind, central, auto or exponential)");
}

void ProblemSpec::validate() const {
  if (!grid) throw ConfigError("problem has no grid");
  const Grid& g = *grid;
  auto same = [&](const Grid& other, const char* what) {
    if (&other != &g && !other.same_layout(g))
      throw ConfigError(std::string(what) + " lives on a different grid");
  };
  same(M.grid(), "diffusion tensor");
  same(drift.grid(), "drift");
  same(source.grid(), "source");
  if (potential) {
    same(potential->grid(), "potential");
    for (std::size_t i = 0; i < potential->size(); ++i)
      if (!((*potential)[i] >= 0.0))
        throw ConfigError("potential must be >= 0; cell " + std::to_string(i) + " has " +
                          std::to_string((*potential)[i]));
  }
}

double max_mesh_peclet(const ProblemSpec& p) {
  const Grid& g = *p.grid;
  double pe = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int d = 0; d < g.dim(); ++d) {
      if (g.neighbor(i, d, 1) < 0) continue;
      const double e = std::abs(p.drift.face(i, d, 1));
      if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
      pe = std::max(pe, e * g.spacing()[d] / (2.0 * p.M.alpha_ell()));
    }
  return pe;
}

Scheme resolve_scheme(const ProblemSpec& p) {
  if (p.scheme != Scheme::Auto) return p.scheme;
  return max_mesh_peclet(p) < 1.0 ? Scheme::Central : Scheme::Upwind;
}

SparseOperator assemble(const ProblemSpec& p) {
  p.validate();
  const Grid& g = *p.grid;
  const int n = g.dim();
  const Scheme scheme = resolve_scheme(p);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(g.size() * (2 * n + 1) * (p.M.is_diagonal() ? 1 : 4));
  std::vector<Term> terms;

  for (std::size_t i = 0; i < g.size(); ++i) {
    const long long row = static_cast<long long>(i);
    double diag = p.potential ? (*p.potential)[i] : 0.0;
    for (int d = 0; d < n; ++d) {
      const double hd = g.spacing()[d];
      for (int side : {-1, 1}) {
        const long long j = g.neighbor(i, d, side);
        const bool boundary = j < 0;
        const Convective c = scheme == Scheme::Exponential
                                 ? Convective{}
                                 : convective(p, scheme, i, d, side, boundary);
        if (boundary) {
          const double gap = g.boundary_gap(i, d, side);
          if (scheme == Scheme::Exponential)
            diag += fitted(p.M[i][d][d], side * checked_face(p, i, d, side), gap).self / hd;
          else
            diag += p.M[i][d][d] / (gap * hd) + c.self / hd;
          continue;
        }
        const std::size_t js = static_cast<std::size_t>(j);
        const double mf = 0.5 * (p.M[i][d][d] + p.M[js][d][d]);
        if (scheme == Scheme::Exponential) {
          const Fitted fl = fitted(mf, side * checked_face(p, i, d, side), hd);
          diag += fl.self / hd;
          triplets.emplace_back(row, j, fl.other / hd);
        } else {
          diag += mf / (hd * hd) + c.self / hd;
          triplets.emplace_back(row, j, -mf / (hd * hd) + c.other / hd);
        }

        if (p.M.is_diagonal()) continue;
        for (int k = 0; k < n; ++k) {
          if (k == d) continue;
          const double mdk = 0.5 * (p.M[i][d][k] + p.M[js][d][k]);
          if (mdk == 0.0) continue;
          // outward flux -side * mdk * (d_k u)_face, face derivative averaged from both cells
          terms.clear();
          const double scale = -side * mdk * 0.5 / hd;
          cell_derivative(g, i, k, scale, terms);
          cell_derivative(g, js, k, scale, terms);
          for (const Term& t : terms)
            if (t.col >= 0) triplets.emplace_back(row, t.col, t.weight);
        }
      }
    }
    triplets.emplace_back(row, row, diag);
  }

  SparseOperator op;
  op.grid = p.grid;
  op.scheme_used = scheme;
  op.max_peclet = max_mesh_peclet(p);
  op.compact = p.M.is_diagonal();
  op.matrix.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
  op.matrix.setFromTriplets(triplets.begin(), triplets.end());
  op.matrix.makeCompressed();
  op.report = m_matrix_check(op.matrix);
  return op;
}

ScalarField apply_operator(const ProblemSpec& p, const ScalarField& u) {
  p.validate();
  const Grid& g = *p.grid;
  if (u.size() != g.size()) throw PreconditionError("apply_operator: field size mismatch");
  const int n = g.dim();
  const Scheme scheme = resolve_scheme(p);

  auto derivative = [&](std::size_t c, int k) {
    const long long jp = g.neighbor(c, k, 1);
    const long long jm = g.neighbor(c, k, -1);
    const double up = jp >= 0 ? u[static_cast<std::size_t>(jp)] : 0.0;
    const double um = jm >= 0 ? u[static_cast<std::size_t>(jm)] : 0.0;
    const double dp = jp >= 0 ? g.spacing()[k] : g.boundary_gap(c, k, 1);
    const double dm = jm >= 0 ? g.spacing()[k] : g.boundary_gap(c, k, -1);
    return 0.5 * ((up - u[c]) / dp + (u[c] - um) / dm);
  };

  ScalarField out(p.grid);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double acc = p.potential ? (*p.potential)[i] * u[i] : 0.0;
    for (int d = 0; d < n; ++d) {
      const double hd = g.spacing()[d];
      for (int side : {-1, 1}) {
        const long long j = g.neighbor(i, d, side);
        double flux = 0.0;  // outward, per unit face area
        if (j < 0 && scheme == Scheme::Exponential) {
          const double gap = g.boundary_gap(i, d, side);
          flux = fitted(p.M[i][d][d], side * checked_face(p, i, d, side), gap).self * u[i];
        } else if (j < 0) {
          flux = p.M[i][d][d] * u[i] / g.boundary_gap(i, d, side);
          if (scheme != Scheme::Central) {
            const double en = side * p.drift.face(i, d, side);
            if (std::isnan(en) || en > 0.0) flux += side * checked_face(p, i, d, side) * u[i];
          }
        } else {
          const std::size_t js = static_cast<std::size_t>(j);
          const double mf = 0.5 * (p.M[i][d][d] + p.M[js][d][d]);
          const double en = side * checked_face(p, i, d, side);
          if (scheme == Scheme::Exponential) {
            const Fitted fl = fitted(mf, en, hd);
            flux = fl.self * u[i] + fl.other * u[js];
          } else {
            flux = -mf * (u[js] - u[i]) / hd;
            if (scheme == Scheme::Central) flux += en * 0.5 * (u[i] + u[js]);
            else flux += en * (en > 0.0 ? u[i] : u[js]);
          }
          if (!p.M.is_diagonal())
            for (int k = 0; k < n; ++k) {
              if (k == d) continue;
              const double mdk = 0.5 * (p.M[i][d][k] + p.M[js][d][k]);
              if (mdk != 0.0) flux -= side * mdk * 0.5 * (derivative(i, k) + derivative(js, k));
            }
        }
        acc += flux / hd;
      }
    }
    out[i] = acc;
  }
  return out;
}

MMatrixReport m_matrix_check(const SparseMatrix& A) {
  const Eigen::Index rows = A.rows();
  MMatrixReport r;
  r.offdiag_nonpositive = true;
  r.positive_diagonal = true;
  r.row_dominant = true;
  r.column_dominant = true;

  std::vector<double> diag(static_cast<std::size_t>(rows), 0.0);
  std::vector<double> col_off(static_cast<std::size_t>(rows), 0.0);
  std::vector<char> flagged(static_cast<std::size_t>(rows), 0);
  auto flag = [&](Eigen::Index row) {
    if (flagged[row]) return;
    flagged[row] = 1;
    if (r.offending_rows.size() < kMaxOffendingRows) r.offending_rows.push_back(row);
  };

  for (Eigen::Index row = 0; row < rows; ++row) {
    double off = 0.0;
    for (SparseMatrix::InnerIterator it(A, row); it; ++it) {
      if (it.col() == row) {
        diag[row] += it.value();
      } else {
        off += std::abs(it.value());
        col_off[it.col()] += std::abs(it.value());
      }
    }
    for (SparseMatrix::InnerIterator it(A, row); it; ++it)
      if (it.col() != row && it.value() > 1e-14 * std::abs(diag[row])) {
        r.offdiag_nonpositive = false;
        flag(row);
      }
    if (!(diag[row] > 0.0)) {
      r.positive_diagonal = false;
      flag(row);
    }
    if (diag[row] - off < -1e-12 * std::abs(diag[row])) r.row_dominant = false, flag(row);
  }
  for (Eigen::Index c = 0; c < rows; ++c)
    if (diag[c] - col_off[c] < -1e-12 * std::abs(diag[c])) r.column_dominant = false;

  r.m_matrix = r.offdiag_nonpositive && r.positive_diagonal && (r.row_dominant || r.column_dominant);
  if (r.m_matrix) r.offending_rows.clear();
  return r;
}

}  // namespace driftlab
