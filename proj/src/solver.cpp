#include "driftlab/solver.hpp"

#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/SparseLU>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

using Vec = std::vector<double>;

// Sequential reductions keep iterates bit-reproducible.
double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

void spmv(const SparseMatrix& A, const double* x, double* y) {
  const auto* outer = A.outerIndexPtr();
  const auto* inner = A.innerIndexPtr();
  const double* val = A.valuePtr();
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    double s = 0.0;
    for (auto k = outer[r]; k < outer[r + 1]; ++k) s += val[k] * x[inner[k]];
    y[r] = s;
  }
}

Vec residual(const SparseMatrix& A, const Vec& x, std::span<const double> b) {
  Vec r(x.size());
  spmv(A, x.data(), r.data());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return r;
}

// Incomplete LU with the sparsity pattern of A (compressed row storage).
class Ilu0 {
 public:
  explicit Ilu0(const SparseMatrix& A)
      : n_(A.rows()),
        outer_(A.outerIndexPtr(), A.outerIndexPtr() + A.rows() + 1),
        inner_(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros()),
        val_(A.valuePtr(), A.valuePtr() + A.nonZeros()),
        diag_(static_cast<std::size_t>(n_), -1) {
    std::vector<long long> where(static_cast<std::size_t>(n_), -1);
    for (Eigen::Index i = 0; i < n_; ++i) {
      for (auto k = outer_[i]; k < outer_[i + 1]; ++k) {
        where[inner_[k]] = k;
        if (inner_[k] == i) diag_[i] = k;
      }
      if (diag_[i] < 0) throw SolverError("ILU(0): structurally zero diagonal", {}, NAN);
      for (auto k = outer_[i]; k < outer_[i + 1] && inner_[k] < i; ++k) {
        const auto c = inner_[k];
        val_[k] /= val_[diag_[c]];
        for (auto q = diag_[c] + 1; q < outer_[c + 1]; ++q) {
          const long long pos = where[inner_[q]];
          if (pos >= 0) val_[pos] -= val_[k] * val_[q];
        }
      }
      if (val_[diag_[i]] == 0.0) throw SolverError("ILU(0): zero pivot", {}, NAN);
      for (auto k = outer_[i]; k < outer_[i + 1]; ++k) where[inner_[k]] = -1;
    }
  }

  void apply(const Vec& b, Vec& x) const {
    for (Eigen::Index i = 0; i < n_; ++i) {
      double s = b[i];
      for (auto k = outer_[i]; k < diag_[i]; ++k) s -= val_[k] * x[inner_[k]];
      x[i] = s;
    }
    for (Eigen::Index i = n_ - 1; i >= 0; --i) {
      double s = x[i];
      for (auto k = diag_[i] + 1; k < outer_[i + 1]; ++k) s -= val_[k] * x[inner_[k]];
      x[i] = s / val_[diag_[i]];
    }
  }

 private:
  Eigen::Index n_;
  std::vector<int> outer_;
  std::vector<int> inner_;
  Vec val_;
  std::vector<long long> diag_;
};

// Right-preconditioned BiCGSTAB; restarts from the current iterate when the
// shadow residual loses orthogonality or the recursive residual drifts.
Vec bicgstab(const SparseMatrix& A, std::span<const double> b, double tol, int max_iter,
             int& iterations) {
  const std::size_t n = b.size();
  const Ilu0 ilu(A);
  const Vec bv(b.begin(), b.end());
  const double bnorm = norm2(bv);

  Vec x(n, 0.0), best = x;
  double best_res = 1.0;
  Vec r = bv, r0, p(n), v(n), y(n), s(n), z(n), t(n);
  iterations = 0;
  int restarts = 0;

  while (iterations < max_iter) {
    r0 = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    std::fill(p.begin(), p.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    bool restart = false;
    while (iterations < max_iter && !restart) {
      ++iterations;
      const double rho_new = dot(r0, r);
      if (std::abs(rho_new) < 1e-30 * dot(r0, r0)) {
        restart = true;
        break;
      }
      const double beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
      ilu.apply(p, y);
      spmv(A, y.data(), v.data());
      const double r0v = dot(r0, v);
      if (r0v == 0.0 || !std::isfinite(r0v)) {
        restart = true;
        break;
      }
      alpha = rho / r0v;
      for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
      if (norm2(s) / bnorm < tol) {
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * y[i];
        r = s;
      } else {
        ilu.apply(s, z);
        spmv(A, z.data(), t.data());
        const double tt = dot(t, t);
        omega = tt > 0.0 ? dot(t, s) / tt : 0.0;
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * y[i] + omega * z[i];
        for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
        if (omega == 0.0) restart = true;
      }
      const double res = norm2(r) / bnorm;
      if (!std::isfinite(res)) throw SolverError("BiCGSTAB diverged", best, best_res);
      if (res < best_res) {
        best_res = res;
        best = x;
      }
      if (res < tol) {
        // Confirm against the true residual before accepting.
        r = residual(A, x, b);
        const double true_res = norm2(r) / bnorm;
        if (true_res < tol) return x;
        restart = true;
      }
    }
    if (restart) {
      if (++restarts > 50) throw SolverError("BiCGSTAB breakdown", best, best_res);
      r = residual(A, x, b);
    }
  }
  throw SolverError("BiCGSTAB reached max_iter=" + std::to_string(max_iter), best, best_res);
}

Vec direct(const SparseMatrix& A, std::span<const double> b, double tol, bool m_matrix,
           int& iterations) {
  Eigen::SparseMatrix<double> colmajor(A);
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  // Diagonal pivots keep the elimination inside the M-matrix class, so a
  // nonnegative right-hand side gives a nonnegative solution in floating point.
  if (m_matrix) lu.setPivotThreshold(1e-8);
  lu.compute(colmajor);
  if (lu.info() != Eigen::Success)
    throw SolverError("sparse LU failed (" + lu.lastErrorMessage() +
                          "); the operator is singular, check its M-matrix report and the potential",
                      {}, NAN);
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = lu.solve(rhs);
  Vec xv(x.data(), x.data() + x.size());
  const double bnorm = norm2(Vec(b.begin(), b.end()));
  iterations = 0;
  // A few refinement sweeps for ill-conditioned systems.
  for (int k = 0; k < 3; ++k) {
    const Vec r = residual(A, xv, b);
    if (norm2(r) / bnorm < tol) break;
    const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::VectorXd dx = lu.solve(rv);
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += dx[static_cast<Eigen::Index>(i)];
    ++iterations;
  }
  return xv;
}

}  // namespace

double relative_residual(const SparseMatrix& A, std::span<const double> u, std::span<const double> f) {
  const Vec r = residual(A, Vec(u.begin(), u.end()), f);
  const double fn = norm2(Vec(f.begin(), f.end()));
  return fn > 0.0 ? norm2(r) / fn : norm2(r);
}

SolveReport solve(const SparseOperator& op, const ScalarField& rhs, const SolverOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = static_cast<std::size_t>(op.matrix.rows());
  if (rhs.size() != n) throw PreconditionError("solve: rhs size does not match the operator");
  if (!(opts.tol > 0.0)) throw PreconditionError("solve: tol must be positive");

  const bool use_direct = opts.method == SolveMethod::Direct ||
                          (opts.method == SolveMethod::Auto && n <= opts.direct_threshold);
  SolveReport report;
  report.method = use_direct ? "direct" : "bicgstab";

  bool zero = true;
  for (double v : rhs.values()) zero = zero && v == 0.0;
  Vec u;
  if (zero) {
    u.assign(n, 0.0);
  } else if (use_direct) {
    u = direct(op.matrix, rhs.values(), opts.tol, op.m_matrix_flag(), report.iterations);
  } else {
    u = bicgstab(op.matrix, rhs.values(), opts.tol, opts.max_iter, report.iterations);
  }
  report.relative_residual = zero ? 0.0 : relative_residual(op.matrix, u, rhs.values());
  if (!(report.relative_residual <= opts.tol))
    throw SolverError(report.method + " solve ended with relative residual " +
                          std::to_string(report.relative_residual),
                      u, report.relative_residual);
  report.u = ScalarField(op.grid, std::move(u));
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SolveReport solve(const SparseOperator& op, const ScalarField& rhs, double tol, int max_iter) {
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve(op, rhs, opts);
}

}  // namespace driftlab
