#pragma once

// Dense real-matrix helpers and algebraic Lyapunov equation (ALE) solvers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cqlqg/errors.hpp"

namespace cqlqg {

using Matrix = Eigen::MatrixXd;

inline constexpr double kDefaultHurwitzMargin = 1e-9;

namespace detail {

inline std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + shape(m));
  }
}

inline void require_same_shape(const Matrix& m, const Matrix& n, const char* what) {
  if (m.rows() != n.rows() || m.cols() != n.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape(m) + " vs " + shape(n));
  }
}

}  // namespace detail

/// Throws NumericError if any entry is NaN or infinite.
inline void require_finite(const Matrix& m, const char* what = "matrix") {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + " has non-finite entries");
  }
}

/// (M + Mᵀ)/2
inline Matrix sym(const Matrix& m) {
  detail::require_square(m, "sym");
  return 0.5 * (m + m.transpose());
}

/// (M - Mᵀ)/2
inline Matrix asym(const Matrix& m) {
  detail::require_square(m, "asym");
  return 0.5 * (m - m.transpose());
}

/// Tr(MᵀN)
inline double frobenius_inner(const Matrix& m, const Matrix& n) {
  detail::require_same_shape(m, n, "frobenius_inner");
  return m.cwiseProduct(n).sum();
}

struct SpectralReport {
  std::vector<std::complex<double>> eigenvalues;
  double max_real_part = -std::numeric_limits<double>::infinity();
  bool is_hurwitz = false;
  double margin = kDefaultHurwitzMargin;
};

/// Eigenvalues of a square matrix together with the Hurwitz verdict
/// `max Re(lambda) < -margin`. The empty matrix is reported as Hurwitz.
inline SpectralReport spectral_report(const Matrix& a, double margin = kDefaultHurwitzMargin) {
  detail::require_square(a, "spectral_report");
  if (margin < 0.0) throw ValidationError("spectral_report: margin must be nonnegative");
  SpectralReport report;
  report.margin = margin;
  if (a.rows() == 0) {
    report.is_hurwitz = true;
    return report;
  }
  if (!a.allFinite()) throw NumericError("spectral_report: non-finite matrix");
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericError("spectral_report: eigenvalue iteration did not converge");
  }
  const auto& values = solver.eigenvalues();
  report.eigenvalues.assign(values.data(), values.data() + values.size());
  std::sort(report.eigenvalues.begin(), report.eigenvalues.end(),
            [](const auto& x, const auto& y) {
              if (x.real() != y.real()) return x.real() > y.real();
              return x.imag() > y.imag();
            });
  for (const auto& v : report.eigenvalues) {
    report.max_real_part = std::max(report.max_real_part, v.real());
  }
  report.is_hurwitz = report.max_real_part < -margin;
  return report;
}

inline bool is_hurwitz(const Matrix& a, double margin = kDefaultHurwitzMargin) {
  return spectral_report(a, margin).is_hurwitz;
}

/// Solves A X + X Aᵀ + W = 0 for square A and any square W of the same order,
/// by complex Schur factorization of A and back-substitution. No stability
/// assumption is made; the equation only needs lambda_i + lambda_j != 0.
inline Matrix solve_lyapunov_general(const Matrix& a, const Matrix& w) {
  detail::require_square(a, "solve_lyapunov_general");
  detail::require_same_shape(a, w, "solve_lyapunov_general");
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);
  require_finite(a, "A");
  require_finite(w, "W");

  using Complex = std::complex<double>;
  using CMatrix = Eigen::MatrixXcd;
  Eigen::ComplexSchur<Matrix> schur(a);
  if (schur.info() != Eigen::Success) {
    throw NumericError("solve_lyapunov_general: Schur decomposition failed");
  }
  const CMatrix& t = schur.matrixT();
  const CMatrix& u = schur.matrixU();
  const CMatrix rhs = u.adjoint() * w.cast<Complex>() * u;

  const double degenerate = 1e-13 * (1.0 + a.norm());
  CMatrix y = CMatrix::Zero(n, n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      Complex acc = -rhs(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) acc -= t(i, k) * y(k, j);
      for (Eigen::Index k = j + 1; k < n; ++k) acc -= y(i, k) * std::conj(t(j, k));
      const Complex pivot = t(i, i) + std::conj(t(j, j));
      if (std::abs(pivot) <= degenerate) {
        throw DegenerateEquationError(
            "solve_lyapunov_general: eigenvalue pair sums to zero; solution is not unique");
      }
      y(i, j) = acc / pivot;
    }
  }
  Matrix x = (u * y * u.adjoint()).real();
  require_finite(x, "Lyapunov solution");
  return x;
}

enum class Orientation {
  kControllability,  // A X + X Aᵀ + W = 0
  kObservability,    // Aᵀ X + X A + W = 0
};

/// Solves the algebraic Lyapunov equation for Hurwitz A and symmetric W.
/// The result is symmetrized.
inline Matrix solve_ale(const Matrix& a, const Matrix& w, Orientation orientation,
                        double margin = kDefaultHurwitzMargin) {
  detail::require_square(a, "solve_ale");
  detail::require_same_shape(a, w, "solve_ale");
  if ((w - w.transpose()).norm() > 1e-10 * (1.0 + w.norm())) {
    throw ValidationError("solve_ale: forcing term W is not symmetric");
  }
  const SpectralReport spectrum = spectral_report(a, margin);
  if (!spectrum.is_hurwitz) {
    throw StabilityError("solve_ale: A is not Hurwitz (max real part " +
                         std::to_string(spectrum.max_real_part) + ")");
  }
  const Matrix x = orientation == Orientation::kControllability
                       ? solve_lyapunov_general(a, w)
                       : solve_lyapunov_general(a.transpose(), w);
  return 0.5 * (x + x.transpose());
}

/// Column-wise vectorization col(M).
inline Eigen::VectorXd col(const Matrix& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

/// Kronecker product.
inline Matrix kron(const Matrix& x, const Matrix& y) {
  Matrix out(x.rows() * y.rows(), x.cols() * y.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    }
  }
  return out;
}

/// Kronecker sum A ⊕ A = I ⊗ A + A ⊗ I.
inline Matrix kron_sum(const Matrix& a) {
  detail::require_square(a, "kron_sum");
  const Matrix id = Matrix::Identity(a.rows(), a.rows());
  return kron(id, a) + kron(a, id);
}

/// Brute-force solve of A X + X Aᵀ + W = 0 through col(X) = -(A ⊕ A)⁻¹ col(W).
/// Intended as an independent check on solve_ale for small orders.
inline Matrix kron_solve(const Matrix& a, const Matrix& w) {
  detail::require_square(a, "kron_solve");
  detail::require_same_shape(a, w, "kron_solve");
  const Eigen::Index n = a.rows();
  Eigen::FullPivLU<Matrix> lu(kron_sum(a));
  if (!lu.isInvertible()) {
    throw StabilityError("kron_solve: Kronecker sum is singular (A is not Hurwitz)");
  }
  const Eigen::VectorXd x = -lu.solve(col(w));
  return Eigen::Map<const Matrix>(x.data(), n, n);
}

/// The (row_block, col_block) n×n block of a 2n×2n matrix; blocks are numbered 1 and 2.
inline Matrix block(const Matrix& x, int row_block, int col_block, Eigen::Index n) {
  if (x.rows() != 2 * n || x.cols() != 2 * n || n <= 0) {
    throw DimensionError("block: expected order 2n = " + std::to_string(2 * n) + ", got " +
                         detail::shape(x));
  }
  if (row_block < 1 || row_block > 2 || col_block < 1 || col_block > 2) {
    throw DimensionError("block: block indices must be 1 or 2");
  }
  return x.block((row_block - 1) * n, (col_block - 1) * n, n, n);
}

/// Block-diagonal matrix diag(x, y).
inline Matrix block_diag(const Matrix& x, const Matrix& y) {
  Matrix out = Matrix::Zero(x.rows() + y.rows(), x.cols() + y.cols());
  out.topLeftCorner(x.rows(), x.cols()) = x;
  out.bottomRightCorner(y.rows(), y.cols()) = y;
  return out;
}

}  // namespace cqlqg
