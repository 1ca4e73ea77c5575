#pragma once

// Quantum plant / coherent controller data: CCR matrices, physical
// realizability (PR) identities, the Hamiltonian parameterization (R, b, e)
// of PR controllers, and closed-loop assembly.

#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "cqlqg/linalg.hpp"

namespace cqlqg {

struct Dimensions {
  Eigen::Index n = 0;   // plant and controller state dimension (even)
  Eigen::Index m1 = 0;  // plant noise dimension (even)
  Eigen::Index m2 = 0;  // controller noise dimension (even)
  Eigen::Index p1 = 0;  // plant output dimension
  Eigen::Index p2 = 0;  // controller output dimension
  Eigen::Index r = 0;   // criterion dimension
};

/// The 2x2 symplectic unit [[0, 1], [-1, 0]].
inline Matrix symplectic_unit() {
  Matrix j(2, 2);
  j << 0.0, 1.0, -1.0, 0.0;
  return j;
}

/// I_{k/2} ⊗ [[0, 1], [-1, 0]] for even k.
inline Matrix canonical_ccr_matrix(Eigen::Index k) {
  if (k <= 0 || k % 2 != 0) {
    throw DimensionError("canonical CCR matrix needs a positive even order, got " +
                         std::to_string(k));
  }
  return kron(Matrix::Identity(k / 2, k / 2), symplectic_unit());
}

/// Throws ValidationError unless theta is a square antisymmetric nonsingular matrix.
inline void validate_ccr_matrix(const Matrix& theta, const char* what) {
  if (theta.rows() != theta.cols()) {
    throw ValidationError(std::string(what) + " is not square");
  }
  require_finite(theta, what);
  const double scale = theta.norm();
  if ((theta + theta.transpose()).norm() > 1e-12 * (1.0 + scale)) {
    throw ValidationError(std::string(what) + " is not antisymmetric");
  }
  Eigen::FullPivLU<Matrix> lu(theta);
  lu.setThreshold(1e-12);
  if (scale == 0.0 || !lu.isInvertible()) {
    throw ValidationError(std::string(what) + " is singular");
  }
}

struct CcrStructure {
  Dimensions dims;
  Matrix J1;      // plant noise CCR matrix, m1 x m1
  Matrix J2;      // controller noise CCR matrix, m2 x m2
  Matrix J;       // diag(J1, J2)
  Matrix Theta1;  // plant state CCR matrix
  Matrix Theta2;  // controller state CCR matrix
  Matrix Theta;   // diag(Theta1, Theta2)
  Matrix Theta2_inv;
};

/// Canonical CCR structure. Theta1 is taken from `theta1` when supplied.
inline CcrStructure build_canonical_ccr(const Dimensions& dims,
                                        const std::optional<Matrix>& theta1 = std::nullopt) {
  if (dims.n <= 0 || dims.n % 2 != 0) throw DimensionError("n must be positive and even");
  if (dims.m1 <= 0 || dims.m1 % 2 != 0) throw DimensionError("m1 must be positive and even");
  if (dims.m2 <= 0 || dims.m2 % 2 != 0) throw DimensionError("m2 must be positive and even");
  if (dims.p1 <= 0 || dims.p2 <= 0 || dims.r <= 0) {
    throw DimensionError("p1, p2 and r must be positive");
  }
  CcrStructure ccr;
  ccr.dims = dims;
  ccr.J1 = canonical_ccr_matrix(dims.m1);
  ccr.J2 = canonical_ccr_matrix(dims.m2);
  ccr.J = block_diag(ccr.J1, ccr.J2);
  ccr.Theta2 = canonical_ccr_matrix(dims.n);
  if (theta1) {
    if (theta1->rows() != dims.n || theta1->cols() != dims.n) {
      throw ValidationError("theta1 must be n x n");
    }
    validate_ccr_matrix(*theta1, "theta1");
    ccr.Theta1 = *theta1;
  } else {
    ccr.Theta1 = canonical_ccr_matrix(dims.n);
  }
  ccr.Theta = block_diag(ccr.Theta1, ccr.Theta2);
  ccr.Theta2_inv = ccr.Theta2.inverse();
  return ccr;
}

inline CcrStructure with_theta1(CcrStructure ccr, const Matrix& theta1) {
  if (theta1.rows() != ccr.dims.n || theta1.cols() != ccr.dims.n) {
    throw ValidationError("theta1 must be n x n");
  }
  validate_ccr_matrix(theta1, "theta1");
  ccr.Theta1 = theta1;
  ccr.Theta = block_diag(ccr.Theta1, ccr.Theta2);
  return ccr;
}

struct PlantModel {
  Matrix A;  // n x n
  Matrix B;  // n x m1
  Matrix C;  // p1 x n
  Matrix D;  // p1 x m1
  Matrix E;  // n x p2
  Matrix F;  // r x n
  Matrix G;  // r x p2
};

/// Plant, CCR structure and the fixed controller noise feedthrough d.
/// Everything the cost needs apart from the controller parameters.
struct Problem {
  CcrStructure ccr;
  PlantModel plant;
  Matrix d;  // p2 x m2
};

namespace detail {

inline void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + shape(m));
  }
}

}  // namespace detail

inline void validate_dimensions(const PlantModel& plant, const Matrix& d, const Dimensions& dims) {
  detail::expect_shape(plant.A, dims.n, dims.n, "A");
  detail::expect_shape(plant.B, dims.n, dims.m1, "B");
  detail::expect_shape(plant.C, dims.p1, dims.n, "C");
  detail::expect_shape(plant.D, dims.p1, dims.m1, "D");
  detail::expect_shape(plant.E, dims.n, dims.p2, "E");
  detail::expect_shape(plant.F, dims.r, dims.n, "F");
  detail::expect_shape(plant.G, dims.r, dims.p2, "G");
  detail::expect_shape(d, dims.p2, dims.m2, "d");
}

inline void validate(const Problem& problem) {
  validate_dimensions(problem.plant, problem.d, problem.ccr.dims);
}

struct Theta1Derivation {
  Matrix theta1;
  double ccr11_residual = 0.0;
  double ccr12_plant_residual = 0.0;
};

/// Unique antisymmetric Theta1 with A Θ1 + Θ1 Aᵀ + B J1 Bᵀ + E d J2 dᵀ Eᵀ = 0.
/// Throws DegenerateEquationError when two eigenvalues of A sum to zero and
/// ValidationError when the solution is singular.
inline Theta1Derivation derive_plant_theta1(const PlantModel& plant, const Matrix& d,
                                            const CcrStructure& ccr) {
  validate_dimensions(plant, d, ccr.dims);
  const Matrix forcing = plant.B * ccr.J1 * plant.B.transpose() +
                         plant.E * d * ccr.J2 * d.transpose() * plant.E.transpose();
  const Matrix x = solve_lyapunov_general(plant.A, forcing);
  Theta1Derivation out;
  out.theta1 = asym(x);
  validate_ccr_matrix(out.theta1, "derived theta1");
  out.ccr11_residual =
      (plant.A * out.theta1 + out.theta1 * plant.A.transpose() + forcing).norm();
  out.ccr12_plant_residual =
      (out.theta1 * plant.C.transpose() + plant.B * ccr.J1 * plant.D.transpose()).norm();
  return out;
}

/// The optimization variable u = (R, b, e) with R symmetric.
struct ControllerParams {
  Matrix R;  // n x n, symmetric
  Matrix b;  // n x m2
  Matrix e;  // n x p1

  /// Builds parameters, symmetrizing R. Warns on stderr if R was noticeably asymmetric.
  static ControllerParams make(const Matrix& r, Matrix b, Matrix e) {
    detail::require_square(r, "R");
    const double asymmetry = (r - r.transpose()).norm();
    if (asymmetry > 1e-12 * (1.0 + r.norm())) {
      std::cerr << "warning: R is not symmetric (|R - R^T| = " << asymmetry
                << "); using sym(R)\n";
    }
    return ControllerParams{sym(r), std::move(b), std::move(e)};
  }

  double squared_norm() const {
    return R.squaredNorm() + b.squaredNorm() + e.squaredNorm();
  }
  double norm() const { return std::sqrt(squared_norm()); }
};

inline void validate_params(const ControllerParams& u, const Dimensions& dims) {
  detail::expect_shape(u.R, dims.n, dims.n, "R");
  detail::expect_shape(u.b, dims.n, dims.m2, "b");
  detail::expect_shape(u.e, dims.n, dims.p1, "e");
}

struct ControllerRealization {
  Matrix a;  // n x n
  Matrix b;  // n x m2
  Matrix c;  // p2 x n
  Matrix d;  // p2 x m2
  Matrix e;  // n x p1
};

/// Recovers (a, c) from the Hamiltonian parameters so that both controller PR
/// identities hold by construction.
inline ControllerRealization realize_controller(const ControllerParams& u, const Matrix& d,
                                                const PlantModel& plant,
                                                const CcrStructure& ccr) {
  validate_params(u, ccr.dims);
  detail::expect_shape(d, ccr.dims.p2, ccr.dims.m2, "d");
  detail::expect_shape(plant.D, ccr.dims.p1, ccr.dims.m1, "D");
  const Matrix& theta2_inv = ccr.Theta2_inv;
  const Matrix coupling = u.e * plant.D * ccr.J1 * plant.D.transpose() * u.e.transpose() +
                          u.b * ccr.J2 * u.b.transpose();
  ControllerRealization k;
  k.a = 2.0 * ccr.Theta2 * u.R - 0.5 * coupling * theta2_inv;
  k.b = u.b;
  k.c = -d * ccr.J2 * u.b.transpose() * theta2_inv;
  k.d = d;
  k.e = u.e;
  return k;
}

inline ControllerRealization realize_controller(const ControllerParams& u, const Problem& problem) {
  return realize_controller(u, problem.d, problem.plant, problem.ccr);
}

struct ClosedLoop {
  Matrix Acl;  // 2n x 2n
  Matrix Bcl;  // 2n x (m1 + m2)
  Matrix Ccl;  // r x 2n
};

inline ClosedLoop assemble_closed_loop(const PlantModel& plant, const ControllerRealization& k) {
  const Eigen::Index n = plant.A.rows();
  const Eigen::Index m1 = plant.B.cols();
  const Eigen::Index m2 = k.b.cols();
  detail::expect_shape(k.a, n, n, "a");
  detail::expect_shape(k.e, n, plant.C.rows(), "e");
  detail::expect_shape(k.c, plant.E.cols(), n, "c");
  detail::expect_shape(k.b, n, k.d.cols(), "b");
  detail::expect_shape(k.d, plant.E.cols(), m2, "d");
  detail::expect_shape(plant.D, plant.C.rows(), m1, "D");
  detail::expect_shape(plant.F, plant.F.rows(), n, "F");
  detail::expect_shape(plant.G, plant.F.rows(), plant.E.cols(), "G");

  ClosedLoop cl;
  cl.Acl.resize(2 * n, 2 * n);
  cl.Acl << plant.A, plant.E * k.c, k.e * plant.C, k.a;
  cl.Bcl.resize(2 * n, m1 + m2);
  cl.Bcl << plant.B, plant.E * k.d, k.e * plant.D, k.b;
  cl.Ccl.resize(plant.F.rows(), 2 * n);
  cl.Ccl << plant.F, plant.G * k.c;
  return cl;
}

/// Frobenius norms of the left-hand sides of the five PR identities.
struct PrResiduals {
  double ccr11 = 0.0;        // A Θ1 + Θ1 Aᵀ + B J1 Bᵀ + E d J2 dᵀ Eᵀ
  double ccr22 = 0.0;        // a Θ2 + Θ2 aᵀ + e D J1 Dᵀ eᵀ + b J2 bᵀ
  double ccr12 = 0.0;        // (Θ1 Cᵀ + B J1 Dᵀ) eᵀ + E (c Θ2 + d J2 bᵀ)
  double ccr12_plant = 0.0;  // Θ1 Cᵀ + B J1 Dᵀ
  double ccr12_cont = 0.0;   // c Θ2 + d J2 bᵀ

  double plant_max() const { return std::max(ccr11, ccr12_plant); }
  double controller_max() const { return std::max(ccr22, ccr12_cont); }
};

inline PrResiduals pr_residuals(const PlantModel& plant, const ControllerRealization& k,
                                const CcrStructure& ccr) {
  const Matrix& t1 = ccr.Theta1;
  const Matrix& t2 = ccr.Theta2;
  const Matrix plant_cross = t1 * plant.C.transpose() + plant.B * ccr.J1 * plant.D.transpose();
  const Matrix cont_cross = k.c * t2 + k.d * ccr.J2 * k.b.transpose();
  PrResiduals res;
  res.ccr11 = (plant.A * t1 + t1 * plant.A.transpose() +
               plant.B * ccr.J1 * plant.B.transpose() +
               plant.E * k.d * ccr.J2 * k.d.transpose() * plant.E.transpose())
                  .norm();
  res.ccr22 = (k.a * t2 + t2 * k.a.transpose() +
               k.e * plant.D * ccr.J1 * plant.D.transpose() * k.e.transpose() +
               k.b * ccr.J2 * k.b.transpose())
                  .norm();
  res.ccr12 = (plant_cross * k.e.transpose() + plant.E * cont_cross).norm();
  res.ccr12_plant = plant_cross.norm();
  res.ccr12_cont = cont_cross.norm();
  return res;
}

/// Plant-only PR residuals (CCR11 with the given d, CCR12 for the plant).
inline PrResiduals plant_pr_residuals(const Problem& problem) {
  const auto& dims = problem.ccr.dims;
  ControllerRealization zero{Matrix::Zero(dims.n, dims.n), Matrix::Zero(dims.n, dims.m2),
                             Matrix::Zero(dims.p2, dims.n), problem.d,
                             Matrix::Zero(dims.n, dims.p1)};
  PrResiduals res = pr_residuals(problem.plant, zero, problem.ccr);
  res.ccr22 = 0.0;
  res.ccr12 = 0.0;
  res.ccr12_cont = 0.0;
  return res;
}

/// ‖Acl Θ + Θ Aclᵀ + Bcl J Bclᵀ‖
inline double check_ccr_preservation(const ClosedLoop& cl, const CcrStructure& ccr) {
  return (cl.Acl * ccr.Theta + ccr.Theta * cl.Acl.transpose() +
          cl.Bcl * ccr.J * cl.Bcl.transpose())
      .norm();
}

/// Default PR validation threshold: 1e-8 scaled by the magnitude of the data.
inline double default_pr_tolerance(const PlantModel& plant) {
  const double scale = std::max({plant.A.norm(), plant.B.squaredNorm(), plant.C.norm(),
                                 plant.E.squaredNorm()});
  return 1e-8 * (1.0 + scale);
}

/// Standard-normal matrix scaled by `scale`.
template <class Rng>
Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * normal(rng);
  }
  return m;
}

/// Symmetrized Gaussian matrix.
template <class Rng>
Matrix random_symmetric(Eigen::Index n, double scale, Rng& rng) {
  return sym(random_normal(n, n, scale, rng));
}

/// [I_p 0], p x m
inline Matrix identity_feedthrough(Eigen::Index p, Eigen::Index m) {
  if (p > m) throw DimensionError("feedthrough needs p <= m");
  Matrix out = Matrix::Zero(p, m);
  out.leftCols(p).setIdentity();
  return out;
}

/// Plant whose A and C are fixed by the Hamiltonian parameterization:
/// A = 2 Θ1 R - ½ (B J1 Bᵀ + E d J2 dᵀ Eᵀ) Θ1⁻¹ and C = -(Θ1⁻¹ B J1 Dᵀ)ᵀ.
/// The remaining plant matrices are taken as given.
inline PlantModel pr_plant_from_hamiltonian(const CcrStructure& ccr, const Matrix& r_plant,
                                            const Matrix& b, const Matrix& e, const Matrix& f,
                                            const Matrix& g, const Matrix& d_plant,
                                            const Matrix& d) {
  const Dimensions& dims = ccr.dims;
  detail::expect_shape(r_plant, dims.n, dims.n, "R");
  detail::expect_shape(b, dims.n, dims.m1, "B");
  detail::expect_shape(e, dims.n, dims.p2, "E");
  detail::expect_shape(d_plant, dims.p1, dims.m1, "D");
  detail::expect_shape(d, dims.p2, dims.m2, "d");
  const Matrix t1_inv = ccr.Theta1.inverse();
  PlantModel plant;
  plant.B = b;
  plant.E = e;
  plant.F = f;
  plant.G = g;
  plant.D = d_plant;
  plant.C = -(t1_inv * b * ccr.J1 * d_plant.transpose()).transpose();
  plant.A = 2.0 * ccr.Theta1 * sym(r_plant) -
            0.5 * (b * ccr.J1 * b.transpose() + e * d * ccr.J2 * d.transpose() * e.transpose()) *
                t1_inv;
  return plant;
}

/// Random PR plant with canonical CCR matrices, D = [I 0] and d = [I 0].
inline Problem random_pr_plant(const Dimensions& dims, std::uint64_t seed, double scale = 1.0) {
  if (dims.p1 > dims.m1 || dims.p2 > dims.m2) {
    throw DimensionError("random_pr_plant needs p1 <= m1 and p2 <= m2");
  }
  Problem problem;
  problem.ccr = build_canonical_ccr(dims);
  std::mt19937_64 rng(seed);
  const Matrix r_plant = random_symmetric(dims.n, scale, rng);
  const Matrix b = random_normal(dims.n, dims.m1, scale, rng);
  const Matrix e = random_normal(dims.n, dims.p2, scale, rng);
  const Matrix f = random_normal(dims.r, dims.n, scale, rng);
  const Matrix g = random_normal(dims.r, dims.p2, scale, rng);
  problem.d = identity_feedthrough(dims.p2, dims.m2);
  problem.plant = pr_plant_from_hamiltonian(problem.ccr, r_plant, b, e, f, g,
                                            identity_feedthrough(dims.p1, dims.m1), problem.d);
  return problem;
}

}  // namespace cqlqg
