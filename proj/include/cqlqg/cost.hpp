#pragma once

// LQG cost of the closed loop, its Fréchet gradient with respect to the
// Hamiltonian parameters u = (R, b, e), and the second directional
// derivative used by the step-size heuristic.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>

#include "cqlqg/linalg.hpp"
#include "cqlqg/model.hpp"

namespace cqlqg {

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

struct GramianSet {
  Matrix P;  // controllability Gramian, Acl P + P Aclᵀ + Bcl Bclᵀ = 0
  Matrix Q;  // observability Gramian, Aclᵀ Q + Q Acl + Cclᵀ Ccl = 0
  Matrix H;  // Hankelian Q P
};

inline GramianSet compute_gramians(const ClosedLoop& cl, double margin = kDefaultHurwitzMargin) {
  GramianSet g;
  g.P = solve_ale(cl.Acl, cl.Bcl * cl.Bcl.transpose(), Orientation::kControllability, margin);
  g.Q = solve_ale(cl.Acl, cl.Ccl.transpose() * cl.Ccl, Orientation::kObservability, margin);
  g.H = g.Q * g.P;
  return g;
}

/// ½⟨Cclᵀ Ccl, P⟩, or +infinity when Acl is not Hurwitz.
inline double lqg_cost(const ClosedLoop& cl, double margin = kDefaultHurwitzMargin) {
  if (!spectral_report(cl.Acl, margin).is_hurwitz) return kInfiniteCost;
  const Matrix p =
      solve_ale(cl.Acl, cl.Bcl * cl.Bcl.transpose(), Orientation::kControllability, margin);
  return 0.5 * frobenius_inner(cl.Ccl.transpose() * cl.Ccl, p);
}

struct CostForms {
  double controllability = 0.0;  // ½⟨Cᵀ C, P⟩
  double observability = 0.0;    // ½⟨Q, B Bᵀ⟩
  double hankelian = 0.0;        // -⟨H, A⟩
};

inline CostForms cost_equivalent_forms(const ClosedLoop& cl, const GramianSet& g) {
  if (!is_hurwitz(cl.Acl)) throw StabilityError("cost_equivalent_forms: Acl is not Hurwitz");
  CostForms forms;
  forms.controllability = 0.5 * frobenius_inner(cl.Ccl.transpose() * cl.Ccl, g.P);
  forms.observability = 0.5 * frobenius_inner(g.Q, cl.Bcl * cl.Bcl.transpose());
  forms.hankelian = -frobenius_inner(g.H, cl.Acl);
  return forms;
}

/// Cost as the rational expression -½ col(CᵀC)ᵀ (A ⊕ A)⁻¹ col(B Bᵀ).
/// Independent of the Schur-based Lyapunov solver.
inline double cost_rational_oracle(const ClosedLoop& cl) {
  const Matrix ksum = kron_sum(cl.Acl);
  Eigen::FullPivLU<Matrix> lu(ksum);
  if (!lu.isInvertible()) {
    throw StabilityError("cost_rational_oracle: Kronecker sum is singular");
  }
  const Eigen::VectorXd y = lu.solve(col(cl.Bcl * cl.Bcl.transpose()));
  return -0.5 * col(cl.Ccl.transpose() * cl.Ccl).dot(y);
}

/// Gradient triple (∂_R, ∂_b, ∂_e); also used as a direction in parameter space.
struct CostGradient {
  Matrix dR;  // symmetric n x n
  Matrix db;  // n x m2
  Matrix de;  // n x p1

  double squared_norm() const {
    return dR.squaredNorm() + db.squaredNorm() + de.squaredNorm();
  }
  double norm() const { return std::sqrt(squared_norm()); }
};

inline double inner(const CostGradient& g, const CostGradient& h) {
  return frobenius_inner(g.dR, h.dR) + frobenius_inner(g.db, h.db) + frobenius_inner(g.de, h.de);
}

inline CostGradient operator-(const CostGradient& g, const CostGradient& h) {
  return {g.dR - h.dR, g.db - h.db, g.de - h.de};
}

inline CostGradient operator*(double s, const CostGradient& g) {
  return {s * g.dR, s * g.db, s * g.de};
}

/// u + s·v
inline ControllerParams displaced(const ControllerParams& u, double s, const CostGradient& v) {
  return {u.R + s * v.dR, u.b + s * v.db, u.e + s * v.de};
}

struct AuxPair {
  Matrix psi;  // asym(H22 Θ2⁻¹)
  Matrix chi;  // Θ2⁻¹ (H12ᵀ E + P21 Fᵀ G + P22 cᵀ Gᵀ G)
};

/// Realization, closed loop and (when stabilizing) Gramians at one parameter point.
struct Evaluation {
  ControllerParams params;
  ControllerRealization realization;
  ClosedLoop closed_loop;
  bool stabilizing = false;
  double cost = kInfiniteCost;
  std::optional<GramianSet> gramians;
};

inline Evaluation evaluate(const Problem& problem, const ControllerParams& u,
                           double margin = kDefaultHurwitzMargin, bool with_gramians = true) {
  Evaluation ev;
  ev.params = u;
  ev.realization = realize_controller(u, problem);
  ev.closed_loop = assemble_closed_loop(problem.plant, ev.realization);
  if (!ev.closed_loop.Acl.allFinite()) return ev;
  ev.stabilizing = spectral_report(ev.closed_loop.Acl, margin).is_hurwitz;
  if (!ev.stabilizing) return ev;
  if (with_gramians) {
    ev.gramians = compute_gramians(ev.closed_loop, margin);
    ev.cost = 0.5 * frobenius_inner(ev.closed_loop.Ccl.transpose() * ev.closed_loop.Ccl,
                                    ev.gramians->P);
  } else {
    ev.cost = lqg_cost(ev.closed_loop, margin);
  }
  return ev;
}

namespace detail {

inline const GramianSet& require_gramians(const Evaluation& ev) {
  if (!ev.stabilizing || !ev.gramians) {
    throw StabilityError("controller is not internally stabilizing");
  }
  return *ev.gramians;
}

}  // namespace detail

inline AuxPair aux_pair(const Problem& problem, const Evaluation& ev) {
  const GramianSet& g = detail::require_gramians(ev);
  const Eigen::Index n = problem.ccr.dims.n;
  const Matrix& t2_inv = problem.ccr.Theta2_inv;
  const PlantModel& plant = problem.plant;
  const Matrix& c = ev.realization.c;
  AuxPair aux;
  aux.psi = asym(block(g.H, 2, 2, n) * t2_inv);
  aux.chi = t2_inv * (block(g.H, 1, 2, n).transpose() * plant.E +
                      block(g.P, 2, 1, n) * plant.F.transpose() * plant.G +
                      block(g.P, 2, 2, n) * c.transpose() * plant.G.transpose() * plant.G);
  return aux;
}

/// Fréchet gradient of the cost at an evaluated stabilizing point.
inline CostGradient gradient(const Problem& problem, const Evaluation& ev) {
  const GramianSet& g = detail::require_gramians(ev);
  const Eigen::Index n = problem.ccr.dims.n;
  const PlantModel& plant = problem.plant;
  const CcrStructure& ccr = problem.ccr;
  const ControllerParams& u = ev.params;
  const Matrix& d = problem.d;
  const AuxPair aux = aux_pair(problem, ev);

  const Matrix q21 = block(g.Q, 2, 1, n);
  const Matrix q22 = block(g.Q, 2, 2, n);
  const Matrix noise_coupling = plant.D * ccr.J1 * plant.D.transpose();

  CostGradient grad;
  grad.dR = -2.0 * sym(ccr.Theta2 * block(g.H, 2, 2, n));
  grad.db = q21 * plant.E * d + q22 * u.b - aux.psi * u.b * ccr.J2 - aux.chi * d * ccr.J2;
  grad.de = block(g.H, 2, 1, n) * plant.C.transpose() + q21 * plant.B * plant.D.transpose() +
            q22 * u.e - aux.psi * u.e * noise_coupling;
  return grad;
}

/// Second directional derivative d²/ds² E(u + s v) at s = 0, obtained by
/// differentiating the gradient formulas along v (Leibniz rule plus the two
/// derivative Lyapunov equations for P and Q) and pairing with v.
inline double second_directional(const Problem& problem, const Evaluation& ev,
                                 const CostGradient& v) {
  const GramianSet& g = detail::require_gramians(ev);
  const Eigen::Index n = problem.ccr.dims.n;
  const PlantModel& plant = problem.plant;
  const CcrStructure& ccr = problem.ccr;
  const ControllerParams& u = ev.params;
  const ClosedLoop& cl = ev.closed_loop;
  const Matrix& d = problem.d;
  const Matrix& t2 = ccr.Theta2;
  const Matrix& t2_inv = ccr.Theta2_inv;
  const Matrix noise_coupling = plant.D * ccr.J1 * plant.D.transpose();

  // Derivatives of the controller and closed-loop matrices along v.
  const Matrix da_asym = v.de * noise_coupling * u.e.transpose() + v.db * ccr.J2 * u.b.transpose();
  const Matrix da = 2.0 * t2 * v.dR - asym(da_asym) * t2_inv;
  const Matrix dc = -d * ccr.J2 * v.db.transpose() * t2_inv;

  const Eigen::Index m1 = plant.B.cols();
  const Eigen::Index m2 = u.b.cols();
  Matrix dA = Matrix::Zero(2 * n, 2 * n);
  dA.topRightCorner(n, n) = plant.E * dc;
  dA.bottomLeftCorner(n, n) = v.de * plant.C;
  dA.bottomRightCorner(n, n) = da;
  Matrix dB = Matrix::Zero(2 * n, m1 + m2);
  dB.bottomLeftCorner(n, m1) = v.de * plant.D;
  dB.bottomRightCorner(n, m2) = v.db;
  Matrix dC = Matrix::Zero(cl.Ccl.rows(), 2 * n);
  dC.rightCols(n) = plant.G * dc;

  const Matrix p_forcing = 2.0 * sym(dA * g.P + dB * cl.Bcl.transpose());
  const Matrix q_forcing = 2.0 * sym(dA.transpose() * g.Q + cl.Ccl.transpose() * dC);
  const Matrix dP = solve_lyapunov_general(cl.Acl, p_forcing);
  const Matrix dQ = solve_lyapunov_general(cl.Acl.transpose(), q_forcing);
  const Matrix dH = dQ * g.P + g.Q * dP;

  const AuxPair aux = aux_pair(problem, ev);
  const Matrix& c = ev.realization.c;
  const Matrix gtg = plant.G.transpose() * plant.G;
  const Matrix dpsi = asym(block(dH, 2, 2, n) * t2_inv);
  const Matrix dchi =
      t2_inv * (block(dH, 1, 2, n).transpose() * plant.E +
                block(dP, 2, 1, n) * plant.F.transpose() * plant.G +
                block(dP, 2, 2, n) * c.transpose() * gtg + block(g.P, 2, 2, n) * dc.transpose() * gtg);

  const Matrix q22 = block(g.Q, 2, 2, n);
  const Matrix dq21 = block(dQ, 2, 1, n);
  const Matrix dq22 = block(dQ, 2, 2, n);

  const Matrix d_grad_R = -2.0 * sym(t2 * block(dH, 2, 2, n));
  const Matrix d_grad_b = dq21 * plant.E * d + dq22 * u.b + q22 * v.db - dpsi * u.b * ccr.J2 -
                          aux.psi * v.db * ccr.J2 - dchi * d * ccr.J2;
  const Matrix d_grad_e = block(dH, 2, 1, n) * plant.C.transpose() +
                          dq21 * plant.B * plant.D.transpose() + dq22 * u.e + q22 * v.de -
                          dpsi * u.e * noise_coupling - aux.psi * v.de * noise_coupling;

  return frobenius_inner(d_grad_R, v.dR) + frobenius_inner(d_grad_b, v.db) +
         frobenius_inner(d_grad_e, v.de);
}

/// Second Gâteaux derivative of the cost along the gradient g.
inline double gateaux_second(const Problem& problem, const Evaluation& ev, const CostGradient& g) {
  return second_directional(problem, ev, g);
}

/// Cost, gradient and second Gâteaux derivative for one problem, sharing the
/// Gramians between calls at the same parameter value. Not thread-safe; give
/// each concurrent descent its own instance.
class CostModel {
 public:
  explicit CostModel(Problem problem, double margin = kDefaultHurwitzMargin)
      : problem_(std::move(problem)), margin_(margin) {
    validate(problem_);
  }

  const Problem& problem() const { return problem_; }
  double margin() const { return margin_; }

  /// E(u), or +infinity off the stabilizing set. Does not touch the cache.
  double cost(const ControllerParams& u) const {
    return evaluate(problem_, u, margin_, /*with_gramians=*/false).cost;
  }

  /// Full evaluation at u, cached by value.
  const Evaluation& at(const ControllerParams& u) const {
    if (!cache_ || !same_point(cache_->params, u)) {
      cache_ = std::make_unique<Evaluation>(evaluate(problem_, u, margin_));
    }
    return *cache_;
  }

  CostGradient gradient(const ControllerParams& u) const {
    return cqlqg::gradient(problem_, at(u));
  }

  double gateaux_second(const ControllerParams& u, const CostGradient& g) const {
    return cqlqg::gateaux_second(problem_, at(u), g);
  }

  double second_directional(const ControllerParams& u, const CostGradient& v) const {
    return cqlqg::second_directional(problem_, at(u), v);
  }

 private:
  static bool same_point(const ControllerParams& x, const ControllerParams& y) {
    return x.R == y.R && x.b == y.b && x.e == y.e;
  }

  Problem problem_;
  double margin_;
  mutable std::unique_ptr<Evaluation> cache_;
};

/// Convenience wrappers evaluating from scratch.
inline double lqg_cost(const Problem& problem, const ControllerParams& u,
                       double margin = kDefaultHurwitzMargin) {
  return evaluate(problem, u, margin, false).cost;
}

inline CostGradient gradient(const Problem& problem, const ControllerParams& u,
                             double margin = kDefaultHurwitzMargin) {
  return gradient(problem, evaluate(problem, u, margin));
}

inline double gateaux_second(const Problem& problem, const ControllerParams& u,
                             const CostGradient& g, double margin = kDefaultHurwitzMargin) {
  return gateaux_second(problem, evaluate(problem, u, margin), g);
}

inline constexpr double kGradientFdStep = 1e-5;
inline constexpr double kSecondFdStep = 1e-4;

namespace detail {

inline double probe_cost(const Problem& problem, const ControllerParams& u, double margin) {
  const double value = lqg_cost(problem, u, margin);
  if (!std::isfinite(value)) {
    throw StabilityError("finite-difference probe left the stabilizing set");
  }
  return value;
}

}  // namespace detail

/// Central-difference gradient. Off-diagonal R entries are perturbed in
/// symmetric pairs so the result is the gradient on symmetric matrices.
inline CostGradient finite_diff_gradient(const Problem& problem, const ControllerParams& u,
                                         double step = kGradientFdStep,
                                         double margin = kDefaultHurwitzMargin) {
  auto central = [&](auto&& perturb) {
    ControllerParams plus = u;
    ControllerParams minus = u;
    perturb(plus, step);
    perturb(minus, -step);
    return (detail::probe_cost(problem, plus, margin) -
            detail::probe_cost(problem, minus, margin)) /
           (2.0 * step);
  };

  CostGradient fd{Matrix::Zero(u.R.rows(), u.R.cols()), Matrix::Zero(u.b.rows(), u.b.cols()),
                  Matrix::Zero(u.e.rows(), u.e.cols())};
  for (Eigen::Index i = 0; i < u.R.rows(); ++i) {
    for (Eigen::Index j = i; j < u.R.cols(); ++j) {
      const double slope = central([&](ControllerParams& x, double h) {
        x.R(i, j) += h;
        if (i != j) x.R(j, i) += h;
      });
      // Moving both (i,j) and (j,i) picks up the gradient entry twice.
      fd.dR(i, j) = fd.dR(j, i) = (i == j) ? slope : 0.5 * slope;
    }
  }
  for (Eigen::Index i = 0; i < u.b.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.b.cols(); ++j) {
      fd.db(i, j) = central([&](ControllerParams& x, double h) { x.b(i, j) += h; });
    }
  }
  for (Eigen::Index i = 0; i < u.e.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.e.cols(); ++j) {
      fd.de(i, j) = central([&](ControllerParams& x, double h) { x.e(i, j) += h; });
    }
  }
  return fd;
}

/// Second central difference of s -> E(u + s v) at s = 0. The stencil is taken
/// along the unit direction v/‖v‖ with spacing `step` and rescaled by ‖v‖².
inline double finite_diff_second(const Problem& problem, const ControllerParams& u,
                                 const CostGradient& v, double step = kSecondFdStep,
                                 double margin = kDefaultHurwitzMargin) {
  const double vnorm = v.norm();
  if (vnorm == 0.0) return 0.0;
  const double h = step / vnorm;
  const double mid = detail::probe_cost(problem, u, margin);
  const double plus = detail::probe_cost(problem, displaced(u, h, v), margin);
  const double minus = detail::probe_cost(problem, displaced(u, -h, v), margin);
  return (plus - 2.0 * mid + minus) / (h * h);
}

/// First central difference of s -> E(u + s v) at s = 0 (unit-direction stencil).
inline double finite_diff_first(const Problem& problem, const ControllerParams& u,
                                const CostGradient& v, double step = kGradientFdStep,
                                double margin = kDefaultHurwitzMargin) {
  const double vnorm = v.norm();
  if (vnorm == 0.0) return 0.0;
  const double h = step / vnorm;
  return (detail::probe_cost(problem, displaced(u, h, v), margin) -
          detail::probe_cost(problem, displaced(u, -h, v), margin)) /
         (2.0 * h);
}

}  // namespace cqlqg
