#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "cqlqg/descent.hpp"
#include "cqlqg/fixture.hpp"

namespace cqlqg::support {

struct Instance {
  Problem problem;
  ControllerParams u;
};

/// Random Hurwitz matrix: a random draw shifted left past its spectral abscissa.
template <class Rng>
Matrix random_hurwitz(Eigen::Index n, Rng& rng, double gap = 0.5) {
  Matrix a = random_normal(n, n, 1.0, rng);
  const double shift = spectral_report(a, 0.0).max_real_part + gap;
  a -= shift * Matrix::Identity(n, n);
  return a;
}

/// Stabilizing (plant, controller) pairs at the example dimensions. Even
/// indices reuse the example plant; odd ones draw a fresh PR plant. Plants for
/// which the random search fails are skipped. The closed-loop spectral abscissa
/// is kept below -margin so that fixed-step finite differences stay inside the
/// stabilizing set and resolve the derivatives.
inline std::vector<Instance> stabilizing_instances(int count, std::uint64_t seed,
                                                   double margin = 0.1) {
  std::vector<Instance> out;
  const Problem example = example::load_example();
  DescentConfig config;
  config.init_max_attempts = 20000;
  config.hurwitz_margin = margin;
  std::uint64_t s = seed;
  while (static_cast<int>(out.size()) < count) {
    const bool use_example = out.size() % 2 == 0;
    Problem problem = use_example ? example : random_pr_plant(example::dimensions(), s, 0.8);
    config.seed = s++;
    config.init_scale = use_example ? 2.0 : 1.0;
    try {
      InitResult init = random_stabilizing_init(problem, config);
      out.push_back({std::move(problem), std::move(init.params)});
    } catch (const NoStabilizerFound&) {
    }
  }
  return out;
}

inline double relative_error(const CostGradient& a, const CostGradient& b) {
  return (a - b).norm() / std::max(a.norm(), b.norm());
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Symplectic Σ = exp(Θ S) for symmetric S, so that Σ Θ Σᵀ = Θ.
inline Matrix random_symplectic(const Matrix& theta, double scale, std::mt19937_64& rng) {
  const Matrix s = random_symmetric(theta.rows(), scale, rng);
  return Matrix((theta * s).exp());
}

/// The controller after the state change x ↦ Σx: (Σ⁻ᵀ R Σ⁻¹, Σ b, Σ e).
inline ControllerParams symplectic_transform(const ControllerParams& u, const Matrix& sigma) {
  const Matrix inv = sigma.inverse();
  return ControllerParams{sym(inv.transpose() * u.R * inv), sigma * u.b, sigma * u.e};
}

}  // namespace cqlqg::support
