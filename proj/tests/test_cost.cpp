#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cqlqg/cost.hpp"
#include "cqlqg/fixture.hpp"
#include "support.hpp"

using namespace cqlqg;

namespace {

ClosedLoop scalar_loop(double a, double b, double c) {
  return ClosedLoop{Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b),
                    Matrix::Constant(1, 1, c)};
}

CostGradient random_direction(const ControllerParams& u, std::mt19937_64& rng) {
  return CostGradient{random_symmetric(u.R.rows(), 1.0, rng),
                      random_normal(u.b.rows(), u.b.cols(), 1.0, rng),
                      random_normal(u.e.rows(), u.e.cols(), 1.0, rng)};
}

}  // namespace

TEST(Cost, ScalarSystem) {
  const ClosedLoop cl = scalar_loop(-1.0, 1.0, 1.0);
  EXPECT_NEAR(lqg_cost(cl), 0.25, 1e-15);
  EXPECT_NEAR(cost_rational_oracle(cl), 0.25, 1e-15);
  const CostForms forms = cost_equivalent_forms(cl, compute_gramians(cl));
  EXPECT_NEAR(forms.observability, 0.25, 1e-15);
  EXPECT_NEAR(forms.hankelian, 0.25, 1e-15);
}

TEST(Cost, ZeroOutputOrZeroNoise) {
  std::mt19937_64 rng(1);
  ClosedLoop cl{support::random_hurwitz(4, rng), random_normal(4, 3, 1.0, rng),
                Matrix::Zero(2, 4)};
  EXPECT_EQ(lqg_cost(cl), 0.0);
  const CostForms forms = cost_equivalent_forms(cl, compute_gramians(cl));
  EXPECT_EQ(forms.controllability, 0.0);
  EXPECT_EQ(forms.observability, 0.0);
  EXPECT_EQ(forms.hankelian, 0.0);

  cl.Ccl = random_normal(2, 4, 1.0, rng);
  cl.Bcl.setZero();
  EXPECT_EQ(cost_rational_oracle(cl), 0.0);
}

TEST(Cost, NonHurwitzIsInfinite) {
  EXPECT_EQ(lqg_cost(scalar_loop(0.5, 1.0, 1.0)), kInfiniteCost);
  EXPECT_THROW(compute_gramians(scalar_loop(0.5, 1.0, 1.0)), StabilityError);

  const Problem p = example::load_example();
  const ControllerParams zero{Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  EXPECT_EQ(lqg_cost(p, zero), kInfiniteCost);
  EXPECT_THROW(gradient(p, zero), StabilityError);
}

TEST(Cost, ThreeFormsAndOracleAgree) {
  for (const auto& inst : support::stabilizing_instances(20, 500)) {
    const Evaluation ev = evaluate(inst.problem, inst.u);
    ASSERT_TRUE(ev.stabilizing);
    const CostForms forms = cost_equivalent_forms(ev.closed_loop, *ev.gramians);
    const double oracle = cost_rational_oracle(ev.closed_loop);
    EXPECT_LE(support::relative_error(forms.controllability, forms.observability), 1e-8);
    EXPECT_LE(support::relative_error(forms.controllability, forms.hankelian), 1e-8);
    EXPECT_LE(support::relative_error(forms.controllability, oracle), 1e-8);
    EXPECT_DOUBLE_EQ(ev.cost, forms.controllability);
  }
}

TEST(Cost, ExampleOptimum) {
  const Problem p = example::load_example();
  const double cost = lqg_cost(p, example::reported_optimum());
  EXPECT_NEAR(cost / example::kReportedMinimumCost - 1.0, 0.0, 5e-3);
  EXPECT_NEAR(cost, 12.1042, 1e-3);
  EXPECT_LT(gradient(p, example::reported_optimum()).norm(), 0.05);
}

TEST(Cost, ExampleOptimumAsPrintedIsOffByTheSignTypo) {
  const Problem p = example::load_example();
  EXPECT_NEAR(lqg_cost(p, example::reported_optimum_as_printed()), 13.13, 0.01);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (const auto& inst : support::stabilizing_instances(20, 600)) {
    const CostGradient g = gradient(inst.problem, inst.u);
    const CostGradient fd = finite_diff_gradient(inst.problem, inst.u);
    EXPECT_LE(support::relative_error(g, fd), 1e-5);
    EXPECT_LE((g.dR - g.dR.transpose()).norm(), 1e-12 * g.dR.norm());
  }
}

TEST(Gradient, DirectionalDerivativeOnSymmetricDirections) {
  std::mt19937_64 rng(9);
  for (const auto& inst : support::stabilizing_instances(10, 700)) {
    const CostGradient g = gradient(inst.problem, inst.u);
    const CostGradient v = random_direction(inst.u, rng);
    const double fd = finite_diff_first(inst.problem, inst.u, v);
    EXPECT_LE(support::relative_error(inner(g, v), fd), 1e-5);
  }
}

TEST(Gradient, DerivativeAlongGradientIsSquaredNorm) {
  for (const auto& inst : support::stabilizing_instances(10, 800)) {
    const CostGradient g = gradient(inst.problem, inst.u);
    EXPECT_LE(support::relative_error(finite_diff_first(inst.problem, inst.u, g),
                                      g.squared_norm()),
              1e-5);
  }
}

TEST(SecondDerivative, MatchesFiniteDifferences) {
  for (const auto& inst : support::stabilizing_instances(20, 900)) {
    const Evaluation ev = evaluate(inst.problem, inst.u);
    const CostGradient g = gradient(inst.problem, ev);
    const double analytic = gateaux_second(inst.problem, ev, g);
    const double fd = finite_diff_second(inst.problem, inst.u, g);
    if (std::abs(analytic) > 1e-6) {
      EXPECT_LE(support::relative_error(analytic, fd), 1e-4);
    }
  }
}

TEST(SecondDerivative, ArbitraryDirections) {
  std::mt19937_64 rng(10);
  for (const auto& inst : support::stabilizing_instances(10, 1000)) {
    const Evaluation ev = evaluate(inst.problem, inst.u);
    const CostGradient v = random_direction(inst.u, rng);
    const double analytic = second_directional(inst.problem, ev, v);
    const double fd = finite_diff_second(inst.problem, inst.u, v);
    EXPECT_LE(support::relative_error(analytic, fd), 1e-4);
  }
}

TEST(SecondDerivative, ZeroDirection) {
  const Problem p = example::load_example();
  const ControllerParams u = example::reported_optimum();
  const CostGradient zero{Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  EXPECT_EQ(gateaux_second(p, u, zero), 0.0);
}

TEST(SecondDerivative, StencilErrorShrinksQuadratically) {
  const auto inst = support::stabilizing_instances(1, 1100).front();
  const CostGradient g = gradient(inst.problem, inst.u);
  const double exact = gateaux_second(inst.problem, inst.u, g);
  const double coarse = std::abs(finite_diff_second(inst.problem, inst.u, g, 1e-2) - exact);
  const double fine = std::abs(finite_diff_second(inst.problem, inst.u, g, 5e-3) - exact);
  EXPECT_GT(coarse / fine, 3.0);
  EXPECT_LT(coarse / fine, 5.0);
}

TEST(Invariance, SymplecticStateChange) {
  const Problem p = example::load_example();
  const ControllerParams u = example::reported_optimum();
  const double base = lqg_cost(p, u);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix sigma = support::random_symplectic(p.ccr.Theta2, 0.5, rng);
    ASSERT_LE((sigma * p.ccr.Theta2 * sigma.transpose() - p.ccr.Theta2).norm(), 1e-12);
    const double moved = lqg_cost(p, support::symplectic_transform(u, sigma));
    EXPECT_LE(support::relative_error(base, moved), 1e-8);
  }
}

TEST(CostModel, CachesGramiansAndBypassesForProbes) {
  const Problem p = example::load_example();
  const ControllerParams u = example::reported_optimum();
  CostModel model(p);
  const Evaluation& first = model.at(u);
  EXPECT_EQ(&first, &model.at(u));
  EXPECT_DOUBLE_EQ(model.cost(u), first.cost);
  const CostGradient g = model.gradient(u);
  EXPECT_LE((g - gradient(p, u)).norm(), 1e-14);
  EXPECT_DOUBLE_EQ(model.gateaux_second(u, g), gateaux_second(p, u, g));
}

TEST(FiniteDifference, ProbeLeavingStabilizingSetThrows) {
  const Problem p = example::load_example();
  const ControllerParams zero{Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  EXPECT_THROW(finite_diff_gradient(p, zero), StabilityError);
}
