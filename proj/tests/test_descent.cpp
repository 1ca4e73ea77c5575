#include <gtest/gtest.h>

#include <cmath>

#include "cqlqg/descent.hpp"
#include "cqlqg/fixture.hpp"
#include "support.hpp"

using namespace cqlqg;

namespace {

/// First seed whose random PR plant at the example dimensions is stable.
Problem stable_pr_plant() {
  for (std::uint64_t seed = 0;; ++seed) {
    Problem p = random_pr_plant(example::dimensions(), seed);
    if (is_hurwitz(p.plant.A, 0.05)) return p;
  }
}

void expect_certificates(const DescentResult& run, const DescentConfig& config) {
  ASSERT_FALSE(run.trace.empty());
  for (std::size_t i = 0; i < run.trace.size(); ++i) {
    const IterationRecord& rec = run.trace[i];
    EXPECT_EQ(rec.k, static_cast<long>(i));
    EXPECT_LT(rec.next_cost, rec.cost);
    EXPECT_GE(rec.cost - rec.next_cost,
              config.sigma * rec.stepsize * rec.grad_norm * rec.grad_norm);
    EXPECT_DOUBLE_EQ(rec.stepsize, rec.horizon * std::pow(config.f, rec.armijo_index));
    if (i + 1 < run.trace.size()) {
      EXPECT_EQ(run.trace[i + 1].cost, rec.next_cost);
      EXPECT_GT(rec.stepsize * rec.grad_norm, config.epsilon * rec.param_norm);
    }
  }
  const IterationRecord& last = run.trace.back();
  if (run.termination == Termination::kGradientSmall) {
    EXPECT_LE(last.stepsize * last.grad_norm, config.epsilon * last.param_norm);
  }
  EXPECT_EQ(run.final_cost, last.next_cost);
}

}  // namespace

TEST(Horizon, Rule) {
  EXPECT_DOUBLE_EQ(search_horizon(4.0, 8.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(search_horizon(4.0, 0.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(search_horizon(4.0, -2.0, 10.0), 2.0);
  EXPECT_DOUBLE_EQ(search_horizon(4.0, 1.0, 3.0), 3.0);
}

TEST(Armijo, QuadraticWithExactCurvature) {
  // E(u - s g) = E0 - s‖g‖² + ½ s² D² with horizon ‖g‖²/D²: the decrease at
  // the horizon is exactly ½ s ‖g‖².
  const double e0 = 10.0, gsq = 4.0, curvature = 8.0;
  const auto probe = [&](double s) { return e0 - s * gsq + 0.5 * s * s * curvature; };
  const double h = search_horizon(gsq, curvature, 1.0);

  DescentConfig config;
  config.sigma = 0.9;
  auto step = armijo_stepsize(e0, gsq, h, config, probe);
  ASSERT_TRUE(step);
  // ½ s D² <= (1 - σ) ‖g‖² requires s <= h/5, first reached at j = 3.
  EXPECT_EQ(step->index, 3);
  EXPECT_DOUBLE_EQ(step->stepsize, h / 8.0);
  EXPECT_DOUBLE_EQ(step->probe_cost, probe(h / 8.0));

  config.sigma = 0.5;
  step = armijo_stepsize(e0, gsq, h, config, probe);
  ASSERT_TRUE(step);
  EXPECT_EQ(step->index, 0);

  config.sigma = 0.3;
  EXPECT_EQ(armijo_stepsize(e0, gsq, h, config, probe)->index, 0);
}

TEST(Armijo, InfiniteProbesAreSkipped) {
  DescentConfig config;
  config.sigma = 0.1;
  const auto probe = [](double s) { return s > 0.3 ? kInfiniteCost : 1.0 - s; };
  const auto step = armijo_stepsize(1.0, 1.0, 1.0, config, probe);
  ASSERT_TRUE(step);
  EXPECT_EQ(step->index, 2);
  EXPECT_DOUBLE_EQ(step->stepsize, 0.25);
}

TEST(Armijo, ExhaustionReturnsNothing) {
  DescentConfig config;
  config.max_backtracks = 5;
  const auto step =
      armijo_stepsize(1.0, 1.0, 1.0, config, [](double) { return kInfiniteCost; });
  EXPECT_FALSE(step);
}

TEST(Armijo, AcceptedStepIsTheFirstPassingCandidate) {
  // Synthetic one-dimensional cost λ(x⁴ + x²) at x = 1 with its exact
  // gradient: the accepted s satisfies the inequality and s/f does not.
  DescentConfig config;
  const double x = 1.0;
  for (double lambda : {0.01, 1.0, 30.0}) {
    const auto cost = [&](double y) { return lambda * (y * y * y * y + y * y); };
    const double g = lambda * (4.0 * x * x * x + 2.0 * x);
    const auto probe = [&](double s) { return cost(x - s * g); };
    const auto step = armijo_stepsize(cost(x), g * g, 1.0, config, probe);
    ASSERT_TRUE(step);
    EXPECT_GE(cost(x) - probe(step->stepsize), config.sigma * step->stepsize * g * g);
    if (step->index > 0) {
      const double prev = step->stepsize / config.f;
      EXPECT_LT(cost(x) - probe(prev), config.sigma * prev * g * g);
    }
  }
}

TEST(Init, StabilizesExamplePlantAtModerateScales) {
  const Problem p = example::load_example();
  for (double scale : {2.0, 3.0}) {
    DescentConfig config;
    config.init_scale = scale;
    const InitResult init = random_stabilizing_init(p, config);
    EXPECT_GE(init.attempts, 1);
    EXPECT_LE(init.attempts, config.init_max_attempts);
    EXPECT_TRUE(is_hurwitz(assemble_closed_loop(p.plant, realize_controller(init.params, p)).Acl));
    EXPECT_TRUE(init.params.R.isApprox(init.params.R.transpose()));
  }
}

TEST(Init, SmallScaleExhaustsAttempts) {
  DescentConfig config;
  config.init_scale = 0.5;
  config.init_max_attempts = 10000;
  try {
    random_stabilizing_init(example::load_example(), config);
    FAIL() << "expected NoStabilizerFound";
  } catch (const NoStabilizerFound& e) {
    EXPECT_EQ(e.attempts(), 10000);
  }
}

TEST(Init, Deterministic) {
  DescentConfig config;
  config.seed = 42;
  const Problem p = example::load_example();
  const InitResult a = random_stabilizing_init(p, config);
  const InitResult b = random_stabilizing_init(p, config);
  EXPECT_EQ(a.attempts, b.attempts);
  EXPECT_EQ(a.params.R, b.params.R);
  EXPECT_EQ(a.params.b, b.params.b);
  EXPECT_EQ(a.params.e, b.params.e);
}

TEST(Init, StablePlantStillNeedsAStabilizingController) {
  const Problem p = stable_pr_plant();
  const ControllerParams zero{Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  EXPECT_FALSE(evaluate(p, zero).stabilizing);
  EXPECT_THROW(descend(p, zero, DescentConfig{}), InvalidStart);

  DescentConfig config;
  config.init_scale = 1.0;
  const InitResult init = random_stabilizing_init(p, config);
  EXPECT_TRUE(evaluate(p, init.params).stabilizing);
}

TEST(Descent, ExampleRunSatisfiesCertificates) {
  const Problem p = example::load_example();
  DescentConfig config = example::descent_config();
  config.seed = 3;
  const DescentResult run = descend_from_random(p, config);
  EXPECT_EQ(run.termination, Termination::kGradientSmall);
  EXPECT_GE(run.trace.size(), 50u);
  EXPECT_LE(run.trace.size(), 10000u);
  expect_certificates(run, config);
  EXPECT_LT(run.final_grad_norm, run.trace.front().grad_norm);
}

TEST(Descent, ExactlyStationaryStartStops) {
  // With zero criterion weights the cost and gradient vanish identically.
  Problem p = example::load_example();
  p.plant.F.setZero();
  p.plant.G.setZero();
  const DescentResult run = descend(p, example::reported_optimum(), example::descent_config());
  EXPECT_EQ(run.trace.size(), 0u);
  EXPECT_EQ(run.termination, Termination::kGradientSmall);
  EXPECT_EQ(run.final_cost, 0.0);
}

TEST(Descent, RestartFromConvergedPointBarelyMoves) {
  const Problem p = example::load_example();
  DescentConfig config = example::descent_config();
  config.seed = 3;
  const DescentResult first = descend_from_random(p, config);
  const DescentResult again = descend(p, first.final_params, config);
  EXPECT_LE(again.trace.size(), 10u);
  EXPECT_LE(again.final_cost, first.final_cost);
  EXPECT_NEAR(again.final_cost, first.final_cost, 1e-4 * first.final_cost);
}

TEST(Descent, MaxIterationsIsReported) {
  const Problem p = example::load_example();
  DescentConfig config = example::descent_config();
  config.max_iters = 5;
  const DescentResult run = descend_from_random(p, config);
  EXPECT_EQ(run.termination, Termination::kMaxIters);
  EXPECT_EQ(run.trace.size(), 5u);
  expect_certificates(run, config);
}

TEST(Descent, ZeroBacktracksThrowsWithPartialTrace) {
  const Problem p = example::load_example();
  DescentConfig config = example::descent_config();
  config.max_backtracks = 0;
  config.h_max = 1e3;
  config.seed = 3;
  try {
    descend_from_random(p, config);
    FAIL() << "expected BacktrackExhausted";
  } catch (const BacktrackExhausted& e) {
    EXPECT_EQ(e.partial().termination, Termination::kBacktrackExhausted);
    EXPECT_EQ(e.partial().seed, 3u);
  }
}

TEST(Descent, InvalidConfigRejected) {
  DescentConfig config;
  config.f = 1.0;
  EXPECT_THROW(config.validate(), ValidationError);
  config = DescentConfig{};
  config.sigma = 0.0;
  EXPECT_THROW(config.validate(), ValidationError);
}

TEST(MultiStart, DeterministicAndSorted) {
  const Problem p = example::load_example();
  DescentConfig config = example::descent_config();
  config.seed = 20;
  const MultiStartResult a = multi_start(p, config, 3);
  const MultiStartResult b = multi_start(p, config, 3);
  ASSERT_EQ(a.runs.size(), 3u);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].seed, b.runs[i].seed);
    EXPECT_EQ(a.runs[i].final_cost, b.runs[i].final_cost);
    if (i > 0) {
      EXPECT_LE(a.runs[i - 1].final_cost, a.runs[i].final_cost);
    }
  }
  EXPECT_EQ(a.best().final_params.R, b.best().final_params.R);
}

TEST(MultiStart, SingleStartMatchesDescend) {
  const Problem p = example::load_example();
  DescentConfig config = example::descent_config();
  config.seed = 5;
  const MultiStartResult multi = multi_start(p, config, 1);
  const DescentResult single = descend_from_random(p, config);
  EXPECT_EQ(multi.best().final_cost, single.final_cost);
  EXPECT_EQ(multi.best().trace.size(), single.trace.size());
}

TEST(MultiStart, AllStartsFailing) {
  DescentConfig config;
  config.init_scale = 0.5;
  config.init_max_attempts = 50;
  EXPECT_THROW(multi_start(example::load_example(), config, 2), NoStabilizerFound);
}
