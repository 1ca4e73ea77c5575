#pragma once

// Gradient descent over the Hamiltonian parameters with an adaptive search
// horizon, geometric Armijo backtracking and a relative-gradient stopping rule.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cqlqg/cost.hpp"

namespace cqlqg {

struct DescentConfig {
  double h_max = 1.0;      // horizon cap
  double f = 0.5;          // geometric ratio of step candidates
  double sigma = 0.9;      // Armijo parameter
  double epsilon = 1e-6;   // relative termination threshold
  long max_iters = 100000;
  int max_backtracks = 60;
  double hurwitz_margin = kDefaultHurwitzMargin;
  // Random-search initialization. The draw distribution is N(0, init_scale²)
  // per entry (R symmetrized).
  double init_scale = 2.0;
  long init_max_attempts = 10000;
  std::uint64_t seed = 1;
  // Use a central second difference instead of the analytic second derivative
  // when choosing the horizon.
  bool fd_second_derivative = false;

  void validate() const {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("f must lie in (0, 1)");
    if (!(sigma > 0.0 && sigma < 1.0)) throw ValidationError("sigma must lie in (0, 1)");
    if (!(h_max > 0.0)) throw ValidationError("h_max must be positive");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (max_iters < 0) throw ValidationError("max_iters must be nonnegative");
    if (max_backtracks < 0) throw ValidationError("max_backtracks must be nonnegative");
    if (hurwitz_margin < 0.0) throw ValidationError("hurwitz_margin must be nonnegative");
    if (!(init_scale > 0.0)) throw ValidationError("init_scale must be positive");
    if (init_max_attempts < 1) throw ValidationError("init_max_attempts must be at least 1");
  }
};

struct IterationRecord {
  long k = 0;
  double cost = 0.0;           // E(u_k)
  double grad_norm = 0.0;      // ‖g(u_k)‖
  double horizon = 0.0;        // h_k
  double stepsize = 0.0;       // s_k = h_k f^j
  int armijo_index = 0;        // j
  double second_gateaux = 0.0; // second derivative of E along g(u_k)
  double param_norm = 0.0;     // ‖u_k‖
  double next_cost = 0.0;      // E(u_{k+1})
};

enum class Termination { kGradientSmall, kMaxIters, kBacktrackExhausted };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::kGradientSmall:
      return "gradient_small";
    case Termination::kMaxIters:
      return "max_iters";
    case Termination::kBacktrackExhausted:
      return "backtrack_exhausted";
  }
  return "unknown";
}

struct DescentResult {
  ControllerParams final_params;
  double final_cost = kInfiniteCost;
  double final_grad_norm = 0.0;  // ‖g(final_params)‖
  std::vector<IterationRecord> trace;
  Termination termination = Termination::kMaxIters;
  std::uint64_t seed = 0;        // seed of the initialization, when random
  long init_attempts = 0;
};

class NoStabilizerFound : public Error {
 public:
  explicit NoStabilizerFound(long attempts)
      : Error("no stabilizing controller found in " + std::to_string(attempts) +
              " random attempts"),
        attempts_(attempts) {}
  NoStabilizerFound(long attempts, const std::string& message)
      : Error(message), attempts_(attempts) {}
  long attempts() const { return attempts_; }

 private:
  long attempts_;
};

class InvalidStart : public Error {
 public:
  using Error::Error;
};

/// Raised when no Armijo candidate is accepted within max_backtracks; carries
/// the trace accumulated so far.
class BacktrackExhausted : public Error {
 public:
  explicit BacktrackExhausted(DescentResult partial)
      : Error("Armijo backtracking exhausted at iteration " +
              std::to_string(partial.trace.size())),
        partial_(std::move(partial)) {}
  const DescentResult& partial() const { return partial_; }

 private:
  DescentResult partial_;
};

struct InitResult {
  ControllerParams params;
  long attempts = 0;
};

/// Random search for an internally stabilizing controller.
template <class Rng>
InitResult random_stabilizing_init(const Problem& problem, const DescentConfig& config,
                                   Rng& rng) {
  if (config.init_max_attempts < 1) throw ValidationError("init_max_attempts must be >= 1");
  const Dimensions& dims = problem.ccr.dims;
  for (long attempt = 1; attempt <= config.init_max_attempts; ++attempt) {
    ControllerParams u;
    u.R = random_symmetric(dims.n, config.init_scale, rng);
    u.b = random_normal(dims.n, dims.m2, config.init_scale, rng);
    u.e = random_normal(dims.n, dims.p1, config.init_scale, rng);
    const ClosedLoop cl = assemble_closed_loop(problem.plant, realize_controller(u, problem));
    if (cl.Acl.allFinite() && spectral_report(cl.Acl, config.hurwitz_margin).is_hurwitz) {
      return {std::move(u), attempt};
    }
  }
  throw NoStabilizerFound(config.init_max_attempts);
}

inline InitResult random_stabilizing_init(const Problem& problem, const DescentConfig& config) {
  std::mt19937_64 rng(config.seed);
  return random_stabilizing_init(problem, config, rng);
}

/// min(h_max, ‖g‖² / |D²|), or h_max when the second derivative vanishes.
inline double search_horizon(double grad_norm_sq, double second_gateaux, double h_max) {
  if (second_gateaux == 0.0) return h_max;
  return std::min(h_max, grad_norm_sq / std::abs(second_gateaux));
}

struct ArmijoStep {
  double stepsize = 0.0;
  int index = 0;
  double probe_cost = kInfiniteCost;
};

/// Smallest j >= 0 with E(u) - E(u - s g) >= sigma s ‖g‖² for s = horizon f^j.
/// `probe(s)` returns E(u - s g), +infinity off the stabilizing set.
/// Returns nullopt when no j <= max_backtracks passes.
template <class Probe>
std::optional<ArmijoStep> armijo_stepsize(double cost_at_u, double grad_norm_sq, double horizon,
                                          const DescentConfig& config, Probe&& probe) {
  double s = horizon;
  for (int j = 0; j <= config.max_backtracks; ++j, s *= config.f) {
    const double trial = probe(s);
    if (cost_at_u - trial >= config.sigma * s * grad_norm_sq) {
      return ArmijoStep{s, j, trial};
    }
  }
  return std::nullopt;
}

/// Runs the descent from u0 until s_k‖g(u_k)‖ <= ε‖u_k‖ or max_iters.
inline DescentResult descend(const Problem& problem, const ControllerParams& u0,
                             const DescentConfig& config) {
  config.validate();
  validate_params(u0, problem.ccr.dims);
  CostModel model(problem, config.hurwitz_margin);
  if (!model.at(u0).stabilizing) {
    throw InvalidStart("initial controller is not internally stabilizing");
  }

  DescentResult result;
  ControllerParams u = u0;
  double cost = model.at(u).cost;
  for (long k = 0; k < config.max_iters; ++k) {
    const CostGradient g = model.gradient(u);
    const double gsq = g.squared_norm();
    const double gnorm = std::sqrt(gsq);
    const double unorm = u.norm();
    if (gsq == 0.0) {
      result.termination = Termination::kGradientSmall;
      break;
    }
    const double second = config.fd_second_derivative
                              ? finite_diff_second(problem, u, g, kSecondFdStep,
                                                   config.hurwitz_margin)
                              : model.gateaux_second(u, g);
    const double horizon = search_horizon(gsq, second, config.h_max);
    const auto step = armijo_stepsize(cost, gsq, horizon, config, [&](double s) {
      return model.cost(displaced(u, -s, g));
    });

    IterationRecord rec;
    rec.k = k;
    rec.cost = cost;
    rec.grad_norm = gnorm;
    rec.horizon = horizon;
    rec.second_gateaux = second;
    rec.param_norm = unorm;
    if (!step) {
      result.final_params = u;
      result.final_cost = cost;
      result.final_grad_norm = gnorm;
      result.termination = Termination::kBacktrackExhausted;
      throw BacktrackExhausted(std::move(result));
    }
    rec.stepsize = step->stepsize;
    rec.armijo_index = step->index;
    rec.next_cost = step->probe_cost;
    result.trace.push_back(rec);

    u = displaced(u, -step->stepsize, g);
    cost = step->probe_cost;

    const double threshold = unorm > 0.0 ? config.epsilon * unorm : config.epsilon;
    if (step->stepsize * gnorm <= threshold) {
      result.termination = Termination::kGradientSmall;
      break;
    }
  }
  result.final_params = u;
  result.final_cost = cost;
  result.final_grad_norm = model.gradient(u).norm();
  return result;
}

/// Random initialization followed by descent.
inline DescentResult descend_from_random(const Problem& problem, const DescentConfig& config) {
  const InitResult init = random_stabilizing_init(problem, config);
  DescentResult result;
  try {
    result = descend(problem, init.params, config);
  } catch (BacktrackExhausted& ex) {
    DescentResult partial = ex.partial();
    partial.seed = config.seed;
    partial.init_attempts = init.attempts;
    throw BacktrackExhausted(std::move(partial));
  }
  result.seed = config.seed;
  result.init_attempts = init.attempts;
  return result;
}

struct MultiStartResult {
  std::vector<DescentResult> runs;  // sorted by final cost, best first
  std::vector<std::string> failures;

  const DescentResult& best() const { return runs.front(); }
};

/// Independent descents seeded with config.seed + index, run concurrently.
inline MultiStartResult multi_start(const Problem& problem, const DescentConfig& config,
                                    int n_starts) {
  if (n_starts < 1) throw ValidationError("n_starts must be at least 1");
  config.validate();
  std::vector<std::future<DescentResult>> futures;
  futures.reserve(static_cast<std::size_t>(n_starts));
  for (int i = 0; i < n_starts; ++i) {
    DescentConfig run_config = config;
    run_config.seed = config.seed + static_cast<std::uint64_t>(i);
    futures.push_back(std::async(std::launch::async, [&problem, run_config] {
      return descend_from_random(problem, run_config);
    }));
  }
  MultiStartResult out;
  for (int i = 0; i < n_starts; ++i) {
    try {
      out.runs.push_back(futures[static_cast<std::size_t>(i)].get());
    } catch (const BacktrackExhausted& ex) {
      out.runs.push_back(ex.partial());
    } catch (const NoStabilizerFound& ex) {
      out.failures.push_back("start " + std::to_string(i) + ": " + ex.what());
    }
  }
  if (out.runs.empty()) {
    std::string msg = "all " + std::to_string(n_starts) + " starts failed to initialize";
    for (const auto& f : out.failures) msg += "\n  " + f;
    throw NoStabilizerFound(config.init_max_attempts * n_starts, msg);
  }
  std::stable_sort(out.runs.begin(), out.runs.end(),
                   [](const DescentResult& a, const DescentResult& b) {
                     return a.final_cost < b.final_cost;
                   });
  return out;
}

}  // namespace cqlqg
