// Command-line front end: gen-plant, check, cost, synthesize, reproduce-example.
//
// Exit codes: 0 success, 1 domain failure (non-stabilizing controller, PR
// violation, initialization exhausted), 2 usage or parse failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cqlqg/cost.hpp"
#include "cqlqg/descent.hpp"
#include "cqlqg/fixture.hpp"
#include "cqlqg/io.hpp"

namespace fs = std::filesystem;
using namespace cqlqg;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kUsageFailure = 2;

std::string format_complex(const std::complex<double>& z, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << z.real();
  if (z.imag() != 0.0) os << (z.imag() > 0 ? " + " : " - ") << std::abs(z.imag()) << "i";
  return os.str();
}

/// Eigenvalues with conjugate pairs folded into "x ± yi".
std::string format_spectrum(const SpectralReport& report, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision);
  bool first = true;
  for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) {
    const auto& z = report.eigenvalues[i];
    if (!first) os << ", ";
    first = false;
    if (z.imag() > 0.0 && i + 1 < report.eigenvalues.size() &&
        std::abs(report.eigenvalues[i + 1] - std::conj(z)) <= 1e-12 * (1.0 + std::abs(z))) {
      os << z.real() << " ± " << z.imag() << "i";
      ++i;
    } else {
      os << format_complex(z, precision);
    }
  }
  return os.str();
}

void print_residual(const char* name, double value, double tolerance) {
  std::cout << "  " << std::left << std::setw(12) << name << std::scientific
            << std::setprecision(3) << value << (value <= tolerance ? "  ok" : "  FAIL") << "\n"
            << std::defaultfloat;
}

void print_plant_report(const io::LoadedProblem& loaded) {
  const auto& rep = loaded.report;
  std::cout << "theta1: " << io::to_string(rep.theta1_source);
  if (!rep.note.empty()) std::cout << " (" << rep.note << ")";
  std::cout << "\n";
  std::cout << "plant PR residuals (tolerance " << std::scientific << std::setprecision(3)
            << rep.tolerance << std::defaultfloat << "):\n";
  print_residual("CCR11", rep.plant_residuals.ccr11, rep.tolerance);
  print_residual("CCR12_plant", rep.plant_residuals.ccr12_plant, rep.tolerance);
  const SpectralReport spectrum = spectral_report(loaded.problem.plant.A, 0.0);
  std::cout << "plant eigenvalues: " << format_spectrum(spectrum) << "\n";
  std::cout << "plant is " << (spectrum.is_hurwitz ? "stable" : "unstable") << "\n";
}

io::LoadedProblem load(const std::string& source, std::optional<double> tolerance, bool strict) {
  return io::load_problem(io::read_problem_source(source), tolerance, strict);
}

int cmd_gen_plant(const Dimensions& dims, std::uint64_t seed, double scale, const fs::path& out) {
  const Problem problem = random_pr_plant(dims, seed, scale);
  io::ProblemFile file;
  file.dims = dims;
  file.plant = problem.plant;
  file.d = problem.d;
  file.theta1 = problem.ccr.Theta1;
  file.descent.seed = seed;
  io::write_problem_file(out, file);

  const io::LoadedProblem loaded = load(out.string(), std::nullopt, false);
  std::cout << "wrote " << out.string() << "\n";
  ControllerRealization zero{Matrix::Zero(dims.n, dims.n), Matrix::Zero(dims.n, dims.m2),
                             Matrix::Zero(dims.p2, dims.n), loaded.problem.d,
                             Matrix::Zero(dims.n, dims.p1)};
  const PrResiduals res = pr_residuals(loaded.problem.plant, zero, loaded.problem.ccr);
  const double tol = loaded.report.tolerance;
  std::cout << "PR residuals (zero controller for the controller-side identities):\n";
  print_residual("CCR11", res.ccr11, tol);
  print_residual("CCR22", res.ccr22, tol);
  print_residual("CCR12", res.ccr12, tol);
  print_residual("CCR12_plant", res.ccr12_plant, tol);
  print_residual("CCR12_cont", res.ccr12_cont, tol);
  return res.plant_max() <= tol ? kOk : kDomainFailure;
}

int cmd_check(const std::string& source, const std::optional<std::string>& params_path,
              std::optional<double> tolerance, bool strict) {
  const io::LoadedProblem loaded = load(source, tolerance, strict);
  print_plant_report(loaded);
  bool ok = loaded.report.plant_ok;

  std::optional<ControllerParams> u = loaded.init;
  if (params_path) u = io::params_from_json(io::read_json_file(*params_path), loaded.problem.ccr.dims);
  if (u) {
    const Problem& problem = loaded.problem;
    const ControllerRealization k = realize_controller(*u, problem);
    const PrResiduals res = pr_residuals(problem.plant, k, problem.ccr);
    const double tol = loaded.report.tolerance;
    std::cout << "controller PR residuals:\n";
    print_residual("CCR22", res.ccr22, tol);
    print_residual("CCR12_cont", res.ccr12_cont, tol);
    print_residual("CCR12", res.ccr12, tol);
    const ClosedLoop cl = assemble_closed_loop(problem.plant, k);
    const SpectralReport spectrum = spectral_report(cl.Acl);
    std::cout << "closed-loop eigenvalues: " << format_spectrum(spectrum) << "\n";
    std::cout << "closed loop is " << (spectrum.is_hurwitz ? "" : "NOT ")
              << "internally stable\n";
    const double preservation = check_ccr_preservation(cl, problem.ccr);
    print_residual("CCR-preserve", preservation, tol);
    ok = ok && res.controller_max() <= tol && res.ccr12 <= tol && preservation <= tol;
  }
  std::cout << (ok ? "all checks passed" : "some checks failed") << "\n";
  return ok ? kOk : kDomainFailure;
}

int cmd_cost(const std::string& source, const std::optional<std::string>& params_path) {
  const io::LoadedProblem loaded = load(source, std::nullopt, false);
  const Problem& problem = loaded.problem;
  std::optional<ControllerParams> u = loaded.init;
  if (params_path) u = io::params_from_json(io::read_json_file(*params_path), problem.ccr.dims);
  if (!u) throw io::ParseError("no controller parameters: pass a params file or add \"init\"");

  const Evaluation ev = evaluate(problem, *u);
  if (!ev.stabilizing) {
    std::cout << "verdict: not internally stabilizing\n";
    std::cout << "closed-loop eigenvalues: "
              << format_spectrum(spectral_report(ev.closed_loop.Acl, 0.0)) << "\n";
    return kDomainFailure;
  }
  const CostGradient g = gradient(problem, ev);
  const double second = gateaux_second(problem, ev, g);
  const CostForms forms = cost_equivalent_forms(ev.closed_loop, *ev.gramians);
  const double oracle = cost_rational_oracle(ev.closed_loop);
  std::cout << std::setprecision(12);
  std::cout << "cost: " << ev.cost << "\n";
  std::cout << "grad_norm: " << g.norm() << "\n";
  std::cout << "second_gateaux: " << second << "\n";
  std::cout << "cost_forms: " << forms.controllability << " " << forms.observability << " "
            << forms.hankelian << "\n";
  std::cout << "rational_oracle: " << oracle << "\n";
  return kOk;
}

fs::path trace_path(const fs::path& dir, std::size_t index, const char* stem = "trace") {
  std::ostringstream name;
  name << stem << "_" << std::setw(2) << std::setfill('0') << index << ".csv";
  return dir / name.str();
}

void print_run_table(const MultiStartResult& result, std::uint64_t base_seed) {
  std::cout << "start  seed  iterations  final_cost      termination\n";
  for (const auto& run : result.runs) {
    std::cout << std::setw(5) << (run.seed - base_seed) << std::setw(6) << run.seed
              << std::setw(12) << run.trace.size() << "  " << std::setw(14) << std::fixed
              << std::setprecision(6) << run.final_cost << "  " << to_string(run.termination)
              << "\n"
              << std::defaultfloat;
  }
  for (const auto& f : result.failures) std::cout << "failed " << f << "\n";
}

int cmd_synthesize(const std::string& source, int starts, std::optional<std::uint64_t> seed,
                   const std::optional<std::string>& trace_dir, bool strict,
                   std::optional<double> tolerance, const fs::path& out) {
  const io::LoadedProblem loaded = load(source, tolerance, strict);
  DescentConfig config = loaded.descent;
  if (seed) config.seed = *seed;
  const MultiStartResult result = multi_start(loaded.problem, config, starts);
  print_run_table(result, config.seed);
  const DescentResult& best = result.best();
  io::write_json_file(out, io::controller_to_json(loaded.problem, best));
  if (trace_dir) {
    fs::create_directories(*trace_dir);
    for (const auto& run : result.runs) {
      io::write_trace_csv(trace_path(*trace_dir, run.seed - config.seed), run.trace);
    }
  }
  std::cout << "best cost " << std::setprecision(10) << best.final_cost << " after "
            << best.trace.size() << " iterations (" << to_string(best.termination) << ")\n";
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

int cmd_reproduce(const fs::path& out_dir, int starts, std::optional<std::uint64_t> seed) {
  fs::create_directories(out_dir);
  io::ProblemFile file = io::example_problem_file();
  io::write_problem_file(out_dir / "problem.json", file);
  const io::LoadedProblem loaded = io::load_problem(file, std::nullopt, false);
  print_plant_report(loaded);

  DescentConfig config = loaded.descent;
  if (seed) config.seed = *seed;
  const MultiStartResult result = multi_start(loaded.problem, config, starts);
  const double best_cost = result.best().final_cost;

  std::ofstream summary(out_dir / "summary.csv");
  summary << "start,seed,init_attempts,iterations,initial_cost,final_cost,final_grad_norm,"
             "termination\n";
  summary << std::setprecision(17);
  for (const auto& run : result.runs) {
    const std::size_t index = run.seed - config.seed;
    summary << index << "," << run.seed << "," << run.init_attempts << "," << run.trace.size()
            << "," << (run.trace.empty() ? run.final_cost : run.trace.front().cost) << ","
            << run.final_cost << "," << run.final_grad_norm << "," << to_string(run.termination)
            << "\n";
    io::write_trace_csv(trace_path(out_dir, index), run.trace);
    std::ofstream dev(trace_path(out_dir, index, "deviation"));
    dev << "k,deviation\n" << std::setprecision(17);
    for (const auto& rec : run.trace) dev << rec.k << "," << rec.cost / best_cost - 1.0 << "\n";
  }
  io::write_json_file(out_dir / "best_controller.json",
                      io::controller_to_json(loaded.problem, result.best()));

  print_run_table(result, config.seed);
  long total = 0;
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& run : result.runs) {
    total += static_cast<long>(run.trace.size());
    lo = std::min(lo, run.trace.size());
    hi = std::max(hi, run.trace.size());
  }
  std::cout << "iterations: " << lo << " to " << hi << ", average "
            << static_cast<double>(total) / static_cast<double>(result.runs.size()) << "\n";
  std::cout << "best cost " << std::setprecision(8) << best_cost << " (reported minimum "
            << example::kReportedMinimumCost << ")\n";
  std::cout << "wrote " << out_dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coherent quantum LQG controller synthesis by gradient descent"};
  app.require_subcommand(1);

  std::optional<double> tolerance;
  bool strict = false;
  std::optional<std::uint64_t> seed;

  Dimensions dims{2, 4, 2, 2, 2, 2};
  double scale = 1.0;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-plant", "Generate a random physically realizable plant");
  gen->add_option("--n", dims.n, "State dimension (even)");
  gen->add_option("--m1", dims.m1, "Plant noise dimension (even)");
  gen->add_option("--m2", dims.m2, "Controller noise dimension (even)");
  gen->add_option("--p1", dims.p1, "Plant output dimension");
  gen->add_option("--p2", dims.p2, "Controller output dimension");
  gen->add_option("--r", dims.r, "Criterion dimension");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--scale", scale, "Standard deviation of random entries");
  gen->add_option("-o,--out", gen_out, "Output problem file")->required();

  std::string problem_path;
  std::optional<std::string> params_path;
  auto* check = app.add_subcommand("check", "Report PR residuals and spectra");
  check->add_option("problem", problem_path, "Problem file or @example")->required();
  check->add_option("--params", params_path, "Controller parameters file");
  check->add_option("--tolerance", tolerance, "PR residual tolerance");
  check->add_flag("--strict", strict, "Fail on load when plant PR residuals exceed tolerance");

  auto* cost = app.add_subcommand("cost", "Cost, gradient norm and second derivative");
  cost->add_option("problem", problem_path, "Problem file or @example")->required();
  cost->add_option("params", params_path, "Controller parameters file");

  int starts = 1;
  std::optional<std::string> trace_dir;
  std::string out_path = "controller.json";
  auto* synth = app.add_subcommand("synthesize", "Multi-start gradient descent");
  synth->add_option("problem", problem_path, "Problem file or @example")->required();
  synth->add_option("--starts", starts, "Number of random starts")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Base seed (start i uses seed + i)");
  synth->add_option("--trace", trace_dir, "Directory for per-start trace CSV files");
  synth->add_option("--tolerance", tolerance, "PR residual tolerance");
  synth->add_flag("--strict", strict, "Fail when plant PR residuals exceed tolerance");
  synth->add_option("-o,--out", out_path, "Output controller file");

  std::string out_dir;
  int example_starts = example::kStarts;
  auto* repro = app.add_subcommand("reproduce-example", "Run the bundled two-mode example");
  repro->add_option("out_dir", out_dir, "Output directory")->required();
  repro->add_option("--starts", example_starts, "Number of random starts")
      ->check(CLI::PositiveNumber);
  repro->add_option("--seed", seed, "Base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageFailure;
  }

  try {
    if (*gen) return cmd_gen_plant(dims, gen_seed, scale, gen_out);
    if (*check) return cmd_check(problem_path, params_path, tolerance, strict);
    if (*cost) return cmd_cost(problem_path, params_path);
    if (*synth) {
      return cmd_synthesize(problem_path, starts, seed, trace_dir, strict, tolerance, out_path);
    }
    if (*repro) return cmd_reproduce(out_dir, example_starts, seed);
  } catch (const io::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageFailure;
  } catch (const DimensionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageFailure;
  } catch (const NoStabilizerFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }
  return kUsageFailure;
}
