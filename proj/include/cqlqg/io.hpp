#pragma once

// Problem files (JSON), controller files (JSON) and iteration traces (CSV).

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cqlqg/descent.hpp"
#include "cqlqg/fixture.hpp"
#include "cqlqg/model.hpp"

namespace cqlqg::io {

using nlohmann::json;

/// Malformed or inconsistent input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Parses a row-major array of arrays; rejects ragged rows and non-numbers.
/// Negative expected sizes mean "any".
inline Matrix matrix_from_json(const json& j, const std::string& name, Eigen::Index rows = -1,
                               Eigen::Index cols = -1) {
  if (!j.is_array()) throw ParseError(name + ": expected an array of rows");
  const auto n_rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index n_cols = -1;
  for (const auto& row : j) {
    if (!row.is_array()) throw ParseError(name + ": every row must be an array");
    const auto len = static_cast<Eigen::Index>(row.size());
    if (n_cols >= 0 && len != n_cols) throw ParseError(name + ": ragged rows");
    n_cols = len;
  }
  if (n_cols < 0) n_cols = 0;
  if ((rows >= 0 && n_rows != rows) || (cols >= 0 && n_cols != cols)) {
    throw ParseError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + std::to_string(n_rows) + "x" + std::to_string(n_cols));
  }
  Matrix m(n_rows, n_cols);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    for (Eigen::Index k = 0; k < n_cols; ++k) {
      const json& v = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (!v.is_number()) throw ParseError(name + ": non-numeric entry");
      m(i, k) = v.get<double>();
    }
  }
  if (!m.allFinite()) throw ParseError(name + ": non-finite entry");
  return m;
}

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(where + ": missing key \"" + key + "\"");
  }
  return j.at(key);
}

template <class T>
T number(const json& j, const char* key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  return v.get<T>();
}

}  // namespace detail

struct ProblemFile {
  Dimensions dims;
  PlantModel plant;
  Matrix d;
  std::optional<Matrix> theta1;
  DescentConfig descent;
  std::optional<ControllerParams> init;
  std::optional<double> pr_tolerance;
};

inline json params_to_json(const ControllerParams& u) {
  return json{{"R", matrix_to_json(u.R)}, {"b", matrix_to_json(u.b)}, {"e", matrix_to_json(u.e)}};
}

inline ControllerParams params_from_json(const json& j, const Dimensions& dims) {
  const json& p = j.contains("params") ? j.at("params") : j;
  const Matrix r = matrix_from_json(detail::require(p, "R", "params"), "R", dims.n, dims.n);
  Matrix b = matrix_from_json(detail::require(p, "b", "params"), "b", dims.n, dims.m2);
  Matrix e = matrix_from_json(detail::require(p, "e", "params"), "e", dims.n, dims.p1);
  return ControllerParams::make(r, std::move(b), std::move(e));
}

inline json descent_to_json(const DescentConfig& c) {
  return json{{"h_max", c.h_max},
              {"f", c.f},
              {"sigma", c.sigma},
              {"epsilon", c.epsilon},
              {"max_iters", c.max_iters},
              {"max_backtracks", c.max_backtracks},
              {"init_scale", c.init_scale},
              {"init_max_attempts", c.init_max_attempts},
              {"seed", c.seed}};
}

inline DescentConfig descent_from_json(const json& j) {
  DescentConfig c;
  if (!j.is_object()) throw ParseError("descent: expected an object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      if (!j.at(key).is_number()) throw ParseError(std::string("descent.") + key + ": not a number");
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    }
  };
  get("h_max", c.h_max);
  get("f", c.f);
  get("sigma", c.sigma);
  get("epsilon", c.epsilon);
  get("max_iters", c.max_iters);
  get("max_backtracks", c.max_backtracks);
  get("init_scale", c.init_scale);
  get("init_max_attempts", c.init_max_attempts);
  get("seed", c.seed);
  try {
    c.validate();
  } catch (const ValidationError& ex) {
    throw ParseError(std::string("descent: ") + ex.what());
  }
  return c;
}

inline json problem_to_json(const ProblemFile& p) {
  json j;
  j["dims"] = json{{"n", p.dims.n},   {"m1", p.dims.m1}, {"m2", p.dims.m2},
                   {"p1", p.dims.p1}, {"p2", p.dims.p2}, {"r", p.dims.r}};
  j["plant"] = json{{"A", matrix_to_json(p.plant.A)},
                    {"B", matrix_to_json(p.plant.B)},
                    {"C", matrix_to_json(p.plant.C)},
                    {"D", matrix_to_json(p.plant.D)},
                    {"E", matrix_to_json(p.plant.E)}};
  j["weights"] = json{{"F", matrix_to_json(p.plant.F)}, {"G", matrix_to_json(p.plant.G)}};
  j["d"] = matrix_to_json(p.d);
  if (p.theta1) j["theta1"] = matrix_to_json(*p.theta1);
  j["descent"] = descent_to_json(p.descent);
  if (p.init) j["init"] = params_to_json(*p.init);
  if (p.pr_tolerance) j["pr_tolerance"] = *p.pr_tolerance;
  return j;
}

inline ProblemFile problem_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("problem: expected a JSON object");
  ProblemFile p;
  const json& dims = detail::require(j, "dims", "problem");
  p.dims.n = detail::number<Eigen::Index>(dims, "n", "dims");
  p.dims.m1 = detail::number<Eigen::Index>(dims, "m1", "dims");
  p.dims.m2 = detail::number<Eigen::Index>(dims, "m2", "dims");
  p.dims.p1 = detail::number<Eigen::Index>(dims, "p1", "dims");
  p.dims.p2 = detail::number<Eigen::Index>(dims, "p2", "dims");
  p.dims.r = detail::number<Eigen::Index>(dims, "r", "dims");
  const auto& dm = p.dims;
  if (dm.n <= 0 || dm.m1 <= 0 || dm.m2 <= 0 || dm.p1 <= 0 || dm.p2 <= 0 || dm.r <= 0) {
    throw ParseError("dims: all dimensions must be positive");
  }

  const json& plant = detail::require(j, "plant", "problem");
  p.plant.A = matrix_from_json(detail::require(plant, "A", "plant"), "A", dm.n, dm.n);
  p.plant.B = matrix_from_json(detail::require(plant, "B", "plant"), "B", dm.n, dm.m1);
  p.plant.C = matrix_from_json(detail::require(plant, "C", "plant"), "C", dm.p1, dm.n);
  p.plant.D = matrix_from_json(detail::require(plant, "D", "plant"), "D", dm.p1, dm.m1);
  p.plant.E = matrix_from_json(detail::require(plant, "E", "plant"), "E", dm.n, dm.p2);
  const json& weights = detail::require(j, "weights", "problem");
  p.plant.F = matrix_from_json(detail::require(weights, "F", "weights"), "F", dm.r, dm.n);
  p.plant.G = matrix_from_json(detail::require(weights, "G", "weights"), "G", dm.r, dm.p2);
  p.d = matrix_from_json(detail::require(j, "d", "problem"), "d", dm.p2, dm.m2);
  if (j.contains("theta1")) p.theta1 = matrix_from_json(j.at("theta1"), "theta1", dm.n, dm.n);
  if (j.contains("descent")) p.descent = descent_from_json(j.at("descent"));
  if (j.contains("init")) p.init = params_from_json(j.at("init"), dm);
  if (j.contains("pr_tolerance")) {
    if (!j.at("pr_tolerance").is_number()) throw ParseError("pr_tolerance: not a number");
    p.pr_tolerance = j.at("pr_tolerance").get<double>();
  }
  return p;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw Error("write failed: " + path.string());
}

inline ProblemFile read_problem_file(const std::filesystem::path& path) {
  return problem_from_json(read_json_file(path));
}

inline void write_problem_file(const std::filesystem::path& path, const ProblemFile& p) {
  write_json_file(path, problem_to_json(p));
}

/// The bundled example as a problem file (no theta1: it is derived on load).
inline ProblemFile example_problem_file() {
  ProblemFile p;
  p.dims = example::dimensions();
  p.plant = example::plant();
  p.d = example::controller_feedthrough();
  p.descent = example::descent_config();
  p.pr_tolerance = example::kPrTolerance;
  return p;
}

enum class Theta1Source { kFile, kDerived, kCanonical };

inline const char* to_string(Theta1Source s) {
  switch (s) {
    case Theta1Source::kFile:
      return "file";
    case Theta1Source::kDerived:
      return "derived";
    case Theta1Source::kCanonical:
      return "canonical";
  }
  return "unknown";
}

struct LoadReport {
  Theta1Source theta1_source = Theta1Source::kFile;
  PrResiduals plant_residuals;
  double tolerance = 0.0;
  bool plant_ok = false;
  std::string note;
};

struct LoadedProblem {
  Problem problem;
  DescentConfig descent;
  std::optional<ControllerParams> init;
  LoadReport report;
};

/// Builds the in-memory problem. Without an explicit theta1 it is derived from
/// the plant CCR-preservation identity, falling back to the canonical matrix
/// when the derivation fails or leaves larger residuals. Plant PR residuals are
/// always reported; they abort the load (ValidationError) only when `strict`
/// is set.
inline LoadedProblem load_problem(const ProblemFile& file, std::optional<double> tolerance,
                                  bool strict) {
  LoadedProblem out;
  out.descent = file.descent;
  out.init = file.init;
  Problem& problem = out.problem;
  problem.plant = file.plant;
  problem.d = file.d;
  try {
    problem.ccr = build_canonical_ccr(file.dims);
    validate(problem);
  } catch (const Error& ex) {
    throw ParseError(ex.what());
  }

  LoadReport& report = out.report;
  if (file.theta1) {
    try {
      problem.ccr = with_theta1(problem.ccr, *file.theta1);
    } catch (const ValidationError& ex) {
      throw ParseError(ex.what());
    }
    report.theta1_source = Theta1Source::kFile;
  } else {
    const PrResiduals canonical = plant_pr_residuals(problem);
    try {
      const Theta1Derivation derived = derive_plant_theta1(problem.plant, problem.d, problem.ccr);
      Problem candidate = problem;
      candidate.ccr = with_theta1(problem.ccr, derived.theta1);
      const PrResiduals with_derived = plant_pr_residuals(candidate);
      if (with_derived.plant_max() <= canonical.plant_max()) {
        problem = std::move(candidate);
        report.theta1_source = Theta1Source::kDerived;
      } else {
        report.theta1_source = Theta1Source::kCanonical;
        report.note = "derived theta1 leaves larger residuals than the canonical one";
      }
    } catch (const Error& ex) {
      report.theta1_source = Theta1Source::kCanonical;
      report.note = std::string("theta1 derivation failed: ") + ex.what();
    }
  }
  report.plant_residuals = plant_pr_residuals(problem);
  report.tolerance = tolerance ? *tolerance
                               : file.pr_tolerance.value_or(default_pr_tolerance(problem.plant));
  const Matrix ddt = problem.d * problem.d.transpose();
  const Matrix DDt = problem.plant.D * problem.plant.D.transpose();
  const double feedthrough_err =
      std::max((ddt - Matrix::Identity(ddt.rows(), ddt.cols())).norm(),
               (DDt - Matrix::Identity(DDt.rows(), DDt.cols())).norm());
  report.plant_ok =
      report.plant_residuals.plant_max() <= report.tolerance && feedthrough_err <= report.tolerance;
  if (feedthrough_err > report.tolerance) {
    report.note += (report.note.empty() ? "" : "; ");
    report.note += "feedthrough rows are not orthonormal (D Dᵀ or d dᵀ != I)";
  }
  if (strict && !report.plant_ok) {
    throw ValidationError("plant PR residuals exceed tolerance " + std::to_string(report.tolerance));
  }
  if (out.init) validate_params(*out.init, problem.ccr.dims);
  return out;
}

/// Problem file path, or "@example" for the bundled example.
inline ProblemFile read_problem_source(const std::string& source) {
  if (source == "@example") return example_problem_file();
  return read_problem_file(source);
}

inline constexpr const char* kTraceHeader =
    "k,cost,grad_norm,horizon,stepsize,armijo_index,second_gateaux";

inline void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace) {
  out << kTraceHeader << "\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : trace) {
    out << r.k << "," << r.cost << "," << r.grad_norm << "," << r.horizon << "," << r.stepsize
        << "," << r.armijo_index << "," << r.second_gateaux << "\n";
  }
}

inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<IterationRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_trace_csv(out, trace);
}

inline json controller_to_json(const Problem& problem, const DescentResult& run) {
  const ControllerRealization k = realize_controller(run.final_params, problem);
  json j;
  j["params"] = params_to_json(run.final_params);
  j["realization"] = json{{"a", matrix_to_json(k.a)},
                          {"b", matrix_to_json(k.b)},
                          {"c", matrix_to_json(k.c)},
                          {"d", matrix_to_json(k.d)},
                          {"e", matrix_to_json(k.e)}};
  j["final_cost"] = run.final_cost;
  j["final_grad_norm"] = run.final_grad_norm;
  j["termination"] = to_string(run.termination);
  j["iterations"] = run.trace.size();
  j["seed"] = run.seed;
  return j;
}

}  // namespace cqlqg::io
