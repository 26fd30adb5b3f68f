#pragma once

// Model adapters: the analytic heterogeneous chip-multiprocessor speedup model, external
// simulators over the line protocol, offline batch files, and plain callables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mgpc/csv.hpp"
#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"
#include "mgpc/log.hpp"
#include "mgpc/process.hpp"

namespace mgpc {

// ---------------------------------------------------------------------------------------
// CMP speedup model

struct CoreType {
  double area = 1.0;
  double yield = 1.0;       // success probability of each of the designed cores
  double perf_mu = 1.0;     // performance ~ TruncatedGaussian(perf_mu, perf_sigma, 0)
  double perf_sigma = 0.0;  // 0 makes the performance deterministic (a narrow uniform stand-in)
};

struct CmpConfig {
  int f_trials = 60;
  double f_p = 0.6;
  int c_trials = 80;
  double c_p = 0.7;
  int core_trials = 20;
  std::vector<CoreType> cores{{32.0, 0.7432, 5.6569, 1.1314}, {64.0, 0.5739, 8.0, 1.6}};

  void validate() const {
    if (f_trials < 1) throw InvalidParameter("f_trials", "must be at least 1");
    if (c_trials < 1) throw InvalidParameter("c_trials", "must be at least 1");
    if (core_trials < 1) throw InvalidParameter("core_trials", "must be at least 1");
    if (cores.empty()) throw InvalidParameter("cores", "at least one core type is required");
    for (const auto& c : cores) {
      if (!(c.area > 0.0)) throw InvalidParameter("area", "must be positive");
      if (!(c.yield > 0.0 && c.yield <= 1.0)) throw InvalidParameter("yield", "must lie in (0, 1]");
      if (!(c.perf_mu > 0.0)) throw InvalidParameter("perf_mu", "must be positive");
      if (!(c.perf_sigma >= 0.0)) throw InvalidParameter("perf_sigma", "must be nonnegative");
    }
  }

  std::size_t core_count() const noexcept { return cores.size(); }
};

/// Inputs in the order f, c, N_0..N_{k-1}, P_0..P_{k-1}. f and c are scaled binomials, the
/// counts are binomials over the designed core count, the performances truncated at 0.
inline ProblemSpec cmp_problem_spec(const CmpConfig& cfg) {
  cfg.validate();
  std::vector<ParameterSpec> ps;
  ps.push_back({"f", make_distribution("binomial", {double(cfg.f_trials), cfg.f_p}),
                {1.0 / cfg.f_trials, 0.0}});
  ps.push_back({"c", make_distribution("binomial", {double(cfg.c_trials), cfg.c_p}),
                {1.0 / cfg.c_trials, 0.0}});
  for (std::size_t i = 0; i < cfg.cores.size(); ++i) {
    const auto& c = cfg.cores[i];
    // yield 1 would give a one-point law; the lattice then carries no polynomials
    const double p = std::min(c.yield, 1.0 - 1e-12);
    ps.push_back({"N" + std::to_string(i), make_distribution("binomial", {double(cfg.core_trials), p}), {}});
  }
  for (std::size_t i = 0; i < cfg.cores.size(); ++i) {
    const auto& c = cfg.cores[i];
    Distribution d = c.perf_sigma > 0.0
                         ? make_distribution("truncated_gaussian", {c.perf_mu, c.perf_sigma, 0.0})
                         : make_distribution("uniform", {c.perf_mu * (1 - 1e-9), c.perf_mu * (1 + 1e-9)});
    ps.push_back({"P" + std::to_string(i), std::move(d), {}});
  }
  return ProblemSpec(std::move(ps), {"speedup"});
}

/// speedup = 1 / (T_seq + T_par) with
///   T_seq = (1 - f + c * sum N) / P_serial,   P_serial = max{P_i : N_i > 0},
///   T_par = f / sum N_i P_i.
/// With no active core the speedup is 0 and `no_active_core` is set.
inline double cmp_speedup(double f, double c, std::span<const double> N, std::span<const double> P,
                          bool* no_active_core = nullptr) {
  if (N.size() != P.size()) throw ShapeMismatch("cmp_speedup: N and P differ in length");
  double total = 0.0, par = 0.0, serial = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < N.size(); ++i) {
    total += N[i];
    par += N[i] * P[i];
    if (N[i] > 0.0) {
      any = true;
      serial = std::max(serial, P[i]);
    }
  }
  if (no_active_core) *no_active_core = !any;
  if (!any) return 0.0;
  const double t_seq = (1.0 - f + c * total) / serial;
  const double t_par = f / par;
  return 1.0 / (t_seq + t_par);
}

/// Speedup at one physical input vector laid out as in cmp_problem_spec.
inline double cmp_speedup(const CmpConfig& cfg, std::span<const double> x, bool* no_active_core = nullptr) {
  const std::size_t k = cfg.core_count();
  if (x.size() != 2 + 2 * k)
    throw ShapeMismatch("CMP input needs " + std::to_string(2 + 2 * k) + " values");
  return cmp_speedup(x[0], x[1], x.subspan(2, k), x.subspan(2 + k, k), no_active_core);
}

/// Negative-binomial yield model (1 + d A / alpha)^(-alpha).
inline double yield_rate(double area, double defect_d, double alpha) {
  if (!(area > 0.0)) throw InvalidParameter("area", "must be positive");
  if (!(defect_d >= 0.0)) throw InvalidParameter("defect_d", "must be nonnegative");
  if (!(alpha > 0.0)) throw InvalidParameter("alpha", "must be positive");
  return std::pow(1.0 + defect_d * area / alpha, -alpha);
}

// ---------------------------------------------------------------------------------------
// Batch files: phase one writes requests, a later invocation reads the responses.

struct BatchAdapter {
  std::string request_path;
  std::string response_path;
};

/// Raised after the request file is written when no response is available yet.
class BatchPending : public Error {
 public:
  explicit BatchPending(std::string path)
      : Error("batch request written to '" + path + "'; rerun with the response file present"),
        path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

inline void batch_write_request(const BatchAdapter& a, const std::vector<std::string>& param_names,
                                const Eigen::MatrixXd& physical) {
  if (Eigen::Index(param_names.size()) != physical.cols())
    throw ShapeMismatch("batch request: one name per column is required");
  csv::Writer w(a.request_path);
  std::vector<std::string> header{"id"};
  header.insert(header.end(), param_names.begin(), param_names.end());
  w.header(header);
  for (Eigen::Index i = 0; i < physical.rows(); ++i) {
    w.field(long(i));
    for (Eigen::Index j = 0; j < physical.cols(); ++j) w.field(physical(i, j));
    w.end_row();
  }
  w.close();
}

/// Response rows keyed by id; every id in [0, rows) must appear exactly once.
inline Eigen::MatrixXd batch_read_response(const BatchAdapter& a, const std::vector<std::string>& outputs,
                                           std::size_t rows) {
  const csv::Table t = csv::read(a.response_path);
  if (t.header.empty() || t.header[0] != "id")
    throw IdMismatch("response '" + a.response_path + "' must start with an 'id' column");
  std::vector<int> cols;
  for (const auto& name : outputs) {
    const int c = t.column(name);
    if (c < 0) throw CorruptFile("response '" + a.response_path + "' lacks output column '" + name + "'");
    cols.push_back(c);
  }
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(Eigen::Index(rows), Eigen::Index(outputs.size()), std::nan(""));
  std::vector<char> seen(rows, 0);
  std::size_t extra = 0;
  for (const auto& r : t.rows) {
    const auto idv = r.empty() ? std::nullopt : csv::parse_number(r[0]);
    if (!idv || *idv != std::floor(*idv) || *idv < 0)
      throw IdMismatch("unparseable id '" + (r.empty() ? std::string() : r[0]) + "' in response");
    const auto id = static_cast<std::size_t>(*idv);
    if (id >= rows) {
      ++extra;
      continue;
    }
    if (seen[id]) throw IdMismatch("duplicate response row for id " + std::to_string(id));
    seen[id] = 1;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto c = std::size_t(cols[j]);
      const auto v = c < r.size() ? csv::parse_number(r[c]) : std::nullopt;
      if (!v) throw CorruptFile("non-numeric value in response row for id " + std::to_string(id));
      y(Eigen::Index(id), Eigen::Index(j)) = *v;
    }
  }
  if (extra) log::warn("ignoring " + std::to_string(extra) + " response rows with unknown ids");
  std::vector<long> missing;
  for (std::size_t i = 0; i < rows; ++i)
    if (!seen[i]) missing.push_back(long(i));
  if (!missing.empty()) throw MissingRows(std::move(missing));
  return y;
}

/// Collect when the response exists, otherwise write the request and report pending.
inline std::optional<Eigen::MatrixXd> batch_roundtrip(const BatchAdapter& a, const std::vector<std::string>& param_names,
                                                      const std::vector<std::string>& outputs,
                                                      const Eigen::MatrixXd& physical) {
  if (std::filesystem::exists(a.response_path))
    return batch_read_response(a, outputs, std::size_t(physical.rows()));
  batch_write_request(a, param_names, physical);
  return std::nullopt;
}

// ---------------------------------------------------------------------------------------
// Adapter dispatch. Adapters receive physical (affine-mapped) inputs.

struct BuiltinAdapter {
  CmpConfig cmp;
};

struct FunctionAdapter {
  std::function<void(std::span<const double> x, std::span<double> y)> fn;
  std::size_t n_outputs = 1;
};

using ModelAdapter = std::variant<BuiltinAdapter, ExecAdapter, BatchAdapter, FunctionAdapter>;

inline bool adapter_is_cheap(const ModelAdapter& m) {
  return std::holds_alternative<BuiltinAdapter>(m) || std::holds_alternative<FunctionAdapter>(m);
}

inline std::string adapter_name(const ModelAdapter& m) {
  switch (m.index()) {
    case 0: return "builtin_cmp";
    case 1: return "exec";
    case 2: return "batch";
    default: return "function";
  }
}

/// Rows of `physical` through the model; returns rows x outputs.size().
/// Batch adapters throw BatchPending after writing a request.
inline Eigen::MatrixXd evaluate_model(const ModelAdapter& model, const ProblemSpec& spec,
                                      const Eigen::MatrixXd& physical) {
  if (physical.cols() != spec.dim()) throw ShapeMismatch("model input has the wrong dimension");
  const auto n_out = spec.outputs().size();
  const Eigen::Index M = physical.rows();
  if (const auto* b = std::get_if<BuiltinAdapter>(&model)) {
    if (n_out != 1) throw ConfigError("the builtin CMP model has exactly one output");
    Eigen::MatrixXd y(M, 1);
    std::vector<double> x(std::size_t(spec.dim()));
    std::size_t flagged = 0;
    for (Eigen::Index i = 0; i < M; ++i) {
      for (int j = 0; j < spec.dim(); ++j) x[std::size_t(j)] = physical(i, j);
      bool dead = false;
      y(i, 0) = cmp_speedup(b->cmp, x, &dead);
      flagged += dead;
    }
    if (flagged) log::warn(std::to_string(flagged) + " samples had no active core; speedup set to 0");
    return y;
  }
  if (const auto* e = std::get_if<ExecAdapter>(&model)) return exec_eval(*e, physical, n_out);
  if (const auto* bf = std::get_if<BatchAdapter>(&model)) {
    std::vector<std::string> names;
    for (const auto& p : spec.params()) names.push_back(p.name);
    auto y = batch_roundtrip(*bf, names, spec.outputs(), physical);
    if (!y) throw BatchPending(bf->request_path);
    return *y;
  }
  const auto& f = std::get<FunctionAdapter>(model);
  if (!f.fn) throw ConfigError("function adapter has no callable");
  if (f.n_outputs != n_out) throw ShapeMismatch("function adapter output count differs from the problem");
  Eigen::MatrixXd y(M, Eigen::Index(n_out));
  std::vector<double> x(std::size_t(spec.dim())), out(n_out);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (int j = 0; j < spec.dim(); ++j) x[std::size_t(j)] = physical(i, j);
    f.fn(x, out);
    for (std::size_t k = 0; k < n_out; ++k) y(i, Eigen::Index(k)) = out[k];
  }
  return y;
}

/// Latent points (as stored in quadrature rules) through the model.
inline Eigen::MatrixXd evaluate_model_latent(const ModelAdapter& model, const ProblemSpec& spec,
                                             const Eigen::MatrixXd& latent) {
  return evaluate_model(model, spec, spec.to_physical(latent));
}

// ---------------------------------------------------------------------------------------
// Direct Monte Carlo

struct MonteCarloResult {
  Eigen::VectorXd mean, stddev;  // per output; sample standard deviation (n - 1)
  Eigen::MatrixXd inputs;        // n x d latent draws
  Eigen::MatrixXd outputs;       // n x n_outputs
};

inline MonteCarloResult monte_carlo(const ModelAdapter& model, const ProblemSpec& spec, std::size_t n,
                                    std::uint64_t seed) {
  if (n < 1) throw InvalidParameter("n", "sample count must be at least 1");
  MonteCarloResult r;
  r.inputs = spec.sample_latent(n, seed);
  r.outputs = evaluate_model_latent(model, spec, r.inputs);
  r.mean = r.outputs.colwise().mean().transpose();
  r.stddev = Eigen::VectorXd::Zero(r.outputs.cols());
  if (n > 1)
    for (Eigen::Index j = 0; j < r.outputs.cols(); ++j)
      r.stddev(j) = std::sqrt((r.outputs.col(j).array() - r.mean(j)).square().sum() / double(n - 1));
  return r;
}

inline MonteCarloResult cmp_monte_carlo(const CmpConfig& cfg, std::size_t n, std::uint64_t seed) {
  return monte_carlo(BuiltinAdapter{cfg}, cmp_problem_spec(cfg), n, seed);
}

}  // namespace mgpc
