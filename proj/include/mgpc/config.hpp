#pragma once

// Run configuration documents:
//   {
//     "problem": {...} | "problem.json",
//     "solver":  {"order", "epsilon", "n_max", "step_tol", "lambda", "n_candidates", "m_init",
//                 "increase_factor", "match_order", "relax_integrality", "node_limit"},
//     "model":   {"type": "builtin_cmp", "cmp": {...}}
//              | {"type": "exec", "command", "args", "timeout", "workers"}
//              | {"type": "batch", "request", "response"},
//     "output_dir": "...",
//     "seed": 1
//   }
// Relative paths are taken relative to the configuration file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"
#include "mgpc/models.hpp"
#include "mgpc/quad.hpp"
#include "mgpc/serialize.hpp"

namespace mgpc {

struct RunConfig {
  ProblemSpec problem;
  SolverConfig solver;
  ModelAdapter model;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
};

namespace detail {

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get_as(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <class T>
void read_opt(const json& j, const char* key, const std::string& where, T& dst) {
  if (j.contains(key) && !j[key].is_null()) dst = get_as<T>(j, key, where);
}

inline json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path q(p);
  return q.is_absolute() ? q.string() : (base / q).lexically_normal().string();
}

}  // namespace detail

inline CmpConfig cmp_config_from_json(const json& j) {
  CmpConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("'cmp' must be an object");
  detail::allow_keys(j, "cmp", {"f", "c", "core_trials", "cores"});
  auto binom = [&](const char* key, int& trials, double& p) {
    if (!j.contains(key)) return;
    const auto& b = j[key];
    const std::string where = std::string("cmp.") + key;
    if (!b.is_object()) throw ConfigError("'" + where + "' must be an object");
    detail::allow_keys(b, where, {"trials", "p"});
    detail::read_opt(b, "trials", where, trials);
    detail::read_opt(b, "p", where, p);
  };
  binom("f", c.f_trials, c.f_p);
  binom("c", c.c_trials, c.c_p);
  detail::read_opt(j, "core_trials", "cmp", c.core_trials);
  if (j.contains("cores")) {
    if (!j["cores"].is_array()) throw ConfigError("'cmp.cores' must be an array");
    c.cores.clear();
    for (const auto& e : j["cores"]) {
      if (!e.is_object()) throw ConfigError("'cmp.cores' entries must be objects");
      detail::allow_keys(e, "cmp.cores", {"area", "yield", "perf_mu", "perf_sigma"});
      CoreType t;
      t.area = detail::get_as<double>(e, "area", "cmp.cores");
      t.yield = detail::get_as<double>(e, "yield", "cmp.cores");
      t.perf_mu = detail::get_as<double>(e, "perf_mu", "cmp.cores");
      t.perf_sigma = detail::get_as<double>(e, "perf_sigma", "cmp.cores");
      c.cores.push_back(t);
    }
  }
  try {
    c.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("cmp: ") + e.what());
  }
  return c;
}

inline SolverConfig solver_from_json(const json& j) {
  SolverConfig s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw ConfigError("'solver' must be an object");
  detail::allow_keys(j, "solver",
                     {"order", "epsilon", "n_max", "step_tol", "lambda", "n_candidates", "m_init", "increase_factor",
                      "match_order", "relax_integrality", "node_limit"});
  const std::string w = "solver";
  detail::read_opt(j, "order", w, s.order);
  detail::read_opt(j, "epsilon", w, s.epsilon);
  detail::read_opt(j, "n_max", w, s.n_max);
  detail::read_opt(j, "step_tol", w, s.step_tol);
  if (j.contains("lambda") && !j["lambda"].is_null()) s.lambda = detail::get_as<double>(j, "lambda", w);
  if (j.contains("n_candidates")) {
    const long n = detail::get_as<long>(j, "n_candidates", w);
    if (n < 1) throw ConfigError("solver.n_candidates must be at least 1");
    s.n_candidates = std::size_t(n);
  }
  if (j.contains("m_init") && !j["m_init"].is_null()) {
    const long m = detail::get_as<long>(j, "m_init", w);
    if (m < 1) throw ConfigError("solver.m_init must be at least 1");
    s.m_init = std::size_t(m);
  }
  detail::read_opt(j, "increase_factor", w, s.increase_factor);
  detail::read_opt(j, "match_order", w, s.match_order);
  detail::read_opt(j, "relax_integrality", w, s.relax_integrality);
  detail::read_opt(j, "node_limit", w, s.node_limit);
  return s;
}

inline ModelAdapter model_from_json(const json& j, const std::filesystem::path& base) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ConfigError("'model' must be an object with a string 'type'");
  const auto type = j["type"].get<std::string>();
  if (type == "builtin_cmp") {
    detail::allow_keys(j, "model", {"type", "cmp"});
    return BuiltinAdapter{cmp_config_from_json(j.contains("cmp") ? j["cmp"] : json())};
  }
  if (type == "exec") {
    detail::allow_keys(j, "model", {"type", "command", "args", "timeout", "workers"});
    ExecAdapter e;
    e.command = detail::get_as<std::string>(j, "command", "model");
    // a command with a directory part is relative to the configuration file
    if (e.command.find('/') != std::string::npos)
      e.command = std::filesystem::absolute(detail::resolve(base, e.command)).lexically_normal().string();
    detail::read_opt(j, "args", "model", e.args);
    detail::read_opt(j, "timeout", "model", e.timeout_seconds);
    detail::read_opt(j, "workers", "model", e.workers);
    if (!(e.timeout_seconds > 0.0)) throw ConfigError("model.timeout must be positive");
    if (e.workers < 1) throw ConfigError("model.workers must be at least 1");
    return e;
  }
  if (type == "batch") {
    detail::allow_keys(j, "model", {"type", "request", "response"});
    return BatchAdapter{detail::resolve(base, detail::get_as<std::string>(j, "request", "model")),
                        detail::resolve(base, detail::get_as<std::string>(j, "response", "model"))};
  }
  throw ConfigError("unknown model type '" + type + "' (expected builtin_cmp, exec or batch)");
}

inline RunConfig run_config_from_json(const json& j, const std::filesystem::path& base = ".") {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  detail::allow_keys(j, "configuration", {"problem", "solver", "model", "output_dir", "seed"});
  if (!j.contains("model")) throw ConfigError("configuration has no 'model' section");
  ModelAdapter model = model_from_json(j["model"], base);

  std::optional<ProblemSpec> problem;
  if (j.contains("problem")) {
    const auto& p = j["problem"];
    try {
      if (p.is_string()) {
        const auto path = detail::resolve(base, p.get<std::string>());
        if (!std::filesystem::exists(path)) throw ConfigError("problem file '" + path + "' does not exist");
        problem = problem_from_json(detail::read_json_file(path));
      } else {
        problem = problem_from_json(p);
      }
    } catch (const InvalidParameter& e) {
      throw ConfigError(std::string("problem: ") + e.what());
    }
  } else if (const auto* b = std::get_if<BuiltinAdapter>(&model)) {
    problem = cmp_problem_spec(b->cmp);
  } else {
    throw ConfigError("configuration has no 'problem' section");
  }
  if (std::holds_alternative<BuiltinAdapter>(model)) {
    const auto& cmp = std::get<BuiltinAdapter>(model).cmp;
    if (problem->dim() != int(2 + 2 * cmp.core_count()) || problem->outputs().size() != 1)
      throw ConfigError("the builtin CMP model needs " + std::to_string(2 + 2 * cmp.core_count()) +
                        " parameters and one output");
  }

  RunConfig rc{std::move(*problem), solver_from_json(j.contains("solver") ? j["solver"] : json()),
               std::move(model), ".", 0};
  if (j.contains("output_dir")) rc.output_dir = detail::resolve(base, detail::get_as<std::string>(j, "output_dir", "configuration"));
  else rc.output_dir = base.string().empty() ? "." : base.string();
  detail::read_opt(j, "seed", "configuration", rc.seed);
  rc.solver.seed = rc.seed;
  try {
    rc.solver.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  const std::filesystem::path p(path);
  if (!std::filesystem::exists(p)) throw ConfigError("configuration file '" + path + "' does not exist");
  auto base = p.parent_path();
  if (base.empty()) base = ".";
  return run_config_from_json(detail::read_json_file(p), base);
}

}  // namespace mgpc
