#pragma once

// JSON and CSV forms of problem specifications and quadrature rules.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mgpc/csv.hpp"
#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"
#include "mgpc/quad.hpp"

namespace mgpc {

using json = nlohmann::json;

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

inline json problem_to_json(const ProblemSpec& spec) {
  json params = json::array();
  for (const auto& p : spec.params()) {
    json vals = json::array();
    const auto v = p.dist.parameters();
    for (std::size_t i = 0; i < v.size(); ++i) {
      // infinite truncation bounds are written as null
      vals.push_back(detail::number_or_null(v[i]));
    }
    params.push_back({{"name", p.name},
                      {"kind", std::string(p.dist.kind_name())},
                      {"params", vals},
                      {"scale", p.affine.scale},
                      {"shift", p.affine.shift}});
  }
  return {{"params", params}, {"outputs", spec.outputs()}};
}

/// Parse {params: [{name, kind, params, scale?, shift?}], outputs?}. A null among the
/// parameters of a truncated Gaussian stands for an open end (lower -inf, upper +inf).
inline ProblemSpec problem_from_json(const json& j) {
  if (!j.is_object() || !j.contains("params") || !j["params"].is_array())
    throw ConfigError("problem must be an object with a 'params' array");
  std::vector<ParameterSpec> ps;
  for (const auto& p : j["params"]) {
    if (!p.is_object()) throw ConfigError("each parameter must be an object");
    if (!p.contains("name") || !p["name"].is_string()) throw ConfigError("parameter is missing 'name'");
    const std::string name = p["name"].get<std::string>();
    if (!p.contains("kind") || !p["kind"].is_string())
      throw ConfigError("parameter '" + name + "' is missing 'kind'");
    if (!p.contains("params") || !p["params"].is_array())
      throw ConfigError("parameter '" + name + "' is missing the 'params' array");
    std::vector<double> vals;
    const auto& arr = p["params"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (arr[i].is_null()) {
        vals.push_back(i == 2 ? -std::numeric_limits<double>::infinity()
                              : std::numeric_limits<double>::infinity());
      } else if (arr[i].is_number()) {
        vals.push_back(arr[i].get<double>());
      } else {
        throw ConfigError("parameter '" + name + "' has a non-numeric entry in 'params'");
      }
    }
    Affine a;
    if (p.contains("scale")) {
      if (!p["scale"].is_number()) throw ConfigError("parameter '" + name + "': 'scale' must be a number");
      a.scale = p["scale"].get<double>();
    }
    if (p.contains("shift")) {
      if (!p["shift"].is_number()) throw ConfigError("parameter '" + name + "': 'shift' must be a number");
      a.shift = p["shift"].get<double>();
    }
    ps.push_back({name, make_distribution(p["kind"].get<std::string>(), vals), a});
  }
  std::vector<std::string> outputs;
  if (j.contains("outputs")) {
    if (!j["outputs"].is_array()) throw ConfigError("'outputs' must be an array of names");
    for (const auto& o : j["outputs"]) {
      if (!o.is_string()) throw ConfigError("'outputs' must be an array of names");
      outputs.push_back(o.get<std::string>());
    }
  }
  return ProblemSpec(std::move(ps), std::move(outputs));
}

inline json rule_to_json(const QuadratureRule& r) {
  json pts = json::array();
  for (Eigen::Index i = 0; i < r.points.rows(); ++i)
    pts.push_back(std::vector<double>(r.points.row(i).begin(), r.points.row(i).end()));
  return {{"points", pts},
          {"weights", std::vector<double>(r.weights.begin(), r.weights.end())},
          {"residual_sq", r.residual_sq},
          {"order", r.order},
          {"epsilon", r.epsilon},
          {"converged", r.converged}};
}

inline QuadratureRule rule_from_json(const json& j, int dim) {
  QuadratureRule r;
  const auto& pts = j.at("points");
  const auto& wts = j.at("weights");
  if (!pts.is_array() || !wts.is_array() || pts.size() != wts.size())
    throw CorruptFile("rule points and weights differ in length");
  r.points.resize(Eigen::Index(pts.size()), dim);
  r.weights.resize(Eigen::Index(wts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto row = pts[i].get<std::vector<double>>();
    if (row.size() != std::size_t(dim)) throw CorruptFile("rule point has the wrong dimension");
    for (int k = 0; k < dim; ++k) r.points(Eigen::Index(i), k) = row[std::size_t(k)];
    r.weights(Eigen::Index(i)) = wts[i].get<double>();
  }
  r.residual_sq = j.at("residual_sq").get<double>();
  r.order = j.at("order").get<int>();
  r.epsilon = j.at("epsilon").get<double>();
  r.converged = j.at("converged").get<bool>();
  return r;
}

/// One row per point: latent coordinates under the parameter names, then the weight.
inline void write_rule_csv(const std::string& path, const ProblemSpec& spec, const QuadratureRule& r) {
  std::vector<std::string> header;
  for (const auto& p : spec.params()) header.push_back(p.name);
  header.push_back("weight");
  Eigen::MatrixXd m(r.points.rows(), r.points.cols() + 1);
  m << r.points, r.weights;
  csv::write_matrix(path, header, m);
}

/// Reads a rule CSV; residual and order are recomputed by the caller when needed.
inline QuadratureRule read_rule_csv(const std::string& path, const ProblemSpec& spec) {
  const csv::Table t = csv::read(path);
  std::vector<int> cols;
  for (const auto& p : spec.params()) {
    const int c = t.column(p.name);
    if (c < 0) throw CorruptFile("rule '" + path + "' lacks column '" + p.name + "'");
    cols.push_back(c);
  }
  const int wc = t.column("weight");
  if (wc < 0) throw CorruptFile("rule '" + path + "' lacks the 'weight' column");
  QuadratureRule r;
  r.points.resize(Eigen::Index(t.rows.size()), spec.dim());
  r.weights.resize(Eigen::Index(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto get = [&](int c) {
      const auto v = std::size_t(c) < t.rows[i].size() ? csv::parse_number(t.rows[i][std::size_t(c)])
                                                        : std::nullopt;
      if (!v) throw CorruptFile("rule '" + path + "' row " + std::to_string(i + 1) + " is not numeric");
      return *v;
    };
    for (int k = 0; k < spec.dim(); ++k) r.points(Eigen::Index(i), k) = get(cols[std::size_t(k)]);
    r.weights(Eigen::Index(i)) = get(wc);
  }
  if (r.weights.size() == 0) throw CorruptFile("rule '" + path + "' has no points");
  return r;
}

}  // namespace mgpc
