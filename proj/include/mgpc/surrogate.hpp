#pragma once

// Polynomial chaos surrogate y(xi) ~ sum_a c_a Psi_a(xi), fitted by discrete projection on
// a quadrature rule, with moments, histograms, Monte Carlo validation and persistence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mgpc/basis.hpp"
#include "mgpc/error.hpp"
#include "mgpc/log.hpp"
#include "mgpc/models.hpp"
#include "mgpc/quad.hpp"
#include "mgpc/serialize.hpp"

namespace mgpc {

inline constexpr int kSurrogateVersion = 1;

class Surrogate {
 public:
  /// `coeffs` is N_p x n_outputs; the basis may carry recurrences beyond `order`.
  Surrogate(const BasisSet& basis, int order, Eigen::MatrixXd coeffs, QuadratureRule rule,
            json metadata = json::object())
      : basis_(basis.problem(), order, basis.tables()),
        coeffs_(std::move(coeffs)),
        rule_(std::move(rule)),
        metadata_(std::move(metadata)) {
    if (coeffs_.rows() != Eigen::Index(basis_.size(order)))
      throw ShapeMismatch("coefficient rows must equal the number of basis functions");
    if (coeffs_.cols() != Eigen::Index(basis_.problem().outputs().size()))
      throw ShapeMismatch("one coefficient column per output is required");
  }

  const BasisSet& basis() const noexcept { return basis_; }
  const ProblemSpec& problem() const noexcept { return basis_.problem(); }
  int order() const noexcept { return basis_.order(); }
  const Eigen::MatrixXd& coefficients() const noexcept { return coeffs_; }
  const QuadratureRule& rule() const noexcept { return rule_; }
  const json& metadata() const noexcept { return metadata_; }
  const std::vector<std::string>& outputs() const noexcept { return problem().outputs(); }

  /// Value at one point; physical inputs are mapped back through the affine maps first.
  Eigen::VectorXd evaluate(std::span<const double> xi, bool latent = true) const {
    if (xi.size() != std::size_t(problem().dim())) throw ShapeMismatch("point has the wrong dimension");
    Eigen::MatrixXd p(1, problem().dim());
    for (int j = 0; j < problem().dim(); ++j) p(0, j) = xi[std::size_t(j)];
    return evaluate_batch(p, latent).row(0).transpose();
  }

  /// Rows of `points` to rows of outputs.
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& points, bool latent = true) const {
    const Eigen::MatrixXd z = latent ? points : problem().to_latent(points);
    warn_outside_support(z);
    return (coeffs_.transpose() * basis_.matrix(z, order())).transpose();
  }

 private:
  void warn_outside_support(const Eigen::MatrixXd& z) const {
    std::size_t outside = 0;
    for (int j = 0; j < problem().dim(); ++j) {
      const auto s = problem().param(j).dist.support();
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        if (z(i, j) < s.lo || z(i, j) > s.hi) ++outside;
    }
    if (outside)
      log::warn("surrogate evaluated outside the input support at " + std::to_string(outside) +
                " coordinates; polynomials extrapolate");
  }

  BasisSet basis_;
  Eigen::MatrixXd coeffs_;
  QuadratureRule rule_;
  json metadata_;
};

/// c_a = sum_i y(xi_i) Psi_a(xi_i) w_i for every |a| <= order; `outputs` is M x n_outputs.
inline Surrogate fit_coefficients(const BasisSet& basis, int order, const QuadratureRule& rule,
                                  const Eigen::MatrixXd& outputs, json metadata = json::object()) {
  if (outputs.rows() != rule.points.rows() || rule.points.rows() != rule.weights.size())
    throw ShapeMismatch("outputs must have one row per quadrature point");
  if (outputs.cols() != Eigen::Index(basis.problem().outputs().size()))
    throw ShapeMismatch("outputs must have one column per output channel");
  if (!outputs.allFinite()) throw InvalidParameter("outputs", "model outputs must be finite");
  const Eigen::MatrixXd phi = basis.matrix(rule.points, order);
  Eigen::MatrixXd coeffs = phi * rule.weights.asDiagonal() * outputs;
  return Surrogate(basis, order, std::move(coeffs), rule, std::move(metadata));
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

/// mean = c_0, std = sqrt(sum_{|a| >= 1} c_a^2), per output.
inline Moments mean_std(const Surrogate& s) {
  const auto& c = s.coefficients();
  Moments m;
  m.mean = c.row(0).transpose();
  m.stddev = c.bottomRows(c.rows() - 1).colwise().norm().transpose();
  return m;
}

struct Histogram {
  std::vector<double> edges;         // bins + 1
  std::vector<std::size_t> counts;   // bins
};

/// Equal-width bins over [lo, hi]; a degenerate range is widened symmetrically by 0.5.
inline Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins < 1) throw InvalidParameter("bins", "must be at least 1");
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = lo + (hi - lo) * double(k) / double(bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) continue;
    auto k = std::size_t((v - lo) / (hi - lo) * double(bins));
    h.counts[std::min(k, bins - 1)]++;
  }
  return h;
}

struct SampledHistograms {
  Eigen::MatrixXd inputs;    // n x d latent draws
  Eigen::MatrixXd values;    // n x n_outputs surrogate values
  std::vector<Histogram> histograms;
};

/// n joint draws through the surrogate, binned per output over the sample range.
inline SampledHistograms sample_histogram(const Surrogate& s, std::size_t n, std::size_t bins,
                                          std::uint64_t seed) {
  if (n < 1) throw InvalidParameter("n", "sample count must be at least 1");
  if (bins < 1) throw InvalidParameter("bins", "must be at least 1");
  SampledHistograms out;
  out.inputs = s.problem().sample_latent(n, seed);
  out.values = s.evaluate_batch(out.inputs, true);
  for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
    const Eigen::VectorXd col = out.values.col(j);
    out.histograms.push_back(make_histogram({col.data(), std::size_t(col.size())}, bins, col.minCoeff(),
                                            col.maxCoeff()));
  }
  return out;
}

struct ValidationReport {
  std::vector<std::string> outputs;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd rmse_rel, mae_rel;
  Eigen::VectorXd surrogate_mean, surrogate_std;
  Eigen::VectorXd reference_mean, reference_std;
  std::string metric_definition =
      "rmse_rel = ||y_sur - y_ref||_2 / ||y_ref||_2; mae_rel = sum|y_sur - y_ref| / sum|y_ref|";
  Eigen::MatrixXd surrogate_values, reference_values;  // n x n_outputs
};

/// Compare against direct model evaluations at n fresh joint draws.
inline ValidationReport validate(const Surrogate& s, const ModelAdapter& model, std::size_t n,
                                 std::uint64_t seed) {
  if (n < 1) throw InvalidParameter("n", "sample count must be at least 1");
  const Eigen::MatrixXd z = s.problem().sample_latent(n, seed);
  ValidationReport r;
  r.outputs = s.outputs();
  r.n_samples = n;
  r.seed = seed;
  r.surrogate_values = s.evaluate_batch(z, true);
  r.reference_values = evaluate_model_latent(model, s.problem(), z);
  const auto k = r.surrogate_values.cols();
  r.rmse_rel.resize(k);
  r.mae_rel.resize(k);
  r.surrogate_mean.resize(k);
  r.surrogate_std.resize(k);
  r.reference_mean.resize(k);
  r.reference_std.resize(k);
  auto sd = [n](const Eigen::VectorXd& v) {
    return n > 1 ? std::sqrt((v.array() - v.mean()).square().sum() / double(n - 1)) : 0.0;
  };
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::VectorXd a = r.surrogate_values.col(j), b = r.reference_values.col(j);
    const double ref_norm = b.norm(), ref_abs = b.cwiseAbs().sum();
    r.rmse_rel(j) = ref_norm > 0.0 ? (a - b).norm() / ref_norm : (a - b).norm();
    r.mae_rel(j) = ref_abs > 0.0 ? (a - b).cwiseAbs().sum() / ref_abs : (a - b).cwiseAbs().sum();
    r.surrogate_mean(j) = a.mean();
    r.surrogate_std(j) = sd(a);
    r.reference_mean(j) = b.mean();
    r.reference_std(j) = sd(b);
  }
  return r;
}

// ---------------------------------------------------------------------------------------
// Persistence

inline json surrogate_to_json(const Surrogate& s) {
  json tables = json::array();
  for (const auto& t : s.basis().tables()) tables.push_back({{"alpha", t.alpha}, {"beta", t.beta}});
  json coeffs = json::array();
  for (Eigen::Index j = 0; j < s.coefficients().cols(); ++j) {
    const Eigen::VectorXd c = s.coefficients().col(j);
    coeffs.push_back(std::vector<double>(c.begin(), c.end()));
  }
  return {{"format", "mgpc-surrogate"},
          {"version", kSurrogateVersion},
          {"problem", problem_to_json(s.problem())},
          {"basis",
           {{"order", s.order()},
            {"ordering", "graded; within a degree, first coordinate descending"},
            {"tables", tables}}},
          {"coefficients", coeffs},
          {"rule", rule_to_json(s.rule())},
          {"metadata", s.metadata()}};
}

inline Surrogate surrogate_from_json(const json& j) {
  if (!j.is_object() || !j.contains("version")) throw CorruptFile("surrogate document has no version field");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kSurrogateVersion)
    throw VersionMismatch("unsupported surrogate version " + j["version"].dump() + " (expected " +
                          std::to_string(kSurrogateVersion) + ")");
  try {
    ProblemSpec spec = problem_from_json(j.at("problem"));
    const auto& b = j.at("basis");
    const int order = b.at("order").get<int>();
    std::vector<RecurrenceTable> tables;
    for (const auto& t : b.at("tables"))
      tables.push_back(RecurrenceTable::from_coefficients(t.at("alpha").get<std::vector<double>>(),
                                                          t.at("beta").get<std::vector<double>>()));
    BasisSet basis(spec, order, std::move(tables));
    const auto& cj = j.at("coefficients");
    const auto N = Eigen::Index(basis.size(order));
    Eigen::MatrixXd coeffs(N, Eigen::Index(cj.size()));
    for (std::size_t k = 0; k < cj.size(); ++k) {
      const auto col = cj[k].get<std::vector<double>>();
      if (Eigen::Index(col.size()) != N) throw CorruptFile("coefficient vector has the wrong length");
      for (Eigen::Index i = 0; i < N; ++i) coeffs(i, Eigen::Index(k)) = col[std::size_t(i)];
    }
    QuadratureRule rule = rule_from_json(j.at("rule"), spec.dim());
    return Surrogate(basis, order, std::move(coeffs), std::move(rule),
                     j.contains("metadata") ? j["metadata"] : json::object());
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("malformed surrogate document: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptFile(std::string("malformed surrogate problem: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw CorruptFile(std::string("invalid surrogate content: ") + e.what());
  } catch (const ShapeMismatch& e) {
    throw CorruptFile(std::string("inconsistent surrogate content: ") + e.what());
  } catch (const DegenerateMeasure& e) {
    throw CorruptFile(std::string("invalid recurrence table: ") + e.what());
  }
}

inline void save(const Surrogate& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << surrogate_to_json(s).dump(1) << '\n';
  out.close();
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline Surrogate load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw CorruptFile("'" + path + "' is not a valid surrogate document: " + e.what());
  }
  return surrogate_from_json(j);
}

}  // namespace mgpc
