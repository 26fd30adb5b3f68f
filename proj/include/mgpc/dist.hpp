#pragma once

// Univariate input laws, their moments and sampling, and the problem description
// (ordered parameters with affine maps to physical units).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mgpc/error.hpp"
#include "mgpc/random.hpp"

namespace mgpc {

struct TruncatedGaussian {
  double mu;
  double sigma;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct Binomial {
  int trials;
  double p;
};

struct Uniform {
  double lo;
  double hi;
};

struct DiscreteUniform {
  int lo;
  int hi;
};

struct SupportInfo {
  double lo;
  double hi;
  bool discrete;
  double lattice_step;  // 1 for discrete laws, 0 otherwise
};

/// A finite positive measure standing in for the law in expectations: the lattice with
/// its pmf for discrete laws, composite Gauss-Legendre nodes times the density otherwise.
struct DiscretizedMeasure {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

namespace detail {

inline constexpr int kPanelNodes = 40;
inline constexpr int kMaxLattice = 10000;

struct GaussLegendre {
  std::vector<double> x;  // on [-1, 1]
  std::vector<double> w;
};

/// Newton iteration on P_n from the Chebyshev-like initial guesses.
inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute the derivative at the converged root
    double p0 = 1.0, p1 = 0.0;
    for (int j = 1; j <= n; ++j) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

inline const GaussLegendre& panel_rule() {
  static const GaussLegendre rule = gauss_legendre(kPanelNodes);
  return rule;
}

inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Phi(z) and Q(z) = 1 - Phi(z), each evaluated without cancellation.
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double std_normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double truncation_mass(const TruncatedGaussian& g) {
  const double a = (g.lo - g.mu) / g.sigma, b = (g.hi - g.mu) / g.sigma;
  if (a >= 0.0) return std_normal_sf(a) - std_normal_sf(b);
  return std_normal_cdf(b) - std_normal_cdf(a);
}

}  // namespace detail

/// Immutable univariate law. Copies share the cached discretized measure.
class Distribution {
 public:
  using Law = std::variant<TruncatedGaussian, Binomial, Uniform, DiscreteUniform>;

  explicit Distribution(Law law) : law_(law) {
    validate();
    measure_ = std::make_shared<const DiscretizedMeasure>(discretize());
  }

  const Law& law() const noexcept { return law_; }

  std::string_view kind_name() const {
    return std::visit(
        [](const auto& l) -> std::string_view {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) return "truncated_gaussian";
          else if constexpr (std::is_same_v<T, Binomial>) return "binomial";
          else if constexpr (std::is_same_v<T, Uniform>) return "uniform";
          else return "discrete_uniform";
        },
        law_);
  }

  /// Parameter list in the order accepted by make_distribution.
  std::vector<double> parameters() const {
    return std::visit(
        [](const auto& l) -> std::vector<double> {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) {
            std::vector<double> v{l.mu, l.sigma};
            if (std::isfinite(l.lo) || std::isfinite(l.hi)) v.push_back(l.lo);
            if (std::isfinite(l.hi)) v.push_back(l.hi);
            return v;
          } else if constexpr (std::is_same_v<T, Binomial>) {
            return {static_cast<double>(l.trials), l.p};
          } else {
            return {static_cast<double>(l.lo), static_cast<double>(l.hi)};
          }
        },
        law_);
  }

  bool is_discrete() const {
    return std::holds_alternative<Binomial>(law_) || std::holds_alternative<DiscreteUniform>(law_);
  }

  SupportInfo support() const {
    return std::visit(
        [](const auto& l) -> SupportInfo {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) return {l.lo, l.hi, false, 0.0};
          else if constexpr (std::is_same_v<T, Binomial>) return {0.0, double(l.trials), true, 1.0};
          else if constexpr (std::is_same_v<T, Uniform>) return {l.lo, l.hi, false, 0.0};
          else return {double(l.lo), double(l.hi), true, 1.0};
        },
        law_);
  }

  /// pmf on the lattice for discrete laws, density otherwise; 0 outside the support.
  double density(double x) const {
    return std::visit(
        [x](const auto& l) -> double {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) {
            if (!(x >= l.lo && x <= l.hi)) return 0.0;
            return detail::std_normal_pdf((x - l.mu) / l.sigma) /
                   (l.sigma * detail::truncation_mass(l));
          } else if constexpr (std::is_same_v<T, Binomial>) {
            if (x != std::floor(x) || x < 0 || x > l.trials) return 0.0;
            return boost::math::pdf(boost::math::binomial_distribution<double>(l.trials, l.p), x);
          } else if constexpr (std::is_same_v<T, Uniform>) {
            return (x >= l.lo && x <= l.hi) ? 1.0 / (l.hi - l.lo) : 0.0;
          } else {
            if (x != std::floor(x) || x < l.lo || x > l.hi) return 0.0;
            return 1.0 / (l.hi - l.lo + 1);
          }
        },
        law_);
  }

  /// E[X^k]: exact lattice sum for discrete laws, composite Gauss-Legendre otherwise.
  double raw_moment(int k) const {
    if (k < 0) throw InvalidParameter("k", "moment order must be nonnegative");
    if (k == 0) return 1.0;
    return measure_->expect([k](double x) { return std::pow(x, k); });
  }

  double mean() const { return raw_moment(1); }

  double stddev() const {
    const double m = mean();
    const double var = measure_->expect([m](double x) { return (x - m) * (x - m); });
    return std::sqrt(std::max(var, 0.0));
  }

  const DiscretizedMeasure& measure() const noexcept { return *measure_; }

  /// Fill `out` with i.i.d. draws by inverse CDF.
  void sample(Rng& rng, std::span<double> out) const {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) {
            sample_truncated_gaussian(l, rng, out);
          } else if constexpr (std::is_same_v<T, Uniform>) {
            for (double& v : out) v = l.lo + (l.hi - l.lo) * rng.uniform01();
          } else {
            // inverse CDF over the lattice table
            const auto& m = *measure_;
            std::vector<double> cdf(m.weights.size());
            double acc = 0.0;
            for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = (acc += m.weights[i]);
            for (double& v : out) {
              const double u = rng.uniform01() * acc;
              auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
              if (it == cdf.end()) --it;
              v = m.nodes[static_cast<std::size_t>(it - cdf.begin())];
            }
          }
        },
        law_);
  }

  std::vector<double> sample(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw InvalidParameter("n", "sample count must be at least 1");
    std::vector<double> out(n);
    Rng rng(seed);
    sample(rng, out);
    return out;
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) {
            if (!std::isfinite(l.mu)) throw InvalidParameter("mu", "must be finite");
            if (!(l.sigma > 0.0) || !std::isfinite(l.sigma))
              throw InvalidParameter("sigma", "must be positive");
            if (std::isnan(l.lo) || std::isnan(l.hi) || !(l.lo < l.hi))
              throw InvalidParameter("lo", "lower truncation must be below upper truncation");
            if (!(detail::truncation_mass(l) > 1e-300))
              throw InvalidParameter("lo", "truncation interval carries no probability mass");
          } else if constexpr (std::is_same_v<T, Binomial>) {
            if (l.trials < 0) throw InvalidParameter("n", "trial count must be nonnegative");
            if (l.trials > detail::kMaxLattice)
              throw InvalidParameter("n", "trial count exceeds the supported lattice size");
            if (!(l.p > 0.0 && l.p < 1.0)) throw InvalidParameter("p", "must lie in (0, 1)");
          } else if constexpr (std::is_same_v<T, Uniform>) {
            if (!std::isfinite(l.lo) || !std::isfinite(l.hi) || !(l.lo < l.hi))
              throw InvalidParameter("lo", "require finite lo < hi");
          } else {
            if (!(l.lo < l.hi)) throw InvalidParameter("lo", "require lo < hi");
            if (static_cast<long>(l.hi) - l.lo > detail::kMaxLattice)
              throw InvalidParameter("hi", "lattice exceeds the supported size");
          }
        },
        law_);
  }

  static DiscretizedMeasure composite(double lo, double hi, int panels, auto&& density) {
    const auto& gl = detail::panel_rule();
    DiscretizedMeasure m;
    m.nodes.reserve(std::size_t(panels) * gl.x.size());
    m.weights.reserve(m.nodes.capacity());
    const double h = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
      const double a = lo + p * h;
      for (std::size_t j = 0; j < gl.x.size(); ++j) {
        const double x = a + 0.5 * h * (gl.x[j] + 1.0);
        m.nodes.push_back(x);
        m.weights.push_back(0.5 * h * gl.w[j] * density(x));
      }
    }
    return m;
  }

  DiscretizedMeasure discretize() const {
    return std::visit(
        [this](const auto& l) -> DiscretizedMeasure {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, TruncatedGaussian>) {
            // Mass beyond 12 sigma of the nearest admissible point is below 1e-32.
            const double lo = std::max(l.lo, std::min(l.hi, l.mu) - 12.0 * l.sigma);
            const double hi = std::min(l.hi, std::max(l.lo, l.mu) + 12.0 * l.sigma);
            const int panels =
                std::clamp(static_cast<int>(std::ceil((hi - lo) / (0.5 * l.sigma))), 1, 2000);
            return composite(lo, hi, panels, [this](double x) { return density(x); });
          } else if constexpr (std::is_same_v<T, Uniform>) {
            return composite(l.lo, l.hi, 1, [this](double x) { return density(x); });
          } else {
            const auto s = support();
            DiscretizedMeasure m;
            for (long k = static_cast<long>(s.lo); k <= static_cast<long>(s.hi); ++k) {
              m.nodes.push_back(double(k));
              m.weights.push_back(density(double(k)));
            }
            return m;
          }
        },
        law_);
  }

  static void sample_truncated_gaussian(const TruncatedGaussian& g, Rng& rng,
                                        std::span<double> out) {
    using boost::math::complement;
    const boost::math::normal_distribution<double> n01;
    const double a = (g.lo - g.mu) / g.sigma, b = (g.hi - g.mu) / g.sigma;
    // Work in whichever tail keeps the probabilities away from 1.
    const bool upper = a >= 0.0;
    const double pa = upper ? detail::std_normal_sf(a) : detail::std_normal_cdf(a);
    const double pb = upper ? detail::std_normal_sf(b) : detail::std_normal_cdf(b);
    for (double& v : out) {
      const double q = pa + rng.uniform01() * (pb - pa);
      double z;
      if (q <= 0.0) z = upper ? b : a;
      else if (q >= 1.0) z = upper ? a : b;
      else z = upper ? boost::math::quantile(complement(n01, q)) : boost::math::quantile(n01, q);
      double x = g.mu + g.sigma * z;
      if (!(x > g.lo)) x = std::nextafter(g.lo, g.hi);
      if (!(x < g.hi)) x = std::nextafter(g.hi, g.lo);
      v = x;
    }
  }

  Law law_;
  std::shared_ptr<const DiscretizedMeasure> measure_;
};

/// Build a validated law from a kind tag and its numeric parameters:
///   truncated_gaussian: [mu, sigma] | [mu, sigma, lo] | [mu, sigma, lo, hi]
///   binomial: [n, p]   uniform: [lo, hi]   discrete_uniform: [lo, hi]
inline Distribution make_distribution(std::string_view kind, std::span<const double> params) {
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (params.size() < lo || params.size() > hi)
      throw InvalidParameter("params", std::string(kind) + " takes " + std::to_string(lo) +
                                           (lo == hi ? "" : "-" + std::to_string(hi)) +
                                           " parameters, got " + std::to_string(params.size()));
  };
  auto as_int = [](double v, const char* field) {
    if (v != std::floor(v) || std::abs(v) > 1e9) throw InvalidParameter(field, "must be an integer");
    return static_cast<int>(v);
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (kind == "truncated_gaussian" || kind == "gaussian") {
    need(2, 4);
    return Distribution(TruncatedGaussian{params[0], params[1], params.size() > 2 ? params[2] : -inf,
                                          params.size() > 3 ? params[3] : inf});
  }
  if (kind == "binomial") {
    need(2, 2);
    return Distribution(Binomial{as_int(params[0], "n"), params[1]});
  }
  if (kind == "uniform") {
    need(2, 2);
    return Distribution(Uniform{params[0], params[1]});
  }
  if (kind == "discrete_uniform") {
    need(2, 2);
    return Distribution(DiscreteUniform{as_int(params[0], "lo"), as_int(params[1], "hi")});
  }
  throw InvalidParameter("kind", "unknown distribution kind '" + std::string(kind) + "'");
}

inline Distribution make_distribution(std::string_view kind, std::initializer_list<double> params) {
  return make_distribution(kind, std::span<const double>(params.begin(), params.size()));
}

inline double mass_or_density(const Distribution& d, double x) { return d.density(x); }
inline double raw_moment(const Distribution& d, int k) { return d.raw_moment(k); }
inline SupportInfo support_info(const Distribution& d) { return d.support(); }
inline std::vector<double> draw_samples(const Distribution& d, std::size_t n, std::uint64_t seed) {
  return d.sample(n, seed);
}

/// Map from the latent coordinate to the value the model consumes: scale * x + shift.
struct Affine {
  double scale = 1.0;
  double shift = 0.0;

  double apply(double latent) const { return scale * latent + shift; }
  double invert(double physical) const { return (physical - shift) / scale; }
};

struct ParameterSpec {
  std::string name;
  Distribution dist;
  Affine affine{};
};

/// Ordered independent inputs plus output channel names. Quadrature and bases work in the
/// latent coordinates; the affine maps are applied only when a model is called.
class ProblemSpec {
 public:
  ProblemSpec(std::vector<ParameterSpec> params, std::vector<std::string> outputs)
      : params_(std::move(params)), outputs_(std::move(outputs)) {
    if (params_.empty()) throw InvalidParameter("params", "at least one parameter is required");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      if (p.name.empty()) throw InvalidParameter("name", "parameter names must be non-empty");
      if (!seen.insert(p.name).second)
        throw InvalidParameter("name", "duplicate parameter name '" + p.name + "'");
      if (!(p.affine.scale != 0.0) || !std::isfinite(p.affine.scale))
        throw InvalidParameter("scale", "must be finite and nonzero for '" + p.name + "'");
      if (!std::isfinite(p.affine.shift))
        throw InvalidParameter("shift", "must be finite for '" + p.name + "'");
      if (p.dist.is_discrete()) integer_dims_.push_back(static_cast<int>(i));
    }
    if (outputs_.empty()) outputs_.push_back("y");
  }

  int dim() const noexcept { return static_cast<int>(params_.size()); }
  const std::vector<ParameterSpec>& params() const noexcept { return params_; }
  const ParameterSpec& param(int i) const { return params_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& outputs() const noexcept { return outputs_; }

  /// Indices of the discrete (integer-valued) dimensions.
  const std::vector<int>& integer_dims() const noexcept { return integer_dims_; }
  bool is_integer(int i) const { return param(i).dist.is_discrete(); }

  /// n joint draws in latent coordinates (rows are samples). Each dimension uses its own
  /// stream derived from `seed`, so columns do not depend on each other's sample counts.
  Eigen::MatrixXd sample_latent(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw InvalidParameter("n", "sample count must be at least 1");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), dim());
    std::vector<double> col(n);
    for (int j = 0; j < dim(); ++j) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(j)));
      params_[std::size_t(j)].dist.sample(rng, col);
      for (std::size_t i = 0; i < n; ++i) out(Eigen::Index(i), j) = col[i];
    }
    return out;
  }

  Eigen::MatrixXd to_physical(const Eigen::MatrixXd& latent) const {
    check_cols(latent);
    Eigen::MatrixXd out = latent;
    for (int j = 0; j < dim(); ++j) {
      const auto& a = params_[std::size_t(j)].affine;
      out.col(j) = (a.scale * latent.col(j).array() + a.shift).matrix();
    }
    return out;
  }

  Eigen::MatrixXd to_latent(const Eigen::MatrixXd& physical) const {
    check_cols(physical);
    Eigen::MatrixXd out = physical;
    for (int j = 0; j < dim(); ++j) {
      const auto& a = params_[std::size_t(j)].affine;
      out.col(j) = ((physical.col(j).array() - a.shift) / a.scale).matrix();
    }
    return out;
  }

 private:
  void check_cols(const Eigen::MatrixXd& m) const {
    if (m.cols() != dim())
      throw ShapeMismatch("expected " + std::to_string(dim()) + " columns, got " +
                          std::to_string(m.cols()));
  }

  std::vector<ParameterSpec> params_;
  std::vector<std::string> outputs_;
  std::vector<int> integer_dims_;
};

}  // namespace mgpc
