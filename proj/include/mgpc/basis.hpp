#pragma once

// Orthonormal polynomial bases: univariate three-term recurrences computed by the
// Stieltjes procedure, and the multivariate total-degree product basis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"

namespace mgpc {

/// Monic recurrence  pi_{i+1} = (x - alpha_i) pi_i - beta_i pi_{i-1},  pi_0 = 1,
/// normalized as phi_i = pi_i / sqrt(beta_0 ... beta_i) with beta_0 = 1.
struct RecurrenceTable {
  std::vector<double> alpha;  // alpha_0 .. alpha_n
  std::vector<double> beta;   // beta_0 = 1, beta_1 .. beta_n
  std::vector<double> norms;  // sqrt(beta_0 ... beta_i)

  int max_degree() const noexcept { return static_cast<int>(alpha.size()) - 1; }

  static RecurrenceTable from_coefficients(std::vector<double> alpha, std::vector<double> beta) {
    if (alpha.empty() || alpha.size() != beta.size())
      throw InvalidParameter("beta", "alpha and beta must be non-empty and of equal length");
    RecurrenceTable t;
    t.alpha = std::move(alpha);
    t.beta = std::move(beta);
    t.norms.resize(t.beta.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < t.beta.size(); ++i) {
      if (!(t.beta[i] > 0.0) || !std::isfinite(t.beta[i]))
        throw DegenerateMeasure("recurrence coefficient beta_" + std::to_string(i) +
                                " is not positive");
      prod *= t.beta[i];
      t.norms[i] = std::sqrt(prod);
    }
    return t;
  }

  /// phi_0..phi_m at x, and optionally their derivatives, written into caller storage.
  void evaluate(double x, int m, double* values, double* derivs = nullptr) const {
    double p_prev = 0.0, p = 1.0, d_prev = 0.0, d = 0.0;
    values[0] = 1.0 / norms[0];
    if (derivs) derivs[0] = 0.0;
    for (int i = 0; i < m; ++i) {
      const double p_next = (x - alpha[std::size_t(i)]) * p - beta[std::size_t(i)] * p_prev;
      const double d_next = p + (x - alpha[std::size_t(i)]) * d - beta[std::size_t(i)] * d_prev;
      p_prev = p;
      p = p_next;
      d_prev = d;
      d = d_next;
      values[i + 1] = p / norms[std::size_t(i) + 1];
      if (derivs) derivs[i + 1] = d / norms[std::size_t(i) + 1];
    }
  }
};

/// Stieltjes procedure on a discretized measure, carried out with the normalized
/// polynomials so that values stay O(1) on the nodes.
inline RecurrenceTable build_recurrence(const DiscretizedMeasure& mu, int n) {
  if (n < 0) throw InvalidParameter("max_degree", "must be nonnegative");
  const std::size_t N = mu.nodes.size();
  if (static_cast<std::size_t>(n) >= N)
    throw DegenerateMeasure("measure with " + std::to_string(N) +
                            " support points cannot carry degree " + std::to_string(n));
  std::vector<double> alpha(std::size_t(n) + 1), beta(std::size_t(n) + 1);
  beta[0] = 1.0;
  std::vector<double> q_prev(N, 0.0), q(N, 1.0), u(N);
  for (int i = 0; i <= n; ++i) {
    double nrm = 0.0, xm = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double wq2 = mu.weights[j] * q[j] * q[j];
      nrm += wq2;
      xm += wq2 * mu.nodes[j];
    }
    alpha[std::size_t(i)] = xm / nrm;
    if (i == n) break;
    const double sb = std::sqrt(beta[std::size_t(i)]);
    double unrm = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      u[j] = (mu.nodes[j] - alpha[std::size_t(i)]) * q[j] - sb * q_prev[j];
      unrm += mu.weights[j] * u[j] * u[j];
    }
    const double b = unrm / nrm;
    if (!(b > 1e-14))
      throw DegenerateMeasure("beta_" + std::to_string(i + 1) + " = " + std::to_string(b) +
                              " collapsed before reaching degree " + std::to_string(n));
    beta[std::size_t(i) + 1] = b;
    const double sbn = std::sqrt(b);
    for (std::size_t j = 0; j < N; ++j) {
      q_prev[j] = q[j];
      q[j] = u[j] / sbn;
    }
  }
  return RecurrenceTable::from_coefficients(std::move(alpha), std::move(beta));
}

inline RecurrenceTable build_recurrence(const Distribution& d, int max_degree) {
  return build_recurrence(d.measure(), max_degree);
}

struct PolyColumn {
  std::vector<double> values;
  std::vector<double> derivs;
};

inline PolyColumn eval_poly_column(const RecurrenceTable& t, double x, int up_to) {
  if (up_to < 0 || up_to > t.max_degree())
    throw InvalidParameter("up_to", "exceeds the table degree " + std::to_string(t.max_degree()));
  PolyColumn c{std::vector<double>(std::size_t(up_to) + 1), std::vector<double>(std::size_t(up_to) + 1)};
  t.evaluate(x, up_to, c.values.data(), c.derivs.data());
  return c;
}

/// Total-degree multi-indices in graded order: by total degree, then with the first
/// coordinate descending, e.g. (0,0) (1,0) (0,1) (2,0) (1,1) (0,2). The order-q set is
/// always a prefix of the order-p set for q <= p.
class MultiIndexSet {
 public:
  MultiIndexSet() = default;

  MultiIndexSet(int dim, int order) : dim_(dim), order_(order) {
    if (dim < 1) throw InvalidParameter("d", "dimension must be at least 1");
    if (order < 0) throw InvalidParameter("p", "order must be nonnegative");
    std::vector<int> a(std::size_t(dim), 0);
    for (int deg = 0; deg <= order; ++deg) fill(a, 0, deg);
  }

  int dim() const noexcept { return dim_; }
  int order() const noexcept { return order_; }
  std::size_t size() const noexcept { return dim_ ? data_.size() / std::size_t(dim_) : 0; }

  std::span<const int> operator[](std::size_t k) const {
    return {data_.data() + k * std::size_t(dim_), std::size_t(dim_)};
  }

  int total_degree(std::size_t k) const {
    int s = 0;
    for (int v : (*this)[k]) s += v;
    return s;
  }

  /// Number of indices with total degree <= q, i.e. binomial(d + q, q).
  std::size_t count_up_to(int q) const { return binomial(dim_ + q, q); }

  std::optional<std::size_t> find(std::span<const int> alpha) const {
    for (std::size_t k = 0; k < size(); ++k)
      if (std::equal(alpha.begin(), alpha.end(), (*this)[k].begin())) return k;
    return std::nullopt;
  }

  static std::size_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::size_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * std::size_t(n - k + i) / std::size_t(i);
    return r;
  }

 private:
  void fill(std::vector<int>& a, int pos, int remaining) {
    if (pos == dim_ - 1) {
      a[std::size_t(pos)] = remaining;
      data_.insert(data_.end(), a.begin(), a.end());
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      a[std::size_t(pos)] = v;
      fill(a, pos + 1, remaining - v);
    }
    a[std::size_t(pos)] = 0;
  }

  int dim_ = 0;
  int order_ = 0;
  std::vector<int> data_;
};

inline MultiIndexSet enumerate_indices(int d, int p) { return MultiIndexSet(d, p); }

/// Product basis Psi_alpha(xi) = prod_i phi^{(i)}_{alpha_i}(xi_i) over the total-degree set.
class BasisSet {
 public:
  /// Build recurrences of degree `order` for every dimension of `problem`.
  BasisSet(ProblemSpec problem, int order)
      : problem_(std::move(problem)), indices_(problem_.dim(), order) {
    tables_.reserve(std::size_t(problem_.dim()));
    for (const auto& p : problem_.params()) tables_.push_back(build_recurrence(p.dist, order));
  }

  /// Reassemble from stored recurrence tables.
  BasisSet(ProblemSpec problem, int order, std::vector<RecurrenceTable> tables)
      : problem_(std::move(problem)), indices_(problem_.dim(), order), tables_(std::move(tables)) {
    if (tables_.size() != std::size_t(problem_.dim()))
      throw ShapeMismatch("one recurrence table per dimension is required");
    for (const auto& t : tables_)
      if (t.max_degree() < order)
        throw ShapeMismatch("recurrence table degree is below the basis order");
  }

  int dim() const noexcept { return problem_.dim(); }
  int order() const noexcept { return indices_.order(); }
  const ProblemSpec& problem() const noexcept { return problem_; }
  const MultiIndexSet& indices() const noexcept { return indices_; }
  const std::vector<RecurrenceTable>& tables() const noexcept { return tables_; }

  /// N_q = binomial(d + q, q).
  std::size_t size(int q) const {
    check_order(q);
    return indices_.count_up_to(q);
  }

  /// Psi_k(xi) for k < N_q.
  void column(std::span<const double> xi, int q, Eigen::Ref<Eigen::VectorXd> out) const {
    const auto uni = univariate(xi, q, false);
    const std::size_t n = size(q);
    for (std::size_t k = 0; k < n; ++k) {
      const auto a = indices_[k];
      double v = 1.0;
      for (int i = 0; i < dim(); ++i) v *= uni.value(i, a[std::size_t(i)]);
      out(Eigen::Index(k)) = v;
    }
  }

  /// Values and the N_q x d Jacobian d Psi_k / d xi_l at one point.
  void column_with_jacobian(std::span<const double> xi, int q, Eigen::Ref<Eigen::VectorXd> values,
                            Eigen::Ref<Eigen::MatrixXd> jac) const {
    const auto uni = univariate(xi, q, true);
    const std::size_t n = size(q);
    const int d = dim();
    for (std::size_t k = 0; k < n; ++k) {
      const auto a = indices_[k];
      double v = 1.0;
      for (int i = 0; i < d; ++i) v *= uni.value(i, a[std::size_t(i)]);
      values(Eigen::Index(k)) = v;
      for (int l = 0; l < d; ++l) {
        double g = uni.deriv(l, a[std::size_t(l)]);
        if (g == 0.0) {
          jac(Eigen::Index(k), l) = 0.0;
          continue;
        }
        for (int i = 0; i < d; ++i)
          if (i != l) g *= uni.value(i, a[std::size_t(i)]);
        jac(Eigen::Index(k), l) = g;
      }
    }
  }

  /// Phi with entries Psi_k(points.row(i)); shape N_q x M.
  Eigen::MatrixXd matrix(const Eigen::MatrixXd& points, int q) const {
    if (points.cols() != dim())
      throw ShapeMismatch("points must have " + std::to_string(dim()) + " columns");
    Eigen::MatrixXd phi(Eigen::Index(size(q)), points.rows());
    std::vector<double> xi(static_cast<std::size_t>(dim()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      for (int j = 0; j < dim(); ++j) xi[std::size_t(j)] = points(i, j);
      column(xi, q, phi.col(i));
    }
    return phi;
  }

 private:
  struct Univariate {
    int stride;
    std::vector<double> vals, ders;
    double value(int dim, int deg) const { return vals[std::size_t(dim * stride + deg)]; }
    double deriv(int dim, int deg) const { return ders[std::size_t(dim * stride + deg)]; }
  };

  Univariate univariate(std::span<const double> xi, int q, bool with_derivs) const {
    check_order(q);
    if (xi.size() != std::size_t(dim())) throw ShapeMismatch("point has the wrong dimension");
    Univariate u{q + 1, std::vector<double>(std::size_t(dim() * (q + 1))), {}};
    if (with_derivs) u.ders.resize(u.vals.size());
    for (int i = 0; i < dim(); ++i)
      tables_[std::size_t(i)].evaluate(xi[std::size_t(i)], q, u.vals.data() + i * (q + 1),
                                       with_derivs ? u.ders.data() + i * (q + 1) : nullptr);
    return u;
  }

  void check_order(int q) const {
    if (q < 0 || q > order())
      throw InvalidParameter("order", "requested order " + std::to_string(q) +
                                          " exceeds basis order " + std::to_string(order()));
  }

  ProblemSpec problem_;
  MultiIndexSet indices_;
  std::vector<RecurrenceTable> tables_;
};

inline Eigen::MatrixXd eval_basis_matrix(const BasisSet& b, const Eigen::MatrixXd& points, int order) {
  return b.matrix(points, order);
}

/// Univariate Gram matrix E[phi_m phi_n], m, n <= q, under the law's discretized measure.
inline Eigen::MatrixXd univariate_gram(const RecurrenceTable& t, const DiscretizedMeasure& mu, int q) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q + 1, q + 1);
  std::vector<double> v(std::size_t(q) + 1);
  for (std::size_t j = 0; j < mu.nodes.size(); ++j) {
    t.evaluate(mu.nodes[j], q, v.data());
    for (int m = 0; m <= q; ++m)
      for (int n = 0; n <= q; ++n) g(m, n) += mu.weights[j] * v[std::size_t(m)] * v[std::size_t(n)];
  }
  return g;
}

/// max |E[Psi_a Psi_b] - delta_ab| over |a|, |b| <= order; expectations factorize by independence.
inline double orthonormality_defect(const BasisSet& b, int order) {
  std::vector<Eigen::MatrixXd> grams;
  for (int i = 0; i < b.dim(); ++i)
    grams.push_back(univariate_gram(b.tables()[std::size_t(i)], b.problem().param(i).dist.measure(), order));
  const std::size_t n = b.size(order);
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      const auto a = b.indices()[k], c = b.indices()[l];
      double e = 1.0;
      for (int i = 0; i < b.dim(); ++i) e *= grams[std::size_t(i)](a[std::size_t(i)], c[std::size_t(i)]);
      worst = std::max(worst, std::abs(e - (k == l ? 1.0 : 0.0)));
    }
  }
  return worst;
}

}  // namespace mgpc
