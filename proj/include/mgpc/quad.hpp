#pragma once

// Mixed-integer quadrature by moment matching:
//   min_{points, w}  || Phi(points) w - e_1 ||^2   s.t.  w >= 0, integer coordinates on I,
// solved by block coordinate descent over single points (mixed-integer Gauss-Newton steps)
// and nonnegative least squares for the weights, with an increase/decrease search on M.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgpc/basis.hpp"
#include "mgpc/cluster.hpp"
#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"
#include "mgpc/log.hpp"
#include "mgpc/optim.hpp"

namespace mgpc {

struct QuadratureRule {
  Eigen::MatrixXd points;   // M x d, latent coordinates
  Eigen::VectorXd weights;  // M, nonnegative
  double residual_sq = 0.0;
  int order = 0;            // total degree of the matched basis
  double epsilon = 0.0;
  bool converged = false;

  std::size_t size() const noexcept { return std::size_t(points.rows()); }
};

struct IterationInfo {
  std::size_t points = 0;
  int iteration = 0;
  double residual_sq = 0.0;
  double step_norm = 0.0;
};

struct SolverConfig {
  int order = 2;  // surrogate order p
  double epsilon = 1e-5;
  int n_max = 100;
  double step_tol = 1e-8;  // a pass moving the points less than this (Frobenius) has stalled
  std::optional<double> lambda;  // default: 1e-6 * max(1, trace(J'J) / d) per subproblem
  std::size_t n_candidates = 10000;
  std::optional<std::size_t> m_init;  // default N_p
  double increase_factor = 1.2;
  std::uint64_t seed = 0;
  int match_order = 0;  // 0 means 2 * order
  bool relax_integrality = false;
  long node_limit = 100000;
  std::function<void(const IterationInfo&)> observer;

  int matched_order() const { return match_order > 0 ? match_order : 2 * order; }

  void validate() const {
    if (order < 0) throw InvalidParameter("order", "must be nonnegative");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("epsilon", "must be positive");
    if (n_max < 1) throw InvalidParameter("n_max", "must be at least 1");
    if (!(step_tol >= 0.0)) throw InvalidParameter("step_tol", "must be nonnegative");
    if (lambda && !(*lambda >= 0.0)) throw InvalidParameter("lambda", "must be nonnegative");
    if (n_candidates < 1) throw InvalidParameter("n_candidates", "must be at least 1");
    if (!(increase_factor > 1.0)) throw InvalidParameter("increase_factor", "must exceed 1");
    if (match_order < 0) throw InvalidParameter("match_order", "must be nonnegative");
  }
};

struct WeightFit {
  Eigen::VectorXd weights;
  double residual_sq = 0.0;
};

inline Eigen::VectorXd unit_target(std::size_t n) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(Eigen::Index(n));
  e(0) = 1.0;
  return e;
}

/// Nonnegative least-squares weights for fixed points against the order-q conditions.
inline WeightFit update_weights(const BasisSet& basis, const Eigen::MatrixXd& points, int q,
                                const std::optional<Eigen::VectorXd>& warm = std::nullopt) {
  const Eigen::MatrixXd phi = basis.matrix(points, q);
  NnlsOptions opt;
  opt.warm_start = warm;
  auto r = solve_nnls(phi, unit_target(basis.size(q)), opt);
  return {std::move(r.x), r.residual_sq};
}

inline double rule_residual(const BasisSet& basis, const Eigen::MatrixXd& points,
                            const Eigen::VectorXd& weights, int q) {
  return (basis.matrix(points, q) * weights - unit_target(basis.size(q))).squaredNorm();
}

enum class BcdStatus { converged, stalled, iteration_limit };

struct BcdResult {
  QuadratureRule rule;  // final rule when converged, best iterate otherwise
  BcdStatus status = BcdStatus::iteration_limit;
  int iterations = 0;
  std::vector<double> trajectory;  // residual after each outer pass

  bool converged() const noexcept { return status == BcdStatus::converged; }
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct PointBox {
  std::vector<double> lo, hi;
  std::vector<char> integer;
};

inline PointBox point_box(const ProblemSpec& spec, bool relax_integrality) {
  PointBox b;
  for (const auto& p : spec.params()) {
    const auto s = p.dist.support();
    b.lo.push_back(s.lo);
    b.hi.push_back(s.hi);
    b.integer.push_back(char(s.discrete && !relax_integrality));
  }
  return b;
}

}  // namespace detail

/// Hierarchical block coordinate descent. Each outer pass visits every point once: a
/// mixed-integer regularized Gauss-Newton step for that point, then a weight re-solve.
/// Stops on residual <= epsilon (converged), on a pass whose total step has Frobenius
/// norm <= step_tol (stalled), or after n_max passes.
inline BcdResult bcd_solve(const BasisSet& basis, const Eigen::MatrixXd& init_points,
                           const Eigen::VectorXd& init_weights, const SolverConfig& cfg) {
  cfg.validate();
  const int q = cfg.matched_order();
  const int d = basis.dim();
  if (q > basis.order())
    throw InvalidParameter("order", "basis order " + std::to_string(basis.order()) +
                                        " is below the matched order " + std::to_string(q));
  if (init_points.cols() != d || init_points.rows() != init_weights.size() || init_points.rows() < 1)
    throw ShapeMismatch("bcd_solve: inconsistent initial points and weights");

  const auto box = detail::point_box(basis.problem(), cfg.relax_integrality);
  std::vector<int> integer_dims;
  for (int j = 0; j < d; ++j)
    if (box.integer[std::size_t(j)]) integer_dims.push_back(j);

  const std::size_t N = basis.size(q);
  const Eigen::Index M = init_points.rows();
  const Eigen::VectorXd e1 = unit_target(N);

  Eigen::MatrixXd points = init_points;
  for (Eigen::Index i = 0; i < M; ++i)
    for (int j = 0; j < d; ++j) {
      double v = std::clamp(points(i, j), box.lo[std::size_t(j)], box.hi[std::size_t(j)]);
      if (box.integer[std::size_t(j)]) v = std::round(v);
      points(i, j) = v;
    }
  Eigen::VectorXd w = init_weights.cwiseMax(0.0);
  Eigen::MatrixXd phi = basis.matrix(points, q);
  double res = (phi * w - e1).squaredNorm();

  BcdResult out;
  auto snapshot = [&](double r) {
    QuadratureRule rule;
    rule.points = points;
    rule.weights = w;
    rule.residual_sq = r;
    rule.order = q;
    rule.epsilon = cfg.epsilon;
    rule.converged = r <= cfg.epsilon;
    return rule;
  };
  out.rule = snapshot(res);
  if (res <= cfg.epsilon) {
    out.status = BcdStatus::converged;
    return out;
  }

  Eigen::VectorXd col(static_cast<Eigen::Index>(N));
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(N), d);
  Eigen::VectorXd lower(d), upper(d);
  std::vector<double> xi(static_cast<std::size_t>(d));
  MiqpSubproblem sub;
  sub.integer_dims = integer_dims;

  for (int t = 1; t <= cfg.n_max; ++t) {
    double step_sq = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
      if (w(i) <= 0.0) continue;  // zero-weight points have a zero Jacobian
      for (int j = 0; j < d; ++j) xi[std::size_t(j)] = points(i, j);
      basis.column_with_jacobian(xi, q, col, jac);
      sub.r = phi * w - e1;
      sub.J = w(i) * jac;
      sub.lambda = cfg.lambda ? *cfg.lambda : default_lambda(sub.J);
      for (int j = 0; j < d; ++j) {
        lower(j) = box.lo[std::size_t(j)] - points(i, j);
        upper(j) = box.hi[std::size_t(j)] - points(i, j);
      }
      sub.lower = lower.cwiseMin(0.0);
      sub.upper = upper.cwiseMax(0.0);
      const MiqpSolution sol = solve_miqp_bnb(sub, cfg.node_limit);
      if (sol.delta.squaredNorm() == 0.0) continue;
      step_sq += sol.delta.squaredNorm();
      for (int j = 0; j < d; ++j) {
        double v = points(i, j) + sol.delta(j);
        if (box.integer[std::size_t(j)]) v = std::round(v);
        points(i, j) = std::clamp(v, box.lo[std::size_t(j)], box.hi[std::size_t(j)]);
        xi[std::size_t(j)] = points(i, j);
      }
      basis.column(xi, q, phi.col(i));
      NnlsOptions opt;
      opt.warm_start = w;
      auto fit = solve_nnls(phi, e1, opt);
      w = std::move(fit.x);
      res = fit.residual_sq;
    }
    out.iterations = t;
    out.trajectory.push_back(res);
    const double step = std::sqrt(step_sq);
    if (cfg.observer) cfg.observer({std::size_t(M), t, res, step});
    if (res < out.rule.residual_sq || res <= cfg.epsilon) out.rule = snapshot(res);
    if (res <= cfg.epsilon) {
      out.status = BcdStatus::converged;
      return out;
    }
    if (step <= cfg.step_tol) {
      out.status = BcdStatus::stalled;
      return out;
    }
  }
  out.status = BcdStatus::iteration_limit;
  return out;
}

struct SizeAttempt {
  std::size_t points = 0;
  bool converged = false;
  double residual_sq = 0.0;
  int iterations = 0;
  bool increase_phase = true;
};

struct SizeSearchResult {
  QuadratureRule rule;
  std::vector<SizeAttempt> attempts;
  int total_iterations = 0;
};

/// Increase phase: starting at M_init (default N_p), grow M by the increase factor on
/// failure, re-seeding from the cluster tree, up to N_q + d. Decrease phase: repeatedly drop
/// the smallest-weight point and re-solve until a solve fails; keep the last success.
inline SizeSearchResult size_adaptive_solve(const BasisSet& basis, const ProblemSpec& spec,
                                            const SolverConfig& cfg) {
  cfg.validate();
  const int q = cfg.matched_order();
  const std::size_t cap = basis.size(q) + std::size_t(basis.dim());
  std::size_t M = cfg.m_init ? *cfg.m_init : basis.size(std::min(cfg.order, basis.order()));
  M = std::clamp<std::size_t>(M, 1, std::min(cap, cfg.n_candidates));

  const ClusterTree tree(spec, cfg.n_candidates, cfg.seed);
  const std::size_t max_points = std::min(cap, tree.candidate_count());

  SizeSearchResult out;
  std::optional<BcdResult> current;
  double best_residual = std::numeric_limits<double>::infinity();
  for (;;) {
    const auto init = tree.cut(M);
    BcdResult r = bcd_solve(basis, init.points, init.weights, cfg);
    out.total_iterations += r.iterations;
    out.attempts.push_back({M, r.converged(), r.rule.residual_sq, r.iterations, true});
    log::info("increase phase: M=" + std::to_string(M) + " residual=" +
              detail::sci(r.rule.residual_sq) + (r.converged() ? " converged" : " failed"));
    best_residual = std::min(best_residual, r.rule.residual_sq);
    if (r.converged()) {
      current = std::move(r);
      break;
    }
    if (M >= max_points)
      throw Infeasible("no quadrature with at most " + std::to_string(max_points) +
                           " points reached epsilon; best residual " + detail::sci(best_residual),
                       best_residual);
    M = std::min(max_points, std::max(M + 1, std::size_t(std::ceil(cfg.increase_factor * double(M)))));
  }

  QuadratureRule rule = current->rule;
  while (rule.size() > 1) {
    Eigen::Index drop = 0;
    rule.weights.minCoeff(&drop);
    const Eigen::Index m = Eigen::Index(rule.size());
    Eigen::MatrixXd pts(m - 1, rule.points.cols());
    Eigen::VectorXd wts(m - 1);
    for (Eigen::Index i = 0, k = 0; i < m; ++i) {
      if (i == drop) continue;
      pts.row(k) = rule.points.row(i);
      wts(k++) = rule.weights(i);
    }
    BcdResult r = bcd_solve(basis, pts, wts, cfg);
    out.total_iterations += r.iterations;
    out.attempts.push_back({std::size_t(m - 1), r.converged(), r.rule.residual_sq, r.iterations, false});
    log::info("decrease phase: M=" + std::to_string(m - 1) + " residual=" +
              detail::sci(r.rule.residual_sq) + (r.converged() ? " converged" : " failed"));
    if (!r.converged()) break;
    rule = std::move(r.rule);
  }
  out.rule = std::move(rule);
  return out;
}

}  // namespace mgpc
