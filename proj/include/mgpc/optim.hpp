#pragma once

// Small dense solvers behind the quadrature engine: nonnegative least squares for the
// weights, box-constrained ridge least squares, and a branch-and-bound solver for the
// mixed-integer regularized Gauss-Newton step of one quadrature point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgpc/error.hpp"

namespace mgpc {

struct NnlsResult {
  Eigen::VectorXd x;
  double residual_sq = 0.0;
  int cycles = 0;
};

struct NnlsOptions {
  /// Feasible starting point (x >= 0); its positive entries seed the passive set.
  std::optional<Eigen::VectorXd> warm_start;
  /// Active-set cycles before IterationLimit; 0 means 10 * number of columns.
  int max_cycles = 0;
};

/// Lawson-Hanson active-set NNLS:  min ||A x - b||_2  subject to  x >= 0.
inline NnlsResult solve_nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                             const NnlsOptions& opt = {}) {
  const Eigen::Index m = A.rows(), n = A.cols();
  if (b.size() != m) throw ShapeMismatch("solve_nnls: b length does not match A rows");
  if (!A.allFinite() || !b.allFinite()) throw InvalidParameter("A", "non-finite entries");

  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  if (n == 0) {
    res.residual_sq = b.squaredNorm();
    return res;
  }
  const int max_cycles = opt.max_cycles > 0 ? opt.max_cycles : int(10 * n);
  const double scale = std::max({1.0, A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  const double dual_tol = 1e-13 * scale * scale * double(std::max(m, n));

  std::vector<char> passive(std::size_t(n), 0), blocked(std::size_t(n), 0);
  Eigen::VectorXd& x = res.x;
  if (opt.warm_start) {
    if (opt.warm_start->size() != n) throw ShapeMismatch("solve_nnls: warm start has wrong length");
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = (*opt.warm_start)(j);
      if (v > 0.0 && std::isfinite(v)) {
        x(j) = v;
        passive[std::size_t(j)] = 1;
      }
    }
  }

  std::vector<Eigen::Index> cols;
  Eigen::MatrixXd sub;
  Eigen::VectorXd z(n);
  auto solve_passive = [&] {
    cols.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[std::size_t(j)]) cols.push_back(j);
    z.setZero();
    if (cols.empty()) return;
    sub.resize(m, Eigen::Index(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) sub.col(Eigen::Index(c)) = A.col(cols[c]);
    const Eigen::VectorXd s = sub.colPivHouseholderQr().solve(b);
    for (std::size_t c = 0; c < cols.size(); ++c) z(cols[c]) = s(Eigen::Index(c));
  };

  // Drive the passive set to a feasible least-squares solution from the feasible x.
  auto restore_feasibility = [&] {
    for (int guard = 0; guard <= n; ++guard) {
      solve_passive();
      bool ok = true;
      double alpha = 1.0;
      Eigen::Index hit = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[std::size_t(j)] && z(j) <= 0.0) {
          ok = false;
          const double ratio = x(j) / (x(j) - z(j));
          if (hit < 0 || ratio < alpha) {
            alpha = ratio;
            hit = j;
          }
        }
      }
      if (ok) {
        x = z;
        return;
      }
      x += alpha * (z - x);
      x(hit) = 0.0;
      const double floor_x = 1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff());
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[std::size_t(j)] && x(j) <= floor_x) {
          passive[std::size_t(j)] = 0;
          x(j) = 0.0;
        }
      }
    }
    x = z.cwiseMax(0.0);
  };

  if (opt.warm_start) restore_feasibility();

  Eigen::VectorXd w(n);
  for (res.cycles = 0;; ++res.cycles) {
    if (res.cycles >= max_cycles)
      throw IterationLimit("solve_nnls: no convergence after " + std::to_string(max_cycles) +
                           " active-set cycles");
    w.noalias() = A.transpose() * (b - A * x);
    Eigen::Index best = -1;
    double wmax = dual_tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[std::size_t(j)] && !blocked[std::size_t(j)] && w(j) > wmax) {
        wmax = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[std::size_t(best)] = 1;
    solve_passive();
    if (z(best) <= 0.0) {
      // Numerically dependent column: its dual is positive but it cannot enter.
      passive[std::size_t(best)] = 0;
      blocked[std::size_t(best)] = 1;
      continue;
    }
    std::fill(blocked.begin(), blocked.end(), 0);
    restore_feasibility();
  }
  res.residual_sq = (A * x - b).squaredNorm();
  return res;
}

namespace detail {

/// Primal active-set method for  min 1/2 x'Hx + g'x  s.t.  lo <= x <= hi  (H symmetric PSD).
/// Starts from the projection of 0 onto the box.
inline Eigen::VectorXd solve_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                                    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::Index d = g.size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d).cwiseMax(lo).cwiseMin(hi);
  // state: 0 free, -1 at lower, +1 at upper, 2 pinned (lo == hi)
  std::vector<int> state(std::size_t(d), 0);
  for (Eigen::Index i = 0; i < d; ++i)
    if (lo(i) == hi(i)) state[std::size_t(i)] = 2;
  const double tol = 1e-13 * (1.0 + H.cwiseAbs().maxCoeff() + g.cwiseAbs().maxCoeff());

  std::vector<Eigen::Index> free;
  Eigen::VectorXd y(d);
  for (int it = 0; it < 200 * (int(d) + 1); ++it) {
    free.clear();
    for (Eigen::Index i = 0; i < d; ++i)
      if (state[std::size_t(i)] == 0) free.push_back(i);
    y = x;
    if (!free.empty()) {
      const Eigen::Index k = Eigen::Index(free.size());
      Eigen::MatrixXd Hff(k, k);
      Eigen::VectorXd rhs(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        double s = g(free[std::size_t(a)]);
        for (Eigen::Index j = 0; j < d; ++j)
          if (state[std::size_t(j)] != 0) s += H(free[std::size_t(a)], j) * x(j);
        rhs(a) = -s;
        for (Eigen::Index c = 0; c < k; ++c) Hff(a, c) = H(free[std::size_t(a)], free[std::size_t(c)]);
      }
      Eigen::VectorXd yf;
      Eigen::LLT<Eigen::MatrixXd> llt(Hff);
      if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() >
                                              1e-10 * std::sqrt(Hff.diagonal().maxCoeff())) {
        yf = llt.solve(rhs);
      } else {
        yf = Hff.completeOrthogonalDecomposition().solve(rhs);
      }
      for (Eigen::Index a = 0; a < k; ++a) y(free[std::size_t(a)]) = yf(a);
    }

    double t = 1.0;
    Eigen::Index block = -1;
    int block_state = 0;
    for (Eigen::Index i : free) {
      if (y(i) < lo(i)) {
        const double ti = (lo(i) - x(i)) / (y(i) - x(i));
        if (ti < t) { t = ti; block = i; block_state = -1; }
      } else if (y(i) > hi(i)) {
        const double ti = (hi(i) - x(i)) / (y(i) - x(i));
        if (ti < t) { t = ti; block = i; block_state = 1; }
      }
    }
    if (block >= 0) {
      t = std::max(t, 0.0);
      for (Eigen::Index i : free) x(i) += t * (y(i) - x(i));
      x(block) = block_state < 0 ? lo(block) : hi(block);
      state[std::size_t(block)] = block_state;
      continue;
    }
    x = y;
    const Eigen::VectorXd grad = H * x + g;
    Eigen::Index release = -1;
    double worst = tol;
    for (Eigen::Index i = 0; i < d; ++i) {
      const int s = state[std::size_t(i)];
      const double v = s == -1 ? -grad(i) : (s == 1 ? grad(i) : 0.0);
      if (v > worst) { worst = v; release = i; }
    }
    if (release < 0) return x;
    state[std::size_t(release)] = 0;
  }
  return x;
}

inline double ridge_objective(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double lambda,
                              const Eigen::VectorXd& delta) {
  return (J * delta + r).squaredNorm() + lambda * delta.squaredNorm();
}

}  // namespace detail

/// min ||J d + r||^2 + lambda ||d||^2  subject to  lower <= d <= upper.
inline Eigen::VectorXd solve_box_ridge(const Eigen::MatrixXd& J, const Eigen::VectorXd& r,
                                       double lambda, const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper) {
  const Eigen::Index d = J.cols();
  if (r.size() != J.rows() || lower.size() != d || upper.size() != d)
    throw ShapeMismatch("solve_box_ridge: inconsistent dimensions");
  if (!(lambda >= 0.0)) throw InvalidParameter("lambda", "must be nonnegative");
  if ((lower.array() > upper.array()).any()) throw InvalidParameter("lower", "lower exceeds upper");
  Eigen::MatrixXd H = J.transpose() * J;
  H.diagonal().array() += lambda;
  const Eigen::VectorXd g = J.transpose() * r;
  return detail::solve_box_qp(H, g, lower, upper);
}

/// One point's mixed-integer Gauss-Newton step: min ||J d + r||^2 + lambda ||d||^2 over the
/// box, with d integer in `integer_dims`.
struct MiqpSubproblem {
  Eigen::MatrixXd J;
  Eigen::VectorXd r;
  double lambda = 0.0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<int> integer_dims;
};

enum class MiqpStatus { optimal, node_limit };

struct MiqpSolution {
  Eigen::VectorXd delta;
  double objective = 0.0;
  long node_count = 0;
  MiqpStatus status = MiqpStatus::optimal;
};

/// Default Tikhonov weight: 1e-6 * max(1, trace(J'J) / d).
inline double default_lambda(const Eigen::MatrixXd& J) {
  const double d = std::max<double>(1.0, double(J.cols()));
  return 1e-6 * std::max(1.0, J.squaredNorm() / d);
}

/// Best-first branch and bound: box-ridge relaxations, branching on the most fractional
/// integer coordinate, pruning against the incumbent.
inline MiqpSolution solve_miqp_bnb(const MiqpSubproblem& sub, long node_limit = 100000) {
  const Eigen::Index d = sub.J.cols();
  if (sub.r.size() != sub.J.rows() || sub.lower.size() != d || sub.upper.size() != d)
    throw ShapeMismatch("solve_miqp_bnb: inconsistent dimensions");
  if (sub.integer_dims.size() > 16)
    throw InvalidParameter("integer_dims", "at most 16 integer dimensions are supported");
  for (int i : sub.integer_dims) {
    if (i < 0 || i >= d) throw InvalidParameter("integer_dims", "index out of range");
    for (double v : {sub.lower(i), sub.upper(i)})
      if (std::isfinite(v) && v != std::floor(v))
        throw InvalidParameter("lower", "integer dimensions need integer bounds");
  }
  if ((sub.lower.array() > 0.0).any() || (sub.upper.array() < 0.0).any())
    throw InvalidParameter("lower", "the zero step must be feasible");

  Eigen::MatrixXd H = sub.J.transpose() * sub.J;
  H.diagonal().array() += sub.lambda;
  const Eigen::VectorXd g = sub.J.transpose() * sub.r;
  auto exact_value = [&](const Eigen::VectorXd& x) {
    return detail::ridge_objective(sub.J, sub.r, sub.lambda, x);
  };

  MiqpSolution best;
  best.delta = Eigen::VectorXd::Zero(d);
  best.objective = exact_value(best.delta);
  long nodes = 0;

  // Fix the integer coordinates of x (rounded) and re-solve the continuous ones.
  auto complete = [&](const Eigen::VectorXd& x, Eigen::VectorXd lo, Eigen::VectorXd hi) {
    for (int i : sub.integer_dims) {
      const double v = std::clamp(std::round(x(i)), lo(i), hi(i));
      lo(i) = hi(i) = v;
    }
    Eigen::VectorXd y = detail::solve_box_qp(H, g, lo, hi);
    for (int i : sub.integer_dims) y(i) = lo(i);
    ++nodes;
    const double f = exact_value(y);
    if (f < best.objective) {
      best.objective = f;
      best.delta = y;
    }
  };

  struct Node {
    double bound;
    long seq;
    Eigen::VectorXd lo, hi, x;
  };
  auto worse = [](const Node& a, const Node& b) {
    return a.bound > b.bound || (a.bound == b.bound && a.seq > b.seq);
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
  long seq = 0;

  auto push = [&](Eigen::VectorXd lo, Eigen::VectorXd hi) {
    Eigen::VectorXd x = detail::solve_box_qp(H, g, lo, hi);
    ++nodes;
    open.push(Node{exact_value(x), seq++, std::move(lo), std::move(hi), std::move(x)});
  };

  push(sub.lower, sub.upper);
  // rounding heuristic for an initial incumbent
  if (!sub.integer_dims.empty()) complete(open.top().x, sub.lower, sub.upper);

  bool truncated = false;
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    // relative only: near convergence the objectives themselves are tiny
    const double slack = 1e-12 * std::abs(best.objective);
    if (node.bound >= best.objective - slack) continue;
    if (nodes >= node_limit) {
      truncated = true;
      break;
    }
    int branch = -1;
    double most = 1e-9;
    for (int i : sub.integer_dims) {
      const double frac = std::abs(node.x(i) - std::round(node.x(i)));
      if (frac > most) {
        most = frac;
        branch = i;
      }
    }
    if (branch < 0) {
      complete(node.x, node.lo, node.hi);
      continue;
    }
    const double v = node.x(branch);
    if (std::floor(v) >= node.lo(branch)) {
      Eigen::VectorXd hi = node.hi;
      hi(branch) = std::floor(v);
      push(node.lo, std::move(hi));
    }
    if (std::ceil(v) <= node.hi(branch)) {
      Eigen::VectorXd lo = node.lo;
      lo(branch) = std::ceil(v);
      push(std::move(lo), node.hi);
    }
  }
  best.node_count = nodes;
  best.status = truncated ? MiqpStatus::node_limit : MiqpStatus::optimal;
  return best;
}

}  // namespace mgpc
