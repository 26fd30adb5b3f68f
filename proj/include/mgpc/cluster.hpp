#pragma once

// Weighted complete-linkage agglomeration of Monte Carlo candidates, used to seed the
// quadrature points. Two clusters C1, C2 with total weights w1, w2 are at distance
//   D = (w1 + w2) * max_{a in C1, b in C2} |a - b|
// measured after dividing each coordinate by its marginal standard deviation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mgpc/dist.hpp"
#include "mgpc/error.hpp"

namespace mgpc {

/// A cluster in standardized coordinates (rows are members).
struct WeightedCluster {
  Eigen::MatrixXd points;
  double weight = 0.0;
};

inline double weighted_distance(const WeightedCluster& a, const WeightedCluster& b) {
  if (a.points.rows() == 0 || b.points.rows() == 0)
    throw InvalidParameter("cluster", "clusters must be non-empty");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.points.rows(); ++i)
    for (Eigen::Index j = 0; j < b.points.rows(); ++j)
      worst = std::max(worst, (a.points.row(i) - b.points.row(j)).norm());
  return (a.weight + b.weight) * worst;
}

struct InitialRule {
  Eigen::MatrixXd points;  // M x d, latent coordinates
  Eigen::VectorXd weights;
};

/// Full agglomeration of a candidate set, built once with the nearest-neighbour chain
/// algorithm and cut at any cluster count afterwards. Merge heights are monotone for this
/// linkage (merging only grows both factors of D), so sorting the chain's merges by height
/// reproduces the sequential closest-pair order.
class ClusterTree {
 public:
  ClusterTree(const ProblemSpec& spec, std::size_t n_candidates, std::uint64_t seed)
      : spec_(spec), candidates_(spec.sample_latent(n_candidates, seed)) {
    const auto n = static_cast<std::size_t>(candidates_.rows());
    weights_ = Eigen::VectorXd::Constant(Eigen::Index(n), 1.0 / double(n));
    scale_.resize(spec.dim());
    for (int j = 0; j < spec.dim(); ++j) {
      const double s = spec.param(j).dist.stddev();
      scale_(j) = s > 0.0 ? 1.0 / s : 1.0;
    }
    build();
  }

  std::size_t candidate_count() const noexcept { return std::size_t(candidates_.rows()); }
  const Eigen::MatrixXd& candidates() const noexcept { return candidates_; }

  /// Representatives of the M clusters left after n - M merges: weighted means, with
  /// integer dimensions rounded to the nearest in-support lattice point.
  InitialRule cut(std::size_t M) const {
    const std::size_t n = candidate_count();
    if (M < 1 || M > n)
      throw InvalidParameter("M", "cluster count must be in [1, " + std::to_string(n) + "]");
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (std::size_t k = 0; k < n - M; ++k) {
      const std::size_t a = find(merges_[k].a), b = find(merges_[k].b);
      parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<long> slot(n, -1);
    InitialRule out{Eigen::MatrixXd::Zero(Eigen::Index(M), spec_.dim()), Eigen::VectorXd::Zero(Eigen::Index(M))};
    long next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = find(i);
      if (slot[r] < 0) slot[r] = next++;
      const Eigen::Index s = slot[r];
      out.points.row(s) += weights_(Eigen::Index(i)) * candidates_.row(Eigen::Index(i));
      out.weights(s) += weights_(Eigen::Index(i));
    }
    for (Eigen::Index s = 0; s < out.points.rows(); ++s) {
      out.points.row(s) /= out.weights(s);
      for (int j = 0; j < spec_.dim(); ++j) {
        const auto sup = spec_.param(j).dist.support();
        double v = out.points(s, j);
        if (sup.discrete) v = std::round(v);
        out.points(s, j) = std::clamp(v, sup.lo, sup.hi);
      }
    }
    return out;
  }

 private:
  struct Merge {
    std::size_t a, b;
    double height;
  };

  void build() {
    const std::size_t n = candidate_count();
    if (n < 2) return;
    const Eigen::MatrixXd z = candidates_ * scale_.asDiagonal();
    // condensed upper triangle of max-distances between current clusters
    std::vector<double> md(n * (n - 1) / 2);
    auto at = [n](std::size_t i, std::size_t j) -> std::size_t {
      if (i > j) std::swap(i, j);
      return i * n - i * (i + 1) / 2 + (j - i - 1);
    };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        md[at(i, j)] = (z.row(Eigen::Index(i)) - z.row(Eigen::Index(j))).norm();

    std::vector<double> w(weights_.data(), weights_.data() + n);
    std::vector<char> alive(n, 1);
    std::vector<std::size_t> chain;
    chain.reserve(n);
    merges_.reserve(n - 1);
    std::size_t first_alive = 0;
    while (merges_.size() < n - 1) {
      if (chain.empty()) {
        while (!alive[first_alive]) ++first_alive;
        chain.push_back(first_alive);
      }
      std::size_t a, c;
      double dc;
      for (;;) {
        a = chain.back();
        const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
        c = prev;
        dc = prev < n ? (w[a] + w[prev]) * md[at(a, prev)] : std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
          if (!alive[k] || k == a) continue;
          const double dk = (w[a] + w[k]) * md[at(a, k)];
          if (dk < dc) {
            dc = dk;
            c = k;
          }
        }
        if (c == prev) break;
        chain.push_back(c);
      }
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, c), drop = std::max(a, c);
      merges_.push_back({keep, drop, dc});
      for (std::size_t k = 0; k < n; ++k) {
        if (!alive[k] || k == keep || k == drop) continue;
        md[at(keep, k)] = std::max(md[at(keep, k)], md[at(drop, k)]);
      }
      w[keep] += w[drop];
      alive[drop] = 0;
    }
    std::stable_sort(merges_.begin(), merges_.end(),
                     [](const Merge& x, const Merge& y) { return x.height < y.height; });
  }

  ProblemSpec spec_;
  Eigen::MatrixXd candidates_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd scale_;
  std::vector<Merge> merges_;
};

/// Draw `n_candidates` joint samples with weight 1/n_candidates and merge them down to M.
inline InitialRule cluster_init(const ProblemSpec& spec, std::size_t M, std::size_t n_candidates,
                                std::uint64_t seed) {
  if (M > n_candidates) throw InvalidParameter("M", "cannot exceed the candidate count");
  return ClusterTree(spec, n_candidates, seed).cut(M);
}

}  // namespace mgpc
