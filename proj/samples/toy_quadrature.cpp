// Mixed-integer quadrature for a binomial count and a truncated Gaussian, printed as CSV.

#include <iostream>

#include "mgpc/mgpc.hpp"

int main() {
  using namespace mgpc;
  const ProblemSpec spec({{"n", make_distribution("binomial", {10, 0.2})},
                          {"x", make_distribution("truncated_gaussian", {0, 1, -2, 2})}},
                         {"y"});
  SolverConfig cfg;
  cfg.order = 2;
  cfg.epsilon = 1e-6;
  cfg.n_candidates = 2000;
  cfg.seed = 1;

  const BasisSet basis(spec, cfg.matched_order());
  const auto result = size_adaptive_solve(basis, spec, cfg);

  std::cout << "n,x,weight\n";
  for (Eigen::Index i = 0; i < result.rule.points.rows(); ++i)
    std::cout << result.rule.points(i, 0) << "," << result.rule.points(i, 1) << ","
              << result.rule.weights(i) << "\n";
  std::cerr << result.rule.size() << " points, residual " << result.rule.residual_sq << "\n";
}
