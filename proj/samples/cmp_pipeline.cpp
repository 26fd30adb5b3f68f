// Surrogate of the chip-multiprocessor speedup model next to a direct Monte Carlo baseline.

#include <cstdlib>
#include <iostream>

#include "mgpc/mgpc.hpp"

int main(int argc, char** argv) {
  using namespace mgpc;
  const double epsilon = argc > 1 ? std::atof(argv[1]) : 1e-5;

  const CmpConfig cmp;
  const ProblemSpec spec = cmp_problem_spec(cmp);
  SolverConfig cfg;
  cfg.order = 2;
  cfg.epsilon = epsilon;
  cfg.seed = 1;

  const BasisSet basis(spec, cfg.matched_order());
  const auto quad = size_adaptive_solve(basis, spec, cfg);
  const ModelAdapter model = BuiltinAdapter{cmp};
  const Eigen::MatrixXd y = evaluate_model_latent(model, spec, quad.rule.points);
  const Surrogate s = fit_coefficients(basis, cfg.order, quad.rule, y);
  const Moments m = mean_std(s);
  const auto mc = monte_carlo(model, spec, 100000, 7);
  const auto report = validate(s, model, 10000, 11);

  std::cout << "model runs   " << quad.rule.size() << "\n"
            << "mean         " << m.mean(0) << "   (Monte Carlo " << mc.mean(0) << ")\n"
            << "std          " << m.stddev(0) << "   (Monte Carlo " << mc.stddev(0) << ")\n"
            << "rmse_rel     " << report.rmse_rel(0) << "\n"
            << "mae_rel      " << report.mae_rel(0) << "\n";
}
