// mgpc: quadrature generation, collocation, statistics and validation from the shell.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mgpc/mgpc.hpp"

namespace fs = std::filesystem;
using namespace mgpc;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kInfeasible = 3, kAdapter = 4, kPending = 5 };

struct Options {
  std::string config, rule, surrogate, out, batch_phase;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> order;
  long n = -1;
  long bins = 50;
  bool force = false, dump = false, verbose = false;
};

std::string out_dir(const Options& o, const RunConfig* rc) {
  std::string d = !o.out.empty() ? o.out : (rc ? rc->output_dir : std::string("."));
  fs::create_directories(d);
  return d;
}

RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  RunConfig rc = load_run_config(o.config);
  if (o.seed) rc.seed = rc.solver.seed = *o.seed;
  if (o.epsilon) rc.solver.epsilon = *o.epsilon;
  if (o.order) rc.solver.order = *o.order;
  try {
    rc.solver.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  return rc;
}

void print_seed(std::uint64_t seed) { std::cout << "seed: " << seed << "\n"; }

std::size_t sample_count(const Options& o, long fallback) {
  const long n = o.n < 0 ? fallback : o.n;
  if (n < 1) throw ConfigError("--n must be at least 1");
  return std::size_t(n);
}

int cmd_quadgen(const Options& o) {
  RunConfig rc = load_config(o);
  print_seed(rc.seed);
  const std::string dir = out_dir(o, &rc);
  const std::string traj_path = (fs::path(dir) / "quadgen_trajectory.csv").string();
  csv::Writer traj(traj_path);
  traj.header({"points", "iteration", "residual_sq", "step_norm"});
  rc.solver.observer = [&](const IterationInfo& it) {
    traj.field(long(it.points)).field(long(it.iteration)).field(it.residual_sq).field(it.step_norm).end_row();
    log::info("M=" + std::to_string(it.points) + " pass " + std::to_string(it.iteration) +
              " residual " + csv::format(it.residual_sq));
  };
  const auto t0 = std::chrono::steady_clock::now();
  const BasisSet basis(rc.problem, rc.solver.matched_order());
  SizeSearchResult res;
  try {
    res = size_adaptive_solve(basis, rc.problem, rc.solver);
  } catch (const Infeasible&) {
    traj.close();
    throw;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  traj.close();

  const std::string rule_path = (fs::path(dir) / "rule.csv").string();
  write_rule_csv(rule_path, rc.problem, res.rule);
  csv::Writer rep((fs::path(dir) / "quadgen_report.csv").string());
  rep.header({"M", "residual_sq", "epsilon", "order", "iterations", "wall_seconds", "converged", "seed"});
  rep.field(long(res.rule.size())).field(res.rule.residual_sq).field(rc.solver.epsilon)
      .field(long(res.rule.order)).field(long(res.total_iterations)).field(wall)
      .field(res.rule.converged ? "true" : "false").field(std::to_string(rc.seed)).end_row();
  rep.close();
  std::cout << "points: " << res.rule.size() << "\n"
            << "residual_sq: " << csv::format(res.rule.residual_sq) << "\n"
            << "iterations: " << res.total_iterations << "\n"
            << "wall_seconds: " << wall << "\n"
            << "rule: " << rule_path << "\n";
  return kOk;
}

int cmd_collocate(const Options& o) {
  RunConfig rc = load_config(o);
  print_seed(rc.seed);
  const std::string dir = out_dir(o, &rc);
  const std::string rule_path = !o.rule.empty() ? o.rule : (fs::path(dir) / "rule.csv").string();
  const std::string sur_path = !o.surrogate.empty() ? o.surrogate : (fs::path(dir) / "surrogate.json").string();
  const int p = rc.solver.order;
  const BasisSet basis(rc.problem, std::max(2 * p, rc.solver.matched_order()));
  QuadratureRule rule = read_rule_csv(rule_path, rc.problem);
  rule.order = 2 * p;
  rule.residual_sq = rule_residual(basis, rule.points, rule.weights, 2 * p);
  rule.epsilon = rc.solver.epsilon;
  rule.converged = rule.residual_sq <= rc.solver.epsilon;
  if (!rule.converged)
    log::warn("rule residual " + csv::format(rule.residual_sq) + " exceeds epsilon " +
              csv::format(rc.solver.epsilon));

  const Eigen::MatrixXd physical = rc.problem.to_physical(rule.points);
  Eigen::MatrixXd y;
  if (const auto* b = std::get_if<BatchAdapter>(&rc.model); b && !o.batch_phase.empty()) {
    std::vector<std::string> names;
    for (const auto& prm : rc.problem.params()) names.push_back(prm.name);
    if (o.batch_phase == "request") {
      batch_write_request(*b, names, physical);
      std::cout << "request: " << b->request_path << "\n";
      return kPending;
    }
    y = batch_read_response(*b, rc.problem.outputs(), std::size_t(physical.rows()));
  } else {
    if (!o.batch_phase.empty()) throw ConfigError("--batch-phase applies to batch models only");
    y = evaluate_model(rc.model, rc.problem, physical);
  }

  json meta{{"seed", rc.seed},
            {"model", adapter_name(rc.model)},
            {"model_evaluations", y.rows()},
            {"rule_residual_sq", rule.residual_sq},
            {"epsilon", rc.solver.epsilon}};
  Surrogate s = fit_coefficients(basis, p, rule, y, meta);
  const Moments m = mean_std(s);
  json mj = json::object();
  for (std::size_t k = 0; k < s.outputs().size(); ++k)
    mj[s.outputs()[k]] = {{"mean", m.mean(Eigen::Index(k))}, {"std", m.stddev(Eigen::Index(k))}};
  meta["moments"] = mj;
  s = Surrogate(s.basis(), p, s.coefficients(), s.rule(), meta);
  save(s, sur_path);
  for (std::size_t k = 0; k < s.outputs().size(); ++k)
    std::cout << s.outputs()[k] << ": mean " << csv::format(m.mean(Eigen::Index(k))) << " std "
              << csv::format(m.stddev(Eigen::Index(k))) << "\n";
  std::cout << "model_evaluations: " << y.rows() << "\n" << "surrogate: " << sur_path << "\n";
  return kOk;
}

int cmd_stats(const Options& o) {
  if (o.surrogate.empty()) throw ConfigError("--surrogate is required");
  const Surrogate s = load(o.surrogate);
  const std::uint64_t seed = o.seed.value_or(s.metadata().value("seed", std::uint64_t{0}));
  print_seed(seed);
  if (o.bins < 1) throw ConfigError("--bins must be at least 1");
  const std::size_t n = sample_count(o, 100000);
  const Moments m = mean_std(s);
  const auto h = sample_histogram(s, n, std::size_t(o.bins), seed);
  Options where = o;
  if (where.out.empty()) {
    where.out = fs::path(o.surrogate).parent_path().string();
    if (where.out.empty()) where.out = ".";
  }
  const std::string dir = out_dir(where, nullptr);
  const std::string hist_path = (fs::path(dir) / "histogram.csv").string();
  csv::Writer w(hist_path);
  w.header({"output", "bin_lo", "bin_hi", "count"});
  for (std::size_t k = 0; k < s.outputs().size(); ++k) {
    const auto& hk = h.histograms[k];
    for (std::size_t b = 0; b < hk.counts.size(); ++b)
      w.field(s.outputs()[k]).field(hk.edges[b]).field(hk.edges[b + 1]).field(long(hk.counts[b])).end_row();
  }
  w.close();
  csv::Writer st((fs::path(dir) / "stats.csv").string());
  st.header({"output", "mean", "std", "sample_mean", "sample_std", "n"});
  for (std::size_t k = 0; k < s.outputs().size(); ++k) {
    const Eigen::VectorXd v = h.values.col(Eigen::Index(k));
    const double mu = v.mean();
    const double sd = n > 1 ? std::sqrt((v.array() - mu).square().sum() / double(n - 1)) : 0.0;
    st.field(s.outputs()[k]).field(m.mean(Eigen::Index(k))).field(m.stddev(Eigen::Index(k))).field(mu).field(sd)
        .field(long(n)).end_row();
    std::cout << s.outputs()[k] << ": mean " << csv::format(m.mean(Eigen::Index(k))) << " std "
              << csv::format(m.stddev(Eigen::Index(k))) << "\n";
  }
  st.close();
  std::cout << "histogram: " << hist_path << "\n";
  return kOk;
}

void require_cheap(const RunConfig& rc, const Options& o) {
  if (!adapter_is_cheap(rc.model) && !o.force)
    throw ConfigError("model '" + adapter_name(rc.model) +
                      "' may be expensive; pass --force to evaluate it this many times");
  if (std::holds_alternative<BatchAdapter>(rc.model))
    throw ConfigError("batch models cannot be evaluated inline");
}

int cmd_validate(const Options& o) {
  if (o.surrogate.empty()) throw ConfigError("--surrogate is required");
  RunConfig rc = load_config(o);
  print_seed(rc.seed);
  require_cheap(rc, o);
  const std::size_t n = sample_count(o, 10000);
  const Surrogate s = load(o.surrogate);
  if (s.problem().dim() != rc.problem.dim()) throw ConfigError("surrogate and configuration disagree on dimension");
  const ValidationReport r = validate(s, rc.model, n, rc.seed);
  const std::string dir = out_dir(o, &rc);
  const std::string path = (fs::path(dir) / "validation.csv").string();
  csv::Writer w(path);
  w.header({"output", "n", "rmse_rel", "mae_rel", "surrogate_mean", "surrogate_std", "reference_mean",
            "reference_std"});
  for (std::size_t k = 0; k < r.outputs.size(); ++k) {
    const auto i = Eigen::Index(k);
    w.field(r.outputs[k]).field(long(n)).field(r.rmse_rel(i)).field(r.mae_rel(i)).field(r.surrogate_mean(i))
        .field(r.surrogate_std(i)).field(r.reference_mean(i)).field(r.reference_std(i)).end_row();
    std::cout << r.outputs[k] << ": rmse_rel " << csv::format(r.rmse_rel(i)) << " mae_rel "
              << csv::format(r.mae_rel(i)) << "\n";
  }
  w.close();

  // pooled-range histograms of both sample sets
  csv::Writer hw((fs::path(dir) / "validation_histogram.csv").string());
  hw.header({"output", "bin_lo", "bin_hi", "surrogate_count", "reference_count"});
  for (std::size_t k = 0; k < r.outputs.size(); ++k) {
    const Eigen::VectorXd a = r.surrogate_values.col(Eigen::Index(k)), b = r.reference_values.col(Eigen::Index(k));
    const double lo = std::min(a.minCoeff(), b.minCoeff()), hi = std::max(a.maxCoeff(), b.maxCoeff());
    const auto ha = make_histogram({a.data(), std::size_t(a.size())}, std::size_t(o.bins), lo, hi);
    const auto hb = make_histogram({b.data(), std::size_t(b.size())}, std::size_t(o.bins), lo, hi);
    for (std::size_t j = 0; j < ha.counts.size(); ++j)
      hw.field(r.outputs[k]).field(ha.edges[j]).field(ha.edges[j + 1]).field(long(ha.counts[j]))
          .field(long(hb.counts[j])).end_row();
  }
  hw.close();
  std::cout << "report: " << path << "\n";
  return kOk;
}

int cmd_mc(const Options& o) {
  RunConfig rc = load_config(o);
  print_seed(rc.seed);
  require_cheap(rc, o);
  const std::size_t n = sample_count(o, 100000);
  const MonteCarloResult r = monte_carlo(rc.model, rc.problem, n, rc.seed);
  const std::string dir = out_dir(o, &rc);
  const std::string path = (fs::path(dir) / "mc.csv").string();
  csv::Writer w(path);
  w.header({"output", "n", "mean", "std"});
  const auto& outs = rc.problem.outputs();
  for (std::size_t k = 0; k < outs.size(); ++k) {
    w.field(outs[k]).field(long(n)).field(r.mean(Eigen::Index(k))).field(r.stddev(Eigen::Index(k))).end_row();
    std::cout << outs[k] << ": mean " << csv::format(r.mean(Eigen::Index(k))) << " std "
              << csv::format(r.stddev(Eigen::Index(k))) << "\n";
  }
  w.close();
  if (o.dump) {
    std::vector<std::string> names;
    for (const auto& p : rc.problem.params()) names.push_back(p.name);
    names.insert(names.end(), outs.begin(), outs.end());
    Eigen::MatrixXd all(r.inputs.rows(), r.inputs.cols() + r.outputs.cols());
    all << rc.problem.to_physical(r.inputs), r.outputs;
    csv::write_matrix((fs::path(dir) / "mc_samples.csv").string(), names, all);
  }
  std::cout << "report: " << path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-integer polynomial chaos surrogates for black-box models"};
  app.require_subcommand(1);
  Options o;
  app.add_flag("-v,--verbose", o.verbose, "Log solver progress");

  auto common_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed (overrides the config)"); };
  auto common_out = [&](CLI::App* c) { c->add_option("--out", o.out, "Output directory"); };

  auto* quad = app.add_subcommand("quadgen", "Build a quadrature rule for the configured problem");
  quad->add_option("--config", o.config, "Run configuration (JSON)")->required();
  quad->add_option("--epsilon", o.epsilon, "Residual tolerance");
  quad->add_option("--order", o.order, "Surrogate order p");
  common_seed(quad);
  common_out(quad);

  auto* col = app.add_subcommand("collocate", "Evaluate the model on a rule and fit the surrogate");
  col->add_option("--config", o.config, "Run configuration (JSON)")->required();
  col->add_option("--rule", o.rule, "Rule CSV (default <out>/rule.csv)");
  col->add_option("--surrogate", o.surrogate, "Surrogate file to write (default <out>/surrogate.json)");
  col->add_option("--order", o.order, "Surrogate order p");
  col->add_option("--epsilon", o.epsilon, "Tolerance the rule is checked against");
  col->add_option("--batch-phase", o.batch_phase, "Batch models: request or collect")
      ->check(CLI::IsMember({"request", "collect"}));
  common_seed(col);
  common_out(col);

  auto* stats = app.add_subcommand("stats", "Moments and histogram of a surrogate");
  stats->add_option("--surrogate", o.surrogate, "Surrogate file")->required();
  stats->add_option("--n", o.n, "Number of surrogate samples (default 100000)");
  stats->add_option("--bins", o.bins, "Histogram bins (default 50)");
  common_seed(stats);
  common_out(stats);

  auto* val = app.add_subcommand("validate", "Compare a surrogate against direct model runs");
  val->add_option("--surrogate", o.surrogate, "Surrogate file")->required();
  val->add_option("--config", o.config, "Run configuration (JSON)")->required();
  val->add_option("--n", o.n, "Number of validation samples (default 10000)");
  val->add_option("--bins", o.bins, "Histogram bins (default 50)");
  val->add_flag("--force", o.force, "Allow external simulators");
  common_seed(val);
  common_out(val);

  auto* mc = app.add_subcommand("mc", "Direct Monte Carlo baseline");
  mc->add_option("--config", o.config, "Run configuration (JSON)")->required();
  mc->add_option("--n", o.n, "Number of samples (default 100000)");
  mc->add_flag("--force", o.force, "Allow external simulators");
  mc->add_flag("--dump", o.dump, "Also write every sample to mc_samples.csv");
  common_seed(mc);
  common_out(mc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  if (o.verbose) log::set_level(log::Level::info);

  try {
    if (*quad) return cmd_quadgen(o);
    if (*col) return cmd_collocate(o);
    if (*stats) return cmd_stats(o);
    if (*val) return cmd_validate(o);
    if (*mc) return cmd_mc(o);
  } catch (const BatchPending& e) {
    std::cout << e.what() << "\n";
    return kPending;
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const Timeout& e) {
    std::cerr << "adapter error (sample " << e.id() << "): " << e.what() << "\n";
    return kAdapter;
  } catch (const MissingRows& e) {
    std::cerr << "adapter error: " << e.what() << "\n";
    return kAdapter;
  } catch (const AdapterError& e) {
    std::cerr << "adapter error: " << e.what() << "\n";
    return kAdapter;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidParameter& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const CorruptFile& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kConfig;
  } catch (const VersionMismatch& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
