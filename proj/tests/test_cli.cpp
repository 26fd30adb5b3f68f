#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mgpc/config.hpp"
#include "mgpc/csv.hpp"
#include "mgpc/serialize.hpp"
#include "mgpc/surrogate.hpp"

using namespace mgpc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path workdir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("mgpc_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Run cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" + MGPC_CLI + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kToyProblem = R"("problem": {"params": [
    {"name": "n", "kind": "binomial", "params": [10, 0.2]},
    {"name": "x", "kind": "truncated_gaussian", "params": [0, 1, -2, 2]}], "outputs": ["y"]},
  "solver": {"order": 2, "epsilon": 1e-12, "n_candidates": 2000},
  "seed": 1)";

void write_exec_config(const fs::path& dir) {
  std::ofstream(dir / "run.json") << "{" << kToyProblem << R"(, "model": {"type": "exec", "command": ")"
                                  << MGPC_MOCK_SIMULATOR << R"(", "args": ["poly"]}})";
}

double poly(double n, double x) { return 1.0 + 2.0 * n - 0.5 * x + 0.3 * n * x + 0.25 * x * x - 0.1 * n * n; }

}  // namespace

TEST(Cli, QuadgenOnSampleToyConfig) {
  const auto dir = workdir("quadgen");
  const auto r = cli("quadgen --config '" + std::string(MGPC_SAMPLES_DIR) + "/toy.json' --out .", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("seed: 1"), std::string::npos);
  const auto spec = load_run_config(std::string(MGPC_SAMPLES_DIR) + "/toy.json").problem;
  const auto rule = read_rule_csv((dir / "rule.csv").string(), spec);
  EXPECT_LE(rule.points.rows(), 15);
  EXPECT_NEAR(rule.weights.sum(), 1.0, 1e-3);
  EXPECT_TRUE((rule.weights.array() >= 0).all());
  for (Eigen::Index i = 0; i < rule.points.rows(); ++i) EXPECT_EQ(rule.points(i, 0), std::round(rule.points(i, 0)));
  EXPECT_TRUE(fs::exists(dir / "quadgen_trajectory.csv"));
  EXPECT_TRUE(fs::exists(dir / "quadgen_report.csv"));
}

TEST(Cli, QuadgenIsDeterministic) {
  const auto a = workdir("det_a"), b = workdir("det_b");
  const std::string cfg = "quadgen --config '" + std::string(MGPC_SAMPLES_DIR) + "/toy.json' --seed 5 --out .";
  ASSERT_EQ(cli(cfg, a).code, 0);
  ASSERT_EQ(cli(cfg, b).code, 0);
  EXPECT_EQ(slurp(a / "rule.csv"), slurp(b / "rule.csv"));
}

TEST(Cli, ConfigurationErrorsExitWithTwo) {
  const auto dir = workdir("bad");
  const std::string toy = "'" + std::string(MGPC_SAMPLES_DIR) + "/toy.json'";
  EXPECT_EQ(cli("quadgen --config " + toy + " --epsilon 0 --out .", dir).code, 2);
  EXPECT_EQ(cli("quadgen --config missing.json", dir).code, 2);
  EXPECT_EQ(cli("quadgen", dir).code, 2);
  EXPECT_EQ(cli("frobnicate", dir).code, 2);
  EXPECT_EQ(cli("stats --surrogate nothing.json", dir).code, 2);
}

TEST(Cli, ExecCollocationStatsAndValidation) {
  const auto dir = workdir("exec");
  write_exec_config(dir);
  ASSERT_EQ(cli("quadgen --config run.json --out .", dir).code, 0);
  const auto c = cli("collocate --config run.json --out .", dir);
  ASSERT_EQ(c.code, 0) << c.out;
  const Surrogate s = load((dir / "surrogate.json").string());
  // quadratic model on an order-2 basis: the surrogate reproduces it
  const std::vector<double> at{3, 0.7};
  EXPECT_NEAR(s.evaluate(at, false)(0), poly(3, 0.7), 1e-4);
  EXPECT_EQ(s.metadata()["model_evaluations"].get<long>(), long(s.rule().points.rows()));

  const auto st = cli("stats --surrogate surrogate.json --n 2000 --bins 1 --out .", dir);
  ASSERT_EQ(st.code, 0) << st.out;
  const auto h = csv::read((dir / "histogram.csv").string());
  ASSERT_EQ(h.rows.size(), 1u);
  EXPECT_EQ(h.rows[0][std::size_t(h.column("count"))], "2000");
  EXPECT_TRUE(fs::exists(dir / "stats.csv"));
  EXPECT_EQ(cli("stats --surrogate surrogate.json --n 0", dir).code, 2);
  EXPECT_EQ(cli("stats --surrogate surrogate.json --bins 0", dir).code, 2);

  // an external simulator is never sampled without consent
  EXPECT_EQ(cli("validate --config run.json --surrogate surrogate.json --n 100", dir).code, 2);
  const auto v = cli("validate --config run.json --surrogate surrogate.json --n 200 --force --out .", dir);
  ASSERT_EQ(v.code, 0) << v.out;
  const auto rep = csv::read((dir / "validation.csv").string());
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_LE(std::stod(rep.rows[0][std::size_t(rep.column("rmse_rel"))]), 1e-3);
}

TEST(Cli, FailingSimulatorExitsWithFour) {
  const auto dir = workdir("fail");
  std::ofstream(dir / "run.json") << "{" << kToyProblem << R"(, "model": {"type": "exec", "command": ")"
                                  << MGPC_MOCK_SIMULATOR << R"(", "args": ["fail"]}})";
  ASSERT_EQ(cli("quadgen --config run.json --out .", dir).code, 0);
  EXPECT_EQ(cli("collocate --config run.json --out .", dir).code, 4);
}

TEST(Cli, BatchRoundTrip) {
  const auto dir = workdir("batch");
  std::ofstream(dir / "run.json") << "{" << kToyProblem
                                  << R"(, "model": {"type": "batch", "request": "req.csv", "response": "resp.csv"}})";
  ASSERT_EQ(cli("quadgen --config run.json --out .", dir).code, 0);
  const auto req = cli("collocate --config run.json --batch-phase request --out .", dir);
  ASSERT_EQ(req.code, 5) << req.out;
  const auto t = csv::read((dir / "req.csv").string());
  const int id = t.column("id"), n = t.column("n"), x = t.column("x");
  ASSERT_GE(id, 0);
  ASSERT_GE(n, 0);
  ASSERT_GE(x, 0);
  {
    std::ofstream out(dir / "resp.csv");
    out << "id,y\n";
    for (const auto& row : t.rows)
      out << row[std::size_t(id)] << ","
          << csv::format(poly(std::stod(row[std::size_t(n)]), std::stod(row[std::size_t(x)]))) << "\n";
  }
  const auto col = cli("collocate --config run.json --batch-phase collect --out .", dir);
  ASSERT_EQ(col.code, 0) << col.out;
  const Surrogate s = load((dir / "surrogate.json").string());
  EXPECT_NEAR(s.evaluate(std::vector<double>{2, -0.3}, false)(0), poly(2, -0.3), 1e-4);

  // a response with a row missing is an adapter failure
  std::ofstream(dir / "resp.csv") << "id,y\n0,1.0\n";
  EXPECT_EQ(cli("collocate --config run.json --batch-phase collect --out .", dir).code, 4);
}

TEST(Cli, BuiltinMonteCarlo) {
  const auto dir = workdir("mc");
  std::ofstream(dir / "run.json") << R"({"model": {"type": "builtin_cmp"}, "seed": 2})";
  const auto r = cli("mc --config run.json --n 2000 --dump --out .", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto t = csv::read((dir / "mc.csv").string());
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_NEAR(std::stod(t.rows[0][std::size_t(t.column("mean"))]), 0.4377, 0.02);
  EXPECT_EQ(csv::read((dir / "mc_samples.csv").string()).rows.size(), 2000u);
}
