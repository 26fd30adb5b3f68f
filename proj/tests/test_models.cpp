#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mgpc/models.hpp"

using namespace mgpc;
namespace fs = std::filesystem;

namespace {

struct LogCapture {
  std::vector<std::string> lines;
  LogCapture() {
    log::set_sink([this](log::Level, std::string_view m) { lines.emplace_back(m); });
  }
  ~LogCapture() { log::set_sink({}); }
};

ExecAdapter mock(std::vector<std::string> args, double timeout = 10.0, int workers = 1) {
  return ExecAdapter{MGPC_MOCK_SIMULATOR, std::move(args), timeout, workers};
}

Eigen::MatrixXd inputs(int rows, int cols, unsigned seed = 1) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) x(i, j) = u(g);
  return x;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mgpc_models_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cmp, SpeedupWorkedExamples) {
  const std::vector<double> one{1}, two{2};
  EXPECT_DOUBLE_EQ(cmp_speedup(1.0, 0.0, one, one), 1.0);
  EXPECT_DOUBLE_EQ(cmp_speedup(0.0, 0.0, one, two), 2.0);
  EXPECT_DOUBLE_EQ(cmp_speedup(0.5, 0.0, two, one), 4.0 / 3.0);
  // two types: serial core is the fastest active one
  const std::vector<double> N{3, 2}, P{2, 4};
  const double t_seq = (1 - 0.6 + 0.1 * 5) / 4.0, t_par = 0.6 / (3 * 2 + 2 * 4);
  EXPECT_NEAR(cmp_speedup(0.6, 0.1, N, P), 1.0 / (t_seq + t_par), 1e-15);
  const std::vector<double> N2{3, 0};
  EXPECT_NEAR(cmp_speedup(0.6, 0.1, N2, P), 1.0 / ((1 - 0.6 + 0.3) / 2.0 + 0.6 / 6.0), 1e-15);
}

TEST(Cmp, NoActiveCoreGivesZeroAndFlag) {
  const std::vector<double> N{0, 0}, P{3, 4};
  bool flag = false;
  EXPECT_EQ(cmp_speedup(0.5, 0.1, N, P, &flag), 0.0);
  EXPECT_TRUE(flag);
  const std::vector<double> N1{1, 0};
  cmp_speedup(0.5, 0.1, N1, P, &flag);
  EXPECT_FALSE(flag);
  EXPECT_THROW(cmp_speedup(0.5, 0.1, N1, std::vector<double>{1}), ShapeMismatch);
}

TEST(Cmp, SpeedupProperties) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double f = u(g), c = 0.1 * u(g);
    const std::vector<double> N{double(int(20 * u(g)) + 1), double(int(20 * u(g)))};
    const std::vector<double> P{1 + 8 * u(g), 1 + 8 * u(g)};
    const double s = cmp_speedup(f, c, N, P);
    EXPECT_GT(s, 0.0);
    // homogeneous of degree one in the performances
    const std::vector<double> P3{3 * P[0], 3 * P[1]};
    EXPECT_NEAR(cmp_speedup(f, c, N, P3), 3 * s, 1e-12 * s);
    // communication overhead only slows things down
    EXPECT_LE(cmp_speedup(f, c + 0.05, N, P), s);
  }
}

TEST(Cmp, YieldModel) {
  EXPECT_DOUBLE_EQ(yield_rate(32, 0.0, 2.0), 1.0);
  EXPECT_NEAR(yield_rate(32, 0.01, 2.0), std::pow(1 + 0.16, -2.0), 1e-15);
  EXPECT_GT(yield_rate(32, 0.01, 2.0), yield_rate(64, 0.01, 2.0));
  EXPECT_NEAR(yield_rate(32, 0.01, 1e7), std::exp(-0.32), 1e-6);
  EXPECT_THROW(yield_rate(0, 0.01, 2), InvalidParameter);
  EXPECT_THROW(yield_rate(1, 0.01, 0), InvalidParameter);
}

TEST(Cmp, ProblemSpecLayout) {
  const auto spec = cmp_problem_spec(CmpConfig{});
  ASSERT_EQ(spec.dim(), 6);
  const std::vector<std::string> names{"f", "c", "N0", "N1", "P0", "P1"};
  for (int j = 0; j < 6; ++j) EXPECT_EQ(spec.param(j).name, names[std::size_t(j)]);
  EXPECT_DOUBLE_EQ(spec.param(0).affine.scale, 1.0 / 60);
  EXPECT_DOUBLE_EQ(spec.param(1).affine.scale, 1.0 / 80);
  EXPECT_EQ(spec.param(2).dist.parameters(), (std::vector<double>{20, 0.7432}));
  EXPECT_EQ(spec.param(3).dist.parameters(), (std::vector<double>{20, 0.5739}));
  EXPECT_EQ(spec.param(4).dist.parameters(), (std::vector<double>{5.6569, 1.1314, 0}));
  EXPECT_EQ(spec.param(5).dist.parameters(), (std::vector<double>{8, 1.6, 0}));
  EXPECT_EQ(spec.integer_dims(), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(spec.outputs(), std::vector<std::string>{"speedup"});
  CmpConfig bad;
  bad.cores[0].yield = 1.5;
  EXPECT_THROW(cmp_problem_spec(bad), InvalidParameter);
}

TEST(Cmp, MonteCarloMatchesPublishedMoments) {
  const auto big = cmp_monte_carlo(CmpConfig{}, 100000, 3);
  EXPECT_NEAR(big.mean(0), 0.4377, 0.005);
  EXPECT_NEAR(big.stddev(0), 0.0987, 0.005);
  const auto small = cmp_monte_carlo(CmpConfig{}, 1000, 3);
  EXPECT_NEAR(small.mean(0), 0.4377, 0.01);
  EXPECT_EQ(big.inputs.rows(), 100000);
  EXPECT_EQ(cmp_monte_carlo(CmpConfig{}, 500, 9).outputs, cmp_monte_carlo(CmpConfig{}, 500, 9).outputs);
}

TEST(Cmp, BuiltinWarnsOnDeadSamples) {
  CmpConfig cfg;
  const auto spec = cmp_problem_spec(cfg);
  Eigen::MatrixXd x(2, 6);
  x << 0.5, 0.1, 0, 0, 5, 8, 0.5, 0.1, 1, 0, 5, 8;
  LogCapture cap;
  const auto y = evaluate_model(BuiltinAdapter{cfg}, spec, x);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_GT(y(1, 0), 0.0);
  ASSERT_EQ(cap.lines.size(), 1u);
  EXPECT_NE(cap.lines[0].find("no active core"), std::string::npos);
}

TEST(FunctionModel, EvaluatesAndChecksShape) {
  ProblemSpec spec({{"a", make_distribution("uniform", {0, 1}), {2.0, 1.0}}}, {"y"});
  FunctionAdapter f{[](std::span<const double> x, std::span<double> y) { y[0] = x[0] * x[0]; }, 1};
  Eigen::MatrixXd z(2, 1);
  z << 0.0, 0.5;
  const auto y = evaluate_model_latent(f, spec, z);
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 4.0);
  f.n_outputs = 2;
  EXPECT_THROW(evaluate_model(f, spec, z), ShapeMismatch);
  EXPECT_TRUE(adapter_is_cheap(f));
  EXPECT_FALSE(adapter_is_cheap(ExecAdapter{}));
  EXPECT_EQ(adapter_name(BatchAdapter{}), "batch");
}

TEST(Exec, RoundTripsThroughChild) {
  const auto x = inputs(50, 3);
  const auto y = exec_eval(mock({"sum"}), x, 1);
  EXPECT_TRUE(y.col(0).isApprox(x.rowwise().sum(), 1e-14));
}

TEST(Exec, OutOfOrderRepliesAreMatchedById) {
  const auto x = inputs(40, 2);
  const auto y = exec_eval(mock({"reverse"}), x, 1);
  EXPECT_TRUE(y.col(0).isApprox(x.rowwise().sum(), 1e-14));
}

TEST(Exec, WorkersSplitTheIds) {
  const auto x = inputs(101, 4);
  const auto y = exec_eval(mock({"sum"}, 10.0, 4), x, 1);
  EXPECT_TRUE(y.col(0).isApprox(x.rowwise().sum(), 1e-14));
  const auto tiny = exec_eval(mock({"sum"}, 10.0, 8), inputs(3, 2), 1);
  EXPECT_EQ(tiny.rows(), 3);
}

TEST(Exec, LargeBatchDoesNotDeadlock) {
  const auto x = inputs(20000, 6);
  const auto y = exec_eval(mock({"sum"}), x, 1);
  EXPECT_TRUE(y.col(0).isApprox(x.rowwise().sum(), 1e-12));
}

TEST(Exec, MissingReplyTimesOutWithId) {
  try {
    exec_eval(mock({"omit", "4"}, 1.0), inputs(10, 2), 1);
    FAIL() << "expected Timeout";
  } catch (const Timeout& e) {
    EXPECT_EQ(e.id(), 4);
  }
}

TEST(Exec, MissingReplyAtExitIsReported) {
  try {
    exec_eval(mock({"omit_exit", "7"}), inputs(10, 2), 1);
    FAIL() << "expected Timeout";
  } catch (const Timeout& e) {
    EXPECT_EQ(e.id(), 7);
  }
}

TEST(Exec, SlowChildTimesOut) {
  EXPECT_THROW(exec_eval(mock({"slow", "3"}, 0.5), inputs(2, 2), 1), Timeout);
}

TEST(Exec, ProtocolViolations) {
  EXPECT_THROW(exec_eval(mock({"garbage"}), inputs(5, 2), 1), ProtocolError);
  EXPECT_THROW(exec_eval(mock({"duplicate"}), inputs(5, 2), 1), ProtocolError);
  EXPECT_THROW(exec_eval(mock({"wrong_count"}), inputs(5, 2), 1), ProtocolError);
}

TEST(Exec, ChildFailure) {
  try {
    exec_eval(mock({"fail"}), inputs(5, 2), 1);
    FAIL() << "expected ChildFailed";
  } catch (const ChildFailed& e) {
    EXPECT_NE(e.status(), 0);
  }
  EXPECT_THROW(exec_eval(ExecAdapter{"/nonexistent/simulator", {}, 5.0, 1}, inputs(2, 2), 1), ChildFailed);
  EXPECT_THROW(exec_eval(ExecAdapter{"", {}, 5.0, 1}, inputs(2, 2), 1), InvalidParameter);
}

TEST(Batch, RequestThenCollect) {
  const auto dir = scratch("roundtrip");
  ProblemSpec spec({{"a", make_distribution("uniform", {0, 1})}, {"b", make_distribution("uniform", {0, 1})}},
                   {"y", "z"});
  const BatchAdapter ad{(dir / "req.csv").string(), (dir / "resp.csv").string()};
  const auto x = inputs(4, 2);
  EXPECT_THROW(evaluate_model(ad, spec, x), BatchPending);
  std::ifstream in(ad.request_path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "id,a,b");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4);

  write_file(ad.response_path, "id,z,y\n3,30,3\n1,10,1\n0,0,0\n2,20,2\n");
  const auto y = evaluate_model(ad, spec, x);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(y(i, 0), i);
    EXPECT_EQ(y(i, 1), 10 * i);
  }
}

TEST(Batch, ResponseDefects) {
  const auto dir = scratch("defects");
  const BatchAdapter ad{(dir / "req.csv").string(), (dir / "resp.csv").string()};
  const std::vector<std::string> out{"y"};

  write_file(ad.response_path, "id,y\n0,1\n2,1\n");
  try {
    batch_read_response(ad, out, 4);
    FAIL() << "expected MissingRows";
  } catch (const MissingRows& e) {
    EXPECT_EQ(e.ids(), (std::vector<long>{1, 3}));
  }

  write_file(ad.response_path, "id,y\n0,1\n0,2\n");
  EXPECT_THROW(batch_read_response(ad, out, 1), IdMismatch);
  write_file(ad.response_path, "key,y\n0,1\n");
  EXPECT_THROW(batch_read_response(ad, out, 1), IdMismatch);
  write_file(ad.response_path, "id,q\n0,1\n");
  EXPECT_THROW(batch_read_response(ad, out, 1), CorruptFile);
  write_file(ad.response_path, "id,y\n0,abc\n");
  EXPECT_THROW(batch_read_response(ad, out, 1), CorruptFile);

  write_file(ad.response_path, "id,y\n0,1\n1,2\n9,5\n");
  LogCapture cap;
  const auto y = batch_read_response(ad, out, 2);
  EXPECT_EQ(y(1, 0), 2);
  ASSERT_EQ(cap.lines.size(), 1u);
  EXPECT_NE(cap.lines[0].find("unknown ids"), std::string::npos);
}
