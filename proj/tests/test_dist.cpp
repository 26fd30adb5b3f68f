#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgpc/dist.hpp"
#include "oracles.hpp"

using namespace mgpc;

namespace {

Distribution build(const oracle::Law& l) { return make_distribution(l.kind, l.params); }

}  // namespace

TEST(Distribution, ParsesToyLaws) {
  const auto b = make_distribution("binomial", {10, 0.2});
  ASSERT_TRUE(std::holds_alternative<Binomial>(b.law()));
  EXPECT_EQ(std::get<Binomial>(b.law()).trials, 10);
  EXPECT_DOUBLE_EQ(std::get<Binomial>(b.law()).p, 0.2);
  EXPECT_TRUE(b.is_discrete());

  const auto g = make_distribution("truncated_gaussian", {0, 1, -2, 2});
  EXPECT_FALSE(g.is_discrete());
  EXPECT_EQ(g.kind_name(), "truncated_gaussian");
}

TEST(Distribution, RejectsInvalidParameters) {
  try {
    make_distribution("binomial", {10, 1.5});
    FAIL() << "expected InvalidParameter";
  } catch (const InvalidParameter& e) {
    EXPECT_EQ(e.field(), "p");
  }
  EXPECT_THROW(make_distribution("binomial", {10.5, 0.2}), InvalidParameter);
  EXPECT_THROW(make_distribution("truncated_gaussian", {0, -1}), InvalidParameter);
  EXPECT_THROW(make_distribution("truncated_gaussian", {0, 1, 2, -2}), InvalidParameter);
  EXPECT_THROW(make_distribution("uniform", {3, 3}), InvalidParameter);
  EXPECT_THROW(make_distribution("discrete_uniform", {7, 3}), InvalidParameter);
  EXPECT_THROW(make_distribution("poisson", {1}), InvalidParameter);
  EXPECT_THROW(make_distribution("binomial", {10}), InvalidParameter);
}

TEST(Distribution, MassAndDensityClosedForms) {
  const auto b = make_distribution("binomial", {10, 0.2});
  EXPECT_NEAR(mass_or_density(b, 0), std::pow(0.8, 10), 1e-15);
  EXPECT_NEAR(mass_or_density(b, 0), 0.10737, 1e-5);
  EXPECT_EQ(mass_or_density(b, 0.5), 0.0);
  EXPECT_EQ(mass_or_density(b, 11), 0.0);
  for (int k = 0; k <= 10; ++k) EXPECT_NEAR(mass_or_density(b, k), oracle::binom_pmf(10, 0.2, k), 1e-14);

  const auto g = make_distribution("truncated_gaussian", {0, 1, -2, 2});
  const double expect = (1.0 / std::sqrt(2 * M_PI)) / (oracle::normal_cdf(2) - oracle::normal_cdf(-2));
  EXPECT_NEAR(mass_or_density(g, 0), expect, 1e-14);
  EXPECT_NEAR(mass_or_density(g, 0), 0.41796, 1e-5);
  EXPECT_EQ(mass_or_density(g, 2.5), 0.0);

  const auto d = make_distribution("discrete_uniform", {3, 7});
  EXPECT_DOUBLE_EQ(mass_or_density(d, 5), 0.2);
  EXPECT_EQ(mass_or_density(d, 8), 0.0);
}

TEST(Distribution, SupportInfo) {
  const auto b = support_info(make_distribution("binomial", {10, 0.2}));
  EXPECT_EQ(b.lo, 0.0);
  EXPECT_EQ(b.hi, 10.0);
  EXPECT_TRUE(b.discrete);
  EXPECT_EQ(b.lattice_step, 1.0);
  const auto g = support_info(make_distribution("truncated_gaussian", {0, 1, -2, 2}));
  EXPECT_EQ(g.lo, -2.0);
  EXPECT_EQ(g.hi, 2.0);
  EXPECT_FALSE(g.discrete);
  const auto d = support_info(make_distribution("discrete_uniform", {3, 7}));
  EXPECT_EQ(d.lo, 3.0);
  EXPECT_EQ(d.hi, 7.0);
  EXPECT_TRUE(d.discrete);
  const auto one_sided = support_info(make_distribution("truncated_gaussian", {8, 1.6, 0}));
  EXPECT_EQ(one_sided.lo, 0.0);
  EXPECT_TRUE(std::isinf(one_sided.hi));
}

TEST(Distribution, RawMomentsClosedForms) {
  const auto b = make_distribution("binomial", {10, 0.2});
  EXPECT_DOUBLE_EQ(raw_moment(b, 0), 1.0);
  EXPECT_NEAR(raw_moment(b, 1), 2.0, 1e-13);
  EXPECT_NEAR(raw_moment(b, 2), 10 * 0.2 * 0.8 + 4.0, 1e-13);
  const auto g = make_distribution("truncated_gaussian", {0, 1, -2, 2});
  EXPECT_NEAR(raw_moment(g, 1), 0.0, 1e-15);
  // E[X^2] of the standard normal truncated to [-2, 2]: 1 - 2 * 2 phi(2) / (Phi(2) - Phi(-2))
  const double z = oracle::normal_cdf(2) - oracle::normal_cdf(-2);
  EXPECT_NEAR(raw_moment(g, 2), 1.0 - 4.0 * std::exp(-2.0) / std::sqrt(2 * M_PI) / z, 1e-13);
  const auto u = make_distribution("uniform", {-1, 3});
  EXPECT_NEAR(raw_moment(u, 3), (std::pow(3, 4) - 1) / 4 / 4, 1e-12);
}

TEST(Distribution, MassSumsToOne) {
  for (const auto& l : oracle::all_laws()) {
    const auto d = build(l);
    const auto s = d.support();
    if (d.is_discrete()) {
      double total = 0.0;
      for (double x = s.lo; x <= s.hi; x += 1.0) total += d.density(x);
      EXPECT_NEAR(total, 1.0, 1e-12) << l.label;
    } else {
      const double total = oracle::integrate([&](double x) { return d.density(x); }, l.lo, l.hi);
      EXPECT_NEAR(total, 1.0, 1e-10) << l.label;
    }
  }
}

TEST(Distribution, MomentsAgreeWithIndependentIntegration) {
  for (const auto& l : oracle::all_laws()) {
    const auto d = build(l);
    for (int k = 1; k <= 8; ++k) {
      const double ref = l.expect([k](double x) { return std::pow(x, k); });
      EXPECT_NEAR(raw_moment(d, k), ref, 1e-12 * std::max(1.0, std::abs(ref))) << l.label << " k=" << k;
    }
  }
}

TEST(Distribution, MomentsAgreeWithMonteCarlo) {
  for (const auto& l : oracle::all_laws()) {
    const auto d = build(l);
    const auto xs = draw_samples(d, 1000000, 11);
    for (int k = 1; k <= 4; ++k) {
      double s = 0.0, s2 = 0.0;
      for (double x : xs) {
        const double v = std::pow(x, k);
        s += v;
        s2 += v * v;
      }
      const double n = double(xs.size());
      const double mean = s / n;
      const double se = std::sqrt(std::max(s2 / n - mean * mean, 0.0) / n);
      EXPECT_NEAR(mean, raw_moment(d, k), 5 * se + 1e-14) << l.label << " k=" << k;
    }
  }
}

TEST(Distribution, SamplingRespectsSupportAndLattice) {
  const auto g = make_distribution("truncated_gaussian", {0, 1, -2, 2});
  const auto xs = draw_samples(g, 100000, 5);
  EXPECT_TRUE(std::all_of(xs.begin(), xs.end(), [](double x) { return x > -2 && x < 2; }));

  const auto b = make_distribution("binomial", {10, 0.2});
  const auto ns = draw_samples(b, 100000, 5);
  EXPECT_TRUE(std::all_of(ns.begin(), ns.end(), [](double x) { return x == std::round(x) && x >= 0 && x <= 10; }));
  const double mean = std::accumulate(ns.begin(), ns.end(), 0.0) / double(ns.size());
  EXPECT_NEAR(mean, 2.0, 0.03);

  const auto one_sided = draw_samples(make_distribution("truncated_gaussian", {5.6569, 1.1314, 0}), 100000, 5);
  EXPECT_TRUE(std::all_of(one_sided.begin(), one_sided.end(), [](double x) { return x >= 0; }));
}

TEST(Distribution, SamplingIsReproducible) {
  for (const auto& l : oracle::all_laws()) {
    const auto d = build(l);
    EXPECT_EQ(draw_samples(d, 1000, 42), draw_samples(d, 1000, 42)) << l.label;
    EXPECT_NE(draw_samples(d, 1000, 42), draw_samples(d, 1000, 43)) << l.label;
    EXPECT_EQ(draw_samples(d, 1, 7), draw_samples(d, 1, 7));
  }
  EXPECT_THROW(draw_samples(make_distribution("uniform", {0, 1}), 0, 1), InvalidParameter);
}

TEST(Distribution, ParametersRoundTrip) {
  for (const auto& l : oracle::all_laws()) {
    const auto d = build(l);
    const auto again = make_distribution(d.kind_name(), d.parameters());
    EXPECT_EQ(again.parameters(), d.parameters()) << l.label;
  }
}

TEST(ProblemSpec, AffineMapsAndValidation) {
  ProblemSpec spec({{"f", make_distribution("binomial", {60, 0.6}), {1.0 / 60, 0}},
                    {"x", make_distribution("uniform", {0, 1}), {2.0, 1.0}}},
                   {});
  EXPECT_EQ(spec.dim(), 2);
  EXPECT_EQ(spec.outputs(), std::vector<std::string>{"y"});
  EXPECT_EQ(spec.integer_dims(), std::vector<int>{0});
  Eigen::MatrixXd z(1, 2);
  z << 30, 0.25;
  const auto x = spec.to_physical(z);
  EXPECT_DOUBLE_EQ(x(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(x(0, 1), 1.5);
  EXPECT_TRUE(spec.to_latent(x).isApprox(z, 1e-15));

  EXPECT_THROW(ProblemSpec({{"a", make_distribution("uniform", {0, 1}), {0.0, 0}}}, {}), InvalidParameter);
  EXPECT_THROW(ProblemSpec({{"a", make_distribution("uniform", {0, 1})}, {"a", make_distribution("uniform", {0, 1})}},
                           {}),
               InvalidParameter);
  EXPECT_THROW(ProblemSpec({}, {}), InvalidParameter);
}

TEST(ProblemSpec, JointSamplesHaveIndependentStreams) {
  ProblemSpec spec({{"n", make_distribution("binomial", {10, 0.2})},
                    {"x", make_distribution("truncated_gaussian", {0, 1, -2, 2})}},
                   {});
  const auto a = spec.sample_latent(500, 9), b = spec.sample_latent(1000, 9);
  EXPECT_TRUE(a.isApprox(b.topRows(500)));
  EXPECT_TRUE(spec.sample_latent(100, 9).isApprox(spec.sample_latent(100, 9)));
}
