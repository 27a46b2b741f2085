#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pmme/error.hpp"
#include "pmme/experiment.hpp"
#include "pmme/nonmark.hpp"
#include "pmme/solver.hpp"
#include "test_support.hpp"

using namespace pmme;

namespace {

// Slow exponential memory on fast dephasing: coherences revive.
const ModelParams kMemory(0.5, 0.1, 0.002, 0.012, ExpKernel{0.02});

BlochSeries sampled_series(const ModelParams& theta, const std::string& label,
                           const std::vector<double>& times) {
  const Evolution ev(theta, bloch_to_density(named_state(label)));
  BlochSeries s{label, named_state(label), {}, false};
  for (const double t : times) s.points.push_back({t, ev.bloch(t), Eigen::Vector3d::Constant(1e-3)});
  return s;
}

DistanceSeries linear_distance(int n, double h) {
  DistanceSeries d{"a", "b", {}, {}};
  for (int i = 0; i < n; ++i) {
    d.t.push_back(i * h);
    d.d.push_back(1.0 - 0.01 * i * h);
  }
  return d;
}

}  // namespace

TEST(DistanceSeries, IdenticalSeriesGiveZero) {
  const auto s = sampled_series(kMemory, "plus", testkit::uniform_grid(10, 0.5));
  for (const double d : distance_series(s, s).d) EXPECT_EQ(d, 0.0);
}

TEST(DistanceSeries, OrthogonalPairStartsAtOne) {
  const auto grid = testkit::uniform_grid(10, 0.5);
  const auto d = distance_series(sampled_series(kMemory, "plus", grid),
                                 sampled_series(kMemory, "minus", grid));
  EXPECT_NEAR(d.d.front(), 1.0, 1e-14);
  EXPECT_EQ(d.label1, "plus");
  EXPECT_EQ(d.label2, "minus");
}

TEST(DistanceSeries, RejectsMismatchedGrids) {
  const auto a = sampled_series(kMemory, "plus", testkit::uniform_grid(10, 0.5));
  const auto b = sampled_series(kMemory, "minus", testkit::uniform_grid(10, 0.25));
  EXPECT_THROW(distance_series(a, b), ValidationError);
  auto c = sampled_series(kMemory, "minus", testkit::uniform_grid(10, 0.5));
  c.points[3].t += 1e-9;
  EXPECT_THROW(distance_series(a, c), ValidationError);
}

TEST(DistanceSeries, MarkovianPairIsNonincreasing) {
  const ModelParams theta(0.5, 0.02, 0.002, 0.012, DeltaKernel{});
  const auto d = model_distance_series(theta, {"plus", named_state("plus")},
                                       {"minus", named_state("minus")},
                                       testkit::uniform_grid(100, 0.1));
  for (std::size_t i = 0; i + 1 < d.d.size(); ++i) EXPECT_LE(d.d[i + 1], d.d[i]);
}

TEST(Sigma, LinearDistanceGivesConstantRate) {
  const auto s = sigma_series(linear_distance(21, 0.5));
  ASSERT_EQ(s.size(), 20u);
  for (const auto& p : s) EXPECT_NEAR(p.sigma, -0.01, 1e-12);
  EXPECT_EQ(s.front().t, 0.0);
  EXPECT_EQ(s.back().t, 9.5);
  EXPECT_EQ(n_measure(linear_distance(21, 0.5)).n, 0.0);
}

TEST(Sigma, RejectsSinglePoint) {
  EXPECT_THROW(sigma_series(linear_distance(1, 0.5)), ValidationError);
  EXPECT_THROW(n_measure(linear_distance(2, 0.5)), ValidationError);
}

TEST(Sigma, MemoryProducesBackflow) {
  const auto d = model_distance_series(kMemory, {"plus", named_state("plus")},
                                       {"minus", named_state("minus")},
                                       testkit::uniform_grid(100, 0.05));
  const auto s = sigma_series(d);
  const auto it = std::max_element(s.begin(), s.end(), [](auto& a, auto& b) { return a.sigma < b.sigma; });
  ASSERT_GT(it->sigma, 0.0);
  // Compare with a fine central difference of the analytic trajectory at the
  // midpoint of the same interval.
  const double tm = it->t + 0.025;
  const double e = 1e-5;
  const auto dd = model_distance_series(kMemory, {"plus", named_state("plus")},
                                        {"minus", named_state("minus")}, {tm - e, tm + e});
  EXPECT_NEAR(it->sigma, (dd.d[1] - dd.d[0]) / (2 * e), 1e-4);
}

TEST(Integration, SplitsAtZeroCrossings) {
  // sigma: +1 at t=0, -1 at t=1: positive triangle of area 0.25.
  const auto r = integrate_positive({{0.0, 1.0}, {1.0, -1.0}, {2.0, -1.0}, {3.0, 3.0}});
  ASSERT_EQ(r.contributions.size(), 2u);
  EXPECT_NEAR(r.contributions[0].value, 0.25, 1e-15);
  EXPECT_NEAR(r.contributions[0].t1, 0.5, 1e-15);
  EXPECT_NEAR(r.contributions[1].t0, 2.25, 1e-15);
  EXPECT_NEAR(r.contributions[1].value, 0.5 * 3.0 * 0.75, 1e-15);
  EXPECT_NEAR(r.n, 0.25 + 1.125, 1e-15);
}

TEST(Integration, SumOfContributionsEqualsN) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<SigmaPoint> s;
  for (int i = 0; i < 500; ++i) s.push_back({0.1 * i, n(rng)});
  const auto r = integrate_positive(s);
  double sum = 0.0;
  for (const auto& c : r.contributions) {
    EXPECT_GT(c.value, 0.0);
    sum += c.value;
  }
  EXPECT_NEAR(r.n, sum, 1e-12);
}

TEST(NMeasure, MarkovianModelsGiveExactlyZero) {
  std::mt19937_64 rng(50);
  for (int i = 0; i < 50; ++i) {
    const ModelParams theta = testkit::random_params(rng, ModelId::M0);
    for (const auto& [a, b] : default_pairs()) {
      const auto r = n_measure(theta, a, b, 100.0);
      EXPECT_EQ(r.n, 0.0) << "sample " << i << " pair " << a.label;
      EXPECT_TRUE(r.contributions.empty());
    }
  }
}

TEST(NMeasure, ModelPathConvergesUnderRefinement) {
  const auto pairs = default_pairs();
  const auto r = n_measure(kMemory, pairs[0].first, pairs[0].second, 100.0);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.last_change, 1e-4);
  EXPECT_GT(r.n, 0.0);
  EXPECT_EQ(r.method, "model-exact");
}

TEST(NMeasure, DataPathAgreesWithModelPath) {
  for (const auto& [a, b] : default_pairs()) {
    const auto exact = n_measure(kMemory, a, b, 100.0);
    const auto grid = testkit::uniform_grid(100, 0.05);
    const auto data = n_measure(distance_series(sampled_series(kMemory, a.label, grid),
                                                sampled_series(kMemory, b.label, grid)));
    EXPECT_EQ(data.method, "data-forward-difference");
    EXPECT_NEAR(data.n / exact.n, 1.0, 0.02) << a.label;
  }
}

TEST(NMeasure, DataPathIsFirstOrderInStep) {
  const auto pairs = default_pairs();
  const double exact = n_measure(kMemory, pairs[0].first, pairs[0].second, 100.0).n;
  std::vector<double> err;
  for (const double h : {0.4, 0.2, 0.1, 0.05}) {
    const auto grid = testkit::uniform_grid(100, h);
    const auto d = distance_series(sampled_series(kMemory, "plus", grid),
                                   sampled_series(kMemory, "minus", grid));
    err.push_back(std::abs(n_measure(d).n - exact));
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    EXPECT_LT(err[i + 1], err[i]);
    EXPECT_GT(err[i] / err[i + 1], 1.5) << "step " << i;
  }
}

TEST(NMeasure, BootstrapIntervalBracketsEstimate) {
  const auto grid = testkit::uniform_grid(100, 0.5);
  const auto a = sampled_series(kMemory, "plus", grid);
  const auto b = sampled_series(kMemory, "minus", grid);
  const auto r1 = n_measure_bootstrap(a, b, 100, 9);
  const auto r2 = n_measure_bootstrap(a, b, 100, 9);
  ASSERT_TRUE(r1.ci && r1.sd);
  EXPECT_EQ(r1.ci->lo, r2.ci->lo);
  EXPECT_LT(r1.ci->lo, r1.ci->hi);
  EXPECT_GT(*r1.sd, 0.0);
}

TEST(NMeasure, CsvAndJson) {
  std::ostringstream os;
  write_distance_csv(os, linear_distance(3, 1.0));
  EXPECT_EQ(os.str(), "t,D\n0,1\n1,0.99\n2,0.98\n");
  std::ostringstream ss;
  write_sigma_csv(ss, {{0.0, -0.01}});
  EXPECT_EQ(ss.str(), "t,sigma\n0,-0.01\n");
  const auto j = nonmark_to_json(integrate_positive({{0.0, 1.0}, {1.0, -1.0}}));
  EXPECT_DOUBLE_EQ(j.at("N").get<double>(), 0.25);
  EXPECT_EQ(j.at("contributions").size(), 1u);
}
