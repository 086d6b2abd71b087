#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "brwlab/stats.hpp"

using namespace brwlab;

TEST(MeanWithSe, ConstantSamples) {
  const std::vector<double> v{1, 1, 1, 1};
  const auto e = mean_with_se(v);
  EXPECT_EQ(e.mean, 1.0);
  EXPECT_EQ(e.se, 0.0);
  EXPECT_EQ(e.count, 4u);
}

TEST(MeanWithSe, TwoPoints) {
  const std::vector<double> v{0, 2};
  const auto e = mean_with_se(v);
  EXPECT_DOUBLE_EQ(e.mean, 1.0);
  EXPECT_DOUBLE_EQ(e.se, 1.0);
}

TEST(MeanWithSe, RejectsSingleSample) {
  const std::vector<double> v{3};
  EXPECT_THROW(mean_with_se(v), std::invalid_argument);
}

TEST(Bootstrap, ReproducibleForFixedKey) {
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.push_back(std::sin(i) + 0.1 * i);
  const Statistic mean = [](std::span<const double> s) { return mean_with_se(s).mean; };
  const StreamKey key{11, experiments::kBootstrap, 0, 0};
  const auto a = bootstrap_ci(mean, v, 500, key);
  const auto b = bootstrap_ci(mean, v, 500, key);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LT(a.lo, mean_with_se(v).mean);
  EXPECT_GT(a.hi, mean_with_se(v).mean);
  EXPECT_THROW(bootstrap_ci(mean, v, 50, key), std::invalid_argument);
}

TEST(ChiSquare, PoolsSmallBins) {
  const std::vector<double> obs{50, 48, 1, 1};
  const std::vector<double> p{0.5, 0.48, 0.01, 0.01};
  const auto r = chi_square_gof(obs, p);
  EXPECT_EQ(r.bins, 2u);
  EXPECT_GT(r.p_value, 0.5);
}

TEST(WeightedKs, MatchesUnweightedOnUnitWeights) {
  const std::vector<double> v{0.1, 0.4, 0.7, 0.9};
  const std::vector<double> w{1, 1, 1, 1};
  auto uni = [](double x) { return std::clamp(x, 0.0, 1.0); };
  EXPECT_DOUBLE_EQ(weighted_ks(v, w, uni), ks_statistic(v, uni));
  EXPECT_NEAR(ks_statistic(v, uni), 0.2, 1e-12);
}

TEST(CompensatedSum, RecoversSmallTerms) {
  CompensatedSum s;
  s += 1e16;
  for (int i = 0; i < 1000; ++i) s += 1.0;
  s += -1e16;
  EXPECT_EQ(s.value(), 1000.0);
}

TEST(Spearman, RanksAndTies) {
  const std::vector<double> x{1, 2, 3, 4}, y{1, 4, 9, 16}, z{4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, y), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, z), -1.0, 1e-15);
  const std::vector<double> t{1, 2, 2, 3};
  EXPECT_NEAR(spearman(t, x), 4.5 / std::sqrt(22.5), 1e-15);
}
