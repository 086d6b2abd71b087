#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "brwlab/limits.hpp"

using namespace brwlab;

namespace {
const OffspringLaw kTwoPoint = OffspringLaw::two_point();
const OffspringLaw kGauss = OffspringLaw::gaussian_binary();
const double kA = kTwoPoint.params()[0];
double R2(double x) { return x < 0 ? 0.0 : 1.0 + std::floor(x / kA + 1e-9); }

SenetaHeydeOptions small_run(double x = 0.0) {
  SenetaHeydeOptions o;
  o.n_grid = {2, 4, 6};
  o.replicates = 300;
  o.x = x;
  o.bootstrap = 100;
  return o;
}
}  // namespace

TEST(Laplace, IdenticalSamplesHaveZeroGap) {
  const std::vector<double> a{0.1, 0.7, 2.0, 3.5};
  const auto lam = default_lambda_grid();
  const auto r = laplace_compare(a, a, lam);
  EXPECT_EQ(r.sup_gap, 0.0);
}

TEST(Laplace, ZeroSampleTransformIsOne) {
  const std::vector<double> a{0.5, 1.0, 4.0}, b(3, 0.0);
  const auto lam = default_lambda_grid();
  const auto r = laplace_compare(a, b, lam);
  double min_a = 1.0;
  for (std::size_t i = 0; i < lam.size(); ++i) {
    EXPECT_EQ(r.transform_b[i], 1.0);
    min_a = std::min(min_a, r.transform_a[i]);
  }
  EXPECT_NEAR(r.sup_gap, 1.0 - min_a, 1e-15);
  EXPECT_NEAR(r.transform_a[0], (std::exp(-0.125) + std::exp(-0.25) + std::exp(-1.0)) / 3, 1e-15);
}

TEST(Laplace, TransformIsMonotoneAndConvex) {
  Stream rng({3, experiments::kBootstrap, 0, 0});
  std::vector<double> a(1000);
  for (auto& v : a) v = rng.exponential();
  std::vector<double> lam;
  for (int i = 1; i <= 40; ++i) lam.push_back(0.1 * i);
  const auto r = laplace_compare(a, a, lam);
  for (std::size_t i = 0; i + 1 < lam.size(); ++i) {
    EXPECT_LE(r.transform_a[i + 1], r.transform_a[i]);
    EXPECT_GT(r.transform_a[i], 0.0);
    EXPECT_LE(r.transform_a[i], 1.0);
  }
  for (std::size_t i = 1; i + 1 < lam.size(); ++i)
    EXPECT_GE(r.transform_a[i + 1] - 2 * r.transform_a[i] + r.transform_a[i - 1], -1e-15);
}

TEST(Laplace, Errors) {
  const std::vector<double> empty, one{1.0}, neg{-1.0};
  const auto lam = default_lambda_grid();
  EXPECT_THROW(laplace_compare(empty, one, lam), std::invalid_argument);
  EXPECT_THROW(laplace_compare(one, neg, lam), std::invalid_argument);
}

TEST(Trend, StrictWithOneNoisyInversion) {
  const std::vector<double> v{0.5, 0.4, 0.41, 0.3}, se{0.01, 0.01, 0.01};
  EXPECT_TRUE(strictly_decreasing(v, se, 2.0, 1).pass);
  EXPECT_EQ(strictly_decreasing(v, se, 2.0, 1).inversions, 1u);
  const std::vector<double> bad{0.5, 0.4, 0.5, 0.3};
  EXPECT_FALSE(strictly_decreasing(bad, se, 2.0, 1).pass);
  const std::vector<double> two{0.5, 0.51, 0.4, 0.41};
  EXPECT_FALSE(strictly_decreasing(two, se, 2.0, 1).pass);
  EXPECT_TRUE(non_increasing(two, se, 2.0).pass);
  EXPECT_FALSE(non_increasing(bad, se, 2.0).pass);
}

TEST(SenetaHeyde, BasicInvariants) {
  const auto run = seneta_heyde_experiment(kGauss, small_run(), 7);
  EXPECT_NEAR(run.c, std::sqrt(2.0 / (std::numbers::pi * 2.0 * std::numbers::ln2)), 1e-12);
  ASSERT_EQ(run.points.size(), 3u);
  for (const auto& p : run.points) {
    EXPECT_GE(p.discrepancy, 0.0);
    EXPECT_LE(p.discrepancy, 1.0);
    EXPECT_GE(p.correlation, -1.0);
    EXPECT_LE(p.correlation, 1.0);
    EXPECT_LT(std::abs(p.W.mean - 1.0), 4 * p.W.se);
    EXPECT_LT(std::abs(p.D.mean), 4 * p.D.se);
    EXPECT_GE(p.laplace_gap, 0.0);
  }
  // at the last grid point the pairing is with D_N itself
  EXPECT_EQ(run.points.back().discrepancy, run.points.back().limit_discrepancy);
  EXPECT_EQ(run.discrepancy_diff_se.size(), 2u);
}

TEST(SenetaHeyde, DeterministicAcrossThreads) {
  const auto a = seneta_heyde_experiment(kGauss, small_run(), 8, 1);
  const auto b = seneta_heyde_experiment(kGauss, small_run(), 8, 3);
  std::ostringstream sa, sb;
  write_seneta_heyde_csv(sa, a);
  write_seneta_heyde_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(seneta_heyde_summary(a).dump(), seneta_heyde_summary(b).dump());
}

TEST(SenetaHeyde, TranslationScaling) {
  // The tree from x is the tree from 0 shifted by x on the same streams:
  // W(x) = e^-x W(0), D(x) = e^-x (D(0) + x W(0)).
  const auto r0 = seneta_heyde_experiment(kGauss, small_run(0.0), 9);
  const auto r2 = seneta_heyde_experiment(kGauss, small_run(2.0), 9);
  for (std::size_t g = 0; g < r0.n_grid.size(); ++g)
    for (std::size_t r = 0; r < 20; ++r) {
      const double w0 = r0.sqrtn_W[g][r], d0 = r0.cD[g][r];
      EXPECT_NEAR(r2.sqrtn_W[g][r], std::exp(-2.0) * w0, 1e-12 * w0);
      const double n = static_cast<double>(r0.n_grid[g]);
      const double expect = std::exp(-2.0) * (d0 + r0.c * 2.0 * w0 / std::sqrt(n));
      EXPECT_NEAR(r2.cD[g][r], expect, 1e-9 * (std::abs(expect) + 1.0));
    }
}

TEST(SenetaHeyde, ExtinctReplicatesContributeZero) {
  auto opt = small_run();
  opt.n_grid = {4, 8};
  const auto run = seneta_heyde_experiment(OffspringLaw::extinction_demo(), opt, 10);
  std::size_t extinct = 0;
  for (std::size_t r = 0; r < run.replicates; ++r)
    if (run.sqrtn_W[0][r] == 0.0) {
      ++extinct;
      EXPECT_EQ(run.cD[0][r], 0.0);
      EXPECT_EQ(run.sqrtn_W[1][r], 0.0);
      EXPECT_EQ(run.cD[1][r], 0.0);
    }
  EXPECT_GT(extinct, 0u);
}

TEST(SenetaHeyde, CsvHeader) {
  auto opt = small_run();
  opt.replicates = 2;
  opt.bootstrap = 0;
  std::ostringstream os;
  write_seneta_heyde_csv(os, seneta_heyde_experiment(kGauss, opt, 11));
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "replicate,n,sqrtnW,cD,D_stability");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 2 * 3);
}

TEST(FirstMoment, KozlovConstantsLattice) {
  const SpineWalk walk(kTwoPoint);
  const std::vector<double> xs{0.0, 2 * kA};
  const auto k = kozlov_constants(walk, R2, xs, 4000);
  EXPECT_NEAR(k.theta, std::sqrt(2.0 / std::numbers::pi), 0.01);
  EXPECT_GE(k.theta_prime, k.theta);
  EXPECT_GE(k.theta_prime, 1.0);  // n = 0, x = 0 gives sqrt(1) * 1 / 1
}

TEST(FirstMoment, TwoRoutesAgree) {
  const SpineWalk walk(kTwoPoint);
  const std::vector<double> xs{0.0, 2 * kA};
  const std::vector<std::size_t> ns{0, 3, 8};
  const auto k = kozlov_constants(walk, R2, xs, 2000);
  const auto rep = first_moment_wprime(kTwoPoint, xs, ns, 4000, R2, k, 12);
  ASSERT_EQ(rep.rows.size(), 6u);
  EXPECT_NEAR(rep.rows[1].spine.mean, 0.375, 1e-15);
  for (const auto& r : rep.rows) {
    EXPECT_LT(r.z, 4.0) << r.x << " " << r.n;
    if (r.n == 0) {
      EXPECT_NEAR(r.tree.mean, std::exp(-r.x), 1e-12);
      EXPECT_NEAR(r.spine.mean, std::exp(-r.x), 1e-15);
    }
  }
  EXPECT_TRUE(rep.upper_bound_holds(4.0));
}

TEST(FirstMoment, GaussianSpineRouteByMonteCarlo) {
  const SpineWalk walk(kGauss);
  const std::vector<double> xs{0.0};
  const std::vector<std::size_t> ns{3};
  KozlovConstants k{0.5, 2.0};
  const auto rep = first_moment_wprime(kGauss, xs, ns, 4000, [](double) { return 1.0; }, k, 13);
  EXPECT_GT(rep.rows[0].spine.se, 0.0);
  EXPECT_LT(rep.rows[0].z, 4.0);
}

TEST(TruncatedMoment, EpsilonLimits) {
  const std::vector<double> xs{0.0, 2 * kA};
  const std::vector<double> eps{1e-300, 1e6};
  const auto rows = truncated_moment_probe(kTwoPoint, xs, 6, eps, 3000, R2, 14);
  ASSERT_EQ(rows.size(), 4u);
  const SpineWalk walk(kTwoPoint);
  for (const auto& r : rows) {
    if (r.eps > 1.0) {
      EXPECT_EQ(r.moment.mean, 0.0);
      continue;
    }
    const double exact = std::sqrt(6.0) * std::exp(-r.x) * survival_curve_lattice(*walk.lattice(), r.x, 6).back();
    EXPECT_LT(std::abs(r.moment.mean - exact), 4 * r.moment.se) << r.x;
  }
  EXPECT_EQ(truncated_ratios(rows, 1e6), (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(truncated_moment_probe(kTwoPoint, xs, 6, std::vector<double>{0.0}, 10, R2, 1), std::invalid_argument);
}

TEST(KillFromK0, MatchesKilledMartingale) {
  for (std::size_t k0 : {0u, 2u, 5u}) {
    const StreamKey key{15, experiments::kKillFromK0, 0, 0};
    for (std::uint32_t r = 0; r < 40; ++r) {
      Stream rng(key.with_replicate(r));
      const auto s = run_brw(0.0, 7, k0, kTwoPoint, rng);
      bool equal = true;
      for (std::size_t n = 0; n <= 7; ++n) equal = equal && s.Wsecond[n] == s.W[n];
      EXPECT_EQ(never_bites(s, k0), equal) << k0 << " " << r;
    }
  }
}

TEST(KillFromK0, MonotoneAndLimits) {
  const auto series = simulate_series(kTwoPoint, 0.0, 8, 500, 16);
  const std::vector<std::size_t> ks{0, 2, 4, 6, 8};
  const auto rows = kill_from_k0(series, ks);
  for (std::size_t i = 0; i + 1 < rows.size(); ++i)
    EXPECT_LE(rows[i].probability.mean, rows[i + 1].probability.mean);
  EXPECT_LT(rows[0].probability.mean, 1.0);
  const auto far = kill_from_k0(simulate_series(kTwoPoint, 10.0, 8, 200, 17), ks);
  EXPECT_EQ(far[0].probability.mean, 1.0);  // 8 steps of size a < 10 cannot reach 0
}
