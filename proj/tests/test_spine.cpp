#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "brwlab/spine.hpp"

using namespace brwlab;

namespace {
const OffspringLaw kTwoPoint = OffspringLaw::two_point();
const double kA = kTwoPoint.params()[0];

double renewal_two_point(double x) { return x < 0 ? 0.0 : 1.0 + std::floor(x / kA + 1e-9); }
}  // namespace

TEST(SizeBiased, SingleDeterministicChild) {
  const auto law = OffspringLaw::finite("single", {{{0.0}, 1.0}});
  Stream rng({1, 0, 0, 0});
  for (int i = 0; i < 10; ++i) {
    const auto d = sample_size_biased(law, rng);
    ASSERT_EQ(d.children.size(), 1u);
    EXPECT_EQ(d.children[0], 0.0);
    EXPECT_EQ(d.chosen, 0u);
  }
}

TEST(SizeBiased, TwoPointSpineIsFair) {
  Stream rng({2, experiments::kSpine, 0, 0});
  const SizeBiasedSampler s(kTwoPoint);
  int down = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto d = s.draw(rng);
    const double step = d.children[d.chosen];
    ASSERT_TRUE(step == kA || step == -kA);
    down += step < 0;
  }
  EXPECT_LT(std::abs(down - n / 2), 4 * std::sqrt(n / 4.0));
}

TEST(SizeBiased, TwoPointChildSetLaw) {
  // Size-biased law of the child set: p_o * W_o.
  const double q = kTwoPoint.params()[1];
  Stream rng({3, experiments::kSpine, 0, 0});
  const SizeBiasedSampler s(kTwoPoint);
  std::vector<double> counts(3, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto d = s.draw(rng);
    counts[(d.children[0] < 0) + (d.children[1] < 0)] += 1;
  }
  const std::vector<double> p{(1 - q) * (1 - q) * 2 * std::exp(-kA), 2 * q * (1 - q) * (std::exp(kA) + std::exp(-kA)),
                              q * q * 2 * std::exp(kA)};
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_GT(chi_square_gof(counts, p).p_value, 0.001);
}

TEST(SizeBiased, IncrementMomentsAllLaws) {
  for (const auto& law : {kTwoPoint, OffspringLaw::gaussian_binary(), OffspringLaw::extinction_demo()}) {
    const SpineWalk walk(law);
    Stream rng({4, experiments::kSpine, 0, 0});
    const std::size_t n = 100000;
    std::vector<double> x(n), x2(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = walk.step(rng);
      x2[i] = x[i] * x[i];
    }
    const auto m = mean_with_se(x), v = mean_with_se(x2);
    EXPECT_LT(std::abs(m.mean), 4 * m.se) << law.name();
    EXPECT_LT(std::abs(v.mean - law.sigma2()), 4 * v.se + 1e-12) << law.name();
  }
}

TEST(SizeBiased, GaussianTiltMatchesSpineWalk) {
  // Spine increments drawn through the full child set agree with N(0, s2).
  const auto law = OffspringLaw::gaussian_binary();
  const SizeBiasedSampler s(law);
  Stream rng({5, experiments::kSpine, 0, 0});
  std::vector<double> z(50000);
  for (auto& v : z) {
    const auto d = s.draw(rng);
    v = d.children[d.chosen] / std::sqrt(law.sigma2());
  }
  EXPECT_LT(ks_statistic(z, [](double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }), 1.36 / std::sqrt(50000.0) * 1.5);
}

TEST(SizeBiased, SampledLawByRejection) {
  ChildSampler sampler = [](Stream& rng, ChildSet& out) {
    out.clear();
    out.push_back(2 * rng.uniform() - 1);
    out.push_back(2 * rng.uniform() - 1);
  };
  Stream cal({6, experiments::kCalibration, 0, 0});
  const auto base = OffspringLaw::sampled("u2", sampler, 0.0, 1000, cal);
  const auto law = OffspringLaw::calibrate(base, 400000, &cal);
  const SpineWalk walk(law);
  Stream rng({6, experiments::kSpine, 0, 0});
  std::vector<double> x(100000), x2(100000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = walk.step(rng);
    x2[i] = x[i] * x[i];
  }
  const auto m = mean_with_se(x), v = mean_with_se(x2);
  EXPECT_LT(std::abs(m.mean), 4 * m.se);
  EXPECT_LT(std::abs(v.mean - law.sigma2()), 4 * v.se);
}

TEST(SizeBiased, UncalibratedLawFails) {
  // Weight bound far below the actual weights: every proposal is accepted,
  // but a zero-weight law can never be accepted.
  ChildSampler never = [](Stream&, ChildSet& out) { out.assign(1, std::numeric_limits<double>::infinity()); };
  Stream cal({7, 0, 0, 0});
  const auto law = OffspringLaw::sampled("inf", never, 0.0, 10, cal);
  Stream rng({7, 1, 0, 0});
  EXPECT_THROW(sample_size_biased(law, rng), SizeBiasingFailed);
}

TEST(SpinePath, StructureAndSurvival) {
  Stream rng({8, experiments::kSpine, 0, 0});
  const auto p = run_spinal_brw(0.0, 5, kTwoPoint, rng, renewal_two_point);
  ASSERT_EQ(p.positions.size(), 6u);
  EXPECT_EQ(p.positions[0], 0.0);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(p.positions[k + 1] - p.positions[k], p.children[k][p.chosen[k]]);
  ASSERT_TRUE(p.pplus_weight);
  EXPECT_EQ(*p.pplus_weight == 0.0, p.min_position() < 0.0);
  EXPECT_NEAR(exact_spine_expectation(0.0, 3, kTwoPoint, [](double, double m) { return m >= 0 ? 1.0 : 0.0; }), 0.375,
              1e-12);
}

TEST(SpinePath, NegativeStartHasZeroWeight) {
  EXPECT_EQ(pplus_weight(renewal_two_point, -0.5, 1.0, -0.5), 0.0);
}

TEST(ManyToOne, ExactCasesMatchToRoundoff) {
  const std::vector<std::pair<std::string, ParticleFunctional>> fs{
      {"one", [](double, double) { return 1.0; }},
      {"survival", [](double, double m) { return m >= 0 ? 1.0 : 0.0; }},
      {"laplace", [](double y, double) { return std::exp(-y); }},
      {"below", [](double y, double) { return y <= 0.5 ? 1.0 : 0.0; }}};
  for (double x : {0.0, 2 * kA})
    for (std::size_t n = 1; n <= 3; ++n)
      for (const auto& [name, H] : fs) {
        const double tree = exact_additive_expectation(x, n, kTwoPoint, H);
        const double spine = exact_spine_expectation(x, n, kTwoPoint, H);
        EXPECT_NEAR(tree, spine, 1e-12) << name << " n=" << n << " x=" << x;
      }
  EXPECT_NEAR(exact_spine_expectation(0.0, 3, kTwoPoint, [](double, double) { return 1.0; }), 1.0, 1e-12);
}

TEST(ManyToOne, MonteCarloAgreement) {
  const std::vector<TestFunctional> fs{TestFunctional::constant(), TestFunctional::survival(),
                                       TestFunctional::laplace(-0.5), TestFunctional::indicator_below(0.0)};
  const auto reports = many_to_one_check(0.0, 5, fs, kTwoPoint, 20000, 31);
  for (std::size_t j = 0; j < fs.size(); ++j) EXPECT_LT(reports[j].z, 4.0) << fs[j].name();
  EXPECT_DOUBLE_EQ(reports[0].spine.mean, 1.0);
}

TEST(ManyToOne, LaplaceAtTwoAgainstExact) {
  const std::vector<TestFunctional> fs{TestFunctional::laplace(1.0)};
  const double exact = exact_spine_expectation(0.0, 2, kTwoPoint, [](double y, double) { return std::exp(-y); });
  const auto r = many_to_one_check(0.0, 2, fs, kTwoPoint, 100000, 32)[0];
  EXPECT_LT(std::abs(r.tree.mean - exact), 3 * r.tree.se);
  EXPECT_LT(std::abs(r.spine.mean - exact), 3 * r.spine.se);
  EXPECT_LT(r.z, 3.0);
}

TEST(Decomposition, IdentityOnRealizations) {
  for (std::uint32_t r = 0; r < 200; ++r) {
    Stream rng({10, experiments::kDecomposition, r, 0});
    const double x = (r % 3) * kA;
    const auto path = run_spinal_brw(x, 3 + r % 4, kTwoPoint, rng);
    const auto c = spine_decomposition_identity(path, kTwoPoint, rng);
    ASSERT_NEAR(c.lhs, c.rhs, 1e-12) << r;
  }
  for (std::uint32_t r = 0; r < 50; ++r) {
    Stream rng({11, experiments::kDecomposition, r, 0});
    const auto law = OffspringLaw::gaussian_binary();
    const auto path = run_spinal_brw(0.3, 6, law, rng);
    const auto c = spine_decomposition_identity(path, law, rng);
    ASSERT_NEAR(c.lhs, c.rhs, 1e-12 * std::max(1.0, c.lhs)) << r;
  }
}

TEST(Decomposition, SingleChildLaw) {
  const auto law = OffspringLaw::finite("single", {{{0.0}, 1.0}});
  Stream rng({12, 0, 0, 0});
  const auto path = run_spinal_brw(1.0, 1, law, rng);
  const auto c = spine_decomposition_identity(path, law, rng);
  EXPECT_EQ(c.lhs, std::exp(-1.0));
  EXPECT_EQ(c.rhs, std::exp(-1.0));
}

TEST(Decomposition, DipKillsSpineTerm) {
  SpinePath p;
  p.positions = {0.0, -kA, 0.0};
  p.children = {{-kA, kA}, {kA, kA}};
  p.chosen = {0, 0};
  Stream rng({13, 0, 0, 0});
  const auto c = spine_decomposition_identity(p, kTwoPoint, rng);
  // Only the sibling at +a (rooted before the dip) can contribute.
  EXPECT_NEAR(c.lhs, c.rhs, 1e-12);
  EXPECT_GT(c.rhs, 0.0);
  SpinePath neg = p;
  neg.positions[0] = -1.0;
  EXPECT_THROW(spine_decomposition_identity(neg, kTwoPoint, rng), std::invalid_argument);
}

TEST(PPlus, ZeroStepsIsPointMass) {
  const auto e = sample_p_plus(kA, 0, kTwoPoint, 100, renewal_two_point, 1);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(e.weights[i], 1.0);
    EXPECT_EQ(e.final_positions[i], kA);
  }
  EXPECT_NEAR(e.ess, 100.0, 1e-9);
}

TEST(PPlus, WeightMeanIsOne) {
  for (std::size_t n : {1u, 10u, 100u}) {
    const auto e = sample_p_plus(2 * kA, n, kTwoPoint, 100000, renewal_two_point, 3);
    EXPECT_LT(std::abs(e.mean_weight.mean - 1.0), 4 * e.mean_weight.se) << n;
    EXPECT_FALSE(e.low_ess);
  }
  EXPECT_THROW(sample_p_plus(-1.0, 3, kTwoPoint, 10, renewal_two_point, 1), std::invalid_argument);
}

TEST(PPlus, Bessel3Cdf) {
  using boost::math::quadrature::gauss_kronrod;
  for (double z : {0.5, 1.0, 2.0, 4.0})
    EXPECT_NEAR(bessel3_cdf(z), (gauss_kronrod<double, 31>::integrate(bessel3_density, 0.0, z)), 1e-12);
  EXPECT_NEAR(bessel3_cdf(40.0), 1.0, 1e-15);
}

TEST(PPlus, CsvExport) {
  const auto e = sample_p_plus(0.0, 2, kTwoPoint, 3, renewal_two_point, 5, 1, true);
  std::ostringstream os;
  write_spine_csv(os, e);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "replicate,k,X_spine,weight");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3 * 3);
}

TEST(LatticeSnap, LongWalkReturnsExactlyToZero) {
  const SpineWalk walk(kTwoPoint);
  const auto snap = walk.snapper(0.0);
  Stream rng({8, experiments::kSpine, 0, 0});
  double s = 0.0;
  std::int64_t k = 0;
  for (int i = 0; i < 100000; ++i) {
    const double d = walk.step(rng);
    s = snap(s + d);
    k += d > 0 ? 1 : -1;
    if (k == 0) ASSERT_EQ(s, 0.0) << i;
  }
  EXPECT_EQ(LatticeSnap(0.0, 0.0)(0.1234), 0.1234);
  EXPECT_EQ(LatticeSnap(1.0, 0.0)(0.5), 0.5);
}
