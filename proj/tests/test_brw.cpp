#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "brwlab/brw.hpp"
#include "brwlab/parallel.hpp"

using namespace brwlab;

namespace {
const OffspringLaw kTwoPoint = OffspringLaw::two_point();
const double kA = kTwoPoint.params()[0];
const double kQ = kTwoPoint.params()[1];
}  // namespace

TEST(StepGeneration, LineageMinima) {
  const auto law = OffspringLaw::finite("fixed", {{{-kA, kA}, 1.0}}, kA);
  Stream rng({1, 0, 0, 0});
  const auto next = step_generation(initial_particles(0.0), law, rng);
  ASSERT_EQ(next.size(), 2u);
  EXPECT_EQ(next.path_mins[0], -kA);
  EXPECT_EQ(next.path_mins[1], 0.0);
  EXPECT_EQ(next.generation, 1u);
}

TEST(StepGeneration, ExtinctionIsAbsorbing) {
  Stream rng({1, 0, 0, 0});
  ParticleArray empty;
  const auto next = step_generation(empty, kTwoPoint, rng);
  EXPECT_TRUE(next.empty());
}

TEST(StepGeneration, SentinelBeforeK0) {
  Stream rng({1, 0, 0, 0});
  auto p = initial_particles(0.0, 2);
  EXPECT_EQ(p.path_mins_after_k0[0], kNotYet);
  p = step_generation(p, kTwoPoint, rng, 2);
  for (double m : p.path_mins_after_k0) EXPECT_EQ(m, kNotYet);
  p = step_generation(p, kTwoPoint, rng, 2);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p.path_mins_after_k0[i], p.positions[i]);
}

TEST(StepGeneration, OverflowNamesTheCap) {
  Stream rng({1, 0, 0, 0});
  try {
    run_brw(0.0, 10, 0, kTwoPoint, rng, 100);
    FAIL() << "expected overflow";
  } catch (const PopulationOverflow& e) {
    EXPECT_EQ(e.cap(), 100u);
    EXPECT_NE(std::string(e.what()).find("100"), std::string::npos);
  }
}

TEST(RunBrw, InitialValues) {
  Stream rng({1, 0, 0, 0});
  const auto s = run_brw(0.0, 0, 0, kTwoPoint, rng);
  EXPECT_EQ(s.W[0], 1.0);
  EXPECT_EQ(s.D[0], 0.0);
  Stream rng2({1, 0, 0, 0});
  const auto t = run_brw(2.0, 0, 0, kTwoPoint, rng2);
  EXPECT_DOUBLE_EQ(t.W[0], std::exp(-2.0));
  EXPECT_DOUBLE_EQ(t.D[0], 2.0 * std::exp(-2.0));
  EXPECT_THROW(run_brw(0.0, 1, 2, kTwoPoint, rng), std::invalid_argument);
}

TEST(RunBrw, PointwiseOrdering) {
  for (std::uint32_t r = 0; r < 200; ++r) {
    Stream rng({5, experiments::kTree, r, 0});
    const auto s = run_brw(0.5, 8, 3, kTwoPoint, rng);
    for (std::size_t n = 0; n <= 8; ++n) {
      ASSERT_GE(s.W[n], s.Wsecond[n]);
      ASSERT_GE(s.Wsecond[n], s.Wprime[n]);
      ASSERT_GE(s.Wprime[n], 0.0);
    }
  }
}

TEST(RunBrw, NoDipMeansNoKilling) {
  int equal = 0;
  for (std::uint32_t r = 0; r < 200; ++r) {
    Stream rng({6, experiments::kTree, r, 0});
    const auto s = run_brw(6 * kA, 6, 0, kTwoPoint, rng);
    double lowest = s.x;
    for (double m : s.min_position) lowest = std::min(lowest, m);
    if (lowest >= 0.0) {
      for (std::size_t n = 0; n <= 6; ++n) ASSERT_EQ(s.Wprime[n], s.W[n]);
      ++equal;
    }
  }
  EXPECT_EQ(equal, 200);  // six steps of size a cannot reach below 0 from 6a
}

TEST(RunBrw, MartingaleMeans) {
  const std::size_t reps = 20000, N = 6;
  const double x = 0.7;
  std::vector<std::vector<double>> W(N + 1, std::vector<double>(reps)), D = W;
  for (std::uint32_t r = 0; r < reps; ++r) {
    Stream rng({9, experiments::kTree, r, 0});
    const auto s = run_brw(x, N, 0, kTwoPoint, rng);
    for (std::size_t n = 0; n <= N; ++n) {
      W[n][r] = s.W[n];
      D[n][r] = s.D[n];
    }
  }
  for (std::size_t n = 1; n <= N; ++n) {
    const auto w = mean_with_se(W[n]), d = mean_with_se(D[n]);
    EXPECT_LT(std::abs(w.mean - std::exp(-x)), 4 * w.se) << n;
    EXPECT_LT(std::abs(d.mean - x * std::exp(-x)), 4 * d.se) << n;
  }
}

TEST(RunBrw, ThreadCountInvariance) {
  auto go = [](unsigned threads) {
    return parallel_map<MartingaleSeries>(64, threads, [](std::size_t r) {
      Stream rng({77, experiments::kTree, static_cast<std::uint32_t>(r), 0});
      return run_brw(0.0, 8, 2, OffspringLaw::gaussian_binary(), rng);
    });
  };
  const auto a = go(1), b = go(4);
  for (std::size_t r = 0; r < a.size(); ++r) {
    ASSERT_EQ(a[r].W, b[r].W);
    ASSERT_EQ(a[r].D, b[r].D);
    ASSERT_EQ(a[r].Wsecond, b[r].Wsecond);
  }
}

TEST(Enumerate, OneGenerationAtoms) {
  const auto dist = enumerate_exact(0.0, 1, kTwoPoint);
  EXPECT_EQ(dist.outcomes, 4u);
  ASSERT_EQ(dist.atoms.size(), 3u);
  auto prob_of = [&](double w) {
    for (const auto& a : dist.atoms)
      if (std::abs(a.W - w) < 1e-12) return a.probability;
    return -1.0;
  };
  EXPECT_NEAR(prob_of(2 * std::exp(-kA)), (1 - kQ) * (1 - kQ), 1e-15);
  EXPECT_NEAR(prob_of(std::exp(kA) + std::exp(-kA)), 2 * kQ * (1 - kQ), 1e-15);
  EXPECT_NEAR(prob_of(2 * std::exp(kA)), kQ * kQ, 1e-15);
  EXPECT_NEAR(dist.expectation([](const ExactAtom& a) { return a.W; }), 1.0, 1e-12);
  EXPECT_NEAR(dist.expectation([](const ExactAtom& a) { return a.D; }), 0.0, 1e-12);
}

TEST(Enumerate, KilledMartingaleFirstMoments) {
  const auto d2 = enumerate_exact(0.0, 2, kTwoPoint);
  EXPECT_NEAR(d2.expectation([](const ExactAtom& a) { return a.Wprime; }), 0.5, 1e-12);
  const auto d3 = enumerate_exact(0.0, 3, kTwoPoint);
  EXPECT_EQ(d3.outcomes, 4u * 16u * 256u);
  EXPECT_NEAR(d3.expectation([](const ExactAtom& a) { return a.Wprime; }), 0.375, 1e-12);
  EXPECT_NEAR(d3.expectation([](const ExactAtom& a) { return a.W; }), 1.0, 1e-12);
  const auto dx = enumerate_exact(2 * kA, 1, kTwoPoint);
  EXPECT_NEAR(dx.expectation([](const ExactAtom& a) { return a.W; }), std::exp(-2 * kA), 1e-12);
}

TEST(Enumerate, ExtinctionLaw) {
  const auto demo = OffspringLaw::extinction_demo();
  const auto d = enumerate_exact(0.0, 2, demo);
  EXPECT_NEAR(d.expectation([](const ExactAtom& a) { return a.W; }), 1.0, 1e-12);
  EXPECT_NEAR(d.expectation([](const ExactAtom& a) { return a.Wprime; }), 0.5, 1e-12);
  // P(extinct by generation 2) = 1/4 + 3/4 * (1/4)^3
  EXPECT_NEAR(d.expectation([](const ExactAtom& a) { return a.W == 0.0 ? 1.0 : 0.0; }), 0.25 + 0.75 / 64, 1e-12);
}

TEST(Enumerate, Limits) {
  EXPECT_THROW(enumerate_exact(0.0, 6, kTwoPoint), std::invalid_argument);
  EXPECT_THROW(enumerate_exact(0.0, 4, kTwoPoint, 1000), OutcomeExplosion);
  EXPECT_THROW(enumerate_exact(0.0, 1, OffspringLaw::gaussian_binary()), std::invalid_argument);
}

TEST(Csv, SeriesRows) {
  Stream rng({1, 0, 0, 0});
  const auto s = run_brw(0.0, 1, 0, kTwoPoint, rng);
  std::ostringstream os;
  write_series_header(os);
  write_series_rows(os, 3, s);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "replicate,n,W,D,Wprime,Wsecond");
  EXPECT_NE(text.find("\n3,0,1,0,1,1\n"), std::string::npos);
}

TEST(Enumerate, SecondMomentsMatchRecursion) {
  const auto demo = OffspringLaw::extinction_demo();
  for (const auto* law : {&kTwoPoint, &demo})
    for (double x : {0.0, 1.3})
      for (std::size_t n = 0; n <= (law == &demo ? 2u : 3u); ++n) {
        const auto d = enumerate_exact(x, n, *law);
        const auto m = exact_martingale_moments(x, n, *law);
        const double w2 = d.expectation([](const ExactAtom& a) { return a.W * a.W; });
        const double wd = d.expectation([](const ExactAtom& a) { return a.W * a.D; });
        const double d2 = d.expectation([](const ExactAtom& a) { return a.D * a.D; });
        EXPECT_NEAR(m.EW2, w2, 1e-12 * (1 + w2)) << law->name() << " " << x << " " << n;
        EXPECT_NEAR(m.EWD, wd, 1e-12 * (1 + std::abs(wd)));
        EXPECT_NEAR(m.ED2, d2, 1e-12 * (1 + d2));
      }
  // closed form from 0: E W_n^2 = 1.5 * 2^n - 0.5
  EXPECT_NEAR(exact_martingale_moments(0.0, 10, kTwoPoint).EW2, 1535.5, 1e-9);
  EXPECT_THROW(exact_martingale_moments(0.0, 1, OffspringLaw::gaussian_binary()), std::invalid_argument);
}
