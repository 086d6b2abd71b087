#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "brwlab/rng.hpp"
#include "brwlab/stats.hpp"

using namespace brwlab;

// Published Philox4x32-10 known-answer vectors.
TEST(Philox, KnownAnswers) {
  using philox::Counter;
  using philox::Key;
  EXPECT_EQ(philox::apply(Counter{0, 0, 0, 0}, Key{0, 0}),
            (Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox::apply(Counter{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, Key{0xffffffffu, 0xffffffffu}),
            (Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox::apply(Counter{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, Key{0xa4093822u, 0x299f31d0u}),
            (Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Stream, SameKeySameDraws) {
  const StreamKey key{42, 7, 3, 1};
  Stream a(key), b(key);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Stream, ReplicatesLookIndependent) {
  const StreamKey key{42, 7, 0, 0};
  Stream a(key.with_replicate(0)), b(key.with_replicate(1));
  std::vector<double> u(10000), v(10000);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = a.uniform();
    v[i] = b.uniform();
  }
  EXPECT_LT(std::abs(pearson(u, v)), 0.02);
}

TEST(Stream, GaussianMoments) {
  Stream rng({1, 2, 3, 4});
  const std::size_t n = 1'000'000;
  std::vector<double> x(n), x2(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    x2[i] = x[i] * x[i];
  }
  const auto m = mean_with_se(x), v = mean_with_se(x2);
  EXPECT_LT(std::abs(m.mean) / m.se, 4.0);
  EXPECT_LT(std::abs(v.mean - 1.0) / v.se, 4.0);
}

TEST(Stream, UniformRangesAndBelow) {
  Stream rng({9, 0, 0, 0});
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.uniform(), p = rng.uniform_pos();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_GT(p, 0.0);
    ASSERT_LE(p, 1.0);
    ++counts[rng.below(7)];
  }
  std::vector<double> obs(counts.begin(), counts.end()), probs(7, 1.0 / 7.0);
  EXPECT_GT(chi_square_gof(obs, probs).p_value, 0.001);
  EXPECT_THROW(rng.below(0), std::invalid_argument);
}

TEST(Stream, CoinIsFair) {
  Stream rng({5, 0, 0, 0});
  int heads = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) heads += rng.coin();
  EXPECT_LT(std::abs(heads - n / 2), 4 * std::sqrt(n / 4.0));
}
