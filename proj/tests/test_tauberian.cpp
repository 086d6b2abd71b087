#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "brwlab/tauberian.hpp"

using namespace brwlab;

namespace {
// Bounded(b): T uniform on [0, b].
double phi_bounded(double y, double b) {
  if (y >= b) return std::exp(-y) * std::expm1(b) / b;
  return (1.0 - y / b) + (1.0 - std::exp(-y)) / b;
}
// ExpLog(r), r != 1.
double phi_exp(double y, double r) { return std::exp(-r * y) + r * (std::exp(-r * y) - std::exp(-y)) / (1.0 - r); }
}  // namespace

TEST(HeavyLogLaw, TailMatchesSamples) {
  for (const auto& law : {HeavyLogLaw::pareto_log(0.9), HeavyLogLaw::pareto_log(3.0), HeavyLogLaw::exp_log(2.0),
                          HeavyLogLaw::bounded(1.5)}) {
    Stream rng({1, experiments::kTauberian, 1, 0});
    std::vector<double> t(20000);
    for (auto& v : t) v = law.sample_log(rng);
    const double d = ks_statistic(t, [&](double s) { return 1.0 - law.tail(s); });
    EXPECT_LT(std::sqrt(20000.0) * d, 1.63) << law.name();
  }
}

TEST(HeavyLogLaw, DensityIntegratesTail) {
  const auto law = HeavyLogLaw::pareto_log(1.5);
  const double mass = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double t) { return law.density(t); }, 0.0, 7.0);
  EXPECT_NEAR(mass, 1.0 - law.tail(7.0), 1e-12);
  EXPECT_THROW(HeavyLogLaw::pareto_log(0.0), std::invalid_argument);
}

TEST(Phi, AtZeroIsOneAndNonIncreasing) {
  for (const auto& law : {HeavyLogLaw::pareto_log(0.9), HeavyLogLaw::exp_log(0.5), HeavyLogLaw::bounded(2.0)}) {
    EXPECT_NEAR(phi(law, 0.0), 1.0, 1e-15);
    double prev = 1.0;
    for (double y = 0.05; y < 30.0; y += 0.05) {
      const double v = phi(law, y);
      EXPECT_LE(v, prev + 1e-13) << law.name() << " " << y;
      EXPECT_GT(v, 0.0);
      prev = v;
    }
  }
}

TEST(Phi, ClosedForms) {
  for (double y : {0.0, 0.3, 1.0, 1.7, 5.0, 20.0}) {
    EXPECT_NEAR(phi(HeavyLogLaw::bounded(1.2), y), phi_bounded(y, 1.2), 1e-12) << y;
    EXPECT_NEAR(phi(HeavyLogLaw::exp_log(3.0), y), phi_exp(y, 3.0), 1e-12) << y;
  }
}

TEST(Phi, DegenerateYIsExponential) {
  // Y -> 1 gives phi(y) = e^-y
  const auto law = HeavyLogLaw::bounded(1e-6);
  for (double y : {0.5, 1.0, 3.0}) EXPECT_NEAR(phi(law, y), std::exp(-y), 1e-6);
}

TEST(Phi, MonteCarloAgrees) {
  const auto law = HeavyLogLaw::pareto_log(1.5);
  for (double y : {0.5, 2.0, 8.0}) {
    const auto mc = phi_mc(law, y, 40000, {2, experiments::kTauberian, 2, 0});
    EXPECT_LT(std::abs(mc.mean - phi(law, y)), 4 * mc.se) << y;
  }
}

TEST(Rho, Handles) {
  EXPECT_EQ(RhoFn::power(1.0)(3.0), 3.0);
  EXPECT_EQ(RhoFn::constant()(7.0), 1.0);
  EXPECT_NEAR(RhoFn::y_log_y()(2.0), 2.0 * std::log(3.0), 1e-15);
  EXPECT_EQ(RhoFn::y_log_y().index(), 1.0);
  EXPECT_THROW(RhoFn::power(-1.0), std::invalid_argument);
  EXPECT_THROW(RhoFn::power(2.5), std::invalid_argument);
}

TEST(Tauberian, PartialMomentsClosedForm) {
  const auto law = HeavyLogLaw::pareto_log(3.0);
  const auto r = tauberian_check(law, RhoFn::power(1.0), default_T_grid(), 1000, 3);
  for (std::size_t i = 0; i < r.T_grid.size(); ++i) {
    const double u = 1.0 + r.T_grid[i];
    const double m = 1.0 + 3.0 * (-1.0 / u + 1.0 / (u * u) - 1.0 / (3.0 * u * u * u));
    EXPECT_NEAR(r.moments[i], m, 1e-8) << r.T_grid[i];
  }
}

TEST(Tauberian, PartialIntegralBySimpson) {
  const double b = 1.0;
  const auto r = tauberian_check(HeavyLogLaw::bounded(b), RhoFn::power(1.0), std::vector<double>{10.0, 100.0}, 100, 4);
  auto simpson = [&](double lo, double hi, int m) {
    const double h = (hi - lo) / m;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double y = lo + i * h;
      s += (i == 0 || i == m ? 1 : (i % 2 ? 4 : 2)) * phi_bounded(y, b) * y;
    }
    return s * h / 3;
  };
  EXPECT_NEAR(r.integrals[0], simpson(0, 1, 2000) + simpson(1, 10, 20000), 1e-9);
  EXPECT_EQ(r.integral_side, Finiteness::Finite);
}

TEST(Tauberian, ShippedPairsClassified) {
  const std::vector<bool> finite{true, true, false, false};
  const auto pairs = shipped_tauberian_pairs();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto r = tauberian_check(pairs[i].first, pairs[i].second, default_T_grid(), 20000, 5);
    EXPECT_TRUE(r.consistent()) << r.law << " " << r.integral_slope << " " << r.moment_slope;
    EXPECT_TRUE(r.matches_prediction()) << r.law;
    EXPECT_EQ(r.predicted_finite, finite[i]) << r.law;
    if (finite[i]) EXPECT_GT(r.mc_moment.se, 0.0);
  }
}

TEST(Tauberian, MomentFinitenessTable) {
  EXPECT_TRUE(moment_finite(HeavyLogLaw::pareto_log(2.5), RhoFn::power(1.0)));
  EXPECT_FALSE(moment_finite(HeavyLogLaw::pareto_log(2.0), RhoFn::power(1.0)));
  EXPECT_FALSE(moment_finite(HeavyLogLaw::pareto_log(2.0), RhoFn::y_log_y()));
  EXPECT_TRUE(moment_finite(HeavyLogLaw::pareto_log(1.1), RhoFn::constant()));
  EXPECT_TRUE(moment_finite(HeavyLogLaw::exp_log(0.1), RhoFn::y_log_y()));
}

TEST(Tauberian, ErrorsAndCsv) {
  const auto law = HeavyLogLaw::bounded();
  const auto rho = RhoFn::constant();
  EXPECT_THROW(tauberian_check(law, rho, std::vector<double>{10.0}, 10, 1), std::invalid_argument);
  EXPECT_THROW(tauberian_check(law, rho, std::vector<double>{10.0, 1.0}, 10, 1), std::invalid_argument);
  const auto r = tauberian_check(law, rho, std::vector<double>{1.0, 10.0}, 10, 1);
  std::ostringstream os;
  write_tauberian_csv(os, r);
  EXPECT_EQ(os.str().substr(0, 17), "T,integral,moment");
}
