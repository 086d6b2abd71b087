#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "brwlab/offspring.hpp"
#include "brwlab/spine.hpp"

using namespace brwlab;

namespace {

// Gaussian displacements: nested quadrature of g(x1, x2) against N(mu, s2)^2.
template <class G>
double gaussian_pair_integral(double mu, double s2, G g) {
  using boost::math::quadrature::gauss_kronrod;
  const double s = std::sqrt(s2);
  auto pdf = [&](double x) { return std::exp(-(x - mu) * (x - mu) / (2 * s2)) / std::sqrt(2 * std::numbers::pi * s2); };
  auto outer = [&](double x1) {
    auto inner = [&](double x2) { return pdf(x2) * g(x1, x2); };
    return pdf(x1) * gauss_kronrod<double, 61>::integrate(inner, mu - 12 * s, mu + 12 * s, 8, 1e-13);
  };
  return gauss_kronrod<double, 61>::integrate(outer, mu - 12 * s, mu + 12 * s, 8, 1e-13);
}

}  // namespace

TEST(TwoPoint, ClosedForm) {
  const auto law = OffspringLaw::two_point();
  const double a = law.params()[0], q = law.params()[1];
  EXPECT_NEAR(a, 1.316958, 1e-6);
  EXPECT_NEAR(q, 0.066987, 1e-6);
  EXPECT_NEAR(std::cosh(a), 2.0, 1e-12);
  // Both boundary equations, solved by hand.
  EXPECT_NEAR(2 * (q * std::exp(a) + (1 - q) * std::exp(-a)), 1.0, 1e-12);
  EXPECT_NEAR(-a * q * std::exp(a) + a * (1 - q) * std::exp(-a), 0.0, 1e-12);
  const auto r = law.analytic_residuals();
  ASSERT_TRUE(r);
  EXPECT_LT(std::abs(r->mass), 1e-12);
  EXPECT_LT(std::abs(r->drift), 1e-12);
  EXPECT_NEAR(law.sigma2(), a * a, 1e-12);
  EXPECT_NEAR(law.sigma2(), 1.734379, 1e-6);
  EXPECT_EQ(law.lattice_span(), a);
  EXPECT_EQ(law.mean_offspring(), 2.0);
}

TEST(TwoPoint, SpineStepIsFairCoin) {
  const auto law = OffspringLaw::two_point();
  const double a = law.params()[0];
  const auto atoms = SizeBiasedSampler(law).step_atoms();
  ASSERT_EQ(atoms.size(), 2u);
  EXPECT_EQ(atoms[0].first, -a);
  EXPECT_NEAR(atoms[0].second, 0.5, 1e-12);
  EXPECT_EQ(atoms[1].first, a);
  EXPECT_NEAR(atoms[1].second, 0.5, 1e-12);
  EXPECT_NEAR(2 * law.params()[1] * std::exp(a), 0.5, 1e-12);
}

TEST(GaussianBinary, ClosedForm) {
  const auto law = OffspringLaw::gaussian_binary();
  EXPECT_NEAR(law.params()[1], 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(law.params()[2], 1.386294, 1e-6);
  const auto r = law.analytic_residuals();
  ASSERT_TRUE(r);
  EXPECT_LT(std::abs(r->mass), 1e-12);
  EXPECT_LT(std::abs(r->drift), 1e-12);
  EXPECT_NEAR(law.sigma2(), 2 * std::log(2.0), 1e-12);
  EXPECT_EQ(law.lattice_span(), 0.0);
  EXPECT_NEAR(std::sqrt(2 / (std::numbers::pi * law.sigma2())), 0.677666, 1e-5);
  // Quadrature of the defining integrals.
  const double mu = law.params()[1], s2 = law.params()[2];
  EXPECT_NEAR(gaussian_pair_integral(mu, s2, [](double x1, double x2) { return std::exp(-x1) + std::exp(-x2); }), 1.0, 1e-10);
  EXPECT_NEAR(gaussian_pair_integral(mu, s2, [](double x1, double x2) { return x1 * std::exp(-x1) + x2 * std::exp(-x2); }),
              0.0, 1e-10);
  EXPECT_NEAR(gaussian_pair_integral(mu, s2, [](double x1, double x2) { return x1 * x1 * std::exp(-x1) + x2 * x2 * std::exp(-x2); }),
              law.sigma2(), 1e-10);
}

TEST(VerifyBoundary, ShippedLawsWithinFourSe) {
  for (const auto& law : {OffspringLaw::two_point(), OffspringLaw::gaussian_binary(), OffspringLaw::extinction_demo()}) {
    Stream rng({2024, experiments::kBoundary, 0, 0});
    const auto r = verify_boundary(law, 100000, rng);
    EXPECT_LT(std::abs(r.mass.mean), 4 * r.mass.se) << law.name();
    EXPECT_LT(std::abs(r.drift.mean), 4 * r.drift.se) << law.name();
  }
}

TEST(VerifyBoundary, ChildrenAtZero) {
  const auto law = OffspringLaw::finite("zeros", {{{0.0, 0.0, 0.0}, 1.0}});
  Stream rng({1, 0, 0, 0});
  const auto r = verify_boundary(law, 1000, rng);
  EXPECT_EQ(r.mass.mean, 2.0);
  EXPECT_EQ(r.drift.mean, 0.0);
}

TEST(VerifyBoundary, DegenerateLawThrows) {
  const auto law = OffspringLaw::finite("barren", {{{}, 1.0}});
  Stream rng({1, 0, 0, 0});
  EXPECT_THROW(verify_boundary(law, 1000, rng), DegenerateLaw);
  EXPECT_THROW(verify_boundary(OffspringLaw::two_point(), 999, rng), std::invalid_argument);
}

TEST(Moments, TwoPointBoundedAndExact) {
  const auto law = OffspringLaw::two_point();
  const double a = law.params()[0], q = law.params()[1];
  // Four outcomes by hand.
  auto wl = [](double w) { return w > 1 ? w * std::log(w) * std::log(w) : 0.0; };
  const double expected = (1 - q) * (1 - q) * wl(2 * std::exp(-a)) + 2 * q * (1 - q) * wl(std::exp(a) + std::exp(-a)) +
                          q * q * wl(2 * std::exp(a));
  const auto [w, z] = exact_moments(law);
  EXPECT_NEAR(w, expected, 1e-12);
  EXPECT_LT(w, 2 * std::exp(a) * std::pow(std::log(2 * std::exp(a)), 2));
  Stream rng({7, experiments::kMoments, 0, 0});
  const auto m = moment_diagnostics(law, 100000, rng);
  EXPECT_LT(std::abs(m.w_log2_w.mean - w), 4 * m.w_log2_w.se);
  EXPECT_LE(std::abs(m.z_log_z.mean - z), 4 * m.z_log_z.se);
  EXPECT_EQ(z, 0.0);  // Z1 <= 2a e^{-a} < 1
  EXPECT_TRUE(m.likely_finite);
}

TEST(Moments, GaussianMatchesQuadrature) {
  const auto law = OffspringLaw::gaussian_binary();
  const double mu = law.params()[1], s2 = law.params()[2];
  const double w_exact = gaussian_pair_integral(mu, s2, [](double x1, double x2) {
    const double w = std::exp(-x1) + std::exp(-x2);
    return w * log_plus(w) * log_plus(w);
  });
  const double z_exact = gaussian_pair_integral(mu, s2, [](double x1, double x2) {
    const double z = std::max(x1, 0.0) * std::exp(-x1) + std::max(x2, 0.0) * std::exp(-x2);
    return z * log_plus(z);
  });
  Stream rng({8, experiments::kMoments, 0, 0});
  const auto m = moment_diagnostics(law, 100000, rng);
  EXPECT_LT(std::abs(m.w_log2_w.mean - w_exact), 4 * m.w_log2_w.se);
  EXPECT_LT(std::abs(m.z_log_z.mean - z_exact), 4 * m.z_log_z.se + 1e-12);
  EXPECT_TRUE(std::isfinite(m.w_log2_w.mean));
}

TEST(Moments, DeterministicChildren) {
  const auto law = OffspringLaw::finite("zeros", {{{0.0, 0.0, 0.0}, 1.0}});
  Stream rng({1, 0, 0, 0});
  const auto m = moment_diagnostics(law, 1000, rng);
  EXPECT_NEAR(m.w_log2_w.mean, 3 * std::log(3.0) * std::log(3.0), 1e-12);
}

TEST(Calibrate, FiniteLawSolvedExactly) {
  const auto base = OffspringLaw::finite("lattice", {{{-1.0, 1.0}, 0.5}, {{0.0, 1.0, 2.0}, 0.5}}, 1.0);
  const auto law = OffspringLaw::calibrate(base);
  const auto r = law.analytic_residuals();
  ASSERT_TRUE(r);
  EXPECT_LT(std::abs(r->mass), 1e-10);
  EXPECT_LT(std::abs(r->drift), 1e-10);
  EXPECT_GT(law.params()[0], 0.0);
  EXPECT_NEAR(law.lattice_span(), law.params()[0], 1e-15);
}

TEST(Calibrate, ShippedFamiliesAreFixedPoints) {
  const auto demo = OffspringLaw::extinction_demo();
  const auto r = demo.analytic_residuals();
  EXPECT_LT(std::abs(r->mass), 1e-12);
  EXPECT_LT(std::abs(r->drift), 1e-12);
  EXPECT_NEAR(demo.mean_offspring(), 9.0 / 4.0, 1e-12);
  const auto again = OffspringLaw::calibrate(demo);
  EXPECT_NEAR(again.params()[0], 1.0, 1e-9);
  EXPECT_NEAR(again.params()[1], 0.0, 1e-9);
  EXPECT_NEAR(demo.sigma2(), demo.lattice_span() * demo.lattice_span(), 1e-12);
}

TEST(Calibrate, SubcriticalRejected) {
  const auto base = OffspringLaw::finite("thin", {{{}, 0.5}, {{1.0}, 0.5}});
  EXPECT_THROW(OffspringLaw::calibrate(base), CalibrationError);
}

TEST(Calibrate, SampledLaw) {
  // Two or three children, uniform displacements on (-1, 1).
  ChildSampler sampler = [](Stream& rng, ChildSet& out) {
    out.clear();
    const int m = rng.coin() ? 3 : 2;
    for (int i = 0; i < m; ++i) out.push_back(2 * rng.uniform() - 1);
  };
  Stream cal({3, experiments::kCalibration, 0, 0});
  const auto base = OffspringLaw::sampled("uniform", sampler, 0.0, 1000, cal);
  const auto law = OffspringLaw::calibrate(base, 1'000'000, &cal);
  Stream rng({3, experiments::kBoundary, 0, 0});
  const auto r = verify_boundary(law, 100000, rng);
  EXPECT_LT(std::abs(r.mass.mean), 4 * r.mass.se);
  EXPECT_LT(std::abs(r.drift.mean), 4 * r.drift.se);
  EXPECT_GT(law.sigma2(), 0.0);
}

TEST(Config, RoundTrip) {
  for (const auto& law : {OffspringLaw::two_point(), OffspringLaw::gaussian_binary(), OffspringLaw::extinction_demo()}) {
    const auto text = to_config(law);
    const auto back = law_from_config(text);
    EXPECT_EQ(back.kind(), law.kind());
    ASSERT_EQ(back.params().size(), law.params().size());
    for (std::size_t i = 0; i < law.params().size(); ++i) EXPECT_EQ(back.params()[i], law.params()[i]);
    EXPECT_NEAR(back.sigma2(), law.sigma2(), 1e-14);
    EXPECT_EQ(to_config(back), text);
  }
}

TEST(Config, StrictKeys) {
  EXPECT_THROW(law_from_config("[law]\nfamily = two-point\nfoo = 1\n"), std::invalid_argument);
  EXPECT_THROW(law_from_config("[law]\nfamily = two-point\na = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(law_from_config("[law]\nfamily = nope\n"), std::invalid_argument);
  EXPECT_THROW(law_by_name("nope"), std::invalid_argument);
}
