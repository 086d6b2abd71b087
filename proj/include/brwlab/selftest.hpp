#pragma once

// The invariant suite behind `brwlab selftest` and the acceptance binary. The
// full budget runs every check at its reference sample size; the small budget
// shrinks sample sizes only, never tolerances.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "brwlab/brw.hpp"
#include "brwlab/fluctuation.hpp"
#include "brwlab/green.hpp"
#include "brwlab/kozlov.hpp"
#include "brwlab/limits.hpp"
#include "brwlab/offspring.hpp"
#include "brwlab/output.hpp"
#include "brwlab/parallel.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"
#include "brwlab/tauberian.hpp"

namespace brwlab {

enum class Budget { Small, Full };

inline Budget budget_from_string(const std::string& s) {
  if (s == "small") return Budget::Small;
  if (s == "full") return Budget::Full;
  throw std::invalid_argument("budget must be 'small' or 'full', got '" + s + "'");
}

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  bool warning = false;  // soft sub-check missed; does not fail the criterion
  std::string detail;
  double seconds = 0.0;
  double time_limit = 0.0;  // seconds; 0 when not timed
};

struct SelftestOptions {
  Budget budget = Budget::Small;
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  unsigned determinism_threads = 8;
  bool enforce_time = true;  // time limits apply at the full budget only
};

namespace selftest_detail {

inline std::size_t pick(const SelftestOptions& o, std::size_t full, std::size_t small) {
  return o.budget == Budget::Full ? full : small;
}

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

inline double a_two_point() { return OffspringLaw::two_point().params()[0]; }

inline RenewalFn renewal_two_point() {
  const double a = a_two_point();
  return [a](double x) { return renewal_simple_walk(a, x); };
}

inline std::string series_csv(const std::vector<MartingaleSeries>& series, const Provenance& p) {
  std::ostringstream os;
  write_provenance(os, p);
  write_series_header(os);
  for (std::size_t r = 0; r < series.size(); ++r) write_series_rows(os, r, series[r]);
  return os.str();
}

inline std::string seneta_heyde_csv(const SenetaHeydeRun& run, const Provenance& p) {
  std::ostringstream os;
  write_provenance(os, p);
  write_seneta_heyde_csv(os, run);
  return os.str();
}

}  // namespace selftest_detail

/// Runs the suite, streaming one line per criterion to `log` when given.
class Selftest {
 public:
  explicit Selftest(SelftestOptions opt) : opt_(opt) {}

  std::vector<CriterionResult> run(std::ostream* log = nullptr) {
    using Fn = CriterionResult (Selftest::*)();
    const std::vector<Fn> order{&Selftest::calibration,    &Selftest::martingales, &Selftest::oracle,
                                &Selftest::many_to_one,    &Selftest::fluctuation, &Selftest::kozlov,
                                &Selftest::first_moment,   &Selftest::seneta_heyde, &Selftest::laplace,
                                &Selftest::truncated,      &Selftest::doob,        &Selftest::tauberian,
                                &Selftest::determinism};
    std::vector<CriterionResult> out;
    for (auto fn : order) {
      const auto t0 = std::chrono::steady_clock::now();
      CriterionResult r;
      try {
        r = (this->*fn)();
      } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
      }
      r.id = static_cast<int>(out.size()) + 1;
      if (r.name.empty()) r.name = "criterion";
      r.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (opt_.enforce_time && opt_.budget == Budget::Full && r.time_limit > 0.0 && r.seconds > r.time_limit) {
        r.pass = false;
        r.detail += " | runtime " + selftest_detail::fmt(r.seconds) + " s over " +
                    selftest_detail::fmt(r.time_limit) + " s";
      }
      if (log) *log << format_line(r) << std::endl;
      out.push_back(std::move(r));
    }
    return out;
  }

  static std::string format_line(const CriterionResult& r) {
    std::ostringstream os;
    os << (r.pass ? "PASS" : "FAIL") << (r.warning ? " (warn)" : "") << "  [" << r.id << "] " << r.name << "  ("
       << selftest_detail::fmt(r.seconds, 3) << " s)  " << r.detail;
    return os.str();
  }

  CriterionResult calibration() {
    using selftest_detail::fmt;
    CriterionResult r{0, "calibration exactness", true};
    r.time_limit = 1.0;
    const auto tp = OffspringLaw::two_point(), gb = OffspringLaw::gaussian_binary();
    double worst = 0.0;
    for (const auto* law : {&tp, &gb}) {
      const auto res = *law->analytic_residuals();
      worst = std::max({worst, std::abs(res.mass), std::abs(res.drift)});
    }
    const double a = tp.params()[0];
    const double e_tp = std::abs(tp.sigma2() - a * a);
    const double e_gb = std::abs(gb.sigma2() - 2.0 * std::numbers::ln2);
    const double e_a = std::abs(a - std::log(2.0 + std::sqrt(3.0)));
    r.pass = worst < 1e-12 && e_tp < 1e-12 && e_gb < 1e-12 && e_a < 1e-12;
    r.detail = "max residual " + fmt(worst) + ", sigma2 errors " + fmt(e_tp) + " / " + fmt(e_gb);
    return r;
  }

  CriterionResult martingales() {
    using selftest_detail::fmt;
    CriterionResult r{0, "martingale identities", false};
    r.time_limit = 60.0;
    const std::size_t reps = selftest_detail::pick(opt_, 100000, 20000);
    series2_ = simulate_series(OffspringLaw::two_point(), 0.0, 10, reps, opt_.seed, opt_.threads, experiments::kTree);
    std::vector<double> w(reps), d(reps);
    for (std::size_t i = 0; i < reps; ++i) {
      w[i] = series2_[i].W[10];
      d[i] = series2_[i].D[10];
    }
    const auto W = mean_with_se(w), D = mean_with_se(d);
    // SE of the mean from the exact variance; the sample SE is reported alongside
    const auto m = exact_martingale_moments(0.0, 10, OffspringLaw::two_point());
    const double n = static_cast<double>(reps);
    const double se_w = std::sqrt(m.var_W() / n), se_d = std::sqrt(m.var_D() / n);
    const double zw = std::abs(W.mean - 1.0) / se_w, zd = std::abs(D.mean) / se_d;
    r.pass = zw < 4.0 && zd < 4.0;
    r.detail = "E W_10 = " + fmt(W.mean, 5) + " (z " + fmt(zw, 3) + ", sample-SE z " +
               fmt(std::abs(W.mean - 1.0) / W.se, 3) + "), E D_10 = " + fmt(D.mean, 5) + " (z " + fmt(zd, 3) +
               ", sample-SE z " + fmt(std::abs(D.mean) / D.se, 3) + "), reps " + std::to_string(reps);
    return r;
  }

  CriterionResult oracle() {
    using selftest_detail::fmt;
    CriterionResult r{0, "oracle equivalence n <= 3", true};
    r.time_limit = 60.0;
    const std::size_t reps = selftest_detail::pick(opt_, 100000, 20000);
    const auto law = OffspringLaw::two_point();
    const auto series = simulate_series(law, 0.0, 3, reps, opt_.seed, opt_.threads, experiments::kOracle);
    double min_p = 1.0, max_z = 0.0;
    std::size_t missing = 0;
    for (std::size_t n = 1; n <= 3; ++n) {
      const auto dist = enumerate_exact(0.0, n, law);
      std::vector<double> counts(dist.atoms.size(), 0.0), probs;
      for (const auto& s : series) {
        const auto i = dist.find(s.W[n], s.D[n], s.Wprime[n]);
        if (i == dist.atoms.size())
          ++missing;
        else
          counts[i] += 1.0;
      }
      for (const auto& a : dist.atoms) probs.push_back(a.probability);
      min_p = std::min(min_p, chi_square_gof(counts, probs).p_value);
      const std::vector<std::function<double(const ExactAtom&)>> fs{[](const ExactAtom& a) { return a.W; },
                                                                    [](const ExactAtom& a) { return a.D; },
                                                                    [](const ExactAtom& a) { return a.Wprime; }};
      for (std::size_t j = 0; j < fs.size(); ++j) {
        std::vector<double> v(reps);
        for (std::size_t i = 0; i < reps; ++i) {
          const auto& s = series[i];
          v[i] = fs[j](ExactAtom{s.W[n], s.D[n], s.Wprime[n], 0.0});
        }
        const auto e = mean_with_se(v);
        const double exact = dist.expectation(fs[j]);
        max_z = std::max(max_z, e.se > 0 ? std::abs(e.mean - exact) / e.se : (e.mean == exact ? 0.0 : 1e9));
      }
    }
    r.pass = missing == 0 && min_p > 0.001 && max_z < 4.0;
    r.detail = "min chi-square p " + fmt(min_p) + ", max z " + fmt(max_z, 3) + ", unmatched " + std::to_string(missing);
    return r;
  }

  CriterionResult many_to_one() {
    using selftest_detail::fmt;
    CriterionResult r{0, "many-to-one tree vs spine", true};
    r.time_limit = 120.0;
    const auto law = OffspringLaw::two_point();
    const double a = selftest_detail::a_two_point();
    const std::vector<TestFunctional> fs{TestFunctional::constant(), TestFunctional::survival(),
                                         TestFunctional::laplace(-0.5)};
    const std::size_t reps = selftest_detail::pick(opt_, 20000, 4000);
    double max_z = 0.0, max_exact = 0.0;
    for (double x : {0.0, 2 * a})
      for (std::size_t n : {3u, 8u}) {
        const auto ms = many_to_one_check(x, n, fs, law, reps, opt_.seed, opt_.threads);
        for (std::size_t j = 0; j < ms.size(); ++j) {
          auto tree = ms[j].tree;
          if (j == 0)  // H = 1: the tree side is W_n, whose variance is known exactly
            tree.se = std::sqrt(exact_martingale_moments(x, n, law).var_W() / static_cast<double>(reps));
          max_z = std::max(max_z, z_distance(tree, ms[j].spine));
        }
      }
    for (double x : {0.0, 2 * a})
      for (std::size_t n = 0; n <= 3; ++n)
        for (const auto& f : fs) {
          const ParticleFunctional H = [f](double p, double m) { return f(p, m); };
          const double tree = exact_additive_expectation(x, n, law, H);
          const double spine = exact_spine_expectation(x, n, law, H);
          max_exact = std::max(max_exact, std::abs(tree - spine));
        }
    r.pass = max_z < 4.0 && max_exact < 1e-12;
    r.detail = "max z " + fmt(max_z, 3) + ", exact n<=3 max |diff| " + fmt(max_exact);
    return r;
  }

  CriterionResult fluctuation() {
    using selftest_detail::fmt;
    CriterionResult r{0, "fluctuation oracles", true};
    r.time_limit = 300.0;
    const auto law = OffspringLaw::two_point();
    const SpineWalk walk(law);
    const double a = selftest_detail::a_two_point();
    std::vector<std::string> fails;

    // R exact
    const auto R = *exact_renewal(walk);
    const auto mu_exact = RenewalMeasure::exact_simple_walk(a, LadderKind::Descending, 20 * a);
    for (int k = 0; k < 60; ++k) {
      const double x = 0.33 * k * a;
      const double expect = 1.0 + std::floor(x / a + 1e-9);
      if (R(x) != expect || mu_exact.cdf(x) != expect) fails.push_back("R(" + fmt(x) + ")");
    }

    // harmonicity
    const auto Rbar = [a](double x) { return renewal_simple_walk_weak(a, x); };
    const std::vector<double> xs{0.0, a, 2.5 * a, 6 * a};
    for (const auto& p : harmonicity_residual_exact(walk, R, Rbar, xs))
      if (p.residual() > 1e-12) fails.push_back("harmonic exact x=" + fmt(p.x));
    const std::size_t hreps = selftest_detail::pick(opt_, 100000, 20000);
    for (const auto& p : harmonicity_residual_mc(walk, R, Rbar, xs, hreps, opt_.seed))
      if (p.residual() >= 4 * p.R_se + 1e-12) fails.push_back("harmonic mc x=" + fmt(p.x));

    // c= three ways
    double c_worst = 0.0;
    for (auto m : {CEqualsMethod::NegExcursion, CEqualsMethod::PosExcursion, CEqualsMethod::ExpSeries})
      c_worst = std::max(c_worst, std::abs(c_equals(walk, m, 10000).value - 2.0) / 2.0);
    if (c_worst >= 0.01) fails.push_back("c= rel err " + fmt(c_worst));
    const double c = c_equals(walk, CEqualsMethod::ExpSeries).value;

    // weak = c strict
    const std::size_t lpaths = selftest_detail::pick(opt_, 4000, 1500);
    const auto strict =
        RenewalMeasure::from_ladder_paths(walk, LadderKind::Descending, 6 * a, lpaths, 100000, opt_.seed, opt_.threads);
    const auto weak = RenewalMeasure::from_ladder_paths(walk, LadderKind::WeakDescending, 6 * a, lpaths, 100000,
                                                        opt_.seed, opt_.threads);
    for (int k = 0; k < 10; ++k) {
      const double x = 0.5 * k * a;
      const auto s = strict.cdf_estimate(x), w = weak.cdf_estimate(x);
      if (std::abs(w.mean - c * s.mean) >
          4 * std::hypot(w.se, c * s.se) + weak.truncation_bound(x) + c * strict.truncation_bound(x))
        fails.push_back("mu= != c mu at " + fmt(x));
    }

    // Green
    GreenBudget budget;
    budget.paths = selftest_detail::pick(opt_, 20000, 5000);
    const auto setup = prepare_green(walk, budget, opt_.seed, opt_.threads);
    const auto delta = green_functions::indicator(-a / 2, a / 2);
    const auto g_formula = green_operator(0.0, delta, GreenMethod::RenewalFormula, walk, setup, budget, opt_.seed);
    const auto g_mc = green_operator(0.0, delta, GreenMethod::PathMc, walk, setup, budget, opt_.seed, opt_.threads);
    const GreenQuery two{0.0, 2.0, 0.0};
    if (!green_agree(g_formula, two, 3.0) || !green_agree(g_mc, two, 3.0)) fails.push_back("G delta_0 (0)");
    std::size_t agree = 0;
    for (double x : {0.0, a, 2 * a, 5 * a}) {
      const auto f = green_functions::lorentzian();
      const auto u = green_operator(x, f, GreenMethod::RenewalFormula, walk, setup, budget, opt_.seed);
      const auto v = green_operator(x, f, GreenMethod::PathMc, walk, setup, budget, opt_.seed, opt_.threads);
      if (green_agree(u, v, 3.0))
        ++agree;
      else
        fails.push_back("G lorentzian x=" + fmt(x));
    }
    r.pass = fails.empty();
    std::string why;
    for (const auto& f : fails) why += (why.empty() ? "" : "; ") + f;
    r.detail = "c= max rel err " + fmt(c_worst) + ", G delta_0(0) " + fmt(g_formula.value, 5) + " / " +
               fmt(g_mc.value, 5) + ", general f " + std::to_string(agree) + "/4" + (why.empty() ? "" : " | " + why);
    return r;
  }

  CriterionResult kozlov() {
    using selftest_detail::fmt;
    CriterionResult r{0, "Kozlov survival asymptotics", true};
    r.time_limit = 60.0;
    const SpineWalk walk(OffspringLaw::two_point());
    const auto curve = survival_curve_lattice(*walk.lattice(), 0.0, 20);
    double worst = 0.0;
    for (std::size_t n = 0; n <= 20; ++n) worst = std::max(worst, std::abs(curve[n] - central_binomial_probability(n)));
    const auto big = survival_curve_lattice(*walk.lattice(), 0.0, 10000);
    const double scaled = 100.0 * big.back();
    const double target = std::sqrt(2.0 / std::numbers::pi);
    const double rel = std::abs(scaled - target) / target;
    r.pass = worst < 1e-12 && rel < 0.05;
    r.detail = "max |m_n - binom| " + fmt(worst) + ", sqrt(n) m_n at 1e4 = " + fmt(scaled, 6) + " (rel " + fmt(rel, 3) +
               ")";
    return r;
  }

  CriterionResult first_moment() {
    using selftest_detail::fmt;
    CriterionResult r{0, "first moment of W' two routes", true};
    r.time_limit = 120.0;
    const auto law = OffspringLaw::two_point();
    const double a = selftest_detail::a_two_point();
    const std::vector<double> xs{0.0, 2 * a};
    const std::vector<std::size_t> ns{3, 8, 12};
    const auto R = selftest_detail::renewal_two_point();
    const auto k = kozlov_constants(SpineWalk(law), R, xs, 12);
    const std::size_t reps = selftest_detail::pick(opt_, 4000, 1000);
    const auto rep = first_moment_wprime(law, xs, ns, reps, R, k, opt_.seed, opt_.threads);
    r.pass = rep.max_z() < 4.0 && rep.upper_bound_holds(4.0);
    r.detail = "max z " + fmt(rep.max_z(), 3) + ", theta' " + fmt(k.theta_prime, 5) + ", bound " +
               (rep.upper_bound_holds(4.0) ? "holds" : "violated");
    return r;
  }

  CriterionResult seneta_heyde() {
    using selftest_detail::fmt;
    CriterionResult r{0, "Seneta-Heyde discrepancy trend", true};
    r.time_limit = 900.0;
    sh_opt_ = SenetaHeydeOptions{};
    sh_opt_.replicates = selftest_detail::pick(opt_, 2000, 400);
    sh_ = seneta_heyde_experiment(OffspringLaw::gaussian_binary(), sh_opt_, opt_.seed, opt_.threads);
    const auto trend = sh_.discrepancy_trend();
    const double corr = sh_.points.back().correlation;
    const double rank = sh_.points.back().rank_correlation;
    r.pass = trend.pass && corr >= 0.9;
    std::string d;
    for (double v : sh_.discrepancies()) d += (d.empty() ? "" : ", ") + fmt(v, 4);
    r.detail = "discrepancy (" + d + "), inversions " + std::to_string(trend.inversions) + ", Pearson at n=20 " +
               fmt(corr, 4) + " (Spearman " + fmt(rank, 4) + ", diagnostic only)";
    return r;
  }

  CriterionResult laplace() {
    using selftest_detail::fmt;
    CriterionResult r{0, "Laplace gap trend", true};
    if (sh_.points.empty()) throw std::logic_error("laplace check needs the Seneta-Heyde run");
    const auto trend = sh_.laplace_trend();
    r.pass = trend.pass;
    std::string d;
    for (double v : sh_.laplace_gaps()) d += (d.empty() ? "" : ", ") + fmt(v, 4);
    r.detail = "sup gap (" + d + "), inversions " + std::to_string(trend.inversions) + ", clamped limits " +
               std::to_string(sh_.negative_limits);
    return r;
  }

  CriterionResult truncated() {
    using selftest_detail::fmt;
    CriterionResult r{0, "truncated moment probe", true};
    r.time_limit = 300.0;
    const double a = selftest_detail::a_two_point();
    const std::vector<double> xs{0.0, 2 * a, 5 * a}, eps{0.5};
    const std::size_t reps = selftest_detail::pick(opt_, 20000, 4000);
    const auto rows = truncated_moment_probe(OffspringLaw::two_point(), xs, 12, eps, reps,
                                             selftest_detail::renewal_two_point(), opt_.seed, opt_.threads);
    const auto v = truncated_ratios(rows, 0.5);
    r.pass = v.size() == 3 && v[0] > v[1] && v[1] > v[2];
    std::string d;
    for (double x : v) d += (d.empty() ? "" : ", ") + fmt(x, 4);
    r.detail = "ratios at x = 0, 2a, 5a: " + d;
    return r;
  }

  CriterionResult doob() {
    using selftest_detail::fmt;
    CriterionResult r{0, "Doob transform", true};
    r.time_limit = 180.0;
    const auto law = OffspringLaw::two_point();
    const auto R = selftest_detail::renewal_two_point();
    const std::size_t reps = selftest_detail::pick(opt_, 20000, 5000);
    double max_z = 0.0;
    for (std::size_t n : {10u, 100u, 1000u}) {
      const auto e = sample_p_plus(0.0, n, law, reps, R, opt_.seed, opt_.threads);
      max_z = std::max(max_z, std::abs(e.mean_weight.mean - 1.0) / e.mean_weight.se);
    }
    const std::size_t breps = selftest_detail::pick(opt_, 200000, 50000);
    const auto big = sample_p_plus(0.0, 10000, law, breps, R, opt_.seed, opt_.threads);
    const double ks = big.bessel_ks(law.sigma2());
    r.pass = max_z < 4.0;
    r.warning = !(ks < 0.05);
    r.detail = "max weight z " + fmt(max_z, 3) + ", Bessel(3) weighted KS " + fmt(ks, 3) + " (ess " +
               fmt(big.ess, 4) + ")" + (r.warning ? " over 0.05, soft" : "");
    return r;
  }

  CriterionResult tauberian() {
    CriterionResult r{0, "Tauberian classification", true};
    r.time_limit = 120.0;
    std::string d;
    for (const auto& [law, rho] : shipped_tauberian_pairs()) {
      const auto t = tauberian_check(law, rho, default_T_grid(), selftest_detail::pick(opt_, 100000, 20000), opt_.seed);
      r.pass = r.pass && t.matches_prediction();
      d += (d.empty() ? "" : ", ") + t.law + "/" + t.rho + " " + to_string(t.classification);
    }
    r.detail = d;
    return r;
  }

  CriterionResult determinism() {
    CriterionResult r{0, "determinism across thread counts", true};
    if (series2_.empty() || sh_.points.empty()) throw std::logic_error("determinism needs criteria 2 and 8");
    const unsigned t_other = opt_.determinism_threads;
    auto prov = [&](const char* cmd, unsigned threads) {
      return Provenance{cmd, "law = two-point\n", opt_.seed, threads};
    };
    const auto law2 = OffspringLaw::two_point();
    const std::size_t reps2 = series2_.size();
    std::string d;
    bool ok = true;
    const std::string base = strip_run_line(selftest_detail::series_csv(series2_, prov("simulate", opt_.threads)));
    for (unsigned t : {1u, t_other}) {
      const auto other = simulate_series(law2, 0.0, 10, reps2, opt_.seed, t, experiments::kTree);
      const bool same = base == strip_run_line(selftest_detail::series_csv(other, prov("simulate", t)));
      ok = ok && same;
      d += "martingales t=" + std::to_string(t) + (same ? " identical" : " DIFFER") + "; ";
    }
    for (unsigned t : {1u, t_other}) {
      if (t == opt_.threads) {
        d += "seneta-heyde t=" + std::to_string(t) + " is the reference; ";
        continue;
      }
      const auto other = seneta_heyde_experiment(OffspringLaw::gaussian_binary(), sh_opt_, opt_.seed, t);
      const bool same = strip_run_line(selftest_detail::seneta_heyde_csv(sh_, prov("seneta-heyde", opt_.threads))) ==
                        strip_run_line(selftest_detail::seneta_heyde_csv(other, prov("seneta-heyde", t)));
      ok = ok && same;
      d += "seneta-heyde t=" + std::to_string(t) + (same ? " identical" : " DIFFER") + "; ";
    }
    r.pass = ok;
    r.detail = d;
    return r;
  }

 private:
  SelftestOptions opt_;
  std::vector<MartingaleSeries> series2_;
  SenetaHeydeOptions sh_opt_;
  SenetaHeydeRun sh_;
};

inline bool all_passed(const std::vector<CriterionResult>& rs) {
  return std::all_of(rs.begin(), rs.end(), [](const CriterionResult& r) { return r.pass; });
}

}  // namespace brwlab
