#pragma once

// Green operators of the spine walk killed on entering the negative half-line:
//
//   G f(x)    = sum_n E[f(x + S_n) 1{x + S_k >= 0, 1 <= k <= n}]
//   Gbar f(x) = sum_n E[f(x + S_n) 1{x + S_k >  0, 1 <= k <= n}]
//
// evaluated either along simulated killed paths or through the factorization
// over the descending and ascending ladder renewal measures,
//
//   G f(x) = c= * sum_{y in [0, x]} sum_{z >= 0} mu(dy) muhat(dz) f(x - y + z)
//
// ([0, x) for Gbar).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "brwlab/fluctuation.hpp"
#include "brwlab/parallel.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

using HalfLineFn = std::function<double(double)>;

enum class GreenMethod { PathMc, RenewalFormula };

inline std::string to_string(GreenMethod m) { return m == GreenMethod::PathMc ? "path_mc" : "renewal_formula"; }

struct GreenQuery {
  double x = 0.0;
  double value = 0.0;
  double se = 0.0;                // 0 when exact
  double truncation_bound = 0.0;  // bound on the bias from series or path truncation
  GreenMethod method = GreenMethod::PathMc;
  bool weak = false;
  bool converged = true;
};

/// Agreement within `k` combined standard errors plus both truncation bounds.
inline bool green_agree(const GreenQuery& a, const GreenQuery& b, double k) {
  return std::abs(a.value - b.value) <= k * std::hypot(a.se, b.se) + a.truncation_bound + b.truncation_bound;
}

/// Tail sums of the decreasing majorant fbar(y) = sup_{z >= y} |f(z)|, taken
/// on a grid of width 0.01 over [0, 2000]; f is assumed negligible beyond.
/// For a walk alive at height y,
///   Gf(y) <= c= R(1) Rhat(1) sum_{j >= 0} min(j + 1, y + 2) fbar(j),
/// splitting [0, y] and [0, inf) into unit cells (mass per cell <= R(1), Rhat(1)).
class MajorantBound {
 public:
  explicit MajorantBound(const HalfLineFn& f) {
    constexpr int kPerUnit = 100;
    std::vector<double> v(static_cast<std::size_t>(kPerUnit * kUnits) + 1);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(f(static_cast<double>(i) / kPerUnit));
    for (std::size_t i = v.size() - 1; i-- > 0;) v[i] = std::max(v[i], v[i + 1]);
    fbar_.resize(kUnits);
    for (int j = 0; j < kUnits; ++j) fbar_[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j * kPerUnit)];
  }
  [[nodiscard]] double operator()(double y) const {
    const double cap = std::floor(std::max(y, 0.0)) + 2.0;
    double s = 0.0;
    for (std::size_t j = 0; j < fbar_.size(); ++j) s += std::min(static_cast<double>(j) + 1.0, cap) * fbar_[j];
    return s;
  }

 private:
  static constexpr int kUnits = 2000;
  std::vector<double> fbar_;
};

/// Everything the renewal route needs, built once per walk.
struct GreenSetup {
  RenewalMeasure mu;       // strict descending, on [0, x_max]
  RenewalMeasure mu_hat;   // strict ascending, on [0, z_max]
  CEqualsResult c_eq;
  std::size_t batches = 0;  // 0 for exact measures
  /// c= R(1) Rhat(1), the constant of MajorantBound.
  [[nodiscard]] double tail_constant() const { return c_eq.hi * mu.cdf(1.0) * mu_hat.cdf(1.0); }
};

struct GreenBudget {
  std::size_t paths = 20000;          // path_mc replicates
  std::size_t max_steps = 1'000'000;  // per killed path
  std::size_t ladder_paths = 40000;   // empirical renewal measures
  std::size_t ladder_steps = 1'000'000;
  std::size_t batches = 20;
  double x_max = 20.0;
  double z_max = 40.0;
  double exact_z_max = 2000.0;  // ascending range when the measures are exact
  double bin = 0.01;
};

inline GreenSetup prepare_green(const SpineWalk& walk, const GreenBudget& budget, std::uint64_t seed,
                                unsigned threads = 1) {
  if (walk.is_simple_symmetric()) {
    const double a = walk.lattice()->span;
    return {RenewalMeasure::exact_simple_walk(a, LadderKind::Descending, budget.x_max),
            RenewalMeasure::exact_simple_walk(a, LadderKind::Ascending, budget.exact_z_max),
            c_equals(walk, CEqualsMethod::ExpSeries), 0};
  }
  auto mu = RenewalMeasure::from_ladder_paths(walk, LadderKind::Descending, budget.x_max, budget.ladder_paths,
                                              budget.ladder_steps, seed, threads);
  auto mu_hat = RenewalMeasure::from_ladder_paths(walk, LadderKind::Ascending, budget.z_max, budget.ladder_paths,
                                                  budget.ladder_steps, seed, threads);
  return {std::move(mu), std::move(mu_hat), c_equals(walk, CEqualsMethod::ExpSeries), budget.batches};
}

inline GreenQuery green_path_mc(double x, const HalfLineFn& f, const SpineWalk& walk, const GreenBudget& budget,
                                double tail_constant, std::uint64_t seed, unsigned threads = 1, bool weak = false) {
  if (x < 0.0 || (weak && x <= 0.0)) throw std::invalid_argument("green_path_mc: start outside the half-line");
  const StreamKey key{seed, experiments::kGreen, 0, weak ? 1u : 0u};
  struct One {
    double sum = 0.0;
    bool truncated = false;
    double last = 0.0;
  };
  auto runs = parallel_map<One>(budget.paths, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    const auto snap = walk.snapper(x);
    CompensatedSum s;
    double pos = x;
    s += f(pos);
    std::size_t k = 0;
    for (; k < budget.max_steps; ++k) {
      pos = snap(pos + walk.step(rng));
      if (weak ? pos <= 0.0 : pos < 0.0) break;
      s += f(pos);
    }
    return One{s.value(), k == budget.max_steps, pos};
  });
  std::vector<double> sums(runs.size());
  std::size_t truncated = 0;
  double lost = 0.0;
  std::optional<MajorantBound> bound;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    sums[i] = runs[i].sum;
    if (!runs[i].truncated) continue;
    ++truncated;
    if (!bound) bound.emplace(f);
    lost += (*bound)(runs[i].last);
  }
  const auto e = mean_with_se(sums);
  GreenQuery q;
  q.x = x;
  q.value = e.mean;
  q.se = e.se;
  q.method = GreenMethod::PathMc;
  q.weak = weak;
  q.truncation_bound = tail_constant * lost / static_cast<double>(runs.size());
  q.converged = truncated == 0;
  return q;
}

namespace detail {

/// c= * sum over the two measures, plus the contribution of muhat beyond
/// z_max from the renewal theorem (density 1/E[Hhat]).
inline std::pair<double, double> green_double_sum(double x, const HalfLineFn& f, const std::vector<RenewalAtom>& mu,
                                                  const std::vector<RenewalAtom>& mu_hat, double z_max,
                                                  double inv_mean, bool weak) {
  CompensatedSum s, tail;
  boost::math::quadrature::exp_sinh<double> quad;
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& y : mu) {
    if (weak ? !(y.position < x) : y.position > x * (1 + 1e-12) + 1e-12) break;
    CompensatedSum inner;
    for (const auto& z : mu_hat) inner += z.mass * f(x - y.position + z.position);
    s += y.mass * inner.value();
    const double shift = x - y.position;
    const double t = quad.integrate([&](double z) { return f(shift + z); }, z_max, inf);
    tail += y.mass * inv_mean * t;
  }
  return {s.value(), tail.value()};
}

}  // namespace detail

inline GreenQuery green_renewal_formula(double x, const HalfLineFn& f, const GreenSetup& setup, double bin = 0.01,
                                        bool weak = false) {
  if (x < 0.0 || (weak && x <= 0.0)) throw std::invalid_argument("green_renewal_formula: start outside the half-line");
  if (x > setup.mu.x_max()) throw std::invalid_argument("green_renewal_formula: x beyond the renewal range");
  const double c = setup.c_eq.value;
  auto evaluate = [&](const RenewalMeasure& mu, const RenewalMeasure& mu_hat) {
    const auto [s, tail] = detail::green_double_sum(x, f, mu.atoms(bin), mu_hat.atoms(bin), mu_hat.x_max(),
                                                    mu_hat.inverse_mean_height(), weak);
    return std::pair{c * (s + tail), c * std::abs(tail)};
  };
  GreenQuery q;
  q.x = x;
  q.method = GreenMethod::RenewalFormula;
  q.weak = weak;
  const auto [value, tail] = evaluate(setup.mu, setup.mu_hat);
  q.value = value;
  // c= is known up to its enclosing interval.
  q.truncation_bound = tail + value * setup.c_eq.error_bound() / c;
  if (setup.batches > 1) {
    const auto mb = setup.mu.batches(setup.batches), hb = setup.mu_hat.batches(setup.batches);
    std::vector<double> vals(setup.batches);
    for (std::size_t b = 0; b < setup.batches; ++b) vals[b] = evaluate(mb[b], hb[b]).first;
    q.se = mean_with_se(vals).se;
    q.truncation_bound += setup.mu.truncation_bound(x) / std::max(1.0, setup.mu.cdf(x)) * value +
                          setup.mu_hat.truncation_bound(setup.mu_hat.x_max()) /
                              std::max(1.0, setup.mu_hat.cdf(setup.mu_hat.x_max())) * value;
  }
  return q;
}

inline GreenQuery green_operator(double x, const HalfLineFn& f, GreenMethod method, const SpineWalk& walk,
                                 const GreenSetup& setup, const GreenBudget& budget, std::uint64_t seed,
                                 unsigned threads = 1, bool weak = false) {
  if (method == GreenMethod::PathMc)
    return green_path_mc(x, f, walk, budget, setup.tail_constant(), seed, threads, weak);
  return green_renewal_formula(x, f, setup, budget.bin, weak);
}

/// Test functions on the half-line.
namespace green_functions {
inline HalfLineFn exponential() {
  return [](double y) { return std::exp(-y); };
}
inline HalfLineFn lorentzian() {
  return [](double y) { return 1.0 / (1.0 + y * y); };
}
/// 1{lo <= y <= hi}; a lattice level is the interval of half a span around it.
inline HalfLineFn indicator(double lo, double hi) {
  return [lo, hi](double y) { return y >= lo && y <= hi ? 1.0 : 0.0; };
}
inline HalfLineFn zero() {
  return [](double) { return 0.0; };
}
}  // namespace green_functions

inline void write_green_csv(std::ostream& os, const std::vector<GreenQuery>& qs) {
  os << "x,value,stderr\n";
  for (const auto& q : qs) os << format_real(q.x) << ',' << format_real(q.value) << ',' << format_real(q.se) << '\n';
}

}  // namespace brwlab
