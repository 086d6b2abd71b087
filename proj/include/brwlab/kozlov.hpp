#pragma once

// Survival of the spine walk above 0 (Kozlov asymptotics), harmonicity of the
// renewal functions, growth bounds on R, and the P+ potential-kernel decay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brwlab/fluctuation.hpp"
#include "brwlab/parallel.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

/// sqrt(2 / (pi sigma^2)), the Seneta-Heyde constant.
inline double seneta_heyde_constant(double sigma2) { return std::sqrt(2.0 / (std::numbers::pi * sigma2)); }

// ---------------------------------------------------------------------------
// m_n(x) = P*_x(min_{k <= n} X_k >= 0)

/// Exact m_n(x) for a lattice walk by dynamic programming over the levels
/// {0, 1, ...} (level i is position x0 + i*span with x0 = x - floor(x/span)*span).
/// Returns m_0..m_n.
inline std::vector<double> survival_curve_lattice(const LatticeSteps& steps, double x, std::size_t n) {
  if (x < 0.0) return std::vector<double>(n + 1, 0.0);
  const auto start = static_cast<std::int64_t>(std::floor(x / steps.span + 1e-9));
  std::int64_t up = 0, down = 0;
  for (auto [o, p] : steps.atoms) {
    up = std::max(up, o);
    down = std::max(down, -o);
  }
  const std::int64_t top = start + static_cast<std::int64_t>(n) * up;
  std::vector<double> cur(static_cast<std::size_t>(top + 1), 0.0), next(cur.size(), 0.0);
  cur[static_cast<std::size_t>(start)] = 1.0;
  std::int64_t lo = start, hi = start;
  std::vector<double> out{1.0};
  for (std::size_t k = 1; k <= n; ++k) {
    const std::int64_t nlo = std::max<std::int64_t>(0, lo - down), nhi = std::min(top, hi + up);
    std::fill(next.begin() + nlo, next.begin() + nhi + 1, 0.0);
    for (std::int64_t i = lo; i <= hi; ++i) {
      const double m = cur[static_cast<std::size_t>(i)];
      if (m == 0.0) continue;
      for (auto [o, p] : steps.atoms) {
        const std::int64_t j = i + o;
        if (j >= 0) next[static_cast<std::size_t>(j)] += m * p;
      }
    }
    std::fill(cur.begin() + lo, cur.begin() + hi + 1, 0.0);
    std::swap(cur, next);
    lo = nlo;
    hi = nhi;
    CompensatedSum s;
    for (std::int64_t i = lo; i <= hi; ++i) s += cur[static_cast<std::size_t>(i)];
    out.push_back(s.value());
  }
  return out;
}

enum class SurvivalMethod { Mc, ExactLattice };

inline EstimateWithError survival_probability(double x, std::size_t n, const SpineWalk& walk, SurvivalMethod method,
                                              std::size_t replicates = 100000, std::uint64_t seed = 0,
                                              unsigned threads = 1) {
  if (method == SurvivalMethod::ExactLattice) {
    if (!walk.lattice()) throw std::invalid_argument("survival_probability: exact mode needs a lattice walk");
    return {survival_curve_lattice(*walk.lattice(), x, n).back(), 0.0, 0};
  }
  const StreamKey key{seed, experiments::kSurvival, 0, static_cast<std::uint32_t>(n)};
  auto alive = parallel_map<double>(replicates, threads, [&](std::size_t r) {
    if (x < 0.0) return 0.0;
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    const auto snap = walk.snapper(x);
    double s = x;
    for (std::size_t k = 0; k < n; ++k) {
      s = snap(s + walk.step(rng));
      if (s < 0.0) return 0.0;
    }
    return 1.0;
  });
  return mean_with_se(alive);
}

/// binom(n, floor(n/2)) 2^{-n}, computed in log space.
inline double central_binomial_probability(std::size_t n) {
  const double k = std::floor(static_cast<double>(n) / 2.0);
  const double nn = static_cast<double>(n);
  return std::exp(std::lgamma(nn + 1) - std::lgamma(k + 1) - std::lgamma(nn - k + 1) - nn * std::numbers::ln2);
}

// ---------------------------------------------------------------------------
// theta

struct ThetaPoint {
  double x = 0.0;
  std::size_t n = 0;
  double m = 0.0;        // m_n(x)
  double m_se = 0.0;
  double R = 0.0;
  double ratio = 0.0;    // sqrt(n) m_n(x) / R(x)
};

struct ThetaReport {
  double theta = 0.0;        // regression of sqrt(n) m_n(x) on R(x) at the largest n
  double theta_prime = 0.0;  // smallest constant with sqrt(n) m_n(x) <= theta' R(x) on the grid
  double target = 0.0;       // sqrt(2/(pi sigma^2)) x / R(x) at the largest x
  double ratio_at_edge = 0.0;  // theta R(x)/x at the largest x (should approach sqrt(2/(pi sigma^2)))
  std::vector<ThetaPoint> points;
};

inline ThetaReport estimate_theta(const SpineWalk& walk, const RenewalFn& R, std::span<const std::size_t> n_grid,
                                  std::span<const double> x_grid, SurvivalMethod method, std::size_t replicates = 100000,
                                  std::uint64_t seed = 0, unsigned threads = 1) {
  if (n_grid.empty() || x_grid.empty()) throw std::invalid_argument("estimate_theta: empty grid");
  if (!std::is_sorted(n_grid.begin(), n_grid.end())) throw std::invalid_argument("estimate_theta: n_grid must increase");
  ThetaReport rep;
  const std::size_t n_max = n_grid.back();
  for (double x : x_grid) {
    std::vector<double> curve;
    if (method == SurvivalMethod::ExactLattice) {
      if (!walk.lattice()) throw std::invalid_argument("estimate_theta: exact mode needs a lattice walk");
      curve = survival_curve_lattice(*walk.lattice(), x, n_max);
    }
    for (std::size_t n : n_grid) {
      ThetaPoint p;
      p.x = x;
      p.n = n;
      if (method == SurvivalMethod::ExactLattice) {
        p.m = curve[n];
      } else {
        const auto e = survival_probability(x, n, walk, SurvivalMethod::Mc, replicates, seed, threads);
        p.m = e.mean;
        p.m_se = e.se;
      }
      p.R = R(x);
      p.ratio = std::sqrt(static_cast<double>(n)) * p.m / p.R;
      rep.points.push_back(p);
    }
  }
  double num = 0.0, den = 0.0;
  for (const auto& p : rep.points) {
    if (p.n != n_max) continue;
    num += p.R * std::sqrt(static_cast<double>(p.n)) * p.m;
    den += p.R * p.R;
  }
  rep.theta = num / den;
  for (const auto& p : rep.points)
    if (p.n >= 1) rep.theta_prime = std::max(rep.theta_prime, p.ratio);
  const double xe = x_grid.back();
  if (xe > 0.0) {
    rep.target = seneta_heyde_constant(walk.sigma2()) * xe / R(xe);
    rep.ratio_at_edge = rep.theta * R(xe) / xe;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Harmonicity of R (killed entering (-inf, 0)) and Rbar (killed entering (-inf, 0])

struct HarmonicityPoint {
  double x = 0.0;
  double R = 0.0, R_image = 0.0, R_se = 0.0;           // R(x) and E[R(x+S1) 1{x+S1 >= 0}]
  double Rbar = 0.0, Rbar_image = 0.0, Rbar_se = 0.0;  // Rbar(x) and E[Rbar(x+S1) 1{x+S1 > 0}]
  [[nodiscard]] double residual() const { return std::abs(R - R_image); }
  [[nodiscard]] double residual_weak() const { return std::abs(Rbar - Rbar_image); }
};

/// Exact mode: expectation over the finite step law.
inline std::vector<HarmonicityPoint> harmonicity_residual_exact(const SpineWalk& walk, const RenewalFn& R,
                                                                const RenewalFn& Rbar, std::span<const double> x_grid) {
  if (!walk.law().has_finite_support()) throw std::invalid_argument("harmonicity: exact mode needs a finite law");
  const auto atoms = walk.sampler().step_atoms();
  std::vector<HarmonicityPoint> out;
  for (double x : x_grid) {
    HarmonicityPoint h;
    h.x = x;
    h.R = R(x);
    h.Rbar = Rbar(x);
    CompensatedSum s, sb;
    for (auto [v, p] : atoms) {
      const double y = x + v;
      if (y >= -1e-12 * std::max(1.0, std::abs(x))) s += p * R(std::max(y, 0.0));
      if (y > 1e-12 * std::max(1.0, std::abs(x))) sb += p * Rbar(y);
    }
    h.R_image = s.value();
    h.Rbar_image = sb.value();
    out.push_back(h);
  }
  return out;
}

/// Monte Carlo mode with given (exact) R and Rbar.
inline std::vector<HarmonicityPoint> harmonicity_residual_mc(const SpineWalk& walk, const RenewalFn& R,
                                                             const RenewalFn& Rbar, std::span<const double> x_grid,
                                                             std::size_t samples, std::uint64_t seed) {
  std::vector<HarmonicityPoint> out;
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    const double x = x_grid[g];
    Stream rng({seed, experiments::kHarmonic, static_cast<std::uint32_t>(g), 0});
    std::vector<double> a(samples), b(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      const double y = x + walk.step(rng);
      a[i] = y >= 0.0 ? R(y) : 0.0;
      b[i] = y > 0.0 ? Rbar(y) : 0.0;
    }
    HarmonicityPoint h;
    h.x = x;
    h.R = R(x);
    h.Rbar = Rbar(x);
    const auto ea = mean_with_se(a), eb = mean_with_se(b);
    h.R_image = ea.mean;
    h.R_se = ea.se;
    h.Rbar_image = eb.mean;
    h.Rbar_se = eb.se;
    out.push_back(h);
  }
  return out;
}

/// Monte Carlo mode with empirical renewal functions: the residual
/// R_b(x) - E[R_b(x+S1) 1{...}] is computed per batch b of ladder paths (with
/// its own step sample) and the batch means give the standard error.
inline std::vector<HarmonicityPoint> harmonicity_residual_empirical(const SpineWalk& walk, const RenewalMeasure& mu,
                                                                    const RenewalMeasure& mu_weak,
                                                                    std::span<const double> x_grid, std::size_t batches,
                                                                    std::size_t samples_per_batch, std::uint64_t seed) {
  const auto mb = mu.batches(batches), wb = mu_weak.batches(batches);
  std::vector<HarmonicityPoint> out;
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    const double x = x_grid[g];
    std::vector<double> res(batches), res_w(batches), img(batches), img_w(batches);
    for (std::size_t b = 0; b < batches; ++b) {
      Stream rng({seed, experiments::kHarmonic, static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(b + 1)});
      CompensatedSum s, sw;
      for (std::size_t i = 0; i < samples_per_batch; ++i) {
        const double y = x + walk.step(rng);
        if (y >= 0.0) s += renewal_function(mb[b], y);
        if (y > 0.0) sw += renewal_function_weak(wb[b], y);
      }
      img[b] = s.value() / static_cast<double>(samples_per_batch);
      img_w[b] = sw.value() / static_cast<double>(samples_per_batch);
      res[b] = renewal_function(mb[b], x) - img[b];
      res_w[b] = renewal_function_weak(wb[b], x) - img_w[b];
    }
    HarmonicityPoint h;
    h.x = x;
    const auto r = mean_with_se(res), rw = mean_with_se(res_w);
    h.R = renewal_function(mu, x);
    h.R_image = h.R - r.mean;
    h.R_se = r.se;
    h.Rbar = renewal_function_weak(mu_weak, x);
    h.Rbar_image = h.Rbar - rw.mean;
    h.Rbar_se = rw.se;
    out.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Growth bounds R(x) <= c1 (1 + x+), R(x + y) <= c1 (1 + x+)(1 + y+)

struct GrowthReport {
  double c1 = 0.0;             // smallest constant for the linear bound on the grid
  std::size_t linear_violations = 0;
  std::size_t product_violations = 0;
  double edge_ratio = 0.0;     // theta R(x)/x at the right edge
  double edge_target = 0.0;    // sqrt(2/(pi sigma^2))
};

inline GrowthReport r_growth_bounds(const RenewalFn& R, std::span<const double> x_grid, std::span<const double> y_grid,
                                    double sigma2, double theta, double margin = 0.0) {
  GrowthReport g;
  for (double x : x_grid) g.c1 = std::max(g.c1, R(x) / (1.0 + std::max(x, 0.0)));
  for (double y : y_grid) g.c1 = std::max(g.c1, R(y) / (1.0 + std::max(y, 0.0)));
  const double c = g.c1 * (1.0 + margin);
  for (double x : x_grid)
    if (R(x) > c * (1.0 + std::max(x, 0.0))) ++g.linear_violations;
  for (double x : x_grid)
    for (double y : y_grid)
      if (R(x + y) > c * (1.0 + std::max(x, 0.0)) * (1.0 + std::max(y, 0.0))) ++g.product_violations;
  const double xe = *std::max_element(x_grid.begin(), x_grid.end());
  if (xe > 0.0) g.edge_ratio = theta * R(xe) / xe;
  g.edge_target = seneta_heyde_constant(sigma2);
  return g;
}

// ---------------------------------------------------------------------------
// P+ potential kernel: E+_x[sum_{k <= K} f(X_k)]

/// Importance-weighted estimate, using at step k the F_k density
/// R(X_k) 1{min_{j <= k} X_j >= 0} / R(x).
inline EstimateWithError pplus_potential(double x, const std::function<double(double)>& f, const SpineWalk& walk,
                                         const RenewalFn& R, std::size_t horizon, std::size_t replicates,
                                         std::uint64_t seed, unsigned threads = 1) {
  if (x < 0.0) throw std::invalid_argument("pplus_potential: need x >= 0");
  const double rx = R(x);
  const StreamKey key{seed, experiments::kPotential, 0, 0};
  auto sums = parallel_map<double>(replicates, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    CompensatedSum s;
    const auto snap = walk.snapper(x);
    double pos = x;
    s += f(pos);
    for (std::size_t k = 1; k <= horizon; ++k) {
      pos = snap(pos + walk.step(rng));
      if (pos < 0.0) break;
      s += f(pos) * R(pos) / rx;
    }
    return s.value();
  });
  return mean_with_se(sums);
}

/// The same quantity computed exactly for a lattice walk with known R.
inline double pplus_potential_lattice(double x, const std::function<double(double)>& f, const LatticeSteps& steps,
                                      const RenewalFn& R, std::size_t horizon) {
  const auto start = static_cast<std::int64_t>(std::floor(x / steps.span + 1e-9));
  const double x0 = x - static_cast<double>(start) * steps.span;
  std::int64_t up = 0, down = 0;
  for (auto [o, p] : steps.atoms) {
    up = std::max(up, o);
    down = std::max(down, -o);
  }
  const std::int64_t top = start + static_cast<std::int64_t>(horizon) * up;
  std::vector<double> cur(static_cast<std::size_t>(top + 1), 0.0), next(cur.size(), 0.0);
  cur[static_cast<std::size_t>(start)] = 1.0;
  std::int64_t lo = start, hi = start;
  const double rx = R(x);
  CompensatedSum total;
  total += f(x);
  for (std::size_t k = 1; k <= horizon; ++k) {
    const std::int64_t nlo = std::max<std::int64_t>(0, lo - down), nhi = std::min(top, hi + up);
    std::fill(next.begin() + nlo, next.begin() + nhi + 1, 0.0);
    for (std::int64_t i = lo; i <= hi; ++i) {
      const double m = cur[static_cast<std::size_t>(i)];
      if (m == 0.0) continue;
      for (auto [o, p] : steps.atoms) {
        const std::int64_t j = i + o;
        if (j >= 0) next[static_cast<std::size_t>(j)] += m * p;
      }
    }
    std::fill(cur.begin() + lo, cur.begin() + hi + 1, 0.0);
    std::swap(cur, next);
    lo = nlo;
    hi = nhi;
    for (std::int64_t i = lo; i <= hi; ++i) {
      const double m = cur[static_cast<std::size_t>(i)];
      if (m == 0.0) continue;
      const double y = x0 + static_cast<double>(i) * steps.span;
      total += m * f(y) * R(y) / rx;
    }
  }
  return total.value();
}

}  // namespace brwlab
