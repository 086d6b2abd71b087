#pragma once

// Limit experiments on the tree: the Seneta-Heyde pairing of sqrt(n) W_n with
// c D_n, the first moment of W'_n by the spine and tree routes, the truncated
// moment probe, Laplace-transform comparison and killing from generation k0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "brwlab/brw.hpp"
#include "brwlab/kozlov.hpp"
#include "brwlab/parallel.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

// ---------------------------------------------------------------------------
// Laplace transforms

inline std::vector<double> default_lambda_grid() { return {0.25, 0.5, 1.0, 2.0, 4.0}; }

struct LaplaceReport {
  std::vector<double> lambdas;
  std::vector<double> transform_a, transform_b;
  double sup_gap = 0.0;
  std::size_t argmax = 0;
};

inline double empirical_laplace(std::span<const double> v, double lambda) {
  CompensatedSum s;
  for (double x : v) s += std::exp(-lambda * x);
  return s.value() / static_cast<double>(v.size());
}

inline LaplaceReport laplace_compare(std::span<const double> a, std::span<const double> b,
                                     std::span<const double> lambdas) {
  if (a.empty() || b.empty()) throw std::invalid_argument("laplace_compare: empty sample set");
  if (lambdas.empty()) throw std::invalid_argument("laplace_compare: empty lambda grid");
  auto negative = [](double v) { return v < 0.0; };
  if (std::any_of(a.begin(), a.end(), negative) || std::any_of(b.begin(), b.end(), negative))
    throw std::invalid_argument("laplace_compare: samples must be nonnegative");
  LaplaceReport r;
  r.lambdas.assign(lambdas.begin(), lambdas.end());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw std::invalid_argument("laplace_compare: lambda must be positive");
    r.transform_a.push_back(empirical_laplace(a, lambdas[i]));
    r.transform_b.push_back(empirical_laplace(b, lambdas[i]));
    const double gap = std::abs(r.transform_a.back() - r.transform_b.back());
    if (gap > r.sup_gap) {
      r.sup_gap = gap;
      r.argmax = i;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Trend checks on a grid

struct TrendCheck {
  std::size_t inversions = 0;  // steps where the value did not go down
  bool pass = false;
};

/// Strictly decreasing, except for at most `allowed` inversions each within
/// k standard errors of the paired difference.
inline TrendCheck strictly_decreasing(std::span<const double> v, std::span<const double> diff_se, double k,
                                      std::size_t allowed) {
  TrendCheck t;
  bool noisy_only = true;
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i + 1] >= v[i]) {
      ++t.inversions;
      if (v[i + 1] - v[i] > k * diff_se[i]) noisy_only = false;
    }
  t.pass = t.inversions == 0 || (t.inversions <= allowed && noisy_only);
  return t;
}

/// v[i+1] <= v[i] + k * se(v[i+1] - v[i]) at every step.
inline TrendCheck non_increasing(std::span<const double> v, std::span<const double> diff_se, double k) {
  TrendCheck t;
  t.pass = true;
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i + 1] > v[i]) {
      ++t.inversions;
      if (v[i + 1] - v[i] > k * diff_se[i]) t.pass = false;
    }
  return t;
}

// ---------------------------------------------------------------------------
// Seneta-Heyde experiment

struct SenetaHeydePoint {
  std::size_t n = 0;
  double discrepancy = 0.0;  // E[|sqrt(n) W_n - c D_n| ^ 1]
  double discrepancy_se = 0.0;
  double limit_discrepancy = 0.0;  // same against c D_N, the proxy for c D_inf
  double limit_discrepancy_se = 0.0;
  double correlation = 0.0;   // Pearson(sqrt(n) W_n, D_n)
  double rank_correlation = 0.0;  // Spearman, insensitive to the rare deep excursions
  double median_ratio = 0.0;  // median of sqrt(n) W_n / (c D_N) over D_N > 0
  double laplace_gap = 0.0;   // sup over lambda of the transform gap to c D_N
  double laplace_gap_se = 0.0;
  EstimateWithError W, D;
};

struct SenetaHeydeRun {
  std::string law;
  double x = 0.0;
  std::vector<std::size_t> n_grid;
  std::vector<double> lambdas;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  double c = 0.0;
  std::vector<std::vector<double>> sqrtn_W, cD;  // [grid index][replicate]
  std::vector<double> D_stability;              // |D_N - D_{N-4}| per replicate
  std::vector<double> cD_limit;                 // c D_N per replicate
  std::size_t negative_limits = 0;              // replicates with D_N < 0 (clamped to 0 for Laplace)
  std::vector<SenetaHeydePoint> points;
  std::vector<double> discrepancy_diff_se;  // paired bootstrap SE of d(n_{i+1}) - d(n_i)
  std::vector<double> laplace_diff_se;

  [[nodiscard]] std::vector<double> discrepancies() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.discrepancy);
    return v;
  }
  [[nodiscard]] std::vector<double> laplace_gaps() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.laplace_gap);
    return v;
  }
  [[nodiscard]] TrendCheck discrepancy_trend() const {
    return strictly_decreasing(discrepancies(), discrepancy_diff_se, 2.0, 1);
  }
  [[nodiscard]] TrendCheck laplace_trend() const { return non_increasing(laplace_gaps(), laplace_diff_se, 2.0); }
};

struct SenetaHeydeOptions {
  std::vector<std::size_t> n_grid{8, 12, 16, 20};
  std::size_t replicates = 2000;
  double x = 0.0;
  std::vector<double> lambdas = default_lambda_grid();
  std::size_t bootstrap = 400;
  std::size_t cap = kDefaultPopulationCap;
};

namespace detail {

inline double clamp_discrepancy(std::span<const double> a, std::span<const double> b,
                                std::span<const std::size_t> idx) {
  CompensatedSum s;
  for (auto i : idx) s += std::min(std::abs(a[i] - b[i]), 1.0);
  return s.value() / static_cast<double>(idx.size());
}

inline double laplace_gap(std::span<const double> a, std::span<const double> b, std::span<const std::size_t> idx,
                          std::span<const double> lambdas) {
  double g = 0.0;
  for (double l : lambdas) {
    CompensatedSum sa, sb;
    for (auto i : idx) {
      sa += std::exp(-l * a[i]);
      sb += std::exp(-l * b[i]);
    }
    g = std::max(g, std::abs(sa.value() - sb.value()) / static_cast<double>(idx.size()));
  }
  return g;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace detail

inline SenetaHeydeRun seneta_heyde_experiment(const OffspringLaw& law, const SenetaHeydeOptions& opt,
                                              std::uint64_t seed, unsigned threads = 1) {
  if (opt.n_grid.empty()) throw std::invalid_argument("seneta_heyde: empty n grid");
  if (!std::is_sorted(opt.n_grid.begin(), opt.n_grid.end()))
    throw std::invalid_argument("seneta_heyde: n grid must increase");
  if (opt.replicates < 2) throw std::invalid_argument("seneta_heyde: need at least 2 replicates");
  SenetaHeydeRun run;
  run.law = law.name();
  run.x = opt.x;
  run.n_grid = opt.n_grid;
  run.lambdas = opt.lambdas;
  run.replicates = opt.replicates;
  run.seed = seed;
  run.c = seneta_heyde_constant(law.sigma2());
  const std::size_t N = opt.n_grid.back();
  const std::size_t G = opt.n_grid.size();

  struct Row {
    std::vector<double> W, D;
    double stability = 0.0;
  };
  const StreamKey key{seed, experiments::kSenetaHeyde, 0, 0};
  auto rows = parallel_map<Row>(opt.replicates, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    const auto s = run_brw(opt.x, N, 0, law, rng, opt.cap);
    Row row;
    for (auto n : opt.n_grid) {
      row.W.push_back(s.W[n]);
      row.D.push_back(s.D[n]);
    }
    row.stability = std::abs(s.D[N] - s.D[N >= 4 ? N - 4 : 0]);
    return row;
  });

  run.sqrtn_W.assign(G, std::vector<double>(opt.replicates));
  run.cD.assign(G, std::vector<double>(opt.replicates));
  std::vector<std::vector<double>> W(G, std::vector<double>(opt.replicates)), D = W;
  for (std::size_t r = 0; r < opt.replicates; ++r) {
    for (std::size_t g = 0; g < G; ++g) {
      const double rn = std::sqrt(static_cast<double>(opt.n_grid[g]));
      W[g][r] = rows[r].W[g];
      D[g][r] = rows[r].D[g];
      run.sqrtn_W[g][r] = rn * rows[r].W[g];
      run.cD[g][r] = run.c * rows[r].D[g];
    }
    run.D_stability.push_back(rows[r].stability);
    run.cD_limit.push_back(run.cD[G - 1][r]);
  }
  std::vector<double> limit_pos(run.cD_limit);
  for (double& v : limit_pos)
    if (v < 0.0) {
      v = 0.0;
      ++run.negative_limits;
    }

  std::vector<std::size_t> all(opt.replicates);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t g = 0; g < G; ++g) {
    SenetaHeydePoint p;
    p.n = opt.n_grid[g];
    p.discrepancy = detail::clamp_discrepancy(run.sqrtn_W[g], run.cD[g], all);
    p.limit_discrepancy = detail::clamp_discrepancy(run.sqrtn_W[g], run.cD_limit, all);
    p.correlation = pearson(run.sqrtn_W[g], D[g]);
    p.rank_correlation = spearman(run.sqrtn_W[g], D[g]);
    std::vector<double> ratios;
    for (std::size_t r = 0; r < opt.replicates; ++r)
      if (run.cD_limit[r] > 0.0) ratios.push_back(run.sqrtn_W[g][r] / run.cD_limit[r]);
    p.median_ratio = detail::median(std::move(ratios));
    p.laplace_gap = detail::laplace_gap(run.sqrtn_W[g], limit_pos, all, opt.lambdas);
    p.W = mean_with_se(W[g]);
    p.D = mean_with_se(D[g]);
    run.points.push_back(p);
  }

  // Paired bootstrap over replicates: per resample, 2G statistics.
  if (opt.bootstrap >= 2) {
    const auto boot = bootstrap_replicates(
        opt.replicates, opt.bootstrap, StreamKey{seed, experiments::kBootstrap, 0, experiments::kSenetaHeyde},
        [&](std::span<const std::size_t> idx) {
          std::vector<double> out;
          for (std::size_t g = 0; g < G; ++g) {
            out.push_back(detail::clamp_discrepancy(run.sqrtn_W[g], run.cD[g], idx));
            out.push_back(detail::clamp_discrepancy(run.sqrtn_W[g], run.cD_limit, idx));
            out.push_back(detail::laplace_gap(run.sqrtn_W[g], limit_pos, idx, opt.lambdas));
          }
          return out;
        });
    auto sd_of = [&](auto&& f) {
      std::vector<double> v;
      for (const auto& b : boot) v.push_back(f(b));
      return sample_sd(v);
    };
    for (std::size_t g = 0; g < G; ++g) {
      run.points[g].discrepancy_se = sd_of([&](const auto& b) { return b[3 * g]; });
      run.points[g].limit_discrepancy_se = sd_of([&](const auto& b) { return b[3 * g + 1]; });
      run.points[g].laplace_gap_se = sd_of([&](const auto& b) { return b[3 * g + 2]; });
    }
    for (std::size_t g = 0; g + 1 < G; ++g) {
      run.discrepancy_diff_se.push_back(sd_of([&](const auto& b) { return b[3 * (g + 1)] - b[3 * g]; }));
      run.laplace_diff_se.push_back(sd_of([&](const auto& b) { return b[3 * (g + 1) + 2] - b[3 * g + 2]; }));
    }
  } else {
    run.discrepancy_diff_se.assign(G > 0 ? G - 1 : 0, 0.0);
    run.laplace_diff_se.assign(G > 0 ? G - 1 : 0, 0.0);
  }
  return run;
}

inline void write_seneta_heyde_csv(std::ostream& os, const SenetaHeydeRun& run) {
  os << "replicate,n,sqrtnW,cD,D_stability\n";
  for (std::size_t r = 0; r < run.replicates; ++r)
    for (std::size_t g = 0; g < run.n_grid.size(); ++g)
      os << r << ',' << run.n_grid[g] << ',' << format_real(run.sqrtn_W[g][r]) << ',' << format_real(run.cD[g][r])
         << ',' << format_real(run.D_stability[r]) << '\n';
}

inline nlohmann::json seneta_heyde_summary(const SenetaHeydeRun& run) {
  nlohmann::json j;
  j["law"] = run.law;
  j["x"] = run.x;
  j["replicates"] = run.replicates;
  j["seed"] = run.seed;
  j["c"] = run.c;
  j["lambdas"] = run.lambdas;
  j["negative_limits"] = run.negative_limits;
  for (const auto& p : run.points)
    j["points"].push_back({{"n", p.n},
                           {"discrepancy", p.discrepancy},
                           {"discrepancy_se", p.discrepancy_se},
                           {"limit_discrepancy", p.limit_discrepancy},
                           {"limit_discrepancy_se", p.limit_discrepancy_se},
                           {"correlation", p.correlation},
                           {"rank_correlation", p.rank_correlation},
                           {"median_ratio", p.median_ratio},
                           {"laplace_gap", p.laplace_gap},
                           {"laplace_gap_se", p.laplace_gap_se},
                           {"mean_W", p.W.mean},
                           {"mean_W_se", p.W.se},
                           {"mean_D", p.D.mean},
                           {"mean_D_se", p.D.se}});
  const auto dt = run.discrepancy_trend();
  const auto lt = run.laplace_trend();
  j["discrepancy_trend"] = {{"inversions", dt.inversions}, {"pass", dt.pass}};
  j["laplace_trend"] = {{"inversions", lt.inversions}, {"pass", lt.pass}};
  return j;
}

// ---------------------------------------------------------------------------
// First moment of W'_n

struct KozlovConstants {
  double theta = 0.0;        // sqrt(n) m_n(0) / R(0) at the largest n
  double theta_prime = 0.0;  // sup of sqrt(n + 1) m_n(x) / R(x) over n <= n_max and the x grid
};

/// theta and theta' for the spine walk: exact curves on a lattice, Monte Carlo
/// (upper 4 SE envelope for theta') otherwise.
inline KozlovConstants kozlov_constants(const SpineWalk& walk, const RenewalFn& R, std::span<const double> x_grid,
                                        std::size_t n_max, std::size_t replicates = 20000, std::uint64_t seed = 0,
                                        unsigned threads = 1) {
  KozlovConstants k;
  std::vector<double> xs(x_grid.begin(), x_grid.end());
  if (std::find(xs.begin(), xs.end(), 0.0) == xs.end()) xs.push_back(0.0);
  for (double x : xs) {
    const double rx = R(x);
    if (walk.lattice()) {
      const auto curve = survival_curve_lattice(*walk.lattice(), x, n_max);
      for (std::size_t n = 0; n <= n_max; ++n)
        k.theta_prime = std::max(k.theta_prime, std::sqrt(n + 1.0) * curve[n] / rx);
      if (x == 0.0) k.theta = std::sqrt(static_cast<double>(n_max)) * curve[n_max];
    } else {
      for (std::size_t n = 1; n <= n_max; n *= 2) {
        const auto m = survival_probability(x, n, walk, SurvivalMethod::Mc, replicates, seed, threads);
        k.theta_prime = std::max(k.theta_prime, std::sqrt(n + 1.0) * (m.mean + 4 * m.se) / rx);
        if (x == 0.0 && 2 * n > n_max) k.theta = std::sqrt(static_cast<double>(n)) * m.mean;
      }
    }
  }
  return k;
}

struct FirstMomentRow {
  double x = 0.0;
  std::size_t n = 0;
  EstimateWithError spine;  // e^{-x} m_n(x)
  EstimateWithError tree;   // mean of W'_n
  double z = 0.0;
  double asymptote = 0.0;   // theta R(x) e^{-x} / sqrt(n)
  double upper = 0.0;       // theta' R(x) e^{-x}, compared with sqrt(n + 1) E_x[W'_n]
  [[nodiscard]] double scaled_tree() const { return std::sqrt(n + 1.0) * tree.mean; }
  /// Upper bound holds for the tree route up to k standard errors.
  [[nodiscard]] bool below_upper(double k) const { return scaled_tree() <= upper + k * std::sqrt(n + 1.0) * tree.se; }
};

struct FirstMomentReport {
  KozlovConstants constants;
  std::vector<FirstMomentRow> rows;
  [[nodiscard]] double max_z() const {
    double z = 0.0;
    for (const auto& r : rows) z = std::max(z, r.z);
    return z;
  }
  [[nodiscard]] bool upper_bound_holds(double k) const {
    return std::all_of(rows.begin(), rows.end(), [k](const auto& r) { return r.below_upper(k); });
  }
};

inline FirstMomentReport first_moment_wprime(const OffspringLaw& law, std::span<const double> x_grid,
                                             std::span<const std::size_t> n_grid, std::size_t replicates,
                                             const RenewalFn& R, const KozlovConstants& constants, std::uint64_t seed,
                                             unsigned threads = 1, std::size_t cap = kDefaultPopulationCap) {
  if (n_grid.empty() || x_grid.empty()) throw std::invalid_argument("first_moment_wprime: empty grid");
  const SpineWalk walk(law);
  const std::size_t N = *std::max_element(n_grid.begin(), n_grid.end());
  FirstMomentReport rep;
  rep.constants = constants;
  for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
    const double x = x_grid[xi];
    if (x < 0.0) throw std::invalid_argument("first_moment_wprime: need x >= 0");
    const StreamKey key{seed, experiments::kFirstMoment, 0, static_cast<std::uint32_t>(xi)};
    auto series = parallel_map<std::vector<double>>(replicates, threads, [&](std::size_t r) {
      Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
      return run_brw(x, N, 0, law, rng, cap).Wprime;
    });
    std::vector<double> curve;
    if (walk.lattice()) curve = survival_curve_lattice(*walk.lattice(), x, N);
    for (auto n : n_grid) {
      FirstMomentRow row;
      row.x = x;
      row.n = n;
      std::vector<double> w(replicates);
      for (std::size_t r = 0; r < replicates; ++r) w[r] = series[r][n];
      row.tree = mean_with_se(w);
      if (walk.lattice()) {
        row.spine = {std::exp(-x) * curve[n], 0.0, 0};
      } else {
        const auto m = survival_probability(x, n, walk, SurvivalMethod::Mc, replicates, seed, threads);
        row.spine = {std::exp(-x) * m.mean, std::exp(-x) * m.se, m.count};
      }
      row.z = z_distance(row.spine, row.tree);
      row.asymptote = n > 0 ? constants.theta * R(x) * std::exp(-x) / std::sqrt(static_cast<double>(n)) : 0.0;
      row.upper = constants.theta_prime * R(x) * std::exp(-x);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Truncated moment E_x[sqrt(n) W'_n ; sqrt(n) W'_n >= eps]

struct TruncatedMomentRow {
  double x = 0.0;
  std::size_t n = 0;
  double eps = 0.0;
  EstimateWithError moment;
  double ratio = 0.0;  // moment e^x / R(x)
  double ratio_se = 0.0;
};

inline std::vector<TruncatedMomentRow> truncated_moment_probe(const OffspringLaw& law, std::span<const double> x_grid,
                                                              std::size_t n, std::span<const double> eps_grid,
                                                              std::size_t replicates, const RenewalFn& R,
                                                              std::uint64_t seed, unsigned threads = 1,
                                                              std::size_t cap = kDefaultPopulationCap) {
  for (double e : eps_grid)
    if (!(e > 0.0)) throw std::invalid_argument("truncated_moment_probe: eps must be positive");
  std::vector<TruncatedMomentRow> out;
  const double rn = std::sqrt(static_cast<double>(n));
  for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
    const double x = x_grid[xi];
    const StreamKey key{seed, experiments::kTruncated, 0, static_cast<std::uint32_t>(xi)};
    auto v = parallel_map<double>(replicates, threads, [&](std::size_t r) {
      Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
      return rn * run_brw(x, n, 0, law, rng, cap).Wprime[n];
    });
    for (double eps : eps_grid) {
      std::vector<double> t(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i] >= eps ? v[i] : 0.0;
      TruncatedMomentRow row;
      row.x = x;
      row.n = n;
      row.eps = eps;
      row.moment = mean_with_se(t);
      const double scale = std::exp(x) / R(x);
      row.ratio = row.moment.mean * scale;
      row.ratio_se = row.moment.se * scale;
      out.push_back(row);
    }
  }
  return out;
}

/// Ratios for one eps, in x-grid order.
inline std::vector<double> truncated_ratios(const std::vector<TruncatedMomentRow>& rows, double eps) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.eps == eps) v.push_back(r.ratio);
  return v;
}

// ---------------------------------------------------------------------------
// Killing from generation k0

struct KillFromK0Row {
  std::size_t k0 = 0;
  EstimateWithError probability;  // P(W''_{n,k0} = W_n for all n <= N)
};

/// W''_{n,k0} = W_n for every n <= N exactly when no particle of generations
/// k0..N sits below 0, so one realization answers every k0 at once.
inline bool never_bites(const MartingaleSeries& s, std::size_t k0) {
  for (std::size_t j = k0; j < s.min_position.size(); ++j)
    if (s.min_position[j] < 0.0) return false;
  return true;
}

inline std::vector<KillFromK0Row> kill_from_k0(std::span<const MartingaleSeries> series,
                                               std::span<const std::size_t> k0_grid) {
  if (series.size() < 2) throw std::invalid_argument("kill_from_k0: need at least 2 series");
  std::vector<KillFromK0Row> out;
  for (auto k0 : k0_grid) {
    std::vector<double> hit(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) hit[i] = never_bites(series[i], k0) ? 1.0 : 0.0;
    out.push_back({k0, mean_with_se(hit)});
  }
  return out;
}

inline std::vector<MartingaleSeries> simulate_series(const OffspringLaw& law, double x, std::size_t N,
                                                     std::size_t replicates, std::uint64_t seed, unsigned threads = 1,
                                                     std::uint32_t experiment = experiments::kKillFromK0,
                                                     std::size_t cap = kDefaultPopulationCap, std::size_t k0 = 0) {
  if (x < 0.0) throw std::invalid_argument("simulate_series: need x >= 0");
  const StreamKey key{seed, experiment, 0, 0};
  return parallel_map<MartingaleSeries>(replicates, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    return run_brw(x, N, k0, law, rng, cap);
  });
}

}  // namespace brwlab
