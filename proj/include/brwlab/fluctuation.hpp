#pragma once

// Fluctuation theory of the spine walk: ladder processes, ladder-height
// renewal measures and the constant c= relating weak and strict ladders.
//
// Conventions. S_0 = 0. The strict descending ladder uses "<", the weak one
// "<=", and dually ">" / ">=" for the ascending ladders. R(x) = mu([0, x]) is
// the strict descending renewal function (R(0) = 1, R(x < 0) = 0), and
// Rbar(x) = mu=([0, x)) for x > 0 with Rbar(0) = 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brwlab/parallel.hpp"
#include "brwlab/rng.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

// ---------------------------------------------------------------------------
// Ladder extraction

struct LadderPoint {
  std::size_t epoch = 0;
  double height = 0.0;
  friend bool operator==(const LadderPoint&, const LadderPoint&) = default;
};

enum class LadderKind { Descending, WeakDescending, Ascending, WeakAscending };

inline std::string to_string(LadderKind k) {
  switch (k) {
    case LadderKind::Descending: return "descending";
    case LadderKind::WeakDescending: return "weak-descending";
    case LadderKind::Ascending: return "ascending";
    case LadderKind::WeakAscending: return "weak-ascending";
  }
  return {};
}

inline bool is_descending(LadderKind k) { return k == LadderKind::Descending || k == LadderKind::WeakDescending; }
inline bool is_weak(LadderKind k) { return k == LadderKind::WeakDescending || k == LadderKind::WeakAscending; }

/// True when s is a new ladder point of kind k relative to the last one.
inline bool ladder_step(LadderKind k, double s, double last) {
  switch (k) {
    case LadderKind::Descending: return s < last;
    case LadderKind::WeakDescending: return s <= last;
    case LadderKind::Ascending: return s > last;
    case LadderKind::WeakAscending: return s >= last;
  }
  return false;
}

struct LadderDecomposition {
  std::vector<LadderPoint> descending, weak_descending, ascending, weak_ascending;

  [[nodiscard]] const std::vector<LadderPoint>& get(LadderKind k) const {
    switch (k) {
      case LadderKind::Descending: return descending;
      case LadderKind::WeakDescending: return weak_descending;
      case LadderKind::Ascending: return ascending;
      case LadderKind::WeakAscending: return weak_ascending;
    }
    return descending;
  }
};

inline LadderDecomposition extract_ladders(std::span<const double> path) {
  if (path.empty() || path[0] != 0.0) throw std::invalid_argument("extract_ladders: path must start at 0");
  LadderDecomposition d;
  d.descending = d.weak_descending = d.ascending = d.weak_ascending = {LadderPoint{0, 0.0}};
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double s = path[k];
    if (s < d.descending.back().height) d.descending.push_back({k, s});
    if (s <= d.weak_descending.back().height) d.weak_descending.push_back({k, s});
    if (s > d.ascending.back().height) d.ascending.push_back({k, s});
    if (s >= d.weak_ascending.back().height) d.weak_ascending.push_back({k, s});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Renewal measures

class InsufficientExcursions : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RenewalAtom {
  double position = 0.0;
  double mass = 0.0;
};

enum class RenewalSource { ExactLattice, LadderPaths, Duality };

/// Renewal measure of |ladder heights| restricted to [0, x_max].
///
/// Exact measures hold atoms. Empirical ones hold, per simulated path, the
/// sorted list of points it contributes (0 included), so that the CDF, its
/// standard error across paths and batch sub-measures are all available.
class RenewalMeasure {
 public:
  /// Fair +-span walk: strict ladders have unit masses at k*span, weak ones
  /// mass 2 (= c=).
  static RenewalMeasure exact_simple_walk(double span, LadderKind kind, double x_max) {
    if (!(span > 0.0)) throw std::invalid_argument("exact renewal: span must be positive");
    RenewalMeasure m;
    m.kind_ = kind;
    m.source_ = RenewalSource::ExactLattice;
    m.x_max_ = x_max;
    m.span_ = span;
    const double mass = is_weak(kind) ? 2.0 : 1.0;
    for (std::int64_t k = 0; static_cast<double>(k) * span <= x_max * (1 + 1e-12); ++k)
      m.atoms_.push_back({static_cast<double>(k) * span, mass});
    return m;
  }

  /// Ladder-height estimator: each path runs until its ladder height passes
  /// x_max or `max_steps` is reached.
  static RenewalMeasure from_ladder_paths(const SpineWalk& walk, LadderKind kind, double x_max, std::size_t paths,
                                          std::size_t max_steps, std::uint64_t seed, unsigned threads = 1) {
    const StreamKey key{seed, experiments::kLadder, 0, static_cast<std::uint32_t>(kind)};
    const bool down = is_descending(kind);
    auto runs = parallel_map<PathData>(paths, threads, [&](std::size_t r) {
      Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
      PathData d;
      d.points.push_back(0.0);
      const auto snap = walk.snapper(0.0);
      double s = 0.0, last = 0.0;
      std::size_t k = 0;
      for (; k < max_steps; ++k) {
        s = snap(s + walk.step(rng));
        if (!ladder_step(kind, s, last)) continue;
        last = s;
        const double h = down ? -s : s;
        if (h > x_max) break;
        d.points.push_back(h);
      }
      d.steps = std::min(k + 1, max_steps);
      d.truncated = k == max_steps;
      d.reached = d.points.back();
      return d;
    });
    return from_runs(std::move(runs), kind, RenewalSource::LadderPaths, x_max, walk.lattice_span());
  }

  /// Duality estimator: sum over n of P(|S_n| in dx, S_k < 0 for 1 <= k <= n)
  /// (or the analogous "<=", ">", ">=" event). Each path runs until the event
  /// fails or `max_steps` is reached.
  static RenewalMeasure by_duality(const SpineWalk& walk, LadderKind kind, double x_max, std::size_t paths,
                                   std::size_t max_steps, std::uint64_t seed, unsigned threads = 1) {
    const StreamKey key{seed, experiments::kDuality, 0, static_cast<std::uint32_t>(kind)};
    const bool down = is_descending(kind);
    auto runs = parallel_map<PathData>(paths, threads, [&](std::size_t r) {
      Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
      PathData d;
      d.points.push_back(0.0);
      const auto snap = walk.snapper(0.0);
      double s = 0.0;
      std::size_t k = 0;
      for (; k < max_steps; ++k) {
        s = snap(s + walk.step(rng));
        const double h = down ? -s : s;
        const bool inside = is_weak(kind) ? h >= 0.0 : h > 0.0;
        if (!inside) break;
        if (h <= x_max) d.points.push_back(h);
      }
      d.steps = std::min(k + 1, max_steps);
      d.truncated = k == max_steps;
      std::sort(d.points.begin(), d.points.end());
      return d;
    });
    return from_runs(std::move(runs), kind, RenewalSource::Duality, x_max, walk.lattice_span());
  }

  [[nodiscard]] LadderKind kind() const { return kind_; }
  [[nodiscard]] RenewalSource source() const { return source_; }
  [[nodiscard]] bool exact() const { return source_ == RenewalSource::ExactLattice; }
  [[nodiscard]] double x_max() const { return x_max_; }
  [[nodiscard]] std::size_t paths() const { return runs_.size(); }

  /// Mass on [0, x].
  [[nodiscard]] double cdf(double x) const { return query(x, false); }
  /// Mass on [0, x).
  [[nodiscard]] double cdf_open(double x) const { return query(x, true); }

  /// Renewal function value with its standard error across paths.
  [[nodiscard]] EstimateWithError cdf_estimate(double x, bool open = false) const {
    if (exact()) return {query(x, open), 0.0, 0};
    std::vector<double> counts(runs_.size());
    for (std::size_t i = 0; i < runs_.size(); ++i) counts[i] = count_in(runs_[i].points, x, open);
    return mean_with_se(counts);
  }

  /// Per-path counts on [0, x], for paired comparisons.
  [[nodiscard]] std::vector<double> path_counts(double x, bool open = false) const {
    std::vector<double> counts(runs_.size());
    for (std::size_t i = 0; i < runs_.size(); ++i) counts[i] = count_in(runs_[i].points, x, open);
    return counts;
  }

  /// Bound on the mass on [0, x] lost to path truncation. For ladder paths a
  /// path stopped below level x can add at most R(x) more points (renewal
  /// from its current height). For duality paths a path still inside the
  /// half-line can add at most the killed Green mass of [0, x], which is
  /// below c= R(x)^2.
  [[nodiscard]] double truncation_bound(double x, double c_equals = 1.0) const {
    if (exact() || runs_.empty()) return 0.0;
    double hit = 0.0;
    for (const auto& r : runs_)
      if (r.truncated && (source_ == RenewalSource::Duality || r.reached <= x)) hit += 1.0;
    const double frac = hit / static_cast<double>(runs_.size());
    const double rx = query(x, false);
    return source_ == RenewalSource::Duality ? frac * c_equals * rx * rx : frac * rx;
  }

  /// Number of ladder epochs (points beyond the n = 0 term) across all paths.
  [[nodiscard]] std::size_t epochs() const {
    std::size_t e = 0;
    for (const auto& r : runs_) e += r.points.size() - 1;
    return e;
  }

  /// Splits the paths into `b` consecutive groups (batch means).
  [[nodiscard]] std::vector<RenewalMeasure> batches(std::size_t b) const {
    if (exact()) return std::vector<RenewalMeasure>(b, *this);
    if (b == 0 || runs_.size() < b) throw std::invalid_argument("RenewalMeasure::batches: too few paths");
    std::vector<RenewalMeasure> out;
    const std::size_t per = runs_.size() / b;
    for (std::size_t i = 0; i < b; ++i) {
      const auto first = runs_.begin() + static_cast<std::ptrdiff_t>(i * per);
      const auto last = i + 1 == b ? runs_.end() : first + static_cast<std::ptrdiff_t>(per);
      out.push_back(from_runs(std::vector<PathData>(first, last), kind_, source_, x_max_, span_, false));
    }
    return out;
  }

  /// Atoms, merged on the lattice for lattice walks; with bin > 0, continuous
  /// positions are grouped into bins of that width (centre of mass per bin)
  /// except the atom at 0, which is kept separate.
  [[nodiscard]] std::vector<RenewalAtom> atoms(double bin = 0.0) const {
    if (exact()) return atoms_;
    const double w = 1.0 / static_cast<double>(runs_.size());
    std::vector<RenewalAtom> out;
    auto push = [&](double pos, double mass) {
      if (!out.empty() && out.back().position == pos)
        out.back().mass += mass;
      else
        out.push_back({pos, mass});
    };
    if (span_ > 0.0) {
      for (double v : sorted_) push(snap(v), w);
      return out;
    }
    if (bin <= 0.0) {
      for (double v : sorted_) push(v, w);
      return out;
    }
    std::size_t i = 0;
    while (i < sorted_.size() && sorted_[i] == 0.0) ++i;
    if (i > 0) out.push_back({0.0, static_cast<double>(i) * w});
    while (i < sorted_.size()) {
      const double lo = std::floor(sorted_[i] / bin) * bin;
      double m = 0.0, mx = 0.0;
      while (i < sorted_.size() && sorted_[i] < lo + bin) {
        m += w;
        mx += w * sorted_[i];
        ++i;
      }
      out.push_back({mx / m, m});
    }
    return out;
  }

  /// Mean ladder height estimate from the growth rate of the renewal function
  /// over the upper half of the range (renewal theorem).
  [[nodiscard]] double inverse_mean_height() const {
    if (exact()) return atoms_.front().mass / span_;
    const double hi = x_max_, lo = x_max_ / 2;
    return (query(hi, false) - query(lo, false)) / (hi - lo);
  }

 private:
  struct PathData {
    std::vector<double> points;  // sorted, includes the n = 0 term
    std::size_t steps = 0;
    bool truncated = false;
    double reached = 0.0;
  };

  static RenewalMeasure from_runs(std::vector<PathData> runs, LadderKind kind, RenewalSource source, double x_max,
                                  double span, bool check = true) {
    RenewalMeasure m;
    m.kind_ = kind;
    m.source_ = source;
    m.x_max_ = x_max;
    m.span_ = span;
    m.runs_ = std::move(runs);
    for (auto& r : m.runs_) {
      if (span > 0.0)
        for (double& v : r.points) v = m.snap(v);
      m.sorted_.insert(m.sorted_.end(), r.points.begin(), r.points.end());
    }
    std::sort(m.sorted_.begin(), m.sorted_.end());
    if (check && source == RenewalSource::LadderPaths && m.epochs() < 10)
      throw InsufficientExcursions("insufficient excursions: fewer than 10 ladder epochs observed");
    return m;
  }

  /// Lattice snapping, tolerance 1e-9 relative to the span.
  [[nodiscard]] double snap(double v) const {
    const double k = std::round(v / span_);
    return std::abs(v / span_ - k) < 1e-9 ? k * span_ : v;
  }

  static double count_in(const std::vector<double>& sorted, double x, bool open) {
    if (x < 0.0) return 0.0;
    const auto it = open ? std::lower_bound(sorted.begin(), sorted.end(), x) : std::upper_bound(sorted.begin(), sorted.end(), x);
    return static_cast<double>(it - sorted.begin());
  }

  [[nodiscard]] double query(double x, bool open) const {
    if (x < 0.0) return 0.0;
    if (exact()) {
      double s = 0.0;
      for (const auto& a : atoms_) {
        if (open ? !(a.position < x - 1e-9 * span_) : a.position > x + 1e-9 * span_) break;
        s += a.mass;
      }
      return s;
    }
    // Lattice points are snapped, so a query just below a lattice point (from
    // rounding of k * span) still includes it.
    const double xq = span_ > 0.0 ? snap(x) : x;
    return count_in(sorted_, xq, open) / static_cast<double>(runs_.size());
  }

  LadderKind kind_ = LadderKind::Descending;
  RenewalSource source_ = RenewalSource::ExactLattice;
  double x_max_ = 0.0;
  double span_ = 0.0;
  std::vector<RenewalAtom> atoms_;
  std::vector<PathData> runs_;
  std::vector<double> sorted_;
};

/// R(x) = mu([0, x]) of the strict descending ladder.
inline double renewal_function(const RenewalMeasure& mu, double x) { return mu.cdf(x); }

/// Rbar(x) = mu=([0, x)) for x > 0, 1 at 0.
inline double renewal_function_weak(const RenewalMeasure& mu_weak, double x) {
  if (x < 0.0) return 0.0;
  if (x == 0.0) return 1.0;
  return mu_weak.cdf_open(x);
}

/// Closed form for the fair +-a walk.
inline double renewal_simple_walk(double a, double x) {
  if (x < 0.0) return 0.0;
  return 1.0 + std::floor(x / a + 1e-9);
}

inline double renewal_simple_walk_weak(double a, double x) {
  if (x < 0.0) return 0.0;
  if (x == 0.0) return 1.0;
  return 2.0 * std::ceil(x / a - 1e-9);
}

/// Exact strict renewal function for walks that have one.
inline std::optional<RenewalFn> exact_renewal(const SpineWalk& walk) {
  if (!walk.is_simple_symmetric()) return std::nullopt;
  const double a = walk.lattice()->span;
  return RenewalFn([a](double x) { return renewal_simple_walk(a, x); });
}

/// R for any walk: exact when available, otherwise the ladder estimate on
/// [0, x_max], continued linearly beyond it with slope 1/E[H] (renewal theorem).
inline RenewalFn renewal_function_for(const SpineWalk& walk, double x_max, std::size_t paths, std::size_t max_steps,
                                      std::uint64_t seed, unsigned threads = 1) {
  if (auto R = exact_renewal(walk)) return *R;
  auto mu = std::make_shared<RenewalMeasure>(
      RenewalMeasure::from_ladder_paths(walk, LadderKind::Descending, x_max, paths, max_steps, seed, threads));
  const double top = mu->cdf(x_max), slope = mu->inverse_mean_height();
  return [mu, x_max, top, slope](double x) { return x <= x_max ? mu->cdf(x) : top + slope * (x - x_max); };
}

inline void write_renewal_csv(std::ostream& os, const RenewalMeasure& m, double bin = 0.0) {
  os << "position,mass\n";
  for (const auto& a : m.atoms(bin)) os << format_real(a.position) << ',' << format_real(a.mass) << '\n';
}

// ---------------------------------------------------------------------------
// c=

enum class CEqualsMethod { NegExcursion, PosExcursion, ExpSeries };

inline std::string to_string(CEqualsMethod m) {
  switch (m) {
    case CEqualsMethod::NegExcursion: return "neg_excursion";
    case CEqualsMethod::PosExcursion: return "pos_excursion";
    case CEqualsMethod::ExpSeries: return "exp_series";
  }
  return {};
}

/// Value of c= with a rigorous-or-stated enclosing interval [lo, hi].
struct CEqualsResult {
  double value = 1.0;
  double lo = 1.0;
  double hi = 1.0;
  std::size_t truncation = 0;
  [[nodiscard]] double error_bound() const { return (hi - lo) / 2; }
};

namespace detail {

inline double offset_variance(const LatticeSteps& s) {
  double m = 0.0, v = 0.0;
  for (auto [o, p] : s.atoms) m += p * static_cast<double>(o);
  for (auto [o, p] : s.atoms) v += p * (static_cast<double>(o) - m) * (static_cast<double>(o) - m);
  return v;
}

inline std::int64_t max_abs_offset(const LatticeSteps& s) {
  std::int64_t m = 0;
  for (auto [o, p] : s.atoms) m = std::max(m, std::abs(o));
  return m;
}

/// First-passage sum f = sum_{n=1}^M P(S_n = 0, S_k < 0 for 1 <= k < n) (or
/// "> 0" when positive), plus the alive mass at M, which bounds the tail since
/// the events are disjoint in n.
inline std::pair<double, double> first_return_sum(const LatticeSteps& steps, std::size_t M, bool positive) {
  const double sd = std::sqrt(offset_variance(steps));
  const std::int64_t L = static_cast<std::int64_t>(std::ceil(12.0 * sd * std::sqrt(static_cast<double>(M)))) +
                         2 * max_abs_offset(steps) + 2;
  // index i <-> level -(i + 1) (negative side; mirrored for "positive")
  std::vector<double> cur(static_cast<std::size_t>(L), 0.0), next(cur.size(), 0.0);
  CompensatedSum f;
  double dropped = 0.0;
  std::int64_t reach = 0;  // cur is zero beyond index reach
  auto step_off = [&](std::int64_t o) { return positive ? -o : o; };
  for (auto [o, p] : steps.atoms) {
    const std::int64_t lvl = step_off(o);
    if (lvl == 0)
      f += p;
    else if (lvl < 0) {
      if (-lvl - 1 < L)
        cur[static_cast<std::size_t>(-lvl - 1)] += p;
      else
        dropped += p;
      reach = std::max(reach, -lvl);
    }
  }
  for (std::size_t n = 2; n <= M; ++n) {
    const std::int64_t hi = std::min<std::int64_t>(L, reach + max_abs_offset(steps) + 1);
    std::fill(next.begin(), next.begin() + hi, 0.0);
    for (std::int64_t i = 0; i < std::min<std::int64_t>(reach, L); ++i) {
      const double m = cur[static_cast<std::size_t>(i)];
      if (m == 0.0) continue;
      const std::int64_t lvl = -(i + 1);
      for (auto [o, p] : steps.atoms) {
        const std::int64_t to = lvl + step_off(o);
        if (to == 0)
          f += m * p;
        else if (to < 0) {
          if (-to - 1 < L)
            next[static_cast<std::size_t>(-to - 1)] += m * p;
          else
            dropped += m * p;
        }
      }
    }
    reach = hi;
    std::swap(cur, next);
  }
  double alive = 0.0;
  for (double v : cur) alive += v;
  return {f.value(), alive + dropped};
}

/// s = sum_{n=1}^M P(S_n = 0)/n and a tail bound 2C/sqrt(M), where C bounds
/// sqrt(n) P(S_n = 0) over the last half of the range.
inline std::pair<double, double> return_series(const LatticeSteps& steps, std::size_t M) {
  const double sd = std::sqrt(offset_variance(steps));
  const std::int64_t L = static_cast<std::int64_t>(std::ceil(12.0 * sd * std::sqrt(static_cast<double>(M)))) +
                         2 * max_abs_offset(steps) + 2;
  const std::size_t width = static_cast<std::size_t>(2 * L + 1);
  std::vector<double> cur(width, 0.0), next(width, 0.0);
  cur[static_cast<std::size_t>(L)] = 1.0;
  const std::int64_t amax = max_abs_offset(steps);
  CompensatedSum s;
  double C = 0.0;
  for (std::size_t n = 1; n <= M; ++n) {
    const std::int64_t span = std::min<std::int64_t>(L, static_cast<std::int64_t>(n) * amax);
    const std::int64_t prev = std::min<std::int64_t>(L, static_cast<std::int64_t>(n - 1) * amax);
    std::fill(next.begin() + (L - span), next.begin() + (L + span + 1), 0.0);
    for (std::int64_t j = -prev; j <= prev; ++j) {
      const double m = cur[static_cast<std::size_t>(j + L)];
      if (m == 0.0) continue;
      for (auto [o, p] : steps.atoms) {
        const std::int64_t to = j + o;
        if (to >= -L && to <= L) next[static_cast<std::size_t>(to + L)] += m * p;
      }
    }
    std::swap(cur, next);
    const double p0 = cur[static_cast<std::size_t>(L)];
    s += p0 / static_cast<double>(n);
    if (2 * n >= M) C = std::max(C, std::sqrt(static_cast<double>(n)) * p0);
  }
  return {s.value(), 2.0 * C / std::sqrt(static_cast<double>(M))};
}

}  // namespace detail

/// c= by one of its three expressions. Non-lattice walks have P(S_n = 0) = 0,
/// hence c= = 1 exactly. Lattice walks use dynamic programming over the
/// lattice up to `truncation` steps, with the tail enclosed in [lo, hi].
inline CEqualsResult c_equals(const SpineWalk& walk, CEqualsMethod method, std::size_t truncation = 40000) {
  if (!walk.lattice()) {
    if (walk.lattice_span() > 0.0)
      throw std::invalid_argument("c_equals: lattice walk is not centred on its lattice");
    return {1.0, 1.0, 1.0, 0};
  }
  const auto& steps = *walk.lattice();
  CEqualsResult r;
  r.truncation = truncation;
  if (method == CEqualsMethod::ExpSeries) {
    const auto [s, tail] = detail::return_series(steps, truncation);
    r.lo = std::exp(s);
    r.hi = std::exp(s + tail);
  } else {
    const auto [f, tail] = detail::first_return_sum(steps, truncation, method == CEqualsMethod::PosExcursion);
    r.lo = 1.0 / (1.0 - f);
    r.hi = f + tail < 1.0 ? 1.0 / (1.0 - f - tail) : std::numeric_limits<double>::infinity();
  }
  r.value = std::isfinite(r.hi) ? 0.5 * (r.lo + r.hi) : r.lo;
  return r;
}

/// Reference value for walks where it is known in closed form.
inline std::optional<double> c_equals_closed_form(const SpineWalk& walk) {
  if (!walk.lattice()) return walk.lattice_span() > 0.0 ? std::nullopt : std::optional<double>(1.0);
  if (walk.is_simple_symmetric()) return 2.0;
  return std::nullopt;
}

}  // namespace brwlab
