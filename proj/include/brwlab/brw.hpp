#pragma once

// Forward simulation of the branching random walk.
//
// No tree is stored. Each particle carries its position, the minimum of its
// lineage, and the minimum of its lineage restricted to generations >= k0,
// which is all the killed martingales need. Killed particles keep reproducing;
// only their indicator drops to zero.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "brwlab/offspring.hpp"
#include "brwlab/rng.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

inline constexpr std::size_t kDefaultPopulationCap = std::size_t{1} << 27;
inline constexpr double kNotYet = std::numeric_limits<double>::infinity();

class PopulationOverflow : public std::runtime_error {
 public:
  explicit PopulationOverflow(std::size_t cap)
      : std::runtime_error("population overflow: more than " + std::to_string(cap) + " particles"), cap_(cap) {}
  [[nodiscard]] std::size_t cap() const { return cap_; }

 private:
  std::size_t cap_;
};

struct ParticleArray {
  std::vector<double> positions;
  std::vector<double> path_mins;
  std::vector<double> path_mins_after_k0;  // kNotYet before generation k0
  std::size_t generation = 0;
  double origin = 0.0;  // lattice anchor for positions

  [[nodiscard]] std::size_t size() const { return positions.size(); }
  [[nodiscard]] bool empty() const { return positions.empty(); }
  void clear() {
    positions.clear();
    path_mins.clear();
    path_mins_after_k0.clear();
  }
};

inline ParticleArray initial_particles(double x, std::size_t k0 = 0,
                                       double origin = std::numeric_limits<double>::quiet_NaN()) {
  ParticleArray p;
  p.origin = std::isnan(origin) ? x : origin;
  p.positions = {x};
  p.path_mins = {x};
  p.path_mins_after_k0 = {k0 == 0 ? x : kNotYet};
  return p;
}

/// Replaces every particle by its children. `next` is overwritten (its storage
/// is reused across generations).
inline void step_generation(const ParticleArray& state, ParticleArray& next, const OffspringLaw& law, Stream& rng,
                            std::size_t k0 = 0, std::size_t cap = kDefaultPopulationCap) {
  next.clear();
  next.generation = state.generation + 1;
  next.origin = state.origin;
  const LatticeSnap snap(law.lattice_span(), state.origin);
  const bool track_k0 = next.generation >= k0;
  if (state.size() * law.min_children() > cap) throw PopulationOverflow(cap);
  if (const std::size_t most = std::min(cap, state.size() * law.max_children()); most > 0) {
    next.positions.reserve(most);
    next.path_mins.reserve(most);
    next.path_mins_after_k0.reserve(most);
  }
  ChildSet kids;
  kids.reserve(law.max_children());
  for (std::size_t i = 0; i < state.size(); ++i) {
    law.sample(rng, kids);
    if (next.size() + kids.size() > cap) throw PopulationOverflow(cap);
    const double x = state.positions[i];
    const double m = state.path_mins[i];
    const double mk = state.path_mins_after_k0[i];
    for (double d : kids) {
      const double y = snap(x + d);
      next.positions.push_back(y);
      next.path_mins.push_back(std::min(m, y));
      next.path_mins_after_k0.push_back(track_k0 ? std::min(mk, y) : kNotYet);
    }
  }
}

inline ParticleArray step_generation(const ParticleArray& state, const OffspringLaw& law, Stream& rng,
                                     std::size_t k0 = 0, std::size_t cap = kDefaultPopulationCap) {
  ParticleArray next;
  step_generation(state, next, law, rng, k0, cap);
  return next;
}

struct GenerationSums {
  double W = 0.0;
  double D = 0.0;
  double Wprime = 0.0;
  double Wsecond = 0.0;
  double min_position = kNotYet;  // +inf after extinction
};

inline GenerationSums martingale_sums(const ParticleArray& p) {
  CompensatedSum w, d, w1, w2;
  double mn = kNotYet;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p.positions[i];
    const double e = std::exp(-x);
    w += e;
    d += x * e;
    if (p.path_mins[i] >= 0.0) w1 += e;
    if (p.path_mins_after_k0[i] >= 0.0) w2 += e;
    mn = std::min(mn, x);
  }
  return {w.value(), d.value(), w1.value(), w2.value(), mn};
}

/// W_n, D_n, W'_n and W''_{n,k0} for n = 0..N on one realization.
struct MartingaleSeries {
  double x = 0.0;
  std::size_t k0 = 0;
  std::vector<double> W, D, Wprime, Wsecond;
  std::vector<double> min_position;  // min_{|u|=n} X_u, +inf after extinction
  std::vector<std::size_t> population;

  [[nodiscard]] std::size_t horizon() const { return W.empty() ? 0 : W.size() - 1; }
};

inline MartingaleSeries run_brw(double x, std::size_t N, std::size_t k0, const OffspringLaw& law, Stream& rng,
                                std::size_t cap = kDefaultPopulationCap) {
  if (N < k0) throw std::invalid_argument("run_brw: need N >= k0");
  MartingaleSeries s;
  s.x = x;
  s.k0 = k0;
  ParticleArray cur = initial_particles(x, k0), next;
  auto record = [&](const ParticleArray& p) {
    const auto g = martingale_sums(p);
    s.W.push_back(g.W);
    s.D.push_back(g.D);
    s.Wprime.push_back(g.Wprime);
    s.Wsecond.push_back(g.Wsecond);
    s.min_position.push_back(g.min_position);
    s.population.push_back(p.size());
  };
  record(cur);
  for (std::size_t n = 1; n <= N; ++n) {
    step_generation(cur, next, law, rng, k0, cap);
    std::swap(cur, next);
    record(cur);
  }
  return s;
}

/// Population at generation n started from one particle at x.
inline ParticleArray simulate_population(double x, std::size_t n, const OffspringLaw& law, Stream& rng,
                                         std::size_t cap = kDefaultPopulationCap,
                                         double origin = std::numeric_limits<double>::quiet_NaN()) {
  ParticleArray cur = initial_particles(x, 0, origin), next;
  for (std::size_t g = 0; g < n; ++g) {
    step_generation(cur, next, law, rng, 0, cap);
    std::swap(cur, next);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration (oracle for the simulator).

class OutcomeExplosion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultOutcomeCap = 10'000'000;

/// Visits every outcome of the first N generations with its exact probability.
/// visitor(final_population, probability). Throws OutcomeExplosion once more
/// than `cap` outcomes would be visited.
template <class Visitor>
void for_each_outcome(double x, std::size_t N, const OffspringLaw& law, Visitor&& visitor,
                      std::size_t cap = kDefaultOutcomeCap) {
  if (!law.has_finite_support()) throw std::invalid_argument("enumerate: law has no finite support");
  const auto& outcomes = law.outcomes();
  std::size_t visited = 0;
  const LatticeSnap snap(law.lattice_span(), x);

  // Recursion over generations, and within a generation over the particles.
  std::function<void(const ParticleArray&, std::size_t, ParticleArray&, double)> choose;
  std::function<void(const ParticleArray&, double)> generation = [&](const ParticleArray& state, double prob) {
    if (state.generation == N || state.empty()) {
      if (++visited > cap) throw OutcomeExplosion("enumerate: more than " + std::to_string(cap) + " outcomes");
      visitor(state, prob);
      return;
    }
    ParticleArray next;
    next.generation = state.generation + 1;
    choose(state, 0, next, prob);
  };
  choose = [&](const ParticleArray& state, std::size_t i, ParticleArray& next, double prob) {
    if (i == state.size()) {
      generation(next, prob);
      return;
    }
    const double xp = state.positions[i];
    const double mp = state.path_mins[i];
    for (const auto& o : outcomes) {
      if (o.probability == 0.0) continue;
      const std::size_t mark = next.size();
      for (double d : o.displacements) {
        const double y = snap(xp + d);
        next.positions.push_back(y);
        next.path_mins.push_back(std::min(mp, y));
        next.path_mins_after_k0.push_back(std::min(mp, y));
      }
      choose(state, i + 1, next, prob * o.probability);
      next.positions.resize(mark);
      next.path_mins.resize(mark);
      next.path_mins_after_k0.resize(mark);
    }
  };
  generation(initial_particles(x), 1.0);
}

struct ExactAtom {
  double W = 0.0;
  double D = 0.0;
  double Wprime = 0.0;
  double probability = 0.0;
};

/// Exact joint law of (W_N, D_N, W'_N) as a list of atoms.
struct ExactDistribution {
  std::vector<ExactAtom> atoms;
  std::size_t outcomes = 0;

  template <class F>
  [[nodiscard]] double expectation(F&& f) const {
    CompensatedSum s;
    for (const auto& a : atoms) s += a.probability * f(a);
    return s.value();
  }
  /// Index of the atom matching (W, D, W') to within the quantization grid,
  /// or atoms.size() when absent.
  [[nodiscard]] std::size_t find(double W, double D, double Wprime) const;

  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, std::size_t> index;
};

namespace detail {
inline constexpr double kAtomGrid = 1e8;
inline std::tuple<std::int64_t, std::int64_t, std::int64_t> atom_key(double W, double D, double Wp) {
  return {std::llround(W * kAtomGrid), std::llround(D * kAtomGrid), std::llround(Wp * kAtomGrid)};
}
}  // namespace detail

inline std::size_t ExactDistribution::find(double W, double D, double Wprime) const {
  const auto it = index.find(detail::atom_key(W, D, Wprime));
  return it == index.end() ? atoms.size() : it->second;
}

inline ExactDistribution enumerate_exact(double x, std::size_t N, const OffspringLaw& law,
                                         std::size_t cap = kDefaultOutcomeCap) {
  if (N > 5) throw std::invalid_argument("enumerate_exact: N must be at most 5");
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, std::pair<ExactAtom, CompensatedSum>> merged;
  std::size_t count = 0;
  for_each_outcome(
      x, N, law,
      [&](const ParticleArray& p, double prob) {
        ++count;
        const auto g = martingale_sums(p);
        auto& slot = merged[detail::atom_key(g.W, g.D, g.Wprime)];
        slot.first = {g.W, g.D, g.Wprime, 0.0};
        slot.second += prob;
      },
      cap);
  ExactDistribution out;
  out.outcomes = count;
  for (auto& [key, v] : merged) {
    v.first.probability = v.second.value();
    out.index[key] = out.atoms.size();
    out.atoms.push_back(v.first);
  }
  return out;
}

/// Per-particle functional H(position, lineage minimum).
using ParticleFunctional = std::function<double(double position, double path_min)>;

/// Exact E_x[sum_{|u|=N} e^{-X_u} H(u)] by enumeration.
inline double exact_additive_expectation(double x, std::size_t N, const OffspringLaw& law,
                                         const ParticleFunctional& H, std::size_t cap = kDefaultOutcomeCap) {
  CompensatedSum s;
  for_each_outcome(
      x, N, law,
      [&](const ParticleArray& p, double prob) {
        CompensatedSum inner;
        for (std::size_t i = 0; i < p.size(); ++i) inner += std::exp(-p.positions[i]) * H(p.positions[i], p.path_mins[i]);
        s += prob * inner.value();
      },
      cap);
  return s.value();
}

/// Second moments of (W_n, D_n) started at x, for finite-support laws. The
/// sample variance of W_n badly underestimates Var W_n at desk scale (the mass
/// sits on events rarer than one replicate), so SEs of means use these.
struct MartingaleMoments {
  double EW2 = 0.0, EWD = 0.0, ED2 = 0.0;
  double EW = 0.0, ED = 0.0;
  [[nodiscard]] double var_W() const { return EW2 - EW * EW; }
  [[nodiscard]] double var_D() const { return ED2 - ED * ED; }
};

inline MartingaleMoments exact_martingale_moments(double x, std::size_t n, const OffspringLaw& law) {
  if (!law.has_finite_support()) throw std::invalid_argument("exact_martingale_moments: need a finite-support law");
  // one-generation sums, each E[sum over children (or ordered pairs i != j)]
  double s_w = 0.0, s_d = 0.0, s_d2 = 0.0, p_ww = 0.0, p_wd = 0.0, p_dd = 0.0;
  for (const auto& o : law.outcomes()) {
    const auto& ds = o.displacements;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double e2 = std::exp(-2.0 * ds[i]);
      s_w += o.probability * e2;
      s_d += o.probability * e2 * ds[i];
      s_d2 += o.probability * e2 * ds[i] * ds[i];
      for (std::size_t j = 0; j < ds.size(); ++j) {
        if (i == j) continue;
        const double e = std::exp(-ds[i] - ds[j]);
        p_ww += o.probability * e;
        p_wd += o.probability * e * ds[j];
        p_dd += o.probability * e * ds[i] * ds[j];
      }
    }
  }
  double A = 1.0, B = 0.0, C = 0.0;  // from 0: E W^2, E WD, E D^2
  for (std::size_t k = 0; k < n; ++k) {
    const double A1 = s_w * A + p_ww;
    const double B1 = s_d * A + s_w * B + p_wd;
    const double C1 = s_d2 * A + 2.0 * s_d * B + s_w * C + p_dd;
    A = A1;
    B = B1;
    C = C1;
  }
  const double e = std::exp(-x);
  MartingaleMoments m;
  m.EW = e;
  m.ED = x * e;
  m.EW2 = e * e * A;
  m.EWD = e * e * (B + x * A);
  m.ED2 = e * e * (C + 2.0 * x * B + x * x * A);
  return m;
}

// ---------------------------------------------------------------------------
// CSV: replicate, n, W, D, Wprime, Wsecond

inline void write_series_header(std::ostream& os) { os << "replicate,n,W,D,Wprime,Wsecond\n"; }

inline void write_series_rows(std::ostream& os, std::size_t replicate, const MartingaleSeries& s) {
  for (std::size_t n = 0; n < s.W.size(); ++n)
    os << replicate << ',' << n << ',' << format_real(s.W[n]) << ',' << format_real(s.D[n]) << ','
       << format_real(s.Wprime[n]) << ',' << format_real(s.Wsecond[n]) << '\n';
}

}  // namespace brwlab
