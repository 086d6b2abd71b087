#pragma once

// The spinal branching random walk under the size-biased measure.
//
// Along the spine, the distinguished particle reproduces according to the
// size-biased law (density sum_i e^{-x_i} against the offspring law) and the
// next spine particle is picked among its children with probability
// proportional to e^{-displacement}. Off-spine subtrees are only grown when a
// caller asks for them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brwlab/brw.hpp"
#include "brwlab/offspring.hpp"
#include "brwlab/parallel.hpp"
#include "brwlab/rng.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

class SizeBiasingFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kSizeBiasRetryCap = 1'000'000;

struct SizeBiasedDraw {
  ChildSet children;
  std::size_t chosen = 0;
};

/// Draws (child set, spine child) from the size-biased law. Finite laws use
/// exact reweighting, the Gaussian family uses the tilt decomposition, sampled
/// laws use rejection against the law's weight bound.
class SizeBiasedSampler {
 public:
  explicit SizeBiasedSampler(OffspringLaw law) : law_(std::move(law)) {
    if (law_.has_finite_support()) {
      double total = 0.0;
      for (std::size_t o = 0; o < law_.outcomes().size(); ++o) {
        const auto& out = law_.outcomes()[o];
        for (std::size_t i = 0; i < out.displacements.size(); ++i) {
          const double w = out.probability * std::exp(-out.displacements[i]);
          if (w <= 0.0) continue;
          total += w;
          table_.push_back({o, i, total});
        }
      }
      if (table_.empty()) throw SizeBiasingFailed("size-biasing failed: law has no weighted child");
      for (auto& e : table_) e.cumulative /= total;
    }
  }

  [[nodiscard]] const OffspringLaw& law() const { return law_; }

  SizeBiasedDraw draw(Stream& rng) const {
    SizeBiasedDraw d;
    draw(rng, d);
    return d;
  }

  void draw(Stream& rng, SizeBiasedDraw& d) const {
    if (!table_.empty()) {
      const auto& e = pick(rng);
      d.children = law_.outcomes()[e.outcome].displacements;
      d.chosen = e.child;
      return;
    }
    if (law_.kind() == LawKind::GaussianBinary) {
      const auto m = static_cast<std::size_t>(law_.params()[0]);
      const double mu = law_.params()[1], s2 = law_.params()[2], sd = std::sqrt(s2);
      d.children.resize(m);
      d.chosen = rng.below(m);
      for (std::size_t i = 0; i < m; ++i) d.children[i] = (i == d.chosen ? mu - s2 : mu) + sd * rng.normal();
      return;
    }
    const double bound = law_.weight_bound();
    for (std::size_t attempt = 0; attempt < kSizeBiasRetryCap; ++attempt) {
      law_.sample(rng, d.children);
      double w = 0.0;
      for (double x : d.children) w += std::exp(-x);
      if (w <= 0.0 || rng.uniform() * bound >= w) continue;
      double u = rng.uniform() * w;
      d.chosen = d.children.size() - 1;
      for (std::size_t i = 0; i < d.children.size(); ++i) {
        u -= std::exp(-d.children[i]);
        if (u < 0.0) {
          d.chosen = i;
          break;
        }
      }
      return;
    }
    throw SizeBiasingFailed("size-biasing failed after " + std::to_string(kSizeBiasRetryCap) +
                            " proposals; is the law calibrated?");
  }

  /// Spine increment only.
  double step(Stream& rng) const {
    if (!table_.empty()) {
      const auto& e = pick(rng);
      return law_.outcomes()[e.outcome].displacements[e.child];
    }
    if (law_.kind() == LawKind::GaussianBinary) return std::sqrt(law_.params()[2]) * rng.normal() + law_.params()[1] - law_.params()[2];
    SizeBiasedDraw d;
    draw(rng, d);
    return d.children[d.chosen];
  }

  /// Distribution of the spine increment for finite laws: (value, probability).
  [[nodiscard]] std::vector<std::pair<double, double>> step_atoms() const {
    std::vector<std::pair<double, double>> atoms;
    double prev = 0.0;
    for (const auto& e : table_) {
      const double v = law_.outcomes()[e.outcome].displacements[e.child];
      const double p = e.cumulative - prev;
      prev = e.cumulative;
      auto it = std::find_if(atoms.begin(), atoms.end(), [&](auto& a) { return a.first == v; });
      if (it == atoms.end())
        atoms.emplace_back(v, p);
      else
        it->second += p;
    }
    std::sort(atoms.begin(), atoms.end());
    return atoms;
  }

 private:
  struct Entry {
    std::size_t outcome;
    std::size_t child;
    double cumulative;
  };
  const Entry& pick(Stream& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(table_.begin(), table_.end(), u, [](double v, const Entry& e) { return v < e.cumulative; });
    if (it == table_.end()) --it;
    return *it;
  }

  OffspringLaw law_;
  std::vector<Entry> table_;
};

inline SizeBiasedDraw sample_size_biased(const OffspringLaw& law, Stream& rng) {
  return SizeBiasedSampler(law).draw(rng);
}

/// Spine increments on an integer lattice: value = span * offset.
struct LatticeSteps {
  double span = 0.0;
  std::vector<std::pair<std::int64_t, double>> atoms;  // (offset, probability)
};

/// The spine position process as a random walk, with a fast path for the
/// symmetric +-a walk of the two-point law.
class SpineWalk {
 public:
  explicit SpineWalk(const OffspringLaw& law) : sampler_(law) {
    coin_ = law.kind() == LawKind::TwoPoint;
    if (coin_) half_step_ = law.params()[0];
    if (law.has_finite_support() && law.lattice_span() > 0.0) {
      LatticeSteps steps{law.lattice_span(), {}};
      for (auto [v, p] : sampler_.step_atoms()) {
        const double k = v / steps.span;
        const auto ki = static_cast<std::int64_t>(std::llround(k));
        if (std::abs(k - static_cast<double>(ki)) > 1e-9) {
          steps.atoms.clear();
          break;
        }
        steps.atoms.emplace_back(ki, p);
      }
      if (!steps.atoms.empty()) lattice_ = std::move(steps);
    }
  }

  [[nodiscard]] double step(Stream& rng) const {
    if (coin_) return rng.coin() ? half_step_ : -half_step_;
    return sampler_.step(rng);
  }

  [[nodiscard]] const OffspringLaw& law() const { return sampler_.law(); }
  [[nodiscard]] LatticeSnap snapper(double origin) const { return {lattice_span(), origin}; }
  [[nodiscard]] const SizeBiasedSampler& sampler() const { return sampler_; }
  [[nodiscard]] double sigma2() const { return sampler_.law().sigma2(); }
  [[nodiscard]] double lattice_span() const { return sampler_.law().lattice_span(); }
  /// Integer-lattice description of the increments, when the law is finite and
  /// centered on its lattice.
  [[nodiscard]] const std::optional<LatticeSteps>& lattice() const { return lattice_; }
  /// True for the +-a fair coin walk.
  [[nodiscard]] bool is_simple_symmetric() const {
    return lattice_ && lattice_->atoms.size() == 2 && lattice_->atoms[0].first == -1 && lattice_->atoms[1].first == 1 &&
           std::abs(lattice_->atoms[0].second - 0.5) < 1e-12;
  }

 private:
  SizeBiasedSampler sampler_;
  bool coin_ = false;
  double half_step_ = 0.0;
  std::optional<LatticeSteps> lattice_;
};

using RenewalFn = std::function<double(double)>;

struct SpinePath {
  std::vector<double> positions;          // X_{xi_0} .. X_{xi_n}
  std::vector<ChildSet> children;         // displacements of the children of xi_k
  std::vector<std::size_t> chosen;        // index of xi_{k+1} among them
  std::optional<double> pplus_weight;     // R(X_n) 1{min >= 0} / R(x), when R was given

  [[nodiscard]] std::size_t length() const { return positions.empty() ? 0 : positions.size() - 1; }
  [[nodiscard]] double min_position() const { return *std::min_element(positions.begin(), positions.end()); }
};

inline double pplus_weight(const RenewalFn& R, double x, double xn, double path_min) {
  const double rx = R(x);
  if (path_min < 0.0 || rx <= 0.0) return 0.0;
  return R(xn) / rx;
}

inline SpinePath run_spinal_brw(double x, std::size_t n, const SizeBiasedSampler& sampler, Stream& rng,
                                const RenewalFn& R = nullptr) {
  SpinePath p;
  p.positions.reserve(n + 1);
  p.positions.push_back(x);
  SizeBiasedDraw d;
  const LatticeSnap snap(sampler.law().lattice_span(), x);
  for (std::size_t k = 0; k < n; ++k) {
    sampler.draw(rng, d);
    p.positions.push_back(snap(p.positions.back() + d.children[d.chosen]));
    p.children.push_back(d.children);
    p.chosen.push_back(d.chosen);
  }
  if (R) p.pplus_weight = pplus_weight(R, x, p.positions.back(), p.min_position());
  return p;
}

inline SpinePath run_spinal_brw(double x, std::size_t n, const OffspringLaw& law, Stream& rng,
                                const RenewalFn& R = nullptr) {
  return run_spinal_brw(x, n, SizeBiasedSampler(law), rng, R);
}

// ---------------------------------------------------------------------------
// Many-to-one

/// Bounded per-particle functionals H(position, lineage minimum).
struct TestFunctional {
  enum class Kind { Constant, Survival, Laplace, IndicatorBelow };
  Kind kind = Kind::Constant;
  double param = 0.0;

  static TestFunctional constant() { return {Kind::Constant, 0.0}; }
  static TestFunctional survival() { return {Kind::Survival, 0.0}; }
  static TestFunctional laplace(double lambda) { return {Kind::Laplace, lambda}; }
  static TestFunctional indicator_below(double level) { return {Kind::IndicatorBelow, level}; }

  double operator()(double position, double path_min) const {
    switch (kind) {
      case Kind::Constant: return 1.0;
      case Kind::Survival: return path_min >= 0.0 ? 1.0 : 0.0;
      case Kind::Laplace: return std::exp(-param * position);
      case Kind::IndicatorBelow: return position <= param ? 1.0 : 0.0;
    }
    return 0.0;
  }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case Kind::Constant: return "constant";
      case Kind::Survival: return "survival";
      case Kind::Laplace: return "laplace(" + format_real(param) + ")";
      case Kind::IndicatorBelow: return "indicator(<=" + format_real(param) + ")";
    }
    return {};
  }
};

struct ManyToOneReport {
  EstimateWithError tree;   // E_x[sum_{|u|=n} e^{-X_u} H(u)]
  EstimateWithError spine;  // e^{-x} E*_x[H(xi_n)]
  double z = 0.0;           // |tree - spine| / combined SE
};

/// Tree side: one population per replicate, one value per functional.
inline std::vector<std::vector<double>> tree_functional_samples(double x, std::size_t n, const OffspringLaw& law,
                                                                std::span<const TestFunctional> fs,
                                                                std::size_t replicates, const StreamKey& key,
                                                                unsigned threads) {
  auto rows = parallel_map<std::vector<double>>(replicates, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    const auto pop = simulate_population(x, n, law, rng);
    std::vector<double> v(fs.size());
    for (std::size_t j = 0; j < fs.size(); ++j) {
      CompensatedSum s;
      for (std::size_t i = 0; i < pop.size(); ++i)
        s += std::exp(-pop.positions[i]) * fs[j](pop.positions[i], pop.path_mins[i]);
      v[j] = s.value();
    }
    return v;
  });
  std::vector<std::vector<double>> cols(fs.size(), std::vector<double>(replicates));
  for (std::size_t r = 0; r < replicates; ++r)
    for (std::size_t j = 0; j < fs.size(); ++j) cols[j][r] = rows[r][j];
  return cols;
}

inline std::vector<std::vector<double>> spine_functional_samples(double x, std::size_t n, const SpineWalk& walk,
                                                                 std::span<const TestFunctional> fs,
                                                                 std::size_t replicates, const StreamKey& key,
                                                                 unsigned threads) {
  auto rows = parallel_map<std::vector<double>>(replicates, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    const auto snap = walk.snapper(x);
    double pos = x, mn = x;
    for (std::size_t k = 0; k < n; ++k) {
      pos = snap(pos + walk.step(rng));
      mn = std::min(mn, pos);
    }
    std::vector<double> v(fs.size());
    for (std::size_t j = 0; j < fs.size(); ++j) v[j] = std::exp(-x) * fs[j](pos, mn);
    return v;
  });
  std::vector<std::vector<double>> cols(fs.size(), std::vector<double>(replicates));
  for (std::size_t r = 0; r < replicates; ++r)
    for (std::size_t j = 0; j < fs.size(); ++j) cols[j][r] = rows[r][j];
  return cols;
}

/// Tree and spine estimates of both sides of the many-to-one formula, for each
/// functional, from independent streams.
inline std::vector<ManyToOneReport> many_to_one_check(double x, std::size_t n, std::span<const TestFunctional> fs,
                                                      const OffspringLaw& law, std::size_t replicates,
                                                      std::uint64_t seed, unsigned threads = 1) {
  const StreamKey tk{seed, experiments::kManyToOneTree, 0, static_cast<std::uint32_t>(n)};
  const StreamKey sk{seed, experiments::kManyToOneSpine, 0, static_cast<std::uint32_t>(n)};
  const auto tree = tree_functional_samples(x, n, law, fs, replicates, tk, threads);
  const auto spine = spine_functional_samples(x, n, SpineWalk(law), fs, replicates, sk, threads);
  std::vector<ManyToOneReport> out;
  for (std::size_t j = 0; j < fs.size(); ++j) {
    ManyToOneReport r{mean_with_se(tree[j]), mean_with_se(spine[j]), 0.0};
    r.z = z_distance(r.tree, r.spine);
    out.push_back(r);
  }
  return out;
}

/// Exact e^{-x} E*_x[H(xi_n)] by enumerating spine paths of a finite law.
inline double exact_spine_expectation(double x, std::size_t n, const OffspringLaw& law,
                                      const ParticleFunctional& H) {
  const auto atoms = SizeBiasedSampler(law).step_atoms();
  CompensatedSum s;
  std::function<void(std::size_t, double, double, double)> rec = [&](std::size_t k, double pos, double mn, double p) {
    if (k == n) {
      s += p * H(pos, mn);
      return;
    }
    for (auto [v, q] : atoms) rec(k + 1, pos + v, std::min(mn, pos + v), p * q);
  };
  rec(0, x, x, 1.0);
  return std::exp(-x) * s.value();
}

// ---------------------------------------------------------------------------
// Decomposition of W'_n along the spine

struct DecompositionCheck {
  double lhs = 0.0;  // W'_n summed particle by particle over the realized tree
  double rhs = 0.0;  // spine term + sum of killed-subtree martingales
};

/// Grows every off-spine subtree of `path` to generation n and evaluates both
/// sides of the spine decomposition of W'_n on that one realization.
inline DecompositionCheck spine_decomposition_identity(const SpinePath& path, const OffspringLaw& law, Stream& rng,
                                                       std::size_t cap = kDefaultPopulationCap) {
  if (path.positions.empty()) throw std::invalid_argument("decomposition: empty path");
  if (path.positions[0] < 0.0) throw std::invalid_argument("decomposition: need x >= 0");
  const std::size_t n = path.length();

  std::vector<double> prefix_min(n + 1);
  prefix_min[0] = path.positions[0];
  for (std::size_t k = 1; k <= n; ++k) prefix_min[k] = std::min(prefix_min[k - 1], path.positions[k]);

  const LatticeSnap snap(law.lattice_span(), path.positions[0]);
  CompensatedSum lhs, rhs;
  const double spine_term = prefix_min[n] >= 0.0 ? std::exp(-path.positions[n]) : 0.0;
  lhs += spine_term;
  rhs += spine_term;

  for (std::size_t k = 0; k < n; ++k) {
    const auto& kids = path.children[k];
    for (std::size_t i = 0; i < kids.size(); ++i) {
      if (i == path.chosen[k]) continue;
      const double root = snap(path.positions[k] + kids[i]);
      const auto sub = simulate_population(root, n - k - 1, law, rng, cap, path.positions[0]);
      CompensatedSum w_sub;
      for (std::size_t j = 0; j < sub.size(); ++j) {
        const double e = std::exp(-sub.positions[j]);
        if (std::min(prefix_min[k], sub.path_mins[j]) >= 0.0) lhs += e;
        if (sub.path_mins[j] >= 0.0) w_sub += e;
      }
      if (prefix_min[k] >= 0.0 && root >= 0.0) rhs += w_sub.value();
    }
  }
  return {lhs.value(), rhs.value()};
}

// ---------------------------------------------------------------------------
// Doob transform by importance weighting

/// Time-1 marginal of the three-dimensional Bessel process started at 0.
inline double bessel3_cdf(double z) {
  if (z <= 0.0) return 0.0;
  return std::erf(z / std::numbers::sqrt2) - std::sqrt(2.0 / std::numbers::pi) * z * std::exp(-z * z / 2.0);
}

inline double bessel3_density(double z) {
  if (z <= 0.0) return 0.0;
  return std::sqrt(2.0 / std::numbers::pi) * z * z * std::exp(-z * z / 2.0);
}

struct PPlusEnsemble {
  double x = 0.0;
  std::size_t n = 0;
  std::vector<double> final_positions;
  std::vector<double> weights;        // R(X_n) 1{min >= 0} / R(x), unnormalized
  std::vector<std::vector<double>> paths;  // filled only when requested
  EstimateWithError mean_weight;      // should be 1 by harmonicity
  double ess = 0.0;
  bool low_ess = false;               // ess < 100

  /// Weighted KS distance of X_n / (sigma sqrt n) to the Bessel(3) time-1 law.
  [[nodiscard]] double bessel_ks(double sigma2) const {
    std::vector<double> z(final_positions.size());
    const double scale = std::sqrt(sigma2 * static_cast<double>(n));
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = final_positions[i] / scale;
    return weighted_ks(z, weights, bessel3_cdf);
  }
};

inline double effective_sample_size(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

/// Spine paths under P*_x, weighted by R(X_n) 1{min >= 0} / R(x). Paths that
/// dip below 0 are stopped early (their weight is 0).
inline PPlusEnsemble sample_p_plus(double x, std::size_t n, const OffspringLaw& law, std::size_t replicates,
                                   const RenewalFn& R, std::uint64_t seed, unsigned threads = 1,
                                   bool keep_paths = false) {
  if (x < 0.0) throw std::invalid_argument("sample_p_plus: need x >= 0");
  const SpineWalk walk(law);
  const StreamKey key{seed, experiments::kPPlus, 0, static_cast<std::uint32_t>(n)};
  struct One {
    double pos = 0.0;
    double weight = 0.0;
    std::vector<double> path;
  };
  auto runs = parallel_map<One>(replicates, threads, [&](std::size_t r) {
    Stream rng(key.with_replicate(static_cast<std::uint32_t>(r)));
    One o;
    const auto snap = walk.snapper(x);
    double pos = x;
    bool alive = true;
    if (keep_paths) o.path.push_back(pos);
    for (std::size_t k = 0; k < n; ++k) {
      pos = snap(pos + walk.step(rng));
      if (keep_paths) o.path.push_back(pos);
      if (pos < 0.0) {
        alive = false;
        if (!keep_paths) break;
      }
    }
    o.pos = pos;
    o.weight = alive ? R(pos) / R(x) : 0.0;
    return o;
  });
  PPlusEnsemble e;
  e.x = x;
  e.n = n;
  for (auto& o : runs) {
    e.final_positions.push_back(o.pos);
    e.weights.push_back(o.weight);
    if (keep_paths) e.paths.push_back(std::move(o.path));
  }
  e.mean_weight = mean_with_se(e.weights);
  e.ess = effective_sample_size(e.weights);
  e.low_ess = e.ess < 100.0;
  return e;
}

/// CSV: replicate, k, X_spine, weight (weight repeated along the path).
inline void write_spine_csv(std::ostream& os, const PPlusEnsemble& e) {
  os << "replicate,k,X_spine,weight\n";
  for (std::size_t r = 0; r < e.weights.size(); ++r) {
    if (e.paths.empty()) {
      os << r << ',' << e.n << ',' << format_real(e.final_positions[r]) << ',' << format_real(e.weights[r]) << '\n';
      continue;
    }
    for (std::size_t k = 0; k < e.paths[r].size(); ++k)
      os << r << ',' << k << ',' << format_real(e.paths[r][k]) << ',' << format_real(e.weights[r]) << '\n';
  }
}

}  // namespace brwlab
