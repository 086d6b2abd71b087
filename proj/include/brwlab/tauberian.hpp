#pragma once

// Equivalence of  int phi(y) rho(y) dy < inf  and  E[log+Y rho(log+Y)] < inf,
// with phi(y) = E[min(e^-y Y, 1)], checked on laws of Y whose log has a closed
// form tail.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "brwlab/offspring.hpp"
#include "brwlab/rng.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

namespace detail {
inline std::string short_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}
}  // namespace detail

/// Y = e^T with T >= 0, so log+ Y = T.
class HeavyLogLaw {
 public:
  enum class Family { ParetoLog, ExpLog, Bounded };

  /// P(T > t) = (1 + t)^-beta.
  static HeavyLogLaw pareto_log(double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("pareto_log: beta must be positive");
    return {Family::ParetoLog, beta};
  }
  /// T ~ Exponential(r).
  static HeavyLogLaw exp_log(double r) {
    if (!(r > 0.0)) throw std::invalid_argument("exp_log: rate must be positive");
    return {Family::ExpLog, r};
  }
  /// T ~ Uniform[0, b].
  static HeavyLogLaw bounded(double b = 1.0) {
    if (!(b > 0.0)) throw std::invalid_argument("bounded: width must be positive");
    return {Family::Bounded, b};
  }

  [[nodiscard]] Family family() const { return family_; }
  [[nodiscard]] double param() const { return param_; }
  [[nodiscard]] std::string name() const {
    switch (family_) {
      case Family::ParetoLog: return "ParetoLog(" + detail::short_real(param_) + ")";
      case Family::ExpLog: return "ExpLog(" + detail::short_real(param_) + ")";
      case Family::Bounded: return "Bounded(" + detail::short_real(param_) + ")";
    }
    return {};
  }

  /// P(log+ Y > t).
  [[nodiscard]] double tail(double t) const {
    if (t < 0.0) return 1.0;
    switch (family_) {
      case Family::ParetoLog: return std::pow(1.0 + t, -param_);
      case Family::ExpLog: return std::exp(-param_ * t);
      case Family::Bounded: return std::max(0.0, 1.0 - t / param_);
    }
    return 0.0;
  }
  [[nodiscard]] double density(double t) const {
    if (t < 0.0) return 0.0;
    switch (family_) {
      case Family::ParetoLog: return param_ * std::pow(1.0 + t, -param_ - 1.0);
      case Family::ExpLog: return param_ * std::exp(-param_ * t);
      case Family::Bounded: return t <= param_ ? 1.0 / param_ : 0.0;
    }
    return 0.0;
  }
  /// Upper end of the support of log+ Y.
  [[nodiscard]] double support_max() const {
    return family_ == Family::Bounded ? param_ : std::numeric_limits<double>::infinity();
  }

  /// A draw of log+ Y (Y itself overflows for heavy laws).
  [[nodiscard]] double sample_log(Stream& rng) const {
    const double u = rng.uniform_pos();
    switch (family_) {
      case Family::ParetoLog: return std::pow(u, -1.0 / param_) - 1.0;
      case Family::ExpLog: return -std::log(u) / param_;
      case Family::Bounded: return param_ * (1.0 - u);
    }
    return 0.0;
  }

 private:
  HeavyLogLaw(Family f, double p) : family_(f), param_(p) {}
  Family family_;
  double param_;
};

/// Regularly varying weights of index > -1.
class RhoFn {
 public:
  enum class Kind { Power, Constant, YLogY };

  static RhoFn power(double alpha) {
    if (!(alpha > -1.0) || alpha > 2.0) throw std::invalid_argument("rho: power index must lie in (-1, 2]");
    return {Kind::Power, alpha};
  }
  static RhoFn constant() { return {Kind::Constant, 0.0}; }
  /// y log(1 + y), index 1.
  static RhoFn y_log_y() { return {Kind::YLogY, 1.0}; }

  [[nodiscard]] double operator()(double y) const {
    switch (kind_) {
      case Kind::Power: return std::pow(y, alpha_);
      case Kind::Constant: return 1.0;
      case Kind::YLogY: return y * std::log1p(y);
    }
    return 0.0;
  }
  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] double index() const { return alpha_; }
  [[nodiscard]] std::string name() const {
    switch (kind_) {
      case Kind::Power: return alpha_ == 1.0 ? "y" : "y^" + detail::short_real(alpha_);
      case Kind::Constant: return "1";
      case Kind::YLogY: return "y*log(1+y)";
    }
    return {};
  }

 private:
  RhoFn(Kind k, double a) : kind_(k), alpha_(a) {}
  Kind kind_;
  double alpha_;
};

/// phi(y) = P(T >= y) + int_0^y e^{t-y} f(t) dt.
inline double phi(const HeavyLogLaw& law, double y) {
  if (y < 0.0) throw std::invalid_argument("phi: need y >= 0");
  const double top = std::min(y, law.support_max());
  double inner = 0.0;
  if (top > 0.0)
    inner = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double t) { return std::exp(t - y) * law.density(t); }, 0.0, top, 15, 1e-12);
  return law.tail(y) + inner;
}

inline EstimateWithError phi_mc(const HeavyLogLaw& law, double y, std::size_t samples, const StreamKey& key) {
  if (y < 0.0) throw std::invalid_argument("phi: need y >= 0");
  Stream rng(key);
  std::vector<double> v(samples);
  for (auto& s : v) {
    const double t = law.sample_log(rng);
    s = t >= y ? 1.0 : std::exp(t - y);
  }
  return mean_with_se(v);
}

enum class Finiteness { Finite, Infinite, Indeterminate };
enum class TauberianClass { BothFinite, BothInfinite, Inconsistent, Indeterminate };

inline std::string to_string(Finiteness f) {
  switch (f) {
    case Finiteness::Finite: return "finite";
    case Finiteness::Infinite: return "infinite";
    case Finiteness::Indeterminate: return "indeterminate";
  }
  return {};
}
inline std::string to_string(TauberianClass c) {
  switch (c) {
    case TauberianClass::BothFinite: return "both_finite";
    case TauberianClass::BothInfinite: return "both_infinite";
    case TauberianClass::Inconsistent: return "inconsistent";
    case TauberianClass::Indeterminate: return "indeterminate";
  }
  return {};
}

/// Log-log growth slope over [T0, T1]: >= 0.2 reads as divergence, <= 0.02 as a plateau.
inline Finiteness classify_slope(double slope) {
  if (slope >= 0.2) return Finiteness::Infinite;
  if (slope <= 0.02) return Finiteness::Finite;
  return Finiteness::Indeterminate;
}

/// Whether E[T rho(T)] is finite, from the closed-form tail.
inline bool moment_finite(const HeavyLogLaw& law, const RhoFn& rho) {
  if (law.family() != HeavyLogLaw::Family::ParetoLog) return true;
  const double beta = law.param();
  switch (rho.kind()) {
    case RhoFn::Kind::Power: return beta > 1.0 + rho.index();
    case RhoFn::Kind::Constant: return beta > 1.0;
    case RhoFn::Kind::YLogY: return beta > 2.0;
  }
  return true;
}

struct TauberianResult {
  std::string law, rho;
  std::vector<double> T_grid;
  std::vector<double> integrals;  // int_0^T phi rho
  std::vector<double> moments;    // int_0^T t rho(t) f(t) dt = E[T rho(T); T <= T]
  double integral_slope = 0.0, moment_slope = 0.0;
  Finiteness integral_side = Finiteness::Indeterminate, moment_side = Finiteness::Indeterminate;
  EstimateWithError mc_moment;  // sample mean of T rho(T) (unstable when infinite)
  bool predicted_finite = true;
  TauberianClass classification = TauberianClass::Indeterminate;
  [[nodiscard]] bool consistent() const {
    return classification == TauberianClass::BothFinite || classification == TauberianClass::BothInfinite;
  }
  [[nodiscard]] bool matches_prediction() const {
    return consistent() && (classification == TauberianClass::BothFinite) == predicted_finite;
  }
};

namespace detail {

/// int_a^b g, tanh-sinh (robust to the y^alpha endpoint singularity).
inline double integrate_segment(const std::function<double(double)>& g, double a, double b) {
  if (!(b > a)) return 0.0;
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(g, a, b, 1e-10);
}

/// Cumulative integrals of g over [0, T_i], splitting at decades and at `kink`.
inline std::vector<double> cumulative(const std::function<double(double)>& g, std::span<const double> grid,
                                      double kink) {
  std::vector<double> out;
  double acc = 0.0, from = 0.0;
  for (double T : grid) {
    std::vector<double> cuts{from};
    for (double c = 1.0; c < T; c *= 10.0)
      if (c > from) cuts.push_back(c);
    if (kink > from && kink < T) cuts.push_back(kink);
    cuts.push_back(T);
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) acc += integrate_segment(g, cuts[i], cuts[i + 1]);
    out.push_back(acc);
    from = T;
  }
  return out;
}

}  // namespace detail

/// Partial integrals on `T_grid` (increasing, last two points a decade or more
/// apart), slope test on the last interval for both sides.
inline TauberianResult tauberian_check(const HeavyLogLaw& law, const RhoFn& rho, std::span<const double> T_grid,
                                       std::size_t mc_samples, std::uint64_t seed) {
  if (T_grid.size() < 2 || !std::is_sorted(T_grid.begin(), T_grid.end()) || T_grid.front() <= 0.0)
    throw std::invalid_argument("tauberian_check: need an increasing positive T grid with two points");
  if (!(rho.index() > -1.0)) throw std::invalid_argument("tauberian_check: rho index must exceed -1");
  TauberianResult r;
  r.law = law.name();
  r.rho = rho.name();
  r.T_grid.assign(T_grid.begin(), T_grid.end());
  const double kink = law.support_max();
  r.integrals = detail::cumulative([&](double y) { return phi(law, y) * rho(y); }, T_grid, kink);
  r.moments = detail::cumulative([&](double t) { return t * rho(t) * law.density(t); }, T_grid, kink);
  const std::size_t n = T_grid.size();
  const double span = std::log(T_grid[n - 1] / T_grid[n - 2]);
  auto slope = [&](const std::vector<double>& v) {
    if (v[n - 2] <= 0.0) return v[n - 1] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return std::log(v[n - 1] / v[n - 2]) / span;
  };
  r.integral_slope = slope(r.integrals);
  r.moment_slope = slope(r.moments);
  r.integral_side = classify_slope(r.integral_slope);
  r.moment_side = classify_slope(r.moment_slope);
  if (r.integral_side == Finiteness::Indeterminate || r.moment_side == Finiteness::Indeterminate)
    r.classification = TauberianClass::Indeterminate;
  else if (r.integral_side != r.moment_side)
    r.classification = TauberianClass::Inconsistent;
  else
    r.classification = r.integral_side == Finiteness::Finite ? TauberianClass::BothFinite : TauberianClass::BothInfinite;
  r.predicted_finite = moment_finite(law, rho);

  Stream rng({seed, experiments::kTauberian, 0, 0});
  std::vector<double> m(std::max<std::size_t>(mc_samples, 2));
  for (auto& v : m) {
    const double t = law.sample_log(rng);
    v = t * rho(t);
  }
  r.mc_moment = mean_with_se(m);
  return r;
}

inline std::vector<double> default_T_grid() { return {1.0, 10.0, 100.0, 1000.0}; }

/// The (law, rho) pairs shipped with the checks, spanning both classes.
inline std::vector<std::pair<HeavyLogLaw, RhoFn>> shipped_tauberian_pairs() {
  return {{HeavyLogLaw::pareto_log(3.0), RhoFn::power(1.0)},
          {HeavyLogLaw::bounded(1.0), RhoFn::power(1.0)},
          {HeavyLogLaw::pareto_log(1.5), RhoFn::power(1.0)},
          {HeavyLogLaw::pareto_log(0.9), RhoFn::constant()}};
}

inline void write_tauberian_csv(std::ostream& os, const TauberianResult& r) {
  os << "T,integral,moment\n";
  for (std::size_t i = 0; i < r.T_grid.size(); ++i)
    os << format_real(r.T_grid[i]) << ',' << format_real(r.integrals[i]) << ',' << format_real(r.moments[i]) << '\n';
}

}  // namespace brwlab
