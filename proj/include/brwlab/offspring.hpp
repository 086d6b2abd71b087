#pragma once

// Offspring laws in the boundary case.
//
// A law describes the displacements of the children of one particle. Shipped
// families have closed-form calibration; custom laws are either a finite list
// of weighted child sets (enumerable, exact) or an arbitrary sampler, and are
// brought into the boundary case by an affine map  y -> scale * y + drift.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "brwlab/rng.hpp"
#include "brwlab/stats.hpp"

namespace brwlab {

using ChildSet = std::vector<double>;

enum class LawKind { TwoPoint, GaussianBinary, Custom };

struct Outcome {
  ChildSet displacements;
  double probability = 0.0;
};

using ChildSampler = std::function<void(Stream&, ChildSet&)>;

class DegenerateLaw : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The two boundary-case residuals E[sum e^{-X}] - 1 and E[sum X e^{-X}].
struct BoundaryResiduals {
  double mass = 0.0;
  double drift = 0.0;
};

class OffspringLaw {
 public:
  /// Two children, each displaced by +a w.p. 1-q and by -a w.p. q, with
  /// a = arccosh 2 and q = (2 - sqrt 3)/4. The spine is a +-a fair coin walk.
  static OffspringLaw two_point() {
    OffspringLaw law;
    law.kind_ = LawKind::TwoPoint;
    law.name_ = "two-point";
    const double a = std::log(2.0 + std::sqrt(3.0));
    const double q = (2.0 - std::sqrt(3.0)) / 4.0;
    law.params_ = {a, q};
    law.sigma2_ = a * a;
    law.lattice_span_ = a;
    law.mean_offspring_ = 2.0;
    law.q_threshold_ = static_cast<std::uint32_t>(std::ldexp(q, 32));
    law.outcomes_ = {{{a, a}, (1 - q) * (1 - q)}, {{a, -a}, q * (1 - q)}, {{-a, a}, q * (1 - q)}, {{-a, -a}, q * q}};
    law.weight_bound_ = 2.0 * std::exp(a);
    return law;
  }

  /// Two children with i.i.d. Normal(mu, s2) displacements, mu = s2 = 2 ln 2.
  static OffspringLaw gaussian_binary() {
    OffspringLaw law;
    law.kind_ = LawKind::GaussianBinary;
    law.name_ = "gaussian-binary";
    const double s2 = 2.0 * std::numbers::ln2;
    law.params_ = {2.0, s2, s2};
    law.sigma2_ = s2;
    law.lattice_span_ = 0.0;
    law.mean_offspring_ = 2.0;
    return law;
  }

  /// A finite list of child sets with probabilities, taken as given (no
  /// calibration). Probabilities must sum to 1 within 1e-12.
  static OffspringLaw finite(std::string name, std::vector<Outcome> outcomes, double lattice_span = 0.0) {
    double total = 0.0;
    for (const auto& o : outcomes) {
      if (!(o.probability >= 0.0)) throw std::invalid_argument("finite law: negative probability");
      for (double d : o.displacements)
        if (!std::isfinite(d)) throw std::invalid_argument("finite law: non-finite displacement");
      total += o.probability;
    }
    if (outcomes.empty() || std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("finite law: probabilities must sum to 1");
    OffspringLaw law;
    law.kind_ = LawKind::Custom;
    law.name_ = std::move(name);
    law.outcomes_ = std::move(outcomes);
    law.lattice_span_ = lattice_span;
    law.params_ = {1.0, 0.0};
    law.finalize_finite();
    return law;
  }

  /// An arbitrary sampler, taken as given. Descriptors are estimated from
  /// `samples` draws of the calibration stream.
  static OffspringLaw sampled(std::string name, ChildSampler sampler, double lattice_span, std::size_t samples,
                              Stream& rng) {
    OffspringLaw law;
    law.kind_ = LawKind::Custom;
    law.name_ = std::move(name);
    law.sampler_ = std::make_shared<const ChildSampler>(std::move(sampler));
    law.lattice_span_ = lattice_span;
    law.params_ = {1.0, 0.0};
    law.estimate_from_sample(samples, rng);
    return law;
  }

  /// Extinction-prone lattice law: no children w.p. 1/4, otherwise three
  /// children displaced independently by -b (prob r) or +b. r and b solve the
  /// boundary equations in closed form, and the spine is a +-b fair coin walk.
  static OffspringLaw extinction_demo() {
    const double mean_children = 9.0 / 4.0;
    const double r = (1.0 - std::sqrt(1.0 - 1.0 / (mean_children * mean_children))) / 2.0;
    const double b = std::log(1.0 / (2.0 * mean_children * r));
    std::vector<Outcome> outcomes{{{}, 0.25}};
    for (int mask = 0; mask < 8; ++mask) {
      Outcome o;
      o.probability = 0.75;
      for (int i = 0; i < 3; ++i) {
        const bool down = (mask >> i) & 1;
        o.displacements.push_back(down ? -b : b);
        o.probability *= down ? r : 1.0 - r;
      }
      outcomes.push_back(std::move(o));
    }
    double total = 0.0;
    for (const auto& o : outcomes) total += o.probability;
    outcomes.front().probability += 1.0 - total;
    return finite("extinction-demo", std::move(outcomes), b);
  }

  [[nodiscard]] LawKind kind() const { return kind_; }
  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const std::vector<double>& params() const { return params_; }
  [[nodiscard]] double sigma2() const { return sigma2_; }
  [[nodiscard]] double lattice_span() const { return lattice_span_; }
  [[nodiscard]] double mean_offspring() const { return mean_offspring_; }
  [[nodiscard]] bool has_finite_support() const { return !outcomes_.empty(); }
  [[nodiscard]] const std::vector<Outcome>& outcomes() const { return outcomes_; }
  [[nodiscard]] std::size_t max_children() const {
    std::size_t m = 0;
    for (const auto& o : outcomes_) m = std::max(m, o.displacements.size());
    return kind_ == LawKind::GaussianBinary ? static_cast<std::size_t>(params_[0]) : m;
  }
  /// Smallest possible family; 0 when unknown.
  [[nodiscard]] std::size_t min_children() const {
    if (kind_ == LawKind::GaussianBinary) return static_cast<std::size_t>(params_[0]);
    if (outcomes_.empty()) return 0;
    std::size_t m = outcomes_.front().displacements.size();
    for (const auto& o : outcomes_) m = std::min(m, o.displacements.size());
    return m;
  }
  /// Upper bound on sum e^{-X} used by rejection sampling of the size-biased law.
  [[nodiscard]] double weight_bound() const { return weight_bound_; }
  /// Affine map applied to the raw sampler: (scale, drift).
  [[nodiscard]] std::pair<double, double> transform() const { return {params_[0], params_[1]}; }

  void sample(Stream& rng, ChildSet& out) const {
    out.clear();
    switch (kind_) {
      case LawKind::TwoPoint: {
        const double a = params_[0];
        out.push_back(rng.next_u32() < q_threshold_ ? -a : a);
        out.push_back(rng.next_u32() < q_threshold_ ? -a : a);
        return;
      }
      case LawKind::GaussianBinary: {
        const auto m = static_cast<std::size_t>(params_[0]);
        const double mu = params_[1], sd = std::sqrt(params_[2]);
        for (std::size_t i = 0; i < m; ++i) out.push_back(mu + sd * rng.normal());
        return;
      }
      case LawKind::Custom:
        if (!outcomes_.empty()) {
          const double u = rng.uniform();
          const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
          const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), outcomes_.size() - 1);
          out = outcomes_[i].displacements;
          return;
        }
        (*sampler_)(rng, out);
        for (double& d : out) d = params_[0] * d + params_[1];
        return;
    }
  }

  /// Closed-form (or exact finite-sum) boundary residuals; empty for sampled laws.
  [[nodiscard]] std::optional<BoundaryResiduals> analytic_residuals() const {
    switch (kind_) {
      case LawKind::TwoPoint: {
        const double a = params_[0], q = params_[1];
        return BoundaryResiduals{2.0 * (q * std::exp(a) + (1 - q) * std::exp(-a)) - 1.0,
                                 2.0 * (-a * q * std::exp(a) + a * (1 - q) * std::exp(-a))};
      }
      case LawKind::GaussianBinary: {
        const double m = params_[0], mu = params_[1], s2 = params_[2];
        const double mgf = std::exp(-mu + s2 / 2.0);
        return BoundaryResiduals{m * mgf - 1.0, m * (mu - s2) * mgf};
      }
      case LawKind::Custom:
        if (outcomes_.empty()) return std::nullopt;
        CompensatedSum w, d;
        for (const auto& o : outcomes_)
          for (double x : o.displacements) {
            w += o.probability * std::exp(-x);
            d += o.probability * x * std::exp(-x);
          }
        return BoundaryResiduals{w.value() - 1.0, d.value()};
    }
    return std::nullopt;
  }

  /// Fits scale and drift so that both boundary residuals vanish. Finite laws
  /// are solved exactly; sampled laws are solved on a fixed calibration sample.
  static OffspringLaw calibrate(const OffspringLaw& base, std::size_t samples = 0, Stream* rng = nullptr);

  friend std::string to_config(const OffspringLaw& law);

 private:
  OffspringLaw() = default;

  void finalize_finite() {
    cumulative_.clear();
    double c = 0.0, mean = 0.0, s2 = 0.0, bound = 0.0;
    for (const auto& o : outcomes_) {
      c += o.probability;
      cumulative_.push_back(c);
      mean += o.probability * static_cast<double>(o.displacements.size());
      double w = 0.0;
      for (double x : o.displacements) {
        s2 += o.probability * x * x * std::exp(-x);
        w += std::exp(-x);
      }
      if (o.probability > 0.0) bound = std::max(bound, w);
    }
    mean_offspring_ = mean;
    sigma2_ = s2;
    weight_bound_ = bound;
  }

  void estimate_from_sample(std::size_t samples, Stream& rng) {
    if (samples < 2) throw std::invalid_argument("sampled law: need calibration samples");
    ChildSet kids;
    double count = 0.0, s2 = 0.0, bound = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      sample(rng, kids);
      count += static_cast<double>(kids.size());
      double w = 0.0;
      for (double x : kids) {
        s2 += x * x * std::exp(-x);
        w += std::exp(-x);
      }
      bound = std::max(bound, w);
    }
    const double n = static_cast<double>(samples);
    mean_offspring_ = count / n;
    sigma2_ = s2 / n;
    // Rejection envelope from the largest observed weight, with headroom for
    // unobserved upper tail.
    weight_bound_ = 2.0 * bound;
  }

  LawKind kind_ = LawKind::Custom;
  std::string name_;
  std::vector<double> params_;
  double sigma2_ = 0.0;
  double lattice_span_ = 0.0;
  double mean_offspring_ = 0.0;
  double weight_bound_ = std::numeric_limits<double>::infinity();
  std::uint32_t q_threshold_ = 0;
  std::vector<Outcome> outcomes_;
  std::vector<double> cumulative_;
  std::shared_ptr<const ChildSampler> sampler_;
};

/// Puts a position of a lattice walk back on origin + k*span when it lies
/// within 1e-9 spans of that point, so revisits of a level compare equal in
/// floating point. Identity for non-lattice laws.
class LatticeSnap {
 public:
  LatticeSnap() = default;
  LatticeSnap(double span, double origin) : span_(span), origin_(origin) {}
  double operator()(double v) const {
    if (!(span_ > 0.0)) return v;
    const double k = std::nearbyint((v - origin_) / span_);
    const double on = origin_ + k * span_;
    return std::abs(v - on) <= 1e-9 * span_ ? on : v;
  }

 private:
  double span_ = 0.0;
  double origin_ = 0.0;
};

namespace detail {

/// log sum_j w_j e^{-beta y_j} and its beta-derivative, by log-sum-exp.
inline std::pair<double, double> log_laplace(const std::vector<std::pair<double, double>>& atoms, double beta) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto [y, w] : atoms)
    if (w > 0.0) mx = std::max(mx, -beta * y);
  CompensatedSum s, sy;
  for (auto [y, w] : atoms) {
    if (w <= 0.0) continue;
    const double e = w * std::exp(-beta * y - mx);
    s += e;
    sy += y * e;
  }
  return {mx + std::log(s.value()), -sy.value() / s.value()};
}

/// Solves log L(b) = b (log L)'(b) for b > 0, where L is the Laplace transform
/// of the weighted atoms; returns (scale, drift).
inline std::pair<double, double> solve_boundary(const std::vector<std::pair<double, double>>& atoms) {
  auto g = [&](double b) {
    auto [lam, dlam] = log_laplace(atoms, b);
    return lam - b * dlam;
  };
  if (!(g(0.0) > 0.0)) throw CalibrationError("calibration: law is not supercritical");
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (g(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) throw CalibrationError("calibration: no boundary-case scale exists for this law");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  const double beta = 0.5 * (lo + hi);
  return {beta, log_laplace(atoms, beta).first};
}

}  // namespace detail

inline OffspringLaw OffspringLaw::calibrate(const OffspringLaw& base, std::size_t samples, Stream* rng) {
  if (base.kind_ != LawKind::Custom) return base;
  std::vector<std::pair<double, double>> atoms;
  if (!base.outcomes_.empty()) {
    for (const auto& o : base.outcomes_)
      for (double y : o.displacements) atoms.emplace_back(y, o.probability);
  } else {
    if (rng == nullptr || samples == 0) throw std::invalid_argument("calibrate: sampled law needs a stream");
    ChildSet kids;
    const double w = 1.0 / static_cast<double>(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      (*base.sampler_)(*rng, kids);
      for (double y : kids) atoms.emplace_back(y, w);
    }
  }
  if (atoms.empty()) throw DegenerateLaw("calibrate: law never produces children");
  const auto [beta, drift] = detail::solve_boundary(atoms);

  OffspringLaw law = base;
  law.lattice_span_ = base.lattice_span_ * beta;
  if (!base.outcomes_.empty()) {
    for (auto& o : law.outcomes_)
      for (double& d : o.displacements) d = beta * d + drift;
    law.params_ = {beta, drift};
    law.finalize_finite();
  } else {
    law.params_ = {beta, drift};
    CompensatedSum r1, r2, s2;
    double bound = 0.0;
    for (auto [y, w] : atoms) {
      const double x = beta * y + drift;
      r1 += w * std::exp(-x);
      r2 += w * x * std::exp(-x);
      s2 += w * x * x * std::exp(-x);
    }
    if (std::abs(r1.value() - 1.0) > 1e-10 || std::abs(r2.value()) > 1e-10)
      throw CalibrationError("calibration: residuals above 1e-10");
    law.sigma2_ = s2.value();
    // Envelope for rejection sampling: largest per-draw weight, re-drawn.
    ChildSet kids;
    for (std::size_t i = 0; i < std::min<std::size_t>(samples, 100000); ++i) {
      law.sample(*rng, kids);
      double w = 0.0;
      for (double x : kids) w += std::exp(-x);
      bound = std::max(bound, w);
    }
    law.weight_bound_ = 2.0 * bound;
  }
  if (auto r = law.analytic_residuals(); r && (std::abs(r->mass) > 1e-10 || std::abs(r->drift) > 1e-10))
    throw CalibrationError("calibration: residuals above 1e-10");
  return law;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Structured-text block: family name and parameters, 17 significant digits.
inline std::string to_config(const OffspringLaw& law) {
  std::ostringstream os;
  os << "[law]\n";
  switch (law.kind_) {
    case LawKind::TwoPoint:
      os << "family = two-point\n"
         << "a = " << format_real(law.params_[0]) << "\n"
         << "q = " << format_real(law.params_[1]) << "\n";
      break;
    case LawKind::GaussianBinary:
      os << "family = gaussian-binary\n"
         << "children = " << format_real(law.params_[0]) << "\n"
         << "mu = " << format_real(law.params_[1]) << "\n"
         << "s2 = " << format_real(law.params_[2]) << "\n";
      break;
    case LawKind::Custom:
      if (law.outcomes_.empty()) throw std::logic_error("to_config: sampled laws are not serializable");
      os << "family = finite\n"
         << "name = " << law.name_ << "\n"
         << "span = " << format_real(law.lattice_span_) << "\n";
      for (const auto& o : law.outcomes_) {
        os << "outcome = " << format_real(o.probability) << " :";
        for (double d : o.displacements) os << ' ' << format_real(d);
        os << "\n";
      }
      break;
  }
  return os.str();
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Parses a block written by to_config. Closed-form families are rebuilt from
/// their definition and the stored parameters are checked against it.
inline OffspringLaw law_from_config(const std::string& text) {
  std::istringstream is(text);
  std::string line, family, name = "custom";
  std::map<std::string, double> values;
  std::vector<Outcome> outcomes;
  double span = 0.0;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line == "[law]") continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("law config: expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "family") {
      family = val;
    } else if (key == "name") {
      name = val;
    } else if (key == "span") {
      span = std::stod(val);
    } else if (key == "outcome") {
      const auto colon = val.find(':');
      if (colon == std::string::npos) throw std::invalid_argument("law config: outcome needs 'p : d...'");
      Outcome o;
      o.probability = std::stod(val.substr(0, colon));
      std::istringstream ds(val.substr(colon + 1));
      double d;
      while (ds >> d) o.displacements.push_back(d);
      outcomes.push_back(std::move(o));
    } else if (key == "a" || key == "q" || key == "children" || key == "mu" || key == "s2") {
      values[key] = std::stod(val);
    } else {
      throw std::invalid_argument("law config: unknown key '" + key + "'");
    }
  }
  auto check = [&](const OffspringLaw& law, const std::vector<std::string>& keys) {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      auto it = values.find(keys[i]);
      if (it != values.end() && std::abs(it->second - law.params()[i]) > 1e-12)
        throw std::invalid_argument("law config: parameter '" + keys[i] + "' does not match the " + law.name() +
                                    " family");
    }
    return law;
  };
  if (family == "two-point") return check(OffspringLaw::two_point(), {"a", "q"});
  if (family == "gaussian-binary") return check(OffspringLaw::gaussian_binary(), {"children", "mu", "s2"});
  if (family == "finite") {
    double total = 0.0;
    for (const auto& o : outcomes) total += o.probability;
    for (auto& o : outcomes) o.probability /= total;  // absorb decimal round-off
    return OffspringLaw::finite(name, std::move(outcomes), span);
  }
  throw std::invalid_argument("law config: unknown family '" + family + "'");
}

/// Shipped laws by name.
inline OffspringLaw law_by_name(const std::string& name) {
  if (name == "two-point") return OffspringLaw::two_point();
  if (name == "gaussian-binary") return OffspringLaw::gaussian_binary();
  if (name == "extinction-demo") return OffspringLaw::extinction_demo();
  throw std::invalid_argument("unknown law '" + name + "'");
}

struct BoundaryReport {
  EstimateWithError mass;   // E[sum e^{-X}] - 1
  EstimateWithError drift;  // E[sum X e^{-X}]
};

inline BoundaryReport verify_boundary(const OffspringLaw& law, std::size_t samples, Stream& rng) {
  if (samples < 1000) throw std::invalid_argument("verify_boundary: need at least 1000 samples");
  std::vector<double> m(samples), d(samples);
  ChildSet kids;
  bool any_children = false;
  for (std::size_t i = 0; i < samples; ++i) {
    law.sample(rng, kids);
    any_children |= !kids.empty();
    CompensatedSum w, x;
    for (double v : kids) {
      w += std::exp(-v);
      x += v * std::exp(-v);
    }
    m[i] = w.value() - 1.0;
    d[i] = x.value();
  }
  if (!any_children) throw DegenerateLaw("degenerate law: no child in " + std::to_string(samples) + " draws");
  return {mean_with_se(m), mean_with_se(d)};
}

struct MomentReport {
  EstimateWithError w_log2_w;  // E[W1 log+^2 W1]
  EstimateWithError z_log_z;   // E[Z1 log+ Z1], Z1 = sum X+ e^{-X}
  double tail_index = 0.0;     // Hill estimate on W1 log+^2 W1
  bool likely_finite = true;
};

inline double log_plus(double v) { return v > 1.0 ? std::log(v) : 0.0; }

inline MomentReport moment_diagnostics(const OffspringLaw& law, std::size_t samples, Stream& rng) {
  if (samples < 1000) throw std::invalid_argument("moment_diagnostics: need at least 1000 samples");
  std::vector<double> a(samples), b(samples);
  ChildSet kids;
  for (std::size_t i = 0; i < samples; ++i) {
    law.sample(rng, kids);
    double w = 0.0, z = 0.0;
    for (double v : kids) {
      w += std::exp(-v);
      z += std::max(v, 0.0) * std::exp(-v);
    }
    a[i] = w * log_plus(w) * log_plus(w);
    b[i] = z * log_plus(z);
  }
  MomentReport r{mean_with_se(a), mean_with_se(b), 0.0, true};
  r.tail_index = hill_tail_index(a, std::max<std::size_t>(10, samples / 100));
  r.likely_finite = r.tail_index > 1.5;
  return r;
}

/// Exact E[W1 log+^2 W1] and E[Z1 log+ Z1] for finite-support laws.
inline std::pair<double, double> exact_moments(const OffspringLaw& law) {
  if (!law.has_finite_support()) throw std::invalid_argument("exact_moments: law has no finite support");
  CompensatedSum a, b;
  for (const auto& o : law.outcomes()) {
    double w = 0.0, z = 0.0;
    for (double v : o.displacements) {
      w += std::exp(-v);
      z += std::max(v, 0.0) * std::exp(-v);
    }
    a += o.probability * w * log_plus(w) * log_plus(w);
    b += o.probability * z * log_plus(z);
  }
  return {a.value(), b.value()};
}

}  // namespace brwlab
