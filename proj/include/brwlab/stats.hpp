#pragma once

// Shared statistical utilities: compensated sums, means with standard errors,
// bootstrap intervals and the goodness-of-fit statistics used by the checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "brwlab/rng.hpp"

namespace brwlab {

/// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double v) {
    add(v);
    return *this;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct EstimateWithError {
  double mean = 0.0;
  double se = 0.0;  // sample standard deviation / sqrt(count)
  std::size_t count = 0;
};

inline EstimateWithError mean_with_se(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("mean_with_se: need at least 2 samples");
  CompensatedSum s;
  for (double v : samples) s += v;
  const double n = static_cast<double>(samples.size());
  const double mean = s.value() / n;
  CompensatedSum ss;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double var = ss.value() / (n - 1.0);
  return {mean, std::sqrt(var / n), samples.size()};
}

/// |a - b| in units of the combined standard error (infinite when both are exact
/// and differ, 0 when both are exact and equal).
inline double z_distance(const EstimateWithError& a, const EstimateWithError& b) {
  const double diff = std::abs(a.mean - b.mean);
  const double se = std::hypot(a.se, b.se);
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / se;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double se = 0.0;  // bootstrap standard deviation of the statistic
};

using Statistic = std::function<double(std::span<const double>)>;

/// Percentile bootstrap; deterministic for a given key.
inline Interval bootstrap_ci(const Statistic& statistic, std::span<const double> samples,
                             std::size_t resamples, const StreamKey& key, double level = 0.95) {
  if (samples.size() < 2) throw std::invalid_argument("bootstrap_ci: need at least 2 samples");
  if (resamples < 100) throw std::invalid_argument("bootstrap_ci: need at least 100 resamples");
  Stream rng(key);
  std::vector<double> draw(samples.size());
  std::vector<double> stats(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& d : draw) d = samples[rng.below(samples.size())];
    stats[b] = statistic(draw);
  }
  const auto est = mean_with_se(stats);
  std::sort(stats.begin(), stats.end());
  const double alpha = (1.0 - level) / 2.0;
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(resamples - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return i + 1 < resamples ? stats[i] * (1 - f) + stats[i + 1] * f : stats[i];
  };
  return {quantile(alpha), quantile(1.0 - alpha), est.se * std::sqrt(static_cast<double>(resamples))};
}

/// Bootstrap standard deviations of several statistics of the same resampled
/// replicate set, so differences between paired statistics get a paired SE.
/// `statistics(indices)` returns one value per statistic for a resample.
inline std::vector<std::vector<double>> bootstrap_replicates(
    std::size_t n, std::size_t resamples, const StreamKey& key,
    const std::function<std::vector<double>(std::span<const std::size_t>)>& statistics) {
  Stream rng(key);
  std::vector<std::size_t> idx(n);
  std::vector<std::vector<double>> out;
  out.reserve(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = rng.below(n);
    out.push_back(statistics(idx));
  }
  return out;
}

inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return mean_with_se(v).se * std::sqrt(static_cast<double>(v.size()));
}

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t bins = 0;
};

/// Pearson goodness-of-fit. Categories with expected count below `min_expected`
/// are pooled (in the given order) into shared bins.
inline ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> probs,
                                      double min_expected = 5.0) {
  if (observed.size() != probs.size() || observed.empty())
    throw std::invalid_argument("chi_square_gof: size mismatch");
  const double total = std::accumulate(observed.begin(), observed.end(), 0.0);
  std::vector<std::pair<double, double>> bins;  // (observed, expected)
  double po = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    po += observed[i];
    pe += probs[i] * total;
    if (pe >= min_expected) {
      bins.emplace_back(po, pe);
      po = pe = 0.0;
    }
  }
  if (pe > 0.0 || po > 0.0) {
    if (bins.empty())
      bins.emplace_back(po, pe);
    else {
      bins.back().first += po;
      bins.back().second += pe;
    }
  }
  ChiSquareResult r;
  r.bins = bins.size();
  for (auto [o, e] : bins) {
    if (e <= 0.0) {
      if (o > 0.0) r.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    r.statistic += (o - e) * (o - e) / e;
  }
  r.dof = bins.size() > 1 ? bins.size() - 1 : 0;
  if (r.dof == 0)
    r.p_value = 1.0;
  else if (!std::isfinite(r.statistic))
    r.p_value = 0.0;
  else
    r.p_value = boost::math::gamma_q(0.5 * static_cast<double>(r.dof), 0.5 * r.statistic);
  return r;
}

/// Kolmogorov-Smirnov distance between the weighted empirical CDF of `values`
/// and `cdf`. Weights need not be normalized; zero-weight points are ignored.
inline double weighted_ks(std::span<const double> values, std::span<const double> weights,
                          const std::function<double(double)>& cdf) {
  if (values.size() != weights.size()) throw std::invalid_argument("weighted_ks: size mismatch");
  std::vector<std::size_t> order;
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (weights[i] > 0.0) {
      order.push_back(i);
      total += weights[i];
    }
  if (order.empty() || total <= 0.0) throw std::invalid_argument("weighted_ks: no positive weight");
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  double acc = 0.0, d = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const double v = values[order[j]];
    const double before = acc / total;
    acc += weights[order[j]];
    // Ties collapse into a single jump.
    if (j + 1 < order.size() && values[order[j + 1]] == v) continue;
    const double f = cdf(v);
    d = std::max({d, std::abs(acc / total - f), std::abs(before - f)});
  }
  return d;
}

inline double ks_statistic(std::span<const double> values, const std::function<double(double)>& cdf) {
  std::vector<double> w(values.size(), 1.0);
  return weighted_ks(values, w, cdf);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: bad sizes");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Pearson correlation of the mid-ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: bad sizes");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

/// Hill estimator of the tail index from the top `k` order statistics.
/// Returns +inf when the upper tail is degenerate (bounded, constant samples).
inline double hill_tail_index(std::vector<double> samples, std::size_t k) {
  std::erase_if(samples, [](double v) { return !(v > 0.0); });
  if (samples.size() < k + 1 || k == 0) return std::numeric_limits<double>::infinity();
  std::nth_element(samples.begin(), samples.end() - static_cast<std::ptrdiff_t>(k + 1), samples.end());
  std::sort(samples.end() - static_cast<std::ptrdiff_t>(k + 1), samples.end());
  const double threshold = *(samples.end() - static_cast<std::ptrdiff_t>(k + 1));
  double s = 0.0;
  for (auto it = samples.end() - static_cast<std::ptrdiff_t>(k); it != samples.end(); ++it)
    s += std::log(*it / threshold);
  if (s <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(k) / s;
}

}  // namespace brwlab
