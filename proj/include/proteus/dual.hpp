#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "proteus/error.hpp"

namespace proteus {

// Lagrangian multiplier state. Batch accuracies are accumulated and one dual
// step is applied every `update_period` batches with their mean:
//   lambda <- clamp(lambda + eta * (tau - mean_acc), 0, lambda_cap)
struct DualState {
  double lambda = 0.0;
  double eta = 0.4;
  int update_period = 5;
  double lambda_cap = 10.0;

  double acc_sum = 0.0;
  int acc_count = 0;

  void validate() const {
    if (!(eta > 0.0)) throw ConfigError("dual step size must be positive");
    if (update_period < 1) throw ConfigError("dual update period must be >= 1");
    if (!(lambda_cap > 0.0)) throw ConfigError("lambda cap must be positive");
    if (!(lambda >= 0.0 && lambda <= lambda_cap)) throw ConfigError("initial lambda outside [0, cap]");
  }
};

inline DualState update_lambda(DualState s, double tau, double mean_accuracy) {
  s.lambda = std::clamp(s.lambda + s.eta * (tau - mean_accuracy), 0.0, s.lambda_cap);
  s.acc_sum = 0.0;
  s.acc_count = 0;
  return s;
}

// Feeds one batch accuracy; applies the dual step when the period completes.
// Returns the accuracy mean used for the step, if one was taken.
inline std::optional<double> observe_batch(DualState& s, double tau, double batch_accuracy) {
  s.acc_sum += batch_accuracy;
  if (++s.acc_count < s.update_period) return std::nullopt;
  const double mean = s.acc_sum / s.acc_count;
  s = update_lambda(s, tau, mean);
  return mean;
}

// Linear-interpolation percentile (q in [0,100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("percentile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Online cost normalizer: lo/hi are EMAs of the low/high percentiles of the
// costs observed per batch, seeded from the pool's cost vector.
struct CostNormalizer {
  double lo = 0.0;
  double hi = 1.0;
  double decay = 0.99;
  double low_pct = 5.0;
  double high_pct = 95.0;

  static CostNormalizer seeded(std::span<const double> pool_costs, double decay = 0.99, double low_pct = 5.0,
                               double high_pct = 95.0) {
    CostNormalizer n;
    n.decay = decay;
    n.low_pct = low_pct;
    n.high_pct = high_pct;
    const std::vector<double> c(pool_costs.begin(), pool_costs.end());
    n.lo = percentile(c, low_pct);
    n.hi = percentile(c, high_pct);
    return n;
  }

  bool degenerate() const noexcept { return !(hi > lo); }

  double normalize(double raw_cost) const {
    if (degenerate()) return 0.5;
    return std::clamp((raw_cost - lo) / (hi - lo), 0.0, 1.0);
  }

  std::vector<double> normalize_all(std::span<const double> raw) const {
    std::vector<double> out;
    out.reserve(raw.size());
    for (double c : raw) out.push_back(normalize(c));
    return out;
  }

  // One EMA step toward the percentiles of this batch's observed costs.
  void observe(std::span<const double> window) {
    if (window.empty()) return;
    const std::vector<double> w(window.begin(), window.end());
    lo = decay * lo + (1.0 - decay) * percentile(w, low_pct);
    hi = decay * hi + (1.0 - decay) * percentile(w, high_pct);
  }
};

}  // namespace proteus
