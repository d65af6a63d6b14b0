#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "proteus/losses.hpp"
#include "proteus/policy_net.hpp"

namespace proteus::testing {

// Random small batch whose loss touches every parameter group.
struct GradCase {
  PolicyNet net;
  BatchTargets t;
  LossWeights w;
};

inline GradCase make_grad_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> nd(0, 1);
  const NetShape shape{8, 6, 3, 0.8, 0.95};
  GradCase gc{PolicyNet::initialized(shape, seed), {}, {}};
  // move off the symmetric init so every head is exercised
  for (auto& p : gc.net.params()) p += 0.3 * nd(rng);
  const int n = 5;
  auto& t = gc.t;
  t.z.resize(8, n);
  for (auto& x : t.z.reshaped()) x = nd(rng);
  for (int j = 0; j < n; ++j) {
    t.tau.push_back(0.8 + 0.15 * u(rng));
    t.lambda.push_back(3.0 * u(rng));
  }
  const auto out = gc.net.forward_batch(t.z, t.tau, t.lambda);
  t.mu.resize(n);
  t.old_log_prob.resize(n);
  t.advantage.resize(n);
  t.reward.resize(n);
  t.labels.resize(3, n);
  t.cf_reward.resize(3, n);
  for (int j = 0; j < n; ++j) {
    t.mu[j] = 0.1 + 0.8 * u(rng);
    // small offsets keep the PPO ratio inside the clip window
    t.old_log_prob[j] = log_prob(out.alpha[j], out.beta[j], t.mu[j]) + 0.05 * (u(rng) - 0.5);
    t.advantage[j] = u(rng) - 0.5;
    t.reward[j] = 2 * u(rng);
    for (int i = 0; i < 3; ++i) {
      t.labels(i, j) = u(rng);
      t.cf_reward(i, j) = 3 * u(rng) - 1;
    }
  }
  t.costs_norm = {0.0, 0.4, 1.0};
  gc.w.entropy = 0.01;
  gc.w.use_critic = true;
  gc.w.route_temperature = 0.5;
  return gc;
}

struct GroupCheck {
  std::string group;
  double worst_rel = 0.0;  // among entries above the absolute floor
  double max_abs_grad = 0.0;
  double worst_abs = 0.0;
  int failures = 0;
};

// Central differences (step h) against the analytic gradient, per group.
// An entry passes when |a - n| <= abs_floor or |a - n| <= rel * max(|a|, |n|).
inline std::vector<GroupCheck> finite_difference_check(const GradCase& gc, double h = 1e-4, double rel = 1e-4,
                                                       double abs_floor = 1e-6) {
  const auto lg = batch_loss_grad(gc.net, gc.t, gc.w);
  std::vector<GroupCheck> out;
  for (int g = 0; g < static_cast<int>(Group::count); ++g) {
    const auto& e = gc.net.layout().entries[g];
    GroupCheck c{kGroupNames[g]};
    for (std::size_t k = 0; k < e.size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(e.offset + k);
      PolicyNet plus = gc.net, minus = gc.net;
      plus.params()[idx] += h;
      minus.params()[idx] -= h;
      const double num = (batch_loss(plus, gc.t, gc.w, lg.detached).total() -
                          batch_loss(minus, gc.t, gc.w, lg.detached).total()) /
                         (2 * h);
      const double a = lg.grad[idx];
      const double err = std::abs(a - num);
      c.max_abs_grad = std::max(c.max_abs_grad, std::abs(a));
      c.worst_abs = std::max(c.worst_abs, err);
      if (err <= abs_floor) continue;
      const double r = err / std::max(std::abs(a), std::abs(num));
      c.worst_rel = std::max(c.worst_rel, r);
      if (r > rel) ++c.failures;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace proteus::testing
