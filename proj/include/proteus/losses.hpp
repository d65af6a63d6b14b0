#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "proteus/beta.hpp"
#include "proteus/policy_net.hpp"

namespace proteus {

struct LossWeights {
  double ppo_clip = 0.2;
  double perf = 1.0;
  double route = 1.0;
  double route_temperature = 0.05;
  double entropy = 0.0;
  double critic = 0.5;
  bool use_critic = false;
};

// Everything a training batch needs besides the network itself. Columns are
// samples; K x N matrices hold per-model quantities.
struct BatchTargets {
  Eigen::MatrixXd z;
  std::vector<double> tau;
  std::vector<double> lambda;  // value fed to the network
  Eigen::VectorXd mu;          // sampled actions
  Eigen::VectorXd old_log_prob;
  Eigen::VectorXd advantage;
  Eigen::VectorXd reward;       // critic regression target
  Eigen::MatrixXd labels;       // K x N
  Eigen::MatrixXd cf_reward;    // K x N reward had model i been selected
  std::vector<double> costs_norm;

  std::size_t size() const noexcept { return static_cast<std::size_t>(mu.size()); }
};

// Quantities treated as constants by the loss: the routing surrogate sees the
// performance predictions and the critic sees the trunk features without
// propagating into them.
//
// The routing surrogate has two parts sharing one softmax over scores: the
// boosts are fitted to the expected correctness of the softly selected model
// (gamma held fixed), and gamma to its expected reward (boosts held fixed).
struct Detached {
  Eigen::MatrixXd gated;  // H x N
  Eigen::MatrixXd p_hat;  // K x N
  Eigen::VectorXd boosts;
  double gamma = 5.0;
};

struct LossParts {
  double surrogate = 0.0;
  double perf = 0.0;
  double route_boost = 0.0;
  double route_gamma = 0.0;
  double entropy = 0.0;
  double critic = 0.0;
  double total() const noexcept { return surrogate + perf + route_boost + route_gamma + entropy + critic; }
};

namespace detail {

inline Eigen::VectorXd route_softmax(const Eigen::VectorXd& p_hat, double mu, const Eigen::VectorXd& boosts,
                                     double gamma, const std::vector<double>& costs_norm, double temperature) {
  const Eigen::Index k = p_hat.size();
  const double penalty = std::pow(1.0 - mu, gamma);
  Eigen::VectorXd s(k);
  for (Eigen::Index i = 0; i < k; ++i) s[i] = (p_hat[i] + mu * boosts[i] - penalty * costs_norm[i]) / temperature;
  const double mx = s.maxCoeff();
  Eigen::VectorXd q = (s.array() - mx).exp().matrix();
  return q / q.sum();
}

}  // namespace detail

// Loss value. Pure function of the parameters given the detached inputs; used
// as the finite-difference oracle for `batch_loss_grad`.
inline LossParts batch_loss(const PolicyNet& net, const BatchTargets& t, const LossWeights& w,
                            const Detached& detached) {
  const auto out = net.forward_batch(t.z, t.tau, t.lambda);
  const auto n = static_cast<double>(t.size());
  const Eigen::VectorXd boosts = net.boosts();
  const double gamma = net.gamma();
  LossParts parts;
  for (std::size_t j = 0; j < t.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double lp = log_prob(out.alpha[jj], out.beta[jj], t.mu[jj]);
    const double ratio = std::exp(lp - t.old_log_prob[jj]);
    const double a = t.advantage[jj];
    const double clipped = std::clamp(ratio, 1.0 - w.ppo_clip, 1.0 + w.ppo_clip);
    parts.surrogate -= std::min(ratio * a, clipped * a) / n;
    parts.perf += w.perf * perf_loss_logits(out.perf_logits.col(jj), t.labels.col(jj)) / n;
    if (w.route != 0.0) {
      const Eigen::VectorXd qb = detail::route_softmax(detached.p_hat.col(jj), t.mu[jj], boosts, detached.gamma,
                                                       t.costs_norm, w.route_temperature);
      const Eigen::VectorXd qg = detail::route_softmax(detached.p_hat.col(jj), t.mu[jj], detached.boosts, gamma,
                                                       t.costs_norm, w.route_temperature);
      parts.route_boost -= w.route * qb.dot(t.labels.col(jj)) / n;
      parts.route_gamma -= w.route * qg.dot(t.cf_reward.col(jj)) / n;
    }
    if (w.entropy != 0.0) parts.entropy -= w.entropy * beta_entropy(out.alpha[jj], out.beta[jj]) / n;
    if (w.use_critic) {
      const double v = net.group(Group::critic_w).col(0).dot(detached.gated.col(jj)) + net.group(Group::critic_b)(0, 0);
      parts.critic += w.critic * 0.5 * (v - t.reward[jj]) * (v - t.reward[jj]) / n;
    }
  }
  return parts;
}

struct LossGrad {
  Eigen::VectorXd grad;
  LossParts parts;
  Detached detached;
  BatchOutput output;
};

// Analytic gradient of `batch_loss` by explicit backpropagation.
inline LossGrad batch_loss_grad(const PolicyNet& net, const BatchTargets& t, const LossWeights& w) {
  ForwardCache cache;
  LossGrad res;
  res.output = net.forward_batch(t.z, t.tau, t.lambda, &cache);
  const auto& out = res.output;
  res.detached.gated = cache.gated;
  res.detached.p_hat = out.p_hat;
  res.detached.boosts = net.boosts();
  res.detached.gamma = net.gamma();

  const auto nn = static_cast<Eigen::Index>(t.size());
  const auto k = static_cast<Eigen::Index>(net.k());
  const double n = static_cast<double>(nn);
  const Eigen::VectorXd boosts = net.boosts();
  const double gamma = net.gamma();

  BatchGradIn g;
  g.d_alpha = Eigen::VectorXd::Zero(nn);
  g.d_beta = Eigen::VectorXd::Zero(nn);
  g.d_perf_logits.resize(k, nn);
  g.d_boosts = Eigen::VectorXd::Zero(k);
  if (w.use_critic) g.d_value.resize(nn);

  for (Eigen::Index j = 0; j < nn; ++j) {
    const double alpha = out.alpha[j], beta = out.beta[j], mu = t.mu[j];
    const double lp = log_prob(alpha, beta, mu);
    const double ratio = std::exp(lp - t.old_log_prob[j]);
    const double a = t.advantage[j];
    const double clipped = std::clamp(ratio, 1.0 - w.ppo_clip, 1.0 + w.ppo_clip);
    res.parts.surrogate -= std::min(ratio * a, clipped * a) / n;
    const double d_logp = (ratio * a <= clipped * a) ? -ratio * a / n : 0.0;
    const BetaGrad lg = log_prob_grad(alpha, beta, mu);
    g.d_alpha[j] = d_logp * lg.d_alpha;
    g.d_beta[j] = d_logp * lg.d_beta;

    if (w.entropy != 0.0) {
      res.parts.entropy -= w.entropy * beta_entropy(alpha, beta) / n;
      const BetaGrad eg = beta_entropy_grad(alpha, beta);
      g.d_alpha[j] -= w.entropy * eg.d_alpha / n;
      g.d_beta[j] -= w.entropy * eg.d_beta / n;
    }

    res.parts.perf += w.perf * perf_loss_logits(out.perf_logits.col(j), t.labels.col(j)) / n;
    for (Eigen::Index i = 0; i < k; ++i)
      g.d_perf_logits(i, j) = w.perf * (out.p_hat(i, j) - t.labels(i, j)) / (n * static_cast<double>(k));

    if (w.route != 0.0) {
      const Eigen::VectorXd q =
          detail::route_softmax(out.p_hat.col(j), mu, boosts, gamma, t.costs_norm, w.route_temperature);
      const double exp_correct = q.dot(t.labels.col(j));
      const double exp_reward = q.dot(t.cf_reward.col(j));
      res.parts.route_boost -= w.route * exp_correct / n;
      res.parts.route_gamma -= w.route * exp_reward / n;
      const double one_minus = 1.0 - mu;
      const double d_pen_d_gamma = std::pow(one_minus, gamma) * std::log(one_minus);
      const double scale = -w.route / n / w.route_temperature;
      for (Eigen::Index i = 0; i < k; ++i) {
        g.d_boosts[i] += scale * q[i] * (t.labels(i, j) - exp_correct) * mu;
        g.d_gamma += scale * q[i] * (t.cf_reward(i, j) - exp_reward) *
                     (-d_pen_d_gamma * t.costs_norm[static_cast<std::size_t>(i)]);
      }
    }

    if (w.use_critic) {
      const double v = out.value[j];
      res.parts.critic += w.critic * 0.5 * (v - t.reward[j]) * (v - t.reward[j]) / n;
      g.d_value[j] = w.critic * (v - t.reward[j]) / n;
    }
  }
  res.grad = net.backward(cache, g);
  return res;
}

}  // namespace proteus
