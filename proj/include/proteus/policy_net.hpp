#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "proteus/beta.hpp"
#include "proteus/error.hpp"

namespace proteus {

// Parameter groups, in checkpoint order.
enum class Group : int {
  trunk_w,
  trunk_b,
  gate_w,
  gate_b,
  beta_w,
  beta_b,
  perf_w,
  perf_b,
  boosts,
  gamma_raw,
  critic_w,
  critic_b,
  count
};

inline constexpr std::array<const char*, static_cast<int>(Group::count)> kGroupNames = {
    "trunk_w", "trunk_b", "gate_w",    "gate_b",   "beta_w",   "beta_b",
    "perf_w",  "perf_b",  "boosts",    "gamma_raw", "critic_w", "critic_b"};

struct NetShape {
  std::size_t embed_dim = 256;
  std::size_t hidden = 256;
  std::size_t k = 2;
  // tau enters the trunk rescaled so this range maps to [-1, 1]
  double tau_lo = 0.80;
  double tau_hi = 0.95;

  std::size_t input_dim() const noexcept { return embed_dim + 2; }
  double encode_tau(double tau) const noexcept { return 2.0 * (tau - tau_lo) / (tau_hi - tau_lo) - 1.0; }
  bool operator==(const NetShape&) const = default;
};

// Offsets of each parameter group inside the flat parameter vector. Matrices
// are stored column-major (Eigen default).
struct ParamLayout {
  struct Entry {
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const noexcept { return rows * cols; }
  };

  std::array<Entry, static_cast<int>(Group::count)> entries{};
  std::size_t total = 0;

  explicit ParamLayout(const NetShape& s = {}) {
    const std::size_t h = s.hidden, in = s.input_dim(), k = s.k, d = s.embed_dim;
    const std::array<std::pair<std::size_t, std::size_t>, static_cast<int>(Group::count)> dims = {{
        {h, in}, {h, 1}, {h, 1}, {h, 1}, {2, h}, {2, 1}, {k, d}, {k, 1}, {k, 1}, {1, 1}, {h, 1}, {1, 1},
    }};
    for (int g = 0; g < static_cast<int>(Group::count); ++g) {
      entries[g] = {total, dims[g].first, dims[g].second};
      total += entries[g].size();
    }
  }

  const Entry& operator[](Group g) const { return entries[static_cast<int>(g)]; }
};

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline MatMap group_map(Eigen::VectorXd& flat, const ParamLayout& l, Group g) {
  const auto& e = l[g];
  return MatMap(flat.data() + e.offset, static_cast<Eigen::Index>(e.rows), static_cast<Eigen::Index>(e.cols));
}

inline ConstMatMap group_map(const Eigen::VectorXd& flat, const ParamLayout& l, Group g) {
  const auto& e = l[g];
  return ConstMatMap(flat.data() + e.offset, static_cast<Eigen::Index>(e.rows),
                     static_cast<Eigen::Index>(e.cols));
}

inline double squash_lambda(double lambda) { return lambda / (1.0 + lambda); }

constexpr double kGammaMin = 2.0;
constexpr double kGammaSpan = 6.0;

inline double gamma_from_raw(double raw) { return kGammaMin + kGammaSpan * sigmoid(raw); }

inline double raw_from_gamma(double gamma) {
  const double t = (gamma - kGammaMin) / kGammaSpan;
  if (!(t > 0.0 && t < 1.0)) throw ValidationError("gamma must lie strictly inside (2, 8)");
  return std::log(t / (1.0 - t));
}

struct PolicyOutput {
  double alpha = 1.0;
  double beta = 1.0;
  double mu = 0.5;
  double log_prob = 0.0;
  Eigen::VectorXd p_hat;
  double gamma = 5.0;
};

// Batched forward results. Columns are samples.
struct BatchOutput {
  Eigen::VectorXd alpha, beta;
  Eigen::MatrixXd perf_logits;  // K x N
  Eigen::MatrixXd p_hat;        // K x N
  Eigen::VectorXd value;        // critic estimate, N

  std::size_t size() const noexcept { return static_cast<std::size_t>(alpha.size()); }
};

// Activations kept for the backward pass.
struct ForwardCache {
  Eigen::MatrixXd input;   // (D+2) x N
  Eigen::MatrixXd hidden;  // tanh output, H x N
  Eigen::MatrixXd gate;    // H x N
  Eigen::MatrixXd gated;   // hidden .* gate
  Eigen::MatrixXd pre_ab;  // beta head pre-activations, 2 x N
  Eigen::VectorXd lambda_in;
};

// Upstream gradients of a scalar loss, per sample.
struct BatchGradIn {
  Eigen::VectorXd d_alpha, d_beta;  // N
  Eigen::MatrixXd d_perf_logits;    // K x N, empty to skip
  Eigen::VectorXd d_value;          // N, empty to skip (critic head only)
  Eigen::VectorXd d_boosts;         // K, empty to skip
  double d_gamma = 0.0;             // dL/dgamma (gamma space)
};

// tau/lambda-conditioned policy: a tanh hidden layer over [z, tau~, lambda'],
// gated per unit by sigmoid(w_g * lambda' + b_g), feeding a 2-unit head for the
// Beta parameters. tau~ is tau rescaled by the shape's range, lambda' = lambda / (1 + lambda). The performance head reads
// the raw embedding only.
class PolicyNet {
 public:
  PolicyNet() : PolicyNet(NetShape{}) {}
  explicit PolicyNet(NetShape shape) : shape_(shape), layout_(shape), params_(Eigen::VectorXd::Zero(layout_.total)) {
    if (shape.k < 1 || shape.embed_dim < 1 || shape.hidden < 1) throw ShapeError("invalid network shape");
    if (!(shape.tau_lo < shape.tau_hi)) throw ShapeError("network tau range must satisfy lo < hi");
  }

  // Uniform(+-1/sqrt(fan_in)) weights for the dense layers, zero biases,
  // zero boosts, gamma_raw = 0 (gamma = 5).
  static PolicyNet initialized(NetShape shape, std::uint64_t seed) {
    PolicyNet net(shape);
    std::mt19937_64 rng(seed);
    auto fill = [&](Group g, double bound) {
      std::uniform_real_distribution<double> u(-bound, bound);
      auto m = net.group(g);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    };
    fill(Group::trunk_w, 1.0 / std::sqrt(static_cast<double>(shape.input_dim())));
    fill(Group::gate_w, 1.0);
    fill(Group::beta_w, 0.1 / std::sqrt(static_cast<double>(shape.hidden)));
    fill(Group::perf_w, 1.0 / std::sqrt(static_cast<double>(shape.embed_dim)));
    fill(Group::critic_w, 1.0 / std::sqrt(static_cast<double>(shape.hidden)));
    return net;
  }

  const NetShape& shape() const noexcept { return shape_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t k() const noexcept { return shape_.k; }

  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }

  MatMap group(Group g) { return group_map(params_, layout_, g); }
  ConstMatMap group(Group g) const { return group_map(params_, layout_, g); }

  Eigen::VectorXd boosts() const { return group(Group::boosts).col(0); }
  double gamma() const { return gamma_from_raw(group(Group::gamma_raw)(0, 0)); }

  BatchOutput forward_batch(const Eigen::MatrixXd& z, std::span<const double> tau,
                            std::span<const double> lambda, ForwardCache* cache = nullptr) const {
    const auto n = z.cols();
    if (static_cast<std::size_t>(z.rows()) != shape_.embed_dim)
      throw ShapeError("embedding has " + std::to_string(z.rows()) + " rows, network expects " +
                       std::to_string(shape_.embed_dim));
    if (tau.size() != static_cast<std::size_t>(n) || lambda.size() != static_cast<std::size_t>(n))
      throw ShapeError("tau/lambda batch length does not match embeddings");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    const auto d = static_cast<Eigen::Index>(shape_.embed_dim);
    c.input.resize(d + 2, n);
    c.input.topRows(d) = z;
    c.lambda_in.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      c.input(d, j) = shape_.encode_tau(tau[j]);
      c.lambda_in[j] = squash_lambda(lambda[j]);
      c.input(d + 1, j) = c.lambda_in[j];
    }

    c.hidden = ((group(Group::trunk_w) * c.input).colwise() + group(Group::trunk_b).col(0)).array().tanh().matrix();
    c.gate = ((group(Group::gate_w).col(0) * c.lambda_in.transpose()).colwise() + group(Group::gate_b).col(0))
                 .unaryExpr([](double x) { return sigmoid(x); });
    c.gated = c.hidden.cwiseProduct(c.gate);
    c.pre_ab = (group(Group::beta_w) * c.gated).colwise() + group(Group::beta_b).col(0);

    BatchOutput out;
    out.alpha.resize(n);
    out.beta.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      out.alpha[j] = softplus(c.pre_ab(0, j)) + 1.0;
      out.beta[j] = softplus(c.pre_ab(1, j)) + 1.0;
    }
    out.perf_logits = (group(Group::perf_w) * z).colwise() + group(Group::perf_b).col(0);
    out.p_hat = out.perf_logits.unaryExpr([](double x) { return sigmoid(x); });
    out.value = (group(Group::critic_w).col(0).transpose() * c.gated).transpose().array() +
                group(Group::critic_b)(0, 0);
    return out;
  }

  // Inference-mode forward for one query: mu is the Beta mean.
  PolicyOutput forward(const Eigen::VectorXd& z, double tau, double lambda) const {
    const double t[1] = {tau}, l[1] = {lambda};
    const auto out = forward_batch(z, t, l);
    PolicyOutput p;
    p.alpha = out.alpha[0];
    p.beta = out.beta[0];
    p.mu = clamp_mu(beta_mean(p.alpha, p.beta));
    p.log_prob = log_prob(p.alpha, p.beta, p.mu);
    p.p_hat = out.p_hat.col(0);
    p.gamma = gamma();
    return p;
  }

  // Training-mode forward for one query: mu ~ Beta(alpha, beta).
  template <class Rng>
  PolicyOutput forward_sampled(const Eigen::VectorXd& z, double tau, double lambda, Rng& rng) const {
    PolicyOutput p = forward(z, tau, lambda);
    p.mu = sample_beta(p.alpha, p.beta, rng);
    p.log_prob = log_prob(p.alpha, p.beta, p.mu);
    return p;
  }

  // Analytic gradient of the loss whose per-sample upstream gradients are
  // given in `g`. The critic gradient stops at the critic head.
  Eigen::VectorXd backward(const ForwardCache& c, const BatchGradIn& g) const {
    const auto n = c.input.cols();
    const auto d = static_cast<Eigen::Index>(shape_.embed_dim);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout_.total);
    auto gm = [&](Group grp) { return group_map(grad, layout_, grp); };

    Eigen::MatrixXd d_pre(2, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      d_pre(0, j) = g.d_alpha[j] * sigmoid(c.pre_ab(0, j));
      d_pre(1, j) = g.d_beta[j] * sigmoid(c.pre_ab(1, j));
    }
    gm(Group::beta_w) = d_pre * c.gated.transpose();
    gm(Group::beta_b) = d_pre.rowwise().sum();

    const Eigen::MatrixXd d_gated = group(Group::beta_w).transpose() * d_pre;
    const Eigen::MatrixXd d_gate_pre =
        d_gated.cwiseProduct(c.hidden).cwiseProduct(c.gate.cwiseProduct((1.0 - c.gate.array()).matrix()));
    gm(Group::gate_w) = d_gate_pre * c.lambda_in;
    gm(Group::gate_b) = d_gate_pre.rowwise().sum();

    const Eigen::MatrixXd d_trunk_pre =
        d_gated.cwiseProduct(c.gate).cwiseProduct((1.0 - c.hidden.array().square()).matrix());
    gm(Group::trunk_w) = d_trunk_pre * c.input.transpose();
    gm(Group::trunk_b) = d_trunk_pre.rowwise().sum();

    if (g.d_perf_logits.size() > 0) {
      gm(Group::perf_w) = g.d_perf_logits * c.input.topRows(d).transpose();
      gm(Group::perf_b) = g.d_perf_logits.rowwise().sum();
    }
    if (g.d_value.size() > 0) {
      gm(Group::critic_w) = c.gated * g.d_value;
      gm(Group::critic_b)(0, 0) = g.d_value.sum();
    }
    if (g.d_boosts.size() > 0) gm(Group::boosts) = g.d_boosts;
    const double s = sigmoid(group(Group::gamma_raw)(0, 0));
    gm(Group::gamma_raw)(0, 0) = g.d_gamma * kGammaSpan * s * (1.0 - s);
    return grad;
  }

 private:
  NetShape shape_;
  ParamLayout layout_;
  Eigen::VectorXd params_;
};

// Mean binary cross-entropy between predicted correctness and labels.
inline double perf_loss(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& labels) {
  if (p_hat.size() != labels.size()) throw ShapeError("perf_loss: length mismatch");
  constexpr double tiny = 1e-15;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p_hat.size(); ++i) {
    const double p = std::clamp(p_hat[i], tiny, 1.0 - tiny);
    sum -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log1p(-p);
  }
  return sum / static_cast<double>(p_hat.size());
}

// Same loss evaluated from logits, numerically stable: softplus(l) - y*l.
inline double perf_loss_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += softplus(logits[i]) - labels[i] * logits[i];
  return sum / static_cast<double>(logits.size());
}

}  // namespace proteus
