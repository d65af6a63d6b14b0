#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "proteus/data_model.hpp"
#include "proteus/dual.hpp"
#include "proteus/error.hpp"
#include "proteus/featurizer.hpp"
#include "proteus/hash.hpp"
#include "proteus/losses.hpp"
#include "proteus/optim.hpp"
#include "proteus/policy_net.hpp"
#include "proteus/router.hpp"

namespace proteus {

struct TauRange {
  double min = 0.80;
  double max = 0.95;

  double normalized(double tau) const { return (tau - min) / (max - min); }
};

// r = e^{2 t} p - e^{2 (1 - t)} c + lambda (p - tau), t = normalized tau.
inline double compute_reward(double p_selected, double cost_norm, double tau, double lambda, TauRange range) {
  if (!(range.max > range.min)) throw ConfigError("tau range is empty");
  const double t = range.normalized(tau);
  return std::exp(2.0 * t) * p_selected - std::exp(2.0 * (1.0 - t)) * cost_norm + lambda * (p_selected - tau);
}

struct TrainConfig {
  TauRange tau_range{0.80, 0.95};
  int batch_size = 32;
  int total_steps = 10000;
  int session_length = 50;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  double ppo_clip = 0.2;
  int ppo_epochs = 1;
  double entropy_coef = 0.0;
  double perf_loss_weight = 1.0;
  double route_loss_weight = 1.0;
  double route_temperature = 0.05;
  double critic_loss_weight = 0.5;
  double eta_lambda = 0.4;
  int dual_period = 5;
  double lambda_cap = 10.0;
  double lambda_init = 0.0;
  double cost_decay = 0.99;
  double cost_low_pct = 5.0;
  double cost_high_pct = 95.0;
  std::size_t hidden = 256;
  bool sampled_outcomes = false;  // reward from Bernoulli draws of the selected label
  int val_probe_size = 256;
  int val_probe_points = 4;
  std::uint64_t seed = 0;

  // Ablations
  bool disable_lambda = false;
  std::optional<double> fix_gamma;
  bool use_critic = false;

  void validate() const {
    if (!(tau_range.min < tau_range.max) || tau_range.min < 0.0 || tau_range.max > 1.0)
      throw ConfigError("tau range must satisfy 0 <= tau_min < tau_max <= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (session_length < 1) throw ConfigError("session_length must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
    if (ppo_epochs < 1) throw ConfigError("ppo_epochs must be >= 1");
    if (!(route_temperature > 0.0)) throw ConfigError("route_temperature must be positive");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (fix_gamma) raw_from_gamma(*fix_gamma);
    DualState{lambda_init, eta_lambda, dual_period, lambda_cap}.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"tau_min", tau_range.min},
                     {"tau_max", tau_range.max},
                     {"batch_size", batch_size},
                     {"total_steps", total_steps},
                     {"session_length", session_length},
                     {"lr", lr},
                     {"adam_beta1", adam_beta1},
                     {"adam_beta2", adam_beta2},
                     {"weight_decay", weight_decay},
                     {"grad_clip", grad_clip},
                     {"ppo_clip", ppo_clip},
                     {"ppo_epochs", ppo_epochs},
                     {"entropy_coef", entropy_coef},
                     {"perf_loss_weight", perf_loss_weight},
                     {"route_loss_weight", route_loss_weight},
                     {"route_temperature", route_temperature},
                     {"critic_loss_weight", critic_loss_weight},
                     {"eta_lambda", eta_lambda},
                     {"dual_period", dual_period},
                     {"lambda_cap", lambda_cap},
                     {"lambda_init", lambda_init},
                     {"cost_decay", cost_decay},
                     {"cost_low_pct", cost_low_pct},
                     {"cost_high_pct", cost_high_pct},
                     {"hidden", hidden},
                     {"sampled_outcomes", sampled_outcomes},
                     {"val_probe_size", val_probe_size},
                     {"val_probe_points", val_probe_points},
                     {"seed", seed},
                     {"disable_lambda", disable_lambda},
                     {"fix_gamma", fix_gamma ? nlohmann::json(*fix_gamma) : nlohmann::json(nullptr)},
                     {"use_critic", use_critic}};
    return j;
  }

  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    const nlohmann::json known = c.to_json();
    for (const auto& [key, _] : j.items())
      if (!known.contains(key)) throw ConfigError("unknown train config key: " + key);
    try {
      c.tau_range.min = j.value("tau_min", c.tau_range.min);
      c.tau_range.max = j.value("tau_max", c.tau_range.max);
      c.batch_size = j.value("batch_size", c.batch_size);
      c.total_steps = j.value("total_steps", c.total_steps);
      c.session_length = j.value("session_length", c.session_length);
      c.lr = j.value("lr", c.lr);
      c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
      c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
      c.weight_decay = j.value("weight_decay", c.weight_decay);
      c.grad_clip = j.value("grad_clip", c.grad_clip);
      c.ppo_clip = j.value("ppo_clip", c.ppo_clip);
      c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
      c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
      c.perf_loss_weight = j.value("perf_loss_weight", c.perf_loss_weight);
      c.route_loss_weight = j.value("route_loss_weight", c.route_loss_weight);
      c.route_temperature = j.value("route_temperature", c.route_temperature);
      c.critic_loss_weight = j.value("critic_loss_weight", c.critic_loss_weight);
      c.eta_lambda = j.value("eta_lambda", c.eta_lambda);
      c.dual_period = j.value("dual_period", c.dual_period);
      c.lambda_cap = j.value("lambda_cap", c.lambda_cap);
      c.lambda_init = j.value("lambda_init", c.lambda_init);
      c.cost_decay = j.value("cost_decay", c.cost_decay);
      c.cost_low_pct = j.value("cost_low_pct", c.cost_low_pct);
      c.cost_high_pct = j.value("cost_high_pct", c.cost_high_pct);
      c.hidden = j.value("hidden", c.hidden);
      c.sampled_outcomes = j.value("sampled_outcomes", c.sampled_outcomes);
      c.val_probe_size = j.value("val_probe_size", c.val_probe_size);
      c.val_probe_points = j.value("val_probe_points", c.val_probe_points);
      c.seed = j.value("seed", c.seed);
      c.disable_lambda = j.value("disable_lambda", c.disable_lambda);
      if (j.contains("fix_gamma") && !j["fix_gamma"].is_null()) c.fix_gamma = j["fix_gamma"].get<double>();
      c.use_critic = j.value("use_critic", c.use_critic);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
  }

  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }

  LossWeights loss_weights() const {
    LossWeights w;
    w.ppo_clip = ppo_clip;
    w.perf = perf_loss_weight;
    w.route = route_loss_weight;
    w.route_temperature = route_temperature;
    w.entropy = entropy_coef;
    w.critic = critic_loss_weight;
    w.use_critic = use_critic;
    return w;
  }
};

struct TraceRecord {
  long step = 0;
  int session_id = 0;
  double tau = 0.0;
  double lambda = 0.0;  // value in force during this batch
  double mean_batch_accuracy = 0.0;
  double mean_batch_cost = 0.0;  // dollars per query
  double mean_mu = 0.0;
  double reward_mean = 0.0;
  double perf_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  bool dual_update = false;
  double lambda_after = 0.0;

  nlohmann::json to_json() const {
    return {{"step", step},
            {"session_id", session_id},
            {"tau", tau},
            {"lambda", lambda},
            {"mean_batch_accuracy", mean_batch_accuracy},
            {"mean_batch_cost", mean_batch_cost},
            {"mean_mu", mean_mu},
            {"reward_mean", reward_mean},
            {"perf_loss", perf_loss},
            {"grad_norm", grad_norm},
            {"dual_update", dual_update},
            {"lambda_after", lambda_after}};
  }
};

struct ValidationRecord {
  int session_id = 0;
  double tau = 0.0;
  double accuracy = 0.0;
  double cost_per_1k = 0.0;
  double mean_mu = 0.0;

  nlohmann::json to_json() const {
    return {{"session_id", session_id}, {"tau", tau}, {"accuracy", accuracy}, {"cost_per_1k", cost_per_1k},
            {"mean_mu", mean_mu}};
  }
};

// Mutable training state. Single writer.
class Trainer {
 public:
  Trainer(TrainConfig config, const RoutingDataset& dataset, Featurizer featurizer)
      : config_(std::move(config)),
        dataset_(dataset),
        featurizer_(std::move(featurizer)),
        train_(view(dataset_, Split::train)),
        val_(view(dataset_, Split::val)),
        net_(PolicyNet::initialized({featurizer_.dim(), config_.hidden, dataset_.k(), config_.tau_range.min, config_.tau_range.max},
                                       mix64(config_.seed ^ 0x1))),
        optimizer_(net_.layout().total, {config_.lr, config_.adam_beta1, config_.adam_beta2, 1e-8, config_.weight_decay}),
        tau_rng_(mix64(config_.seed ^ 0x2)),
        batch_rng_(mix64(config_.seed ^ 0x3)),
        action_rng_(mix64(config_.seed ^ 0x4)) {
    config_.validate();
    dataset_.pool.require_routable();
    if (train_.empty()) throw ValidationError("dataset has no train split records");
    costs_ = dataset_.pool.costs();
    normalizer_ = CostNormalizer::seeded(costs_, config_.cost_decay, config_.cost_low_pct, config_.cost_high_pct);
    dual_ = DualState{config_.lambda_init, config_.eta_lambda, config_.dual_period, config_.lambda_cap};

    if (config_.fix_gamma) net_.group(Group::gamma_raw)(0, 0) = raw_from_gamma(*config_.fix_gamma);
    mask_ = Eigen::VectorXd::Ones(net_.layout().total);
    auto freeze = [&](Group g) {
      const auto& e = net_.layout()[g];
      mask_.segment(static_cast<Eigen::Index>(e.offset), static_cast<Eigen::Index>(e.size())).setZero();
    };
    if (config_.fix_gamma) freeze(Group::gamma_raw);
    if (!config_.use_critic) {
      freeze(Group::critic_w);
      freeze(Group::critic_b);
    }

    train_z_ = featurizer_.embed_all(train_);
    train_labels_.resize(static_cast<Eigen::Index>(dataset_.k()), static_cast<Eigen::Index>(train_.size()));
    for (std::size_t r = 0; r < train_.size(); ++r)
      for (std::size_t i = 0; i < dataset_.k(); ++i)
        train_labels_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = train_[r].labels[i];

    const std::size_t probe = std::min<std::size_t>(val_.size(), static_cast<std::size_t>(std::max(0, config_.val_probe_size)));
    probe_rows_.assign(val_.rows.begin(), val_.rows.begin() + static_cast<std::ptrdiff_t>(probe));
  }

  const TrainConfig& config() const noexcept { return config_; }
  const PolicyNet& net() const noexcept { return net_; }
  PolicyNet& mutable_net() noexcept { return net_; }
  const DualState& dual() const noexcept { return dual_; }
  DualState& mutable_dual() noexcept { return dual_; }
  const CostNormalizer& normalizer() const noexcept { return normalizer_; }
  const std::vector<TraceRecord>& trace() const noexcept { return trace_; }
  const std::vector<ValidationRecord>& validation() const noexcept { return validation_; }
  long step() const noexcept { return step_; }

  // Runs n_batches consecutive batches at a fixed tau.
  void run_session(double tau, int n_batches) {
    for (int b = 0; b < n_batches; ++b) run_batch(tau);
    validate_probe(tau);
    ++session_;
  }

  // Session-based training until total_steps batches have been consumed.
  void train() {
    std::uniform_real_distribution<double> tau_dist(config_.tau_range.min, config_.tau_range.max);
    while (step_ < config_.total_steps) {
      const double tau = tau_dist(tau_rng_);
      const int n = static_cast<int>(std::min<long>(config_.session_length, config_.total_steps - step_));
      run_session(tau, n);
    }
  }

  int sessions_run() const noexcept { return session_; }

  // Frozen engine with weights rounded to f32, i.e. exactly what a saved
  // checkpoint reloads to.
  Engine engine() const {
    PolicyNet frozen = net_;
    frozen.params() = frozen.params().cast<float>().cast<double>();
    return Engine(std::move(frozen), featurizer_, dataset_.pool, normalizer_, config_.tau_range.min,
                  config_.tau_range.max);
  }

 private:
  void run_batch(double tau) {
    const int n = config_.batch_size;
    const auto k = static_cast<Eigen::Index>(dataset_.k());
    const double lambda_in = config_.disable_lambda ? 0.0 : dual_.lambda;

    BatchTargets t;
    std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
    std::vector<std::size_t> cols(static_cast<std::size_t>(n));
    for (auto& c : cols) c = pick(batch_rng_);
    t.z.resize(train_z_.rows(), n);
    t.labels.resize(k, n);
    for (int j = 0; j < n; ++j) {
      t.z.col(j) = train_z_.col(static_cast<Eigen::Index>(cols[static_cast<std::size_t>(j)]));
      t.labels.col(j) = train_labels_.col(static_cast<Eigen::Index>(cols[static_cast<std::size_t>(j)]));
    }
    t.tau.assign(static_cast<std::size_t>(n), tau);
    t.lambda.assign(static_cast<std::size_t>(n), lambda_in);
    t.costs_norm = normalizer_.normalize_all(costs_);

    ForwardCache cache;
    const BatchOutput out = net_.forward_batch(t.z, t.tau, t.lambda, &cache);
    const Eigen::VectorXd boosts = net_.boosts();
    const double gamma = net_.gamma();

    t.mu.resize(n);
    t.old_log_prob.resize(n);
    t.reward.resize(n);
    t.cf_reward.resize(k, n);
    double acc_sum = 0.0, cost_sum = 0.0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 0; j < n; ++j) {
      const double mu = sample_beta(out.alpha[j], out.beta[j], action_rng_);
      t.mu[j] = mu;
      t.old_log_prob[j] = log_prob(out.alpha[j], out.beta[j], mu);
      const Eigen::VectorXd p_hat = out.p_hat.col(j);
      const auto scores = score_models(std::span<const double>(p_hat.data(), static_cast<std::size_t>(k)), mu,
                                       std::span<const double>(boosts.data(), static_cast<std::size_t>(k)), gamma,
                                       t.costs_norm);
      const std::size_t m = select_model(scores, costs_);
      const double expected = t.labels(static_cast<Eigen::Index>(m), j);
      const double p_sel = config_.sampled_outcomes ? (unit(action_rng_) < expected ? 1.0 : 0.0) : expected;
      const double lambda_r = config_.disable_lambda ? 0.0 : dual_.lambda;
      t.reward[j] = compute_reward(p_sel, t.costs_norm[m], tau, lambda_r, config_.tau_range);
      for (Eigen::Index i = 0; i < k; ++i)
        t.cf_reward(i, j) = compute_reward(t.labels(i, j), t.costs_norm[static_cast<std::size_t>(i)], tau, lambda_r,
                                           config_.tau_range);
      acc_sum += expected;
      cost_sum += costs_[m];
    }

    if (config_.use_critic) {
      t.advantage = t.reward - out.value;
    } else {
      t.advantage = t.reward.array() - t.reward.mean();
    }

    const LossWeights w = config_.loss_weights();
    double perf = 0.0, grad_norm = 0.0;
    for (int epoch = 0; epoch < config_.ppo_epochs; ++epoch) {
      LossGrad lg = batch_loss_grad(net_, t, w);
      if (!std::isfinite(lg.parts.total()) || !lg.grad.allFinite()) throw NumericError(diagnostic(t, tau, cols));
      if (epoch == 0) perf = lg.parts.perf / std::max(w.perf, 1e-300);
      lg.grad = lg.grad.cwiseProduct(mask_);
      grad_norm = clip_grad_norm(lg.grad, config_.grad_clip);
      optimizer_.step(net_.params(), lg.grad, &mask_);
    }

    // With fixed per-model costs the observed window is the pool's cost vector
    // for each query in the batch.
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(n) * costs_.size());
    for (int j = 0; j < n; ++j) window.insert(window.end(), costs_.begin(), costs_.end());
    normalizer_.observe(window);

    TraceRecord rec;
    rec.step = step_;
    rec.session_id = session_;
    rec.tau = tau;
    rec.lambda = lambda_in;
    rec.mean_batch_accuracy = acc_sum / n;
    rec.mean_batch_cost = cost_sum / n;
    rec.mean_mu = t.mu.mean();
    rec.reward_mean = t.reward.mean();
    rec.perf_loss = perf;
    rec.grad_norm = grad_norm;
    if (!config_.disable_lambda) rec.dual_update = observe_batch(dual_, tau, rec.mean_batch_accuracy).has_value();
    rec.lambda_after = config_.disable_lambda ? 0.0 : dual_.lambda;
    trace_.push_back(rec);
    ++step_;
  }

  void validate_probe(double /*session_tau*/) {
    if (probe_rows_.empty() || config_.val_probe_points < 1) return;
    const Engine eng = engine();
    const SplitView probe{&dataset_, probe_rows_};
    for (int p = 0; p < config_.val_probe_points; ++p) {
      const double tau = config_.val_probe_points == 1
                             ? config_.tau_range.min
                             : config_.tau_range.min + (config_.tau_range.max - config_.tau_range.min) * p /
                                                           (config_.val_probe_points - 1);
      ValidationRecord v;
      v.session_id = session_;
      v.tau = tau;
      for (std::size_t r = 0; r < probe.size(); ++r) {
        const auto d = eng.route_record(probe[r], tau);
        v.accuracy += probe[r].labels[d.model_index];
        v.cost_per_1k += d.cost_of_choice * 1000.0;
        v.mean_mu += d.mu;
      }
      const double m = static_cast<double>(probe.size());
      v.accuracy /= m;
      v.cost_per_1k /= m;
      v.mean_mu /= m;
      validation_.push_back(v);
    }
  }

  std::string diagnostic(const BatchTargets& t, double tau, const std::vector<std::size_t>& cols) const {
    nlohmann::json dump{{"error", "non-finite loss"}, {"step", step_}, {"session_id", session_}, {"tau", tau},
                        {"lambda", dual_.lambda}};
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      rows.push_back({{"query_id", train_[cols[j]].query_id},
                      {"mu", t.mu[jj]},
                      {"reward", t.reward[jj]},
                      {"advantage", t.advantage[jj]}});
    }
    dump["batch"] = rows;
    return dump.dump();
  }

  TrainConfig config_;
  const RoutingDataset& dataset_;
  Featurizer featurizer_;
  SplitView train_, val_;
  PolicyNet net_;
  AdamW optimizer_;
  DualState dual_;
  CostNormalizer normalizer_;
  std::vector<double> costs_;
  Eigen::VectorXd mask_;
  Eigen::MatrixXd train_z_;
  Eigen::MatrixXd train_labels_;
  std::vector<std::size_t> probe_rows_;
  std::mt19937_64 tau_rng_, batch_rng_, action_rng_;
  std::vector<TraceRecord> trace_;
  std::vector<ValidationRecord> validation_;
  long step_ = 0;
  int session_ = 0;
};

}  // namespace proteus
