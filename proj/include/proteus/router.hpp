#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "proteus/data_model.hpp"
#include "proteus/dual.hpp"
#include "proteus/error.hpp"
#include "proteus/featurizer.hpp"
#include "proteus/policy_net.hpp"

namespace proteus {

// Lambda fed to the policy at inference time.
inline constexpr double kInferenceLambda = 1.0;

// s_i = p_hat_i + mu * b_i - (1 - mu)^gamma * c_i, with c_i normalized to [0,1].
template <class Out = std::vector<double>>
Out score_models(std::span<const double> p_hat, double mu, std::span<const double> boosts, double gamma,
                 std::span<const double> costs_norm) {
  if (p_hat.size() != boosts.size() || p_hat.size() != costs_norm.size())
    throw ShapeError("score_models: p_hat, boosts and costs must have equal length");
  const double penalty = std::pow(1.0 - mu, gamma);
  Out s(p_hat.size());
  for (std::size_t i = 0; i < p_hat.size(); ++i) s[i] = p_hat[i] + mu * boosts[i] - penalty * costs_norm[i];
  return s;
}

// argmax with ties broken by lower cost, then lower index.
inline std::size_t select_model(std::span<const double> scores, std::span<const double> costs) {
  if (scores.empty()) throw ValidationError("select_model: no scores");
  if (costs.size() != scores.size()) throw ShapeError("select_model: costs length mismatch");
  std::size_t best = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw NumericError("select_model: NaN score for model " + std::to_string(i));
    if (i == 0) continue;
    if (scores[i] > scores[best] || (scores[i] == scores[best] && costs[i] < costs[best])) best = i;
  }
  return best;
}

struct RouteDecision {
  std::size_t model_index = 0;
  std::string model_name;
  double mu = 0.0;
  double tau = 0.0;  // tau actually used (after clamping)
  bool clamped = false;
  std::vector<double> scores;
  std::vector<double> p_hat;
  double cost_of_choice = 0.0;  // dollars

  bool operator==(const RouteDecision&) const = default;

  nlohmann::json to_json() const {
    return {{"model", model_name},          {"model_index", model_index}, {"mu", mu},
            {"tau", tau},                   {"clamped", clamped},         {"predicted_accuracy", p_hat.at(model_index)},
            {"scores", scores},             {"p_hat", p_hat},             {"cost", cost_of_choice}};
  }

  static RouteDecision from_json(const nlohmann::json& j) {
    RouteDecision d;
    d.model_name = j.at("model").get<std::string>();
    d.model_index = j.at("model_index").get<std::size_t>();
    d.mu = j.at("mu").get<double>();
    d.tau = j.at("tau").get<double>();
    d.clamped = j.at("clamped").get<bool>();
    d.scores = j.at("scores").get<std::vector<double>>();
    d.p_hat = j.at("p_hat").get<std::vector<double>>();
    d.cost_of_choice = j.at("cost").get<double>();
    return d;
  }
};

// Frozen routing engine: policy weights, featurizer, pool and the cost
// normalization that was in force at the end of training.
class Engine {
 public:
  Engine(PolicyNet net, Featurizer featurizer, ModelPool pool, CostNormalizer normalizer, double tau_min,
         double tau_max)
      : net_(std::move(net)),
        featurizer_(std::move(featurizer)),
        pool_(std::move(pool)),
        normalizer_(normalizer),
        tau_min_(tau_min),
        tau_max_(tau_max) {
    pool_.require_routable();
    if (net_.k() != pool_.size()) throw ShapeError("policy K does not match pool size");
    if (net_.shape().embed_dim != featurizer_.dim()) throw ShapeError("policy input width does not match featurizer");
    if (!(tau_min_ < tau_max_)) throw ConfigError("tau range must satisfy tau_min < tau_max");
    costs_ = pool_.costs();
    costs_norm_ = normalizer_.normalize_all(costs_);
    const Eigen::VectorXd b = net_.boosts();
    boosts_.assign(b.data(), b.data() + b.size());
  }

  const PolicyNet& net() const noexcept { return net_; }
  const Featurizer& featurizer() const noexcept { return featurizer_; }
  const ModelPool& pool() const noexcept { return pool_; }
  const CostNormalizer& normalizer() const noexcept { return normalizer_; }
  const std::vector<double>& costs_norm() const noexcept { return costs_norm_; }
  double tau_min() const noexcept { return tau_min_; }
  double tau_max() const noexcept { return tau_max_; }
  double inference_lambda() const noexcept { return inference_lambda_; }
  void set_inference_lambda(double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("inference lambda must be finite and >= 0");
    inference_lambda_ = v;
  }

  RouteDecision route_embedding(const Eigen::VectorXd& z, double tau) const {
    if (std::isnan(tau)) throw ValidationError("tau is NaN");
    RouteDecision d;
    d.tau = std::clamp(tau, tau_min_, tau_max_);
    d.clamped = d.tau != tau;
    const PolicyOutput out = net_.forward(z, d.tau, inference_lambda_);
    d.mu = out.mu;
    d.p_hat.assign(out.p_hat.data(), out.p_hat.data() + out.p_hat.size());
    d.scores = score_models(d.p_hat, d.mu, boosts_, out.gamma, costs_norm_);
    d.model_index = select_model(d.scores, costs_);
    d.model_name = pool_[d.model_index].name;
    d.cost_of_choice = costs_[d.model_index];
    return d;
  }

  RouteDecision route_text(std::string_view text, double tau) const {
    return route_embedding(featurizer_.embed_text(text), tau);
  }

  RouteDecision route_record(const QueryRecord& rec, double tau) const {
    return route_embedding(featurizer_.embed(rec), tau);
  }

 private:
  PolicyNet net_;
  Featurizer featurizer_;
  ModelPool pool_;
  CostNormalizer normalizer_;
  double tau_min_;
  double tau_max_;
  double inference_lambda_ = kInferenceLambda;
  std::vector<double> costs_;
  std::vector<double> costs_norm_;
  std::vector<double> boosts_;
};

}  // namespace proteus
