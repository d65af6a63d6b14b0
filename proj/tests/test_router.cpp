#include <gtest/gtest.h>

#include "proteus/router.hpp"
#include "test_util.hpp"

using namespace proteus;

TEST(Score, Examples) {
  const std::vector<double> p{0.9, 0.6}, b{0.2, 0.0}, c{0.8, 0.1};
  auto s = score_models(p, 1.0, b, 5.0, c);
  EXPECT_NEAR(s[0], 1.1, 1e-12);
  EXPECT_NEAR(s[1], 0.6, 1e-12);
  s = score_models(p, 0.0, b, 5.0, c);
  EXPECT_NEAR(s[0], 0.1, 1e-12);
  EXPECT_NEAR(s[1], 0.5, 1e-12);
  s = score_models(p, 0.5, b, 2.0, c);
  EXPECT_NEAR(s[0], 0.8, 1e-12);
  EXPECT_NEAR(s[1], 0.575, 1e-12);
}

TEST(Score, LengthMismatch) {
  const std::vector<double> p{0.9, 0.6}, b{0.2}, c{0.8, 0.1};
  EXPECT_THROW(score_models(p, 0.5, b, 3.0, c), ShapeError);
}

TEST(Score, GapNonDecreasingInMu) {
  const std::vector<double> p{0.7, 0.6}, b{0.3, 0.1}, c{0.9, 0.2};
  for (double gamma : {2.0, 4.5, 8.0}) {
    double prev = -1e9;
    for (int i = 0; i <= 100; ++i) {
      const auto s = score_models(p, i / 100.0, b, gamma, c);
      EXPECT_GE(s[0] - s[1], prev - 1e-15);
      prev = s[0] - s[1];
    }
  }
}

TEST(Select, ArgmaxAndTieBreaks) {
  EXPECT_EQ(select_model(std::vector<double>{0.1, 0.5}, std::vector<double>{1, 1}), 1u);
  EXPECT_EQ(select_model(std::vector<double>{0.5, 0.5}, std::vector<double>{0.01, 0.001}), 1u);
  EXPECT_EQ(select_model(std::vector<double>{0.5, 0.5}, std::vector<double>{0.01, 0.01}), 0u);
  EXPECT_EQ(select_model(std::vector<double>{0.5, 0.7, 0.7}, std::vector<double>{1, 3, 2}), 2u);
  EXPECT_THROW(select_model(std::vector<double>{0.5, std::nan("")}, std::vector<double>{1, 1}), NumericError);
  EXPECT_THROW(select_model(std::vector<double>{}, std::vector<double>{}), ValidationError);
}

namespace {
Engine zero_engine(std::vector<ModelInfo> models, double tau_min = 0.8, double tau_max = 0.95) {
  ModelPool pool(std::move(models));
  const auto costs = pool.costs();
  return Engine(PolicyNet(NetShape{32, 4, pool.size()}), Featurizer::hashed(32, 0), pool,
                CostNormalizer::seeded(costs), tau_min, tau_max);
}
}  // namespace

TEST(Engine, ZeroWeightNetPicksCheapestNormalizedCost) {
  const auto e = zero_engine({{"mid", 0.003}, {"cheap", 0.0002}, {"dear", 0.02}});
  const auto d = e.route_text("anything at all", 0.9);
  EXPECT_DOUBLE_EQ(d.mu, 0.5);
  for (double p : d.p_hat) EXPECT_DOUBLE_EQ(p, 0.5);
  // s_i = 0.5 - 0.5^5 c_i
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(d.scores[i], 0.5 - std::pow(0.5, 5) * e.costs_norm()[i], 1e-15);
  EXPECT_EQ(d.model_index, 1u);
  EXPECT_EQ(d.model_name, "cheap");
  EXPECT_DOUBLE_EQ(d.cost_of_choice, 0.0002);
}

TEST(Engine, ClampsTauWithFlag) {
  const auto e = zero_engine({{"a", 0.01}, {"b", 0.001}});
  auto d = e.route_text("x", 0.99);
  EXPECT_TRUE(d.clamped);
  EXPECT_DOUBLE_EQ(d.tau, 0.95);
  d = e.route_text("x", 0.5);
  EXPECT_TRUE(d.clamped);
  EXPECT_DOUBLE_EQ(d.tau, 0.8);
  d = e.route_text("x", 0.9);
  EXPECT_FALSE(d.clamped);
  EXPECT_THROW(e.route_text("x", std::nan("")), ValidationError);
}

TEST(Engine, DeterministicAndRoundTrips) {
  const auto rd = proteus::testing::small_synthetic(50, 1);
  auto net = PolicyNet::initialized({64, 8, rd.k()}, 3);
  const Engine e(net, Featurizer::hashed(64, 1), rd.pool, CostNormalizer::seeded(rd.pool.costs()), 0.8, 0.95);
  for (const auto& rec : rd.records) {
    const auto a = e.route_record(rec, 0.87), b = e.route_record(rec, 0.87);
    EXPECT_EQ(a, b);
    EXPECT_LT(a.model_index, rd.k());
    EXPECT_EQ(RouteDecision::from_json(a.to_json()), a);
    EXPECT_EQ(a.to_json()["predicted_accuracy"], a.p_hat[a.model_index]);
  }
}

TEST(Engine, ConstructionChecks) {
  ModelPool one(std::vector<ModelInfo>{{"a", 0.01}});
  EXPECT_THROW(Engine(PolicyNet(NetShape{32, 4, 1}), Featurizer::hashed(32), one, {}, 0.8, 0.95), ValidationError);
  ModelPool two(std::vector<ModelInfo>{{"a", 0.01}, {"b", 0.02}});
  EXPECT_THROW(Engine(PolicyNet(NetShape{32, 4, 3}), Featurizer::hashed(32), two, {}, 0.8, 0.95), ShapeError);
  EXPECT_THROW(Engine(PolicyNet(NetShape{16, 4, 2}), Featurizer::hashed(32), two, {}, 0.8, 0.95), ShapeError);
  EXPECT_THROW(Engine(PolicyNet(NetShape{32, 4, 2}), Featurizer::hashed(32), two, {}, 0.9, 0.9), ConfigError);
}

TEST(Engine, InferenceLambdaSetter) {
  auto e = zero_engine({{"a", 0.01}, {"b", 0.001}});
  EXPECT_EQ(e.inference_lambda(), 1.0);
  e.set_inference_lambda(4.0);
  EXPECT_EQ(e.inference_lambda(), 4.0);
  EXPECT_THROW(e.set_inference_lambda(-1.0), ValidationError);
}
