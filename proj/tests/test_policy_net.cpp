#include <cmath>
#include <random>

#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "proteus/beta.hpp"
#include "proteus/losses.hpp"
#include "proteus/policy_net.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

using namespace proteus;
using proteus::testing::finite_difference_check;
using proteus::testing::grad_close;
using proteus::testing::make_grad_case;

TEST(Beta, LogProbExamples) {
  EXPECT_NEAR(log_prob(1, 1, 0.7), 0.0, 1e-12);
  // pdf of Beta(2,2) is 6 x (1 - x)
  EXPECT_NEAR(log_prob(2, 2, 0.5), std::log(6 * 0.5 * 0.5), 1e-12);
  EXPECT_NEAR(log_prob(2, 2, 0.5), 0.4055, 1e-4);
  for (int i = 1; i <= 9; ++i) EXPECT_GE(log_prob(2, 2, 0.5), log_prob(2, 2, i / 10.0));
}

TEST(Beta, LogProbMatchesBoostDensity) {
  for (double a : {1.2, 2.5, 7.0})
    for (double b : {1.0, 3.3})
      for (double x : {0.05, 0.4, 0.93})
        EXPECT_NEAR(log_prob(a, b, x), std::log(boost::math::ibeta_derivative(a, b, x)), 1e-10);
}

TEST(Beta, DomainErrors) {
  EXPECT_THROW(log_prob(2, 2, 0.0), DomainError);
  EXPECT_THROW(log_prob(2, 2, 1.0), DomainError);
  EXPECT_THROW(log_prob(0.0, 2, 0.5), DomainError);
}

TEST(Beta, GradientExampleAndFiniteDifference) {
  const auto g = log_prob_grad(2, 2, 0.5);
  EXPECT_NEAR(g.d_alpha, std::log(0.5) - digamma(2) + digamma(4), 1e-12);
  EXPECT_NEAR(g.d_alpha, 0.1402, 1e-4);
  const double h = 1e-5;
  for (double a : {1.1, 3.0})
    for (double b : {1.5, 6.0})
      for (double x : {0.2, 0.8}) {
        const auto gg = log_prob_grad(a, b, x);
        EXPECT_TRUE(grad_close(gg.d_alpha, (log_prob(a + h, b, x) - log_prob(a - h, b, x)) / (2 * h), 1e-6));
        EXPECT_TRUE(grad_close(gg.d_beta, (log_prob(a, b + h, x) - log_prob(a, b - h, x)) / (2 * h), 1e-6));
        const auto eg = beta_entropy_grad(a, b);
        EXPECT_TRUE(grad_close(eg.d_alpha, (beta_entropy(a + h, b) - beta_entropy(a - h, b)) / (2 * h), 1e-6));
        EXPECT_TRUE(grad_close(eg.d_beta, (beta_entropy(a, b + h) - beta_entropy(a, b - h)) / (2 * h), 1e-6));
      }
}

TEST(Beta, EntropyOfUniformIsZero) { EXPECT_NEAR(beta_entropy(1, 1), 0.0, 1e-12); }

TEST(Beta, SamplesStayInsideOpenInterval) {
  std::mt19937_64 rng(1);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) {
    const double m = sample_beta(2.0, 6.0, rng);
    ASSERT_GT(m, 0.0);
    ASSERT_LT(m, 1.0);
    sum += m;
  }
  EXPECT_NEAR(sum / 20000, 0.25, 0.005);
}

TEST(Gamma, RangeAndInverse) {
  EXPECT_DOUBLE_EQ(gamma_from_raw(0.0), 5.0);
  for (double r : {-30.0, -2.0, 0.5, 30.0}) {
    EXPECT_GE(gamma_from_raw(r), 2.0);
    EXPECT_LE(gamma_from_raw(r), 8.0);
  }
  EXPECT_NEAR(gamma_from_raw(raw_from_gamma(3.0)), 3.0, 1e-12);
  EXPECT_THROW(raw_from_gamma(8.0), ValidationError);
  EXPECT_THROW(raw_from_gamma(1.0), ValidationError);
}

namespace {
NetShape small_shape() { return {8, 6, 3, 0.8, 0.95}; }
Eigen::VectorXd random_z(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));
  for (auto& x : z) x = n(rng);
  return z;
}
}  // namespace

TEST(PolicyNet, ZeroWeightsGiveHalfEverything) {
  PolicyNet net(small_shape());
  std::mt19937_64 rng(0);
  const auto out = net.forward(random_z(8, rng), 0.9, 1.0);
  EXPECT_NEAR(out.alpha, std::log(2.0) + 1.0, 1e-15);
  EXPECT_NEAR(out.beta, 1.6931, 1e-4);
  EXPECT_DOUBLE_EQ(out.mu, 0.5);
  for (double p : out.p_hat) EXPECT_DOUBLE_EQ(p, 0.5);
  EXPECT_DOUBLE_EQ(out.gamma, 5.0);
}

TEST(PolicyNet, EqualAlphaBetaGivesHalf) {
  auto net = PolicyNet::initialized(small_shape(), 3);
  net.group(Group::beta_w).row(1) = net.group(Group::beta_w).row(0);
  net.group(Group::beta_b)(1, 0) = net.group(Group::beta_b)(0, 0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(net.forward(random_z(8, rng), 0.85, 2.0).mu, 0.5);
}

TEST(PolicyNet, ParametersStayStructurallyConstrained) {
  std::mt19937_64 rng(5);
  for (int s = 0; s < 5; ++s) {
    auto net = PolicyNet::initialized(small_shape(), s);
    net.params() *= 50.0;  // extreme weights
    const auto out = net.forward(random_z(8, rng), 0.9, 3.0);
    EXPECT_GE(out.alpha, 1.0);
    EXPECT_GE(out.beta, 1.0);
    EXPECT_GT(out.gamma, 2.0 - 1e-12);
    EXPECT_LT(out.gamma, 8.0 + 1e-12);
  }
}

TEST(PolicyNet, PerfHeadIgnoresTauAndLambda) {
  const auto net = PolicyNet::initialized(small_shape(), 7);
  std::mt19937_64 rng(2);
  const auto z = random_z(8, rng);
  const auto ref = net.forward(z, 0.8, 0.0).p_hat;
  for (double tau : {0.0, 0.5, 0.95, 1.0})
    for (double lam : {0.0, 1.0, 10.0, 1e6}) EXPECT_EQ(net.forward(z, tau, lam).p_hat, ref);
}

TEST(PolicyNet, InferenceIsDeterministic) {
  const auto net = PolicyNet::initialized(small_shape(), 8);
  std::mt19937_64 rng(3);
  const auto z = random_z(8, rng);
  const auto a = net.forward(z, 0.9, 1.0), b = net.forward(z, 0.9, 1.0);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.p_hat, b.p_hat);
}

TEST(PolicyNet, ShapeErrors) {
  const auto net = PolicyNet::initialized(small_shape(), 0);
  EXPECT_THROW(net.forward(Eigen::VectorXd::Zero(7), 0.9, 1.0), ShapeError);
  EXPECT_THROW(PolicyNet(NetShape{8, 6, 3, 0.9, 0.9}), ShapeError);
}

TEST(PolicyNet, ZeroUpstreamGradientGivesZeroGradient) {
  const auto net = PolicyNet::initialized(small_shape(), 4);
  std::mt19937_64 rng(4);
  Eigen::MatrixXd z(8, 4);
  for (int j = 0; j < 4; ++j) z.col(j) = random_z(8, rng);
  const std::vector<double> tau{0.8, 0.85, 0.9, 0.95}, lam{0, 1, 2, 3};
  ForwardCache c;
  net.forward_batch(z, tau, lam, &c);
  BatchGradIn g;
  g.d_alpha = Eigen::VectorXd::Zero(4);
  g.d_beta = Eigen::VectorXd::Zero(4);
  g.d_perf_logits = Eigen::MatrixXd::Zero(3, 4);
  g.d_value = Eigen::VectorXd::Zero(4);
  g.d_boosts = Eigen::VectorXd::Zero(3);
  EXPECT_TRUE(net.backward(c, g).isZero(0.0));
}

TEST(PerfLoss, Examples) {
  Eigen::VectorXd p(2), y(2);
  p << 0.9, 0.2;
  y << 1, 0;
  EXPECT_NEAR(perf_loss(p, y), -(std::log(0.9) + std::log(0.8)) / 2, 1e-12);
  EXPECT_NEAR(perf_loss(p, y), 0.1643, 1e-4);
  Eigen::VectorXd half = Eigen::VectorXd::Constant(4, 0.5), bin(4);
  bin << 1, 0, 0, 1;
  EXPECT_NEAR(perf_loss(half, bin), std::log(2.0), 1e-12);
  Eigen::VectorXd near_one = Eigen::VectorXd::Constant(2, 1 - 1e-9), ones = Eigen::VectorXd::Ones(2);
  EXPECT_LT(perf_loss(near_one, ones), 1e-8);
  // logit form agrees
  Eigen::VectorXd logits(2);
  logits << std::log(0.9 / 0.1), std::log(0.2 / 0.8);
  EXPECT_NEAR(perf_loss_logits(logits, y), perf_loss(p, y), 1e-12);
}

TEST(Losses, LossValueMatchesGradPass) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto gc = make_grad_case(seed);
    const auto lg = batch_loss_grad(gc.net, gc.t, gc.w);
    EXPECT_NEAR(lg.parts.total(), batch_loss(gc.net, gc.t, gc.w, lg.detached).total(), 1e-12);
  }
}

TEST(Losses, AnalyticGradientMatchesFiniteDifference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& c : finite_difference_check(make_grad_case(seed))) {
      EXPECT_EQ(c.failures, 0) << c.group << " seed " << seed << " worst rel " << c.worst_rel;
      EXPECT_GT(c.max_abs_grad, 0.0) << c.group << " never exercised";
    }
  }
}

TEST(Losses, ZeroAdvantageLeavesPolicyGroupsUntouched) {
  auto gc = make_grad_case(42);
  gc.t.advantage.setZero();
  gc.w.entropy = 0.0;
  gc.w.use_critic = false;
  const auto lg = batch_loss_grad(gc.net, gc.t, gc.w);
  for (Group g : {Group::trunk_w, Group::trunk_b, Group::gate_w, Group::gate_b, Group::beta_w, Group::beta_b}) {
    const auto& e = gc.net.layout()[g];
    EXPECT_TRUE(lg.grad.segment(static_cast<Eigen::Index>(e.offset), static_cast<Eigen::Index>(e.size())).isZero(0.0))
        << kGroupNames[static_cast<int>(g)];
  }
  const auto& pw = gc.net.layout()[Group::perf_w];
  EXPECT_FALSE(lg.grad.segment(static_cast<Eigen::Index>(pw.offset), static_cast<Eigen::Index>(pw.size())).isZero());
}
