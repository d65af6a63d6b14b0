#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "proteus/error.hpp"

namespace proteus {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }

inline double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// ln Beta(mu; alpha, beta). mu must lie strictly inside (0,1).
inline double log_prob(double alpha, double beta, double mu) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError("log_prob: mu must lie strictly inside (0,1)");
  if (!(alpha > 0.0 && beta > 0.0)) throw DomainError("log_prob: alpha and beta must be positive");
  return (alpha - 1.0) * std::log(mu) + (beta - 1.0) * std::log1p(-mu) - log_beta_fn(alpha, beta);
}

struct BetaGrad {
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

// Gradient of log_prob with respect to (alpha, beta).
inline BetaGrad log_prob_grad(double alpha, double beta, double mu) {
  const double psi_ab = digamma(alpha + beta);
  return {std::log(mu) - digamma(alpha) + psi_ab, std::log1p(-mu) - digamma(beta) + psi_ab};
}

inline double beta_entropy(double a, double b) {
  return log_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

inline BetaGrad beta_entropy_grad(double a, double b) {
  const double t_ab = (a + b - 2.0) * trigamma(a + b);
  return {-(a - 1.0) * trigamma(a) + t_ab, -(b - 1.0) * trigamma(b) + t_ab};
}

inline double beta_mean(double a, double b) { return a / (a + b); }

constexpr double kMuEpsilon = 1e-6;

inline double clamp_mu(double mu) { return std::clamp(mu, kMuEpsilon, 1.0 - kMuEpsilon); }

template <class Rng>
double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return clamp_mu(x / (x + y));
}

}  // namespace proteus
