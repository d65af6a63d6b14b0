#pragma once

#include <cmath>

#include <Eigen/Core>

namespace proteus {

// Adam with decoupled weight decay. `mask` (optional, same length as the
// parameters) zeroes both the update and the decay of frozen entries.
class AdamW {
 public:
  struct Options {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::size_t n, Options opt) : opt_(opt), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, const Eigen::VectorXd* mask = nullptr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      if (mask && (*mask)[i] == 0.0) continue;
      params[i] -= opt_.lr * opt_.weight_decay * params[i];
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * grad[i];
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * grad[i] * grad[i];
      params[i] -= opt_.lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + opt_.eps);
    }
  }

  long steps() const noexcept { return t_; }

 private:
  Options opt_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

// Rescales grad in place so its L2 norm is at most max_norm. Returns the norm
// before clipping.
inline double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace proteus
