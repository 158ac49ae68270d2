#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tam/params.hpp"
#include "tam/tensor.hpp"

namespace tam {

// Adam with bias-corrected first and second moments:
//   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <class T>
class Adam {
 public:
  Adam(ParamRegistry<T>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params.tensors()[i]->numel(), T(0));
      v_[i].assign(params.tensors()[i]->numel(), T(0));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_.tensors()[i];
      auto& m = m_[i];
      auto& v = v_[i];
      const std::size_t n = p.numel();
      for (std::size_t j = 0; j < n; ++j) {
        const double g = static_cast<double>(p.grad[j]);
        m[j] = static_cast<T>(beta1_ * m[j] + (1.0 - beta1_) * g);
        v[j] = static_cast<T>(beta2_ * v[j] + (1.0 - beta2_) * g * g);
        const double mhat = static_cast<double>(m[j]) / bc1;
        const double vhat = static_cast<double>(v[j]) / bc2;
        p.data[j] = static_cast<T>(p.data[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }

  // Optimizer state exposed for checkpointing: per-parameter moment buffers
  // in registration order, plus the step counter.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  ParamRegistry<T>& params_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace tam
