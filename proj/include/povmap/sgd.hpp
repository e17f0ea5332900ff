#pragma once

#include <span>
#include <vector>

#include "povmap/tensor.hpp"

namespace povmap {

/// Classical momentum: v <- momentum * v - lr * g;  p <- p + v.
template <typename T>
class SgdState {
 public:
  SgdState(double learning_rate, double momentum, double weight_decay = 0.0)
      : learning_rate_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {
    require(learning_rate >= 0.0, ErrorKind::invalid_argument,
            "learning rate must be non-negative");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::invalid_argument,
            "momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, ErrorKind::invalid_argument,
            "weight decay must be non-negative");
  }

  double learning_rate() const noexcept { return learning_rate_; }
  void set_learning_rate(double lr) {
    require(lr >= 0.0, ErrorKind::invalid_argument, "learning rate must be non-negative");
    learning_rate_ = lr;
  }
  double momentum() const noexcept { return momentum_; }
  const std::vector<Tensor<T>>& velocity() const noexcept { return velocity_; }

  /// Updates every parameter in place from the matching gradient tensor.
  void step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
    require(params.size() == grads.size(), ErrorKind::shape_mismatch,
            "sgd: parameter and gradient counts differ");
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (auto* p : params) velocity_.emplace_back(p->shape());
    }
    require(velocity_.size() == params.size(), ErrorKind::shape_mismatch,
            "sgd: parameter list changed between steps");
    const T lr = static_cast<T>(learning_rate_);
    const T mu = static_cast<T>(momentum_);
    const T wd = static_cast<T>(weight_decay_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i];
      const Tensor<T>& g = grads[i];
      Tensor<T>& v = velocity_[i];
      require(p.shape() == g.shape() && p.shape() == v.shape(), ErrorKind::shape_mismatch,
              "sgd: shape mismatch " + p.shape().str() + " vs " + g.shape().str());
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = mu * v[j] - lr * (g[j] + wd * p[j]);
        p[j] += v[j];
      }
    }
  }

 private:
  double learning_rate_;
  double momentum_;
  double weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace povmap
