#pragma once

// Reverse-mode tape over the layer kernels in ops.hpp, plus a central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "povmap/ops.hpp"
#include "povmap/tensor.hpp"

namespace povmap {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, false); }
  Var input(Tensor<T> value) { return push(std::move(value), nullptr, grad_enabled_); }
  /// References an externally owned parameter; it must outlive the tape.
  Var parameter(const Tensor<T>& p) { return push(Tensor<T>(), &p, grad_enabled_); }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.owned;
  }

  /// Gradient accumulated by the last backward(); zeros if the node got none.
  Tensor<T> grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor<T>(value(v).shape());
    return n.grad;
  }

  /// Signature of every piecewise-linear branch taken in the forward pass
  /// (ReLU active sets and max-pool argmaxes). Two evaluations with equal
  /// signatures lie on the same linear piece.
  std::uint64_t pattern() const noexcept { return pattern_; }

  Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
    Tensor<T> y = ops::conv2d(value(x), value(w), value(b), stride, pad);
    const Var out = push(std::move(y), nullptr, needs(x, w, b));
    if (node(out).requires_grad)
      node(out).backward = [this, x, w, b, out, stride, pad] {
        auto g = ops::conv2d_backward(value(x), value(w), stride, pad, node(out).grad,
                                      node(x).requires_grad);
        accumulate(x, g.dx);
        accumulate(w, g.dfilters);
        accumulate(b, g.dbias);
      };
    return out;
  }

  Var maxpool2d(Var x, std::size_t k, std::size_t stride) {
    auto r = ops::maxpool2d_forward(value(x), k, stride);
    for (auto idx : r.argmax) mix(idx);
    const Var out = push(std::move(r.y), nullptr, needs(x));
    if (node(out).requires_grad)
      node(out).backward = [this, x, out, argmax = std::move(r.argmax)] {
        accumulate(x, ops::maxpool2d_backward(value(x).shape(), argmax, node(out).grad));
      };
    return out;
  }

  Var fully_connected(Var x, Var w, Var b) {
    Tensor<T> y = ops::fully_connected(value(x), value(w), value(b));
    const Var out = push(std::move(y), nullptr, needs(x, w, b));
    if (node(out).requires_grad)
      node(out).backward = [this, x, w, b, out] {
        auto g = ops::fully_connected_backward(value(x), value(w), node(out).grad);
        accumulate(x, g.dx);
        accumulate(w, g.dweights);
        accumulate(b, g.dbias);
      };
    return out;
  }

  Var relu(Var x) {
    const auto& xv = value(x);
    for (std::size_t i = 0; i < xv.size(); ++i) mix(xv[i] > T(0) ? 1u : 0u);
    const Var out = push(ops::relu(xv), nullptr, needs(x));
    if (node(out).requires_grad)
      node(out).backward = [this, x, out] {
        accumulate(x, ops::relu_backward(value(x), node(out).grad));
      };
    return out;
  }

  Var dropout(Var x, double rate, bool training, std::uint64_t seed) {
    const auto& xv = value(x);
    if (!training || rate == 0.0) {
      require(rate >= 0.0 && rate < 1.0, ErrorKind::invalid_argument,
              "dropout rate must lie in [0, 1)");
      return x;
    }
    auto mask = ops::dropout_mask<T>(xv.size(), rate, seed);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
    const Var out = push(std::move(y), nullptr, needs(x));
    if (node(out).requires_grad)
      node(out).backward = [this, x, out, mask = std::move(mask)] {
        const auto& dy = node(out).grad;
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * mask[i];
        accumulate(x, dx);
      };
    return out;
  }

  Var spatial_mean(Var x) {
    const Var out = push(ops::spatial_mean(value(x)), nullptr, needs(x));
    if (node(out).requires_grad)
      node(out).backward = [this, x, out] {
        accumulate(x, ops::spatial_mean_backward(value(x).shape(), node(out).grad));
      };
    return out;
  }

  Var reshape(Var x, Shape shape) {
    const Var out = push(value(x).reshaped(shape), nullptr, needs(x));
    if (node(out).requires_grad)
      node(out).backward = [this, x, out] {
        accumulate(x, node(out).grad.reshaped(value(x).shape()));
      };
    return out;
  }

  /// Scalar mean cross-entropy of softmax(logits) against integer labels.
  Var softmax_xent(Var logits, std::vector<int> labels) {
    auto r = ops::softmax_xent(value(logits), labels);
    const Var out = push(Tensor<T>(Shape{1}, std::vector<T>{r.loss}), nullptr, needs(logits));
    if (node(out).requires_grad)
      node(out).backward = [this, logits, out, g = std::move(r.grad)] {
        Tensor<T> scaled = g;
        const T s = node(out).grad[0];
        for (auto& v : scaled.data()) v *= s;
        accumulate(logits, scaled);
      };
    return out;
  }

  /// Scalar sum_i x_i * weights_i.
  Var weighted_sum(Var x, Tensor<T> weights) {
    const auto& xv = value(x);
    require(weights.size() == xv.size(), ErrorKind::dimension, "weighted_sum: size mismatch");
    T s = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
    const Var out = push(Tensor<T>(Shape{1}, std::vector<T>{s}), nullptr, needs(x));
    if (node(out).requires_grad)
      node(out).backward = [this, x, out, w = std::move(weights)] {
        Tensor<T> dx(value(x).shape());
        const T g = node(out).grad[0];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = w[i] * g;
        accumulate(x, dx);
      };
    return out;
  }

  /// Runs reverse accumulation from a scalar node (seed gradient 1).
  void backward(Var loss) {
    require(value(loss).size() == 1, ErrorKind::dimension, "backward: loss must be a scalar");
    require(grad_enabled_, ErrorKind::invalid_argument, "backward on a no-grad tape");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    node(loss).grad = Tensor<T>(value(loss).shape(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward();
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Node& node(Var v) { return nodes_[v.id]; }
  const Node& node(Var v) const { return nodes_[v.id]; }

  template <typename... Vs>
  bool needs(Vs... vs) const {
    return grad_enabled_ && (node(vs).requires_grad || ...);
  }

  Var push(Tensor<T> value, const Tensor<T>* ref, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), ref, Tensor<T>(), requires_grad, nullptr});
    return Var{nodes_.size() - 1};
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  void mix(std::uint64_t v) noexcept {
    pattern_ ^= v + 0x9e3779b97f4a7c15ULL + (pattern_ << 6) + (pattern_ >> 2);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
  std::uint64_t pattern_ = 0xcbf29ce484222325ULL;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<std::size_t> excluded;  // coordinates straddling a ReLU/max-pool kink

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

/// Builds a computation from one input tensor on a fresh tape. Non-scalar
/// outputs are reduced with a fixed random projection before differentiation.
template <typename T>
using GradCheckFn = std::function<Var(Tape<T>&, Var)>;

/// Compares the tape gradient against central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every input coordinate. Relative error is
/// |a - n| / max(|a|, |n|, floor); coordinates whose two perturbations land on
/// different linear pieces are excluded and reported.
template <typename T>
GradCheckReport finite_diff_check(const GradCheckFn<T>& fn, const Tensor<T>& input, double eps,
                                  double floor = 1e-6, std::uint64_t projection_seed = 7) {
  require(eps > 0.0, ErrorKind::invalid_argument, "finite_diff_check: epsilon must be positive");

  Tensor<T> projection;
  auto evaluate = [&](const Tensor<T>& x, bool with_grad, Tensor<T>* grad_out,
                      std::uint64_t* pattern) -> T {
    Tape<T> tape(with_grad);
    const Var in = tape.input(x);
    Var out = fn(tape, in);
    if (tape.value(out).size() != 1) {
      if (projection.empty()) {
        projection = Tensor<T>(tape.value(out).shape());
        std::mt19937_64 rng(projection_seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& v : projection.data()) v = static_cast<T>(u(rng));
      }
      out = tape.weighted_sum(out, projection);
    }
    if (pattern) *pattern = tape.pattern();
    const T value = tape.value(out)[0];
    if (with_grad) {
      tape.backward(out);
      *grad_out = tape.grad(in);
    }
    return value;
  };

  Tensor<T> analytic;
  std::uint64_t base_pattern = 0;
  evaluate(input, true, &analytic, &base_pattern);

  GradCheckReport report;
  Tensor<T> probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T orig = probe[i];
    std::uint64_t p_plus = 0, p_minus = 0;
    probe[i] = orig + static_cast<T>(eps);
    const double f_plus = evaluate(probe, false, nullptr, &p_plus);
    probe[i] = orig - static_cast<T>(eps);
    const double f_minus = evaluate(probe, false, nullptr, &p_minus);
    probe[i] = orig;
    if (p_plus != p_minus || p_plus != base_pattern) {
      report.excluded.push_back(i);
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
    ++report.checked;
  }
  return report;
}

}  // namespace povmap
