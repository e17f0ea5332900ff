#pragma once

// Minibatch SGD training with crop/mirror augmentation and best-validation
// checkpoint selection.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "povmap/image.hpp"
#include "povmap/network.hpp"
#include "povmap/seed.hpp"
#include "povmap/sgd.hpp"

namespace povmap {

/// Indexed images with integer class labels.
struct ImageSet {
  std::size_t count = 0;
  std::function<Image(std::size_t)> image;
  std::function<int(std::size_t)> label;

  std::size_t size() const noexcept { return count; }
};

/// Renders every image once and keeps the pixels in memory.
inline ImageSet cached(const ImageSet& s) {
  auto store = std::make_shared<std::vector<Image>>();
  auto labels = std::make_shared<std::vector<int>>();
  store->reserve(s.count);
  for (std::size_t i = 0; i < s.count; ++i) {
    store->push_back(s.image(i));
    labels->push_back(s.label(i));
  }
  return {s.count, [store](std::size_t i) { return (*store)[i]; },
          [labels](std::size_t i) { return (*labels)[i]; }};
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.1;           // multiplier applied every `decay_every` iterations
  std::size_t decay_every = 0;     // 0 disables decay
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  std::size_t max_iterations = 1000;
  std::optional<double> dropout;   // overrides the network's dropout rate when set
  bool mirror = true;
  std::size_t eval_every = 100;
  std::size_t max_eval = 0;        // cap on validation images per evaluation (0 = all)
  std::optional<double> stop_accuracy;  // stop once validation accuracy reaches this
  std::vector<std::size_t> freeze_layers;
  std::uint64_t seed = 1;
};

struct CurvePoint {
  std::size_t iteration = 0;
  double train_loss = 0.0;   // mean over iterations since the previous point
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

template <typename T>
struct TrainResult {
  Network<T> best;
  std::vector<CurvePoint> curve;
  double best_val_accuracy = 0.0;
  std::size_t best_iteration = 0;
  std::optional<std::size_t> threshold_iteration;  // first evaluation at or above stop_accuracy
  std::size_t iterations_run = 0;
};

/// Makes an image fit a network input: random crop (training) or centre crop
/// (evaluation) for fixed-input networks; fully convolutional networks take
/// the whole image.
template <typename T>
Image fit_input(const Network<T>& net, const Image& img, bool training, std::uint64_t seed) {
  const std::size_t side = net.input_extent().h;
  if (net.mode() == NetMode::fully_convolutional || (img.height() == side && img.width() == side))
    return img;
  return training ? random_crop(img, side, seed) : center_crop(img, side);
}

/// Pre-softmax class scores (N x K) with sliding-map averaging.
template <typename T>
Var class_scores(const Network<T>& net, Tape<T>& tape, Var x, const ForwardOptions& opt,
                 std::vector<Var>* param_vars) {
  Var s = net.forward(tape, x, opt, param_vars);
  if (tape.value(s).shape().rank() == 4) s = tape.spatial_mean(s);
  return s;
}

template <typename T>
std::vector<int> predict_labels(const Network<T>& net, const ImageSet& data,
                                std::size_t limit = 0, std::size_t batch = 64) {
  const std::size_t n = limit ? std::min(limit, data.size()) : data.size();
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += batch) {
    std::vector<Image> imgs;
    for (std::size_t i = start; i < std::min(n, start + batch); ++i)
      imgs.push_back(fit_input(net, data.image(i), false, 0));
    const Tensor<T> p = predict(net, to_batch<T>(imgs));
    const std::size_t K = p.shape()[1];
    for (std::size_t r = 0; r < imgs.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (p[r * K + k] > p[r * K + best]) best = k;
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

template <typename T>
double accuracy(const Network<T>& net, const ImageSet& data, std::size_t limit = 0) {
  const auto pred = predict_labels(net, data, limit);
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.label(i);
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Trains a copy of `net` and returns the best-validation snapshot (the
/// final weights when `val` is empty). A non-finite loss aborts with a
/// divergence error.
template <typename T>
TrainResult<T> train(Network<T> net, const ImageSet& train_set, const ImageSet& val,
                     const TrainConfig& cfg,
                     const std::function<void(const CurvePoint&)>& on_eval = {}) {
  require(train_set.size() > 0, ErrorKind::insufficient_data, "empty training set");
  require(cfg.batch_size > 0, ErrorKind::invalid_argument, "batch size must be positive");
  require(cfg.eval_every > 0, ErrorKind::invalid_argument, "eval_every must be positive");
  if (cfg.dropout) net.set_dropout_rate(*cfg.dropout);
  const std::size_t K = net.num_classes();
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const int y = train_set.label(i);
    require(y >= 0 && static_cast<std::size_t>(y) < K, ErrorKind::range,
            "training label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
  }

  const std::set<std::size_t> frozen(cfg.freeze_layers.begin(), cfg.freeze_layers.end());
  std::vector<Tensor<T>*> trainable;
  std::vector<std::size_t> trainable_slot;  // index into the param-var list
  {
    std::size_t slot = 0;
    for (std::size_t i = 0; i < net.params().size(); ++i)
      if (net.params()[i]) {
        if (!frozen.count(i)) {
          trainable.push_back(&net.params()[i]->weights);
          trainable.push_back(&net.params()[i]->bias);
          trainable_slot.push_back(slot);
          trainable_slot.push_back(slot + 1);
        }
        slot += 2;
      }
  }

  SgdState<T> sgd(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  TrainResult<T> result;
  result.best = net;
  result.best_val_accuracy = -1.0;
  std::mt19937_64 rng(derive_seed(cfg.seed, "train-order"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  double loss_sum = 0.0, acc_sum = 0.0;
  std::size_t since = 0;

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    if (cfg.decay_every && it > 1 && (it - 1) % cfg.decay_every == 0)
      sgd.set_learning_rate(sgd.learning_rate() * cfg.lr_decay);
    std::vector<Image> imgs;
    std::vector<int> labels;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const std::uint64_t s = derive_seed(cfg.seed, it, b);
      Image img = fit_input(net, train_set.image(idx), true, s);
      if (cfg.mirror) img = mirror(img, mix64(s));
      imgs.push_back(std::move(img));
      labels.push_back(train_set.label(idx));
    }

    Tape<T> tape(true);
    const Var x = tape.constant(to_batch<T>(imgs));
    std::vector<Var> pvars;
    const Var scores = class_scores(net, tape, x, {true, derive_seed(cfg.seed, it, 0xD20)}, &pvars);
    const Var loss = tape.softmax_xent(scores, labels);
    const double lv = tape.value(loss)[0];
    if (!std::isfinite(lv)) {
      std::ostringstream msg;
      msg << "training diverged at iteration " << it << " (loss " << lv << ", learning rate "
          << sgd.learning_rate() << ")";
      fail(ErrorKind::divergence, msg.str());
    }
    {
      const Tensor<T>& sv = tape.value(scores);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (sv[r * K + k] > sv[r * K + best]) best = k;
        acc_sum += static_cast<int>(best) == labels[r] ? 1.0 / labels.size() : 0.0;
      }
    }
    tape.backward(loss);
    std::vector<Tensor<T>> grads;
    grads.reserve(trainable.size());
    for (std::size_t slot : trainable_slot) grads.push_back(tape.grad(pvars[slot]));
    sgd.step(trainable, grads);
    loss_sum += lv;
    ++since;
    result.iterations_run = it;

    if (it % cfg.eval_every == 0 || it == cfg.max_iterations) {
      CurvePoint pt{it, loss_sum / since, acc_sum / since, std::nullopt};
      loss_sum = acc_sum = 0.0;
      since = 0;
      if (val.size() > 0) {
        const double va = accuracy(net, val, cfg.max_eval);
        pt.val_accuracy = va;
        if (va > result.best_val_accuracy) {
          result.best_val_accuracy = va;
          result.best_iteration = it;
          result.best = net;
        }
        if (cfg.stop_accuracy && va >= *cfg.stop_accuracy && !result.threshold_iteration)
          result.threshold_iteration = it;
      }
      result.curve.push_back(pt);
      if (on_eval) on_eval(pt);
      if (result.threshold_iteration) break;
    }
  }
  if (val.size() == 0) {
    result.best = net;
    result.best_iteration = result.iterations_run;
    result.best_val_accuracy = 0.0;
  }
  return result;
}

}  // namespace povmap
