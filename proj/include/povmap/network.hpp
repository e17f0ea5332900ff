#pragma once

// Layer-list CNN with fixed-input and fully convolutional modes.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "povmap/autograd.hpp"
#include "povmap/ops.hpp"
#include "povmap/tensor.hpp"

namespace povmap {

enum class LayerKind { conv, maxpool, relu, dropout, fully_connected, conv_from_fc, softmax };
enum class NetMode { fixed_input, fully_convolutional };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::conv_from_fc: return "conv_from_fc";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

inline std::string_view to_string(NetMode m) {
  return m == NetMode::fixed_input ? "fixed_input" : "fully_convolutional";
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_channels = 0;  // conv filters or fully-connected width
  double rate = 0.0;             // dropout only
  int replaced_fc = -1;          // conv_from_fc: index of the FC layer it replaced

  static LayerSpec conv(std::size_t k, std::size_t out, std::size_t stride = 1,
                        std::size_t pad = 0) {
    return {LayerKind::conv, k, k, stride, pad, out, 0.0, -1};
  }
  static LayerSpec maxpool(std::size_t k, std::size_t stride) {
    return {LayerKind::maxpool, k, k, stride, 0, 0, 0.0, -1};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec dropout(double rate) {
    LayerSpec s{LayerKind::dropout};
    s.rate = rate;
    return s;
  }
  static LayerSpec fully_connected(std::size_t out) {
    LayerSpec s{LayerKind::fully_connected};
    s.out_channels = out;
    return s;
  }
  static LayerSpec softmax() { return {LayerKind::softmax}; }

  bool has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::fully_connected ||
           kind == LayerKind::conv_from_fc;
  }
};

/// Activation extent h x w x c. `flat` marks rank-2 (N x c) fully-connected output.
struct Extent {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  bool flat = false;

  std::size_t numel() const { return h * w * c; }
  bool operator==(const Extent& o) const {
    return h == o.h && w == o.w && c == o.c && flat == o.flat;
  }
};

template <typename T>
struct LayerParams {
  Tensor<T> weights;
  Tensor<T> bias;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

inline constexpr std::size_t kAllLayers = static_cast<std::size_t>(-1);

template <typename T>
class Network {
 public:
  Network() = default;

  /// Validates that every layer chains for `input` and allocates zeroed
  /// parameters.
  Network(std::vector<LayerSpec> layers, Extent input, NetMode mode = NetMode::fixed_input,
          std::uint64_t seed = 0)
      : layers_(std::move(layers)), input_(input), mode_(mode), seed_(seed) {
    require(input_.h > 0 && input_.w > 0 && input_.c > 0 && !input_.flat, ErrorKind::dimension,
            "network input extent must be positive");
    const auto extents = activation_extents(input_);
    params_.resize(layers_.size());
    Extent in = input_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      if (l.kind == LayerKind::conv || l.kind == LayerKind::conv_from_fc) {
        params_[i] = LayerParams<T>{Tensor<T>(Shape{l.kernel_h, l.kernel_w, in.c, l.out_channels}),
                                    Tensor<T>(Shape{l.out_channels})};
      } else if (l.kind == LayerKind::fully_connected) {
        params_[i] = LayerParams<T>{Tensor<T>(Shape{l.out_channels, in.numel()}),
                                    Tensor<T>(Shape{l.out_channels})};
      }
      in = extents[i];
    }
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

  void set_dropout_rate(double rate) {
    require(rate >= 0.0 && rate < 1.0, ErrorKind::invalid_argument,
            "dropout rate must lie in [0, 1)");
    for (auto& l : layers_)
      if (l.kind == LayerKind::dropout) l.rate = rate;
  }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  std::vector<std::optional<LayerParams<T>>>& params() noexcept { return params_; }
  const std::vector<std::optional<LayerParams<T>>>& params() const noexcept { return params_; }
  const Extent& input_extent() const noexcept { return input_; }
  NetMode mode() const noexcept { return mode_; }
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t s) noexcept { seed_ = s; }

  /// Output extent of every layer for the given input; throws on bad geometry.
  std::vector<Extent> activation_extents(Extent in) const {
    std::vector<Extent> out;
    out.reserve(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      const std::string where = "layer " + std::to_string(i) + " (" +
                                std::string(to_string(l.kind)) + ")";
      switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::conv_from_fc: {
          if (in.flat) in = Extent{1, 1, in.c, false};
          require(l.out_channels > 0, ErrorKind::dimension, where + ": zero output channels");
          in = Extent{ops::window_extent(in.h, l.kernel_h, l.stride, l.pad, where.c_str()),
                      ops::window_extent(in.w, l.kernel_w, l.stride, l.pad, where.c_str()),
                      l.out_channels, false};
          break;
        }
        case LayerKind::maxpool:
          require(!in.flat, ErrorKind::unsupported_topology, where + ": pooling a flat input");
          in = Extent{ops::window_extent(in.h, l.kernel_h, l.stride, 0, where.c_str()),
                      ops::window_extent(in.w, l.kernel_w, l.stride, 0, where.c_str()), in.c,
                      false};
          break;
        case LayerKind::fully_connected:
          require(l.out_channels > 0, ErrorKind::dimension, where + ": zero output width");
          in = Extent{1, 1, l.out_channels, true};
          break;
        case LayerKind::dropout:
          require(l.rate >= 0.0 && l.rate < 1.0, ErrorKind::invalid_argument,
                  where + ": dropout rate must lie in [0, 1)");
          break;
        case LayerKind::relu:
        case LayerKind::softmax:
          break;
      }
      out.push_back(in);
    }
    return out;
  }

  std::size_t num_classes() const {
    const auto ex = activation_extents(input_);
    return ex.empty() ? input_.c : ex.back().c;
  }

  /// Index of the final parameterized layer (the classifier).
  std::size_t classifier_layer() const {
    for (std::size_t i = layers_.size(); i-- > 0;)
      if (layers_[i].has_params()) return i;
    fail(ErrorKind::unsupported_topology, "network has no parameterized layer");
  }

  /// Last layer before the classifier: the feature tap point.
  std::size_t feature_layer() const {
    const std::size_t c = classifier_layer();
    require(c > 0, ErrorKind::unsupported_topology, "classifier has no preceding layer");
    return c - 1;
  }

  std::size_t feature_dim() const {
    return activation_extents(input_)[feature_layer()].c;
  }

  /// Index of the last spatial convolution (excluding converted FC layers).
  std::optional<std::size_t> last_conv_layer() const {
    for (std::size_t i = layers_.size(); i-- > 0;)
      if (layers_[i].kind == LayerKind::conv) return i;
    return std::nullopt;
  }

  /// Input-pixel offset between adjacent output positions.
  std::size_t total_stride() const {
    std::size_t s = 1;
    for (const auto& l : layers_)
      if (l.kind == LayerKind::conv || l.kind == LayerKind::conv_from_fc ||
          l.kind == LayerKind::maxpool)
        s *= l.stride;
    return s;
  }

  std::size_t parameter_count(std::size_t layer) const {
    const auto& p = params_.at(layer);
    return p ? p->weights.size() + p->bias.size() : 0;
  }

  /// Parameter tensors in layer order (weights, bias).
  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& p : params_)
      if (p) {
        out.push_back(&p->weights);
        out.push_back(&p->bias);
      }
    return out;
  }

  /// Checks an input tensor against the mode's contract.
  void check_input(const Shape& s) const {
    require(s.rank() == 4, ErrorKind::dimension, "network input must be N x H x W x C");
    require(s[3] == input_.c, ErrorKind::dimension,
            "network expects " + std::to_string(input_.c) + " input channels, got " +
                std::to_string(s[3]));
    if (mode_ == NetMode::fixed_input) {
      require(s[1] == input_.h && s[2] == input_.w, ErrorKind::geometry,
              "fixed-input network accepts exactly " + std::to_string(input_.h) + "x" +
                  std::to_string(input_.w) + ", got " + std::to_string(s[1]) + "x" +
                  std::to_string(s[2]));
    } else {
      require(s[1] >= input_.h && s[2] >= input_.w, ErrorKind::geometry,
              "fully convolutional input must be at least the training size");
      activation_extents(Extent{s[1], s[2], s[3], false});
    }
  }

  /// Records the forward pass on `tape`. Layers after `stop_after` are skipped.
  /// When `param_vars` is given it receives (weights, bias) vars per
  /// parameterized layer, in layer order.
  Var forward(Tape<T>& tape, Var x, const ForwardOptions& opt = {},
              std::vector<Var>* param_vars = nullptr, std::size_t stop_after = kAllLayers) const {
    check_input(tape.value(x).shape());
    Var h = x;
    const std::size_t last = stop_after == kAllLayers ? layers_.size() : stop_after + 1;
    for (std::size_t i = 0; i < last && i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::conv_from_fc: {
          const auto& s = tape.value(h).shape();
          if (s.rank() == 2) h = tape.reshape(h, Shape{s[0], 1, 1, s[1]});
          const Var w = tape.parameter(params_[i]->weights);
          const Var b = tape.parameter(params_[i]->bias);
          if (param_vars) {
            param_vars->push_back(w);
            param_vars->push_back(b);
          }
          h = tape.conv2d(h, w, b, l.stride, l.pad);
          break;
        }
        case LayerKind::maxpool:
          h = tape.maxpool2d(h, l.kernel_h, l.stride);
          break;
        case LayerKind::fully_connected: {
          const Var w = tape.parameter(params_[i]->weights);
          const Var b = tape.parameter(params_[i]->bias);
          if (param_vars) {
            param_vars->push_back(w);
            param_vars->push_back(b);
          }
          h = tape.fully_connected(h, w, b);
          break;
        }
        case LayerKind::relu:
          h = tape.relu(h);
          break;
        case LayerKind::dropout:
          h = tape.dropout(h, l.rate, opt.training,
                           opt.dropout_seed * 0x9E3779B97F4A7C15ULL + i * 0xD1B54A32D192ED03ULL);
          break;
        case LayerKind::softmax:
          break;  // the head is applied by the loss or by predict()
      }
    }
    return h;
  }

  /// Inference forward pass (dropout off). Returns the activation after
  /// `stop_after`, or the pre-softmax scores.
  Tensor<T> forward(const Tensor<T>& x, std::size_t stop_after = kAllLayers) const {
    Tape<T> tape(false);
    const Var in = tape.constant(x);
    const Var out = forward(tape, in, {}, nullptr, stop_after);
    return tape.value(out);
  }

  /// He-uniform weights (bound sqrt(6 / fan_in)) and zero biases.
  void init_he(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_)
      if (p) {
        const double fan_in = static_cast<double>(p->weights.size()) /
                              static_cast<double>(p->bias.size());
        fill_uniform(p->weights, std::sqrt(6.0 / fan_in), rng);
        p->bias.fill(T(0));
      }
  }

  /// Zero-mean uniform weights with bound 1/sqrt(fan_in), zero bias.
  void reinit_layer(std::size_t layer, std::uint64_t seed) {
    auto& p = params_.at(layer);
    require(p.has_value(), ErrorKind::invalid_argument,
            "layer " + std::to_string(layer) + " has no parameters");
    std::mt19937_64 rng(seed);
    const double fan_in =
        static_cast<double>(p->weights.size()) / static_cast<double>(p->bias.size());
    fill_uniform(p->weights, 1.0 / std::sqrt(fan_in), rng);
    p->bias.fill(T(0));
  }

  /// Builds a network from explicit layers, mode and parameters (used by
  /// conversion and checkpoint loading).
  static Network assemble(std::vector<LayerSpec> layers, Extent input, NetMode mode,
                          std::uint64_t seed, std::vector<std::optional<LayerParams<T>>> params) {
    Network net(std::move(layers), input, mode, seed);
    require(params.size() == net.params_.size(), ErrorKind::shape_mismatch,
            "parameter list length does not match layer count");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require(params[i].has_value() == net.params_[i].has_value(), ErrorKind::shape_mismatch,
              "layer " + std::to_string(i) + ": parameter presence mismatch");
      if (!params[i]) continue;
      require(params[i]->weights.shape() == net.params_[i]->weights.shape() &&
                  params[i]->bias.shape() == net.params_[i]->bias.shape(),
              ErrorKind::shape_mismatch,
              "layer " + std::to_string(i) + ": expected weights " +
                  net.params_[i]->weights.shape().str() + ", got " +
                  params[i]->weights.shape().str());
    }
    net.params_ = std::move(params);
    return net;
  }

 private:
  static void fill_uniform(Tensor<T>& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
  }

  std::vector<LayerSpec> layers_;
  std::vector<std::optional<LayerParams<T>>> params_;
  Extent input_{};
  NetMode mode_ = NetMode::fixed_input;
  std::uint64_t seed_ = 0;
};

// ---------------------------------------------------------------------------
// MiniF: a small analog of the VGG-F layout.

struct MiniFOptions {
  std::size_t input_side = 64;
  std::size_t channels = 3;
  std::size_t num_classes = 3;
  std::size_t feature_dim = 256;
  std::size_t conv1_filters = 16;
  std::size_t conv2_filters = 32;
  std::size_t conv3_filters = 32;
  double dropout = 0.5;
  std::uint64_t seed = 1;
};

/// Two conv stages and three fully-connected layers. For input side s
/// (a multiple of 16) the conv trunk has total stride s/2 and receptive
/// field s, so after conversion an input of side 1.5 s yields a 2x2 map:
///
///   conv (s/16 x s/16, stride s/16) -> relu -> maxpool 2/2        stage 1
///   conv 3x3 -> relu -> conv 3x3 -> relu -> maxpool 4/4           stage 2
///   fc F -> relu -> dropout -> fc F -> relu -> dropout -> fc K -> softmax
template <typename T>
Network<T> build_minif(const MiniFOptions& o) {
  require(o.num_classes >= 2, ErrorKind::invalid_argument,
          "MiniF needs at least two classes, got " + std::to_string(o.num_classes));
  require(o.feature_dim > 0, ErrorKind::invalid_argument, "feature dimension must be positive");
  require(o.input_side >= 16 && o.input_side % 16 == 0, ErrorKind::geometry,
          "MiniF input side must be a positive multiple of 16 so that stride = side/2 and "
          "receptive field = side; got " + std::to_string(o.input_side));
  const std::size_t patch = o.input_side / 16;
  std::vector<LayerSpec> layers{
      LayerSpec::conv(patch, o.conv1_filters, patch),
      LayerSpec::relu(),
      LayerSpec::maxpool(2, 2),
      LayerSpec::conv(3, o.conv2_filters),
      LayerSpec::relu(),
      LayerSpec::conv(3, o.conv3_filters),
      LayerSpec::relu(),
      LayerSpec::maxpool(4, 4),
      LayerSpec::fully_connected(o.feature_dim),
      LayerSpec::relu(),
      LayerSpec::dropout(o.dropout),
      LayerSpec::fully_connected(o.feature_dim),
      LayerSpec::relu(),
      LayerSpec::dropout(o.dropout),
      LayerSpec::fully_connected(o.num_classes),
      LayerSpec::softmax(),
  };
  Network<T> net(std::move(layers), Extent{o.input_side, o.input_side, o.channels, false},
                 NetMode::fixed_input, o.seed);
  net.init_he(o.seed);
  return net;
}

// ---------------------------------------------------------------------------
// Fully convolutional conversion

/// Replaces the first fully-connected layer by a convolution whose filter
/// covers its whole input activation, and every later fully-connected layer
/// by a 1x1 convolution. Weights are reshaped, not retrained.
template <typename T>
Network<T> convolutionalize(const Network<T>& net) {
  require(net.mode() == NetMode::fixed_input, ErrorKind::invalid_argument,
          "network is already fully convolutional");
  const auto& layers = net.layers();
  bool seen_fc = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto k = layers[i].kind;
    if (k == LayerKind::fully_connected) seen_fc = true;
    if (seen_fc && (k == LayerKind::conv || k == LayerKind::maxpool))
      fail(ErrorKind::unsupported_topology,
           "layer " + std::to_string(i) + " (" + std::string(to_string(k)) +
               ") follows a fully-connected layer; cannot convolutionalize");
  }
  if (!seen_fc) return net;

  const auto extents = net.activation_extents(net.input_extent());
  std::vector<LayerSpec> out_layers = layers;
  std::vector<std::optional<LayerParams<T>>> out_params = net.params();
  Extent in = net.input_extent();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::fully_connected) {
      const Extent src = in.flat ? Extent{1, 1, in.c, false} : in;
      const std::size_t k = layers[i].out_channels;
      const std::size_t D = src.numel();
      LayerSpec conv{LayerKind::conv_from_fc, src.h, src.w, 1, 0, k, 0.0, static_cast<int>(i)};
      out_layers[i] = conv;
      // FC row o, column (y*w + x)*c + ch  ->  filter (y, x, ch, o)
      const auto& fc = *net.params()[i];
      Tensor<T> filters(Shape{src.h, src.w, src.c, k});
      for (std::size_t o = 0; o < k; ++o)
        for (std::size_t d = 0; d < D; ++d) filters[d * k + o] = fc.weights[o * D + d];
      out_params[i] = LayerParams<T>{std::move(filters), fc.bias};
    }
    in = extents[i];
  }
  return Network<T>::assemble(std::move(out_layers), net.input_extent(),
                              NetMode::fully_convolutional, net.seed(), std::move(out_params));
}

// ---------------------------------------------------------------------------
// Sliding evaluation

enum class Tap { features, scores };

template <typename T>
std::size_t tap_layer(const Network<T>& net, Tap tap) {
  return tap == Tap::features ? net.feature_layer() : kAllLayers;
}

/// Spatial map of scores (1 x h' x w' x K) for one image (1 x H x W x C).
/// Position (i, j) equals the fixed-input network applied to the crop at
/// offset (i * stride, j * stride).
template <typename T>
Tensor<T> sliding_scores(const Network<T>& net, const Tensor<T>& image, Tap tap = Tap::scores) {
  require(net.mode() == NetMode::fully_convolutional, ErrorKind::invalid_argument,
          "sliding_scores needs a fully convolutional network");
  return net.forward(image, tap_layer(net, tap));
}

/// Mean over spatial positions: N x h x w x K -> N x K (rank-2 input passes through).
template <typename T>
Tensor<T> average_head(const Tensor<T>& score_map) {
  require(score_map.size() > 0, ErrorKind::dimension, "average_head on an empty map");
  if (score_map.shape().rank() == 2) return score_map;
  require(score_map.shape().rank() == 4, ErrorKind::dimension,
          "average_head expects N x h x w x K");
  return ops::spatial_mean(score_map);
}

/// Feature vectors (N x F) from the last hidden layer, averaged over the
/// sliding map when the network is fully convolutional. Dropout is off.
template <typename T>
Tensor<T> extract_features(const Network<T>& net, const Tensor<T>& images) {
  Tensor<T> h = net.forward(images, net.feature_layer());
  if (h.shape().rank() == 4) h = average_head(h);
  require_finite(h, "extract_features");
  return h;
}

/// Class probabilities (N x K), averaging sliding scores in fully convolutional mode.
template <typename T>
Tensor<T> predict(const Network<T>& net, const Tensor<T>& images) {
  Tensor<T> s = net.forward(images);
  if (s.shape().rank() == 4) s = average_head(s);
  return ops::softmax(s);
}

}  // namespace povmap
