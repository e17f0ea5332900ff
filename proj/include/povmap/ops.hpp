#pragma once

// Layer kernels: forward and backward passes as pure functions over tensors.
// The autograd tape composes these; they are also usable directly.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "povmap/gemm.hpp"
#include "povmap/tensor.hpp"

namespace povmap::ops {

/// Output extent of a strided window; throws a geometry error when the
/// window does not fit or the last window would skip real input pixels.
inline std::size_t window_extent(std::size_t in, std::size_t k, std::size_t stride,
                                 std::size_t pad, const char* what) {
  require(stride > 0, ErrorKind::geometry, std::string(what) + ": stride must be positive");
  const std::size_t padded = in + 2 * pad;
  require(padded >= k, ErrorKind::geometry,
          std::string(what) + ": window " + std::to_string(k) + " exceeds input extent " +
              std::to_string(padded));
  // Leftover columns are tolerated only when they are all padding.
  require((padded - k) % stride <= pad, ErrorKind::geometry,
          std::string(what) + ": non-integral output size for input " + std::to_string(in) +
              ", window " + std::to_string(k) + ", stride " + std::to_string(stride) +
              ", pad " + std::to_string(pad));
  return (padded - k) / stride + 1;
}

inline void require_rank4(const Shape& s, const char* what) {
  require(s.rank() == 4, ErrorKind::dimension,
          std::string(what) + ": expected an N x H x W x C tensor, got " + s.str());
}

// ---------------------------------------------------------------------------
// conv2d

namespace detail_conv {

// Unfolds receptive-field patches into rows ordered (ky, kx, c), matching the
// flat layout of a kh x kw x Cin x Cout filter viewed as (kh*kw*Cin) x Cout.
template <typename T>
void im2col(const Tensor<T>& x, std::size_t kh, std::size_t kw, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, std::vector<T>& cols) {
  const auto& s = x.shape();
  const std::size_t N = s[0], H = s[1], W = s[2], C = s[3];
  const std::size_t K = kh * kw * C;
  cols.assign(N * ho * wo * K, T(0));
  const T* xd = x.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T* row = cols.data() + ((n * ho + oy) * wo + ox) * K;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const T* src = xd + ((n * H + iy) * W + ix) * C;
            T* dst = row + (ky * kw + kx) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] = src[c];
          }
        }
      }
}

template <typename T>
void col2im(const std::vector<T>& cols, const Shape& xs, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* dx) {
  const std::size_t N = xs[0], H = xs[1], W = xs[2], C = xs[3];
  const std::size_t K = kh * kw * C;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const T* row = cols.data() + ((n * ho + oy) * wo + ox) * K;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            T* dst = dx + ((n * H + iy) * W + ix) * C;
            const T* src = row + (ky * kw + kx) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
}

}  // namespace detail_conv

/// x: N x H x W x Cin, filters: kh x kw x Cin x Cout, bias: Cout.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& filters, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  require_rank4(x.shape(), "conv2d input");
  require_rank4(filters.shape(), "conv2d filters");
  const auto& fs = filters.shape();
  const std::size_t kh = fs[0], kw = fs[1], cin = fs[2], cout = fs[3];
  require(x.shape()[3] == cin, ErrorKind::dimension,
          "conv2d: input has " + std::to_string(x.shape()[3]) + " channels, filters expect " +
              std::to_string(cin));
  require(bias.size() == cout, ErrorKind::dimension, "conv2d: bias length must equal Cout");
  const std::size_t ho = window_extent(x.shape()[1], kh, stride, pad, "conv2d");
  const std::size_t wo = window_extent(x.shape()[2], kw, stride, pad, "conv2d");
  const std::size_t N = x.shape()[0];

  Tensor<T> y(Shape{N, ho, wo, cout});
  T* yd = y.data().data();
  const std::size_t rows = N * ho * wo;
  const std::size_t K = kh * kw * cin;
  if (kh == 1 && kw == 1 && stride == 1 && pad == 0) {
    povmap::detail::gemm_nn(rows, cout, K, x.data().data(), filters.data().data(), yd, false);
  } else {
    std::vector<T> cols;
    detail_conv::im2col(x, kh, kw, stride, pad, ho, wo, cols);
    povmap::detail::gemm_nn(rows, cout, K, cols.data(), filters.data().data(), yd, false);
  }
  const T* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < cout; ++o) yd[r * cout + o] += b[o];
  return y;
}

template <typename T>
struct ConvGradsT {
  Tensor<T> dx;
  Tensor<T> dfilters;
  Tensor<T> dbias;
};

template <typename T>
ConvGradsT<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& filters, std::size_t stride,
                              std::size_t pad, const Tensor<T>& dy, bool need_dx = true) {
  const auto& fs = filters.shape();
  const std::size_t kh = fs[0], kw = fs[1], cin = fs[2], cout = fs[3];
  const std::size_t ho = dy.shape()[1], wo = dy.shape()[2];
  const std::size_t N = x.shape()[0];
  const std::size_t rows = N * ho * wo;
  const std::size_t K = kh * kw * cin;

  ConvGradsT<T> g{Tensor<T>(x.shape()), Tensor<T>(fs), Tensor<T>(Shape{cout})};
  const T* dyd = dy.data().data();
  T* db = g.dbias.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < cout; ++o) db[o] += dyd[r * cout + o];

  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;
  std::vector<T> cols;
  const T* colsp = x.data().data();
  if (!pointwise) {
    detail_conv::im2col(x, kh, kw, stride, pad, ho, wo, cols);
    colsp = cols.data();
  }
  // dW[K x Cout] = cols^T * dy
  povmap::detail::gemm_tn(K, cout, rows, colsp, dyd, g.dfilters.data().data(), false);
  if (need_dx) {
    if (pointwise) {
      povmap::detail::gemm_nt(rows, K, cout, dyd, filters.data().data(), g.dx.data().data(),
                              false);
    } else {
      std::vector<T> dcols(rows * K);
      povmap::detail::gemm_nt(rows, K, cout, dyd, filters.data().data(), dcols.data(), false);
      detail_conv::col2im(dcols, x.shape(), kh, kw, stride, pad, ho, wo, g.dx.data().data());
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// max pooling

template <typename T>
struct PoolResult {
  Tensor<T> y;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// Ties resolve to the first maximum in row-major window order.
template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  require_rank4(x.shape(), "maxpool2d input");
  require(k > 0, ErrorKind::geometry, "maxpool2d: window must be positive");
  const auto& s = x.shape();
  const std::size_t N = s[0], H = s[1], W = s[2], C = s[3];
  const std::size_t ho = window_extent(H, k, stride, 0, "maxpool2d");
  const std::size_t wo = window_extent(W, k, stride, 0, "maxpool2d");
  PoolResult<T> r{Tensor<T>(Shape{N, ho, wo, C}), {}};
  r.argmax.resize(r.y.size());
  const T* xd = x.data().data();
  T* yd = r.y.data().data();
  std::size_t out = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t c = 0; c < C; ++c, ++out) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t idx = ((n * H + oy * stride + ky) * W + ox * stride + kx) * C + c;
              if (xd[idx] > best) {
                best = xd[idx];
                best_idx = idx;
              }
            }
          yd[out] = best;
          r.argmax[out] = static_cast<std::uint32_t>(best_idx);
        }
  return r;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  return maxpool2d_forward(x, k, stride).y;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape& x_shape, std::span<const std::uint32_t> argmax,
                             const Tensor<T>& dy) {
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------------------
// fully connected

/// y = unroll(x) * W^T + b with W: k x (h*w*d). Output N x k.
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(weights.shape().rank() == 2, ErrorKind::dimension,
          "fully_connected: weights must be k x D");
  const std::size_t N = x.shape()[0];
  const std::size_t D = x.shape().per_sample();
  const std::size_t k = weights.shape()[0];
  require(weights.shape()[1] == D, ErrorKind::dimension,
          "fully_connected: input unrolls to " + std::to_string(D) + " values, weights expect " +
              std::to_string(weights.shape()[1]));
  require(bias.size() == k, ErrorKind::dimension, "fully_connected: bias length must equal k");
  Tensor<T> y(Shape{N, k});
  povmap::detail::gemm_nt(N, k, D, x.data().data(), weights.data().data(), y.data().data(),
                          false);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < k; ++o) y[n * k + o] += bias[o];
  return y;
}

template <typename T>
struct LinearGrads {
  Tensor<T> dx;
  Tensor<T> dweights;
  Tensor<T> dbias;
};

template <typename T>
LinearGrads<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weights,
                                        const Tensor<T>& dy) {
  const std::size_t N = x.shape()[0];
  const std::size_t D = x.shape().per_sample();
  const std::size_t k = weights.shape()[0];
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), Tensor<T>(Shape{k})};
  povmap::detail::gemm_nn(N, D, k, dy.data().data(), weights.data().data(), g.dx.data().data(),
                          false);
  povmap::detail::gemm_tn(k, D, N, dy.data().data(), x.data().data(), g.dweights.data().data(),
                          false);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < k; ++o) g.dbias[o] += dy[n * k + o];
  return g;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

/// Subgradient 0 at exactly 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

/// Inverted-dropout keep mask: entries are 0 or 1/(1-rate).
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::invalid_argument,
          "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  std::vector<T> mask(n, T(1));
  if (rate == 0.0) return mask;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = drop(rng) ? T(0) : scale;
  return mask;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::invalid_argument,
          "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const auto mask = dropout_mask<T>(x.size(), rate, seed);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

// ---------------------------------------------------------------------------
// softmax / loss

/// Row-wise softmax of an N x C (or N x 1 x 1 x C) tensor; returns N x C.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const std::size_t N = logits.shape()[0];
  const std::size_t C = logits.shape().per_sample();
  Tensor<T> p(Shape{N, C});
  for (std::size_t n = 0; n < N; ++n) {
    T mx = logits[n * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits[n * C + c]);
    T sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
      p[n * C + c] = std::exp(logits[n * C + c] - mx);
      sum += p[n * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) p[n * C + c] /= sum;
  }
  return p;
}

template <typename T>
struct XentResult {
  T loss;           // mean negative log-likelihood
  Tensor<T> grad;   // d loss / d logits, same shape as logits
};

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t N = logits.shape()[0];
  const std::size_t C = logits.shape().per_sample();
  require(labels.size() == N, ErrorKind::dimension,
          "softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " +
              std::to_string(N));
  for (std::size_t n = 0; n < N; ++n)
    require(labels[n] >= 0 && static_cast<std::size_t>(labels[n]) < C, ErrorKind::range,
            "softmax_xent: label " + std::to_string(labels[n]) + " outside [0, " +
                std::to_string(C) + ")");
  Tensor<T> p = softmax(logits);
  XentResult<T> r{T(0), Tensor<T>(logits.shape())};
  const T inv_n = T(1) / static_cast<T>(N);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t y = static_cast<std::size_t>(labels[n]);
    // log-sum-exp form keeps the loss finite for confident wrong predictions
    T mx = logits[n * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits[n * C + c]);
    T sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(logits[n * C + c] - mx);
    r.loss += (std::log(sum) + mx - logits[n * C + y]) * inv_n;
    for (std::size_t c = 0; c < C; ++c)
      r.grad[n * C + c] = (p[n * C + c] - (c == y ? T(1) : T(0))) * inv_n;
  }
  return r;
}

// ---------------------------------------------------------------------------
// spatial averaging

/// N x H x W x C -> N x C, arithmetic mean over spatial positions.
template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  require_rank4(x.shape(), "spatial_mean");
  const auto& s = x.shape();
  const std::size_t N = s[0], P = s[1] * s[2], C = s[3];
  Tensor<T> y(Shape{N, C});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t c = 0; c < C; ++c) y[n * C + c] += x[(n * P + p) * C + c];
    for (std::size_t c = 0; c < C; ++c) y[n * C + c] /= static_cast<T>(P);
  }
  return y;
}

template <typename T>
Tensor<T> spatial_mean_backward(const Shape& x_shape, const Tensor<T>& dy) {
  const std::size_t N = x_shape[0], P = x_shape[1] * x_shape[2], C = x_shape[3];
  Tensor<T> dx(x_shape);
  const T inv = T(1) / static_cast<T>(P);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t c = 0; c < C; ++c) dx[(n * P + p) * C + c] = dy[n * C + c] * inv;
  return dx;
}

}  // namespace povmap::ops
