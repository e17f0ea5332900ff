#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/error.hpp"

namespace povmap {

/// Rank 1..4 extents. Rank-4 tensors are laid out N x H x W x C, row-major,
/// channel-last. This is the single unroll order used everywhere.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) {
    require(dims.size() >= 1 && dims.size() <= 4, ErrorKind::dimension,
            "tensor rank must be between 1 and 4");
    rank_ = dims.size();
    std::copy(dims.begin(), dims.end(), dims_.begin());
    for (std::size_t i = 0; i < rank_; ++i)
      require(dims_[i] > 0, ErrorKind::dimension, "tensor extents must be positive");
  }

  static Shape from(std::span<const std::size_t> dims) {
    require(dims.size() >= 1 && dims.size() <= 4, ErrorKind::dimension,
            "tensor rank must be between 1 and 4");
    Shape s;
    s.rank_ = dims.size();
    std::copy(dims.begin(), dims.end(), s.dims_.begin());
    for (std::size_t i = 0; i < s.rank_; ++i)
      require(s.dims_[i] > 0, ErrorKind::dimension, "tensor extents must be positive");
    return s;
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  std::size_t numel() const noexcept {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  /// Product of all extents except the leading (batch) one.
  std::size_t per_sample() const noexcept {
    std::size_t n = 1;
    for (std::size_t i = 1; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  bool operator==(const Shape& o) const noexcept {
    if (rank_ != o.rank_) return false;
    for (std::size_t i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const noexcept { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  std::array<std::size_t, 4> dims_{};
  std::size_t rank_ = 0;
};

/// Dense real array with an optional gradient slot of identical shape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == shape_.numel(), ErrorKind::dimension,
            "data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_.str());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 accessors (n, y, x, c).
  std::size_t offset(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return ((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c;
  }
  T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) {
    return data_[offset(n, y, x, c)];
  }
  const T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return data_[offset(n, y, x, c)];
  }

  bool has_grad() const noexcept { return !grad_.empty(); }
  void ensure_grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }
  void drop_grad() { grad_.clear(); }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }

  Tensor reshaped(Shape shape) const {
    require(shape.numel() == data_.size(), ErrorKind::dimension,
            "cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  require(t.all_finite(), ErrorKind::numeric, std::string(what) + " produced a non-finite value");
}

}  // namespace povmap
