#pragma once

// 8-bit RGB images, PNG I/O, and conversion to network input tensors.

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "povmap/tensor.hpp"

namespace povmap {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, Rgb fill = {})
      : h_(height), w_(width), px_(height * width * 3) {
    for (std::size_t i = 0; i < h_ * w_; ++i) set(i / w_, i % w_, fill);
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  bool empty() const noexcept { return px_.empty(); }
  std::span<const std::uint8_t> bytes() const noexcept { return px_; }
  std::span<std::uint8_t> bytes() noexcept { return px_; }

  Rgb get(std::size_t y, std::size_t x) const {
    const std::size_t o = (y * w_ + x) * 3;
    return {px_[o], px_[o + 1], px_[o + 2]};
  }
  void set(std::size_t y, std::size_t x, Rgb c) {
    const std::size_t o = (y * w_ + x) * 3;
    px_[o] = c.r;
    px_[o + 1] = c.g;
    px_[o + 2] = c.b;
  }
  std::uint8_t channel(std::size_t y, std::size_t x, std::size_t c) const {
    return px_[(y * w_ + x) * 3 + c];
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t h_ = 0, w_ = 0;
  std::vector<std::uint8_t> px_;
};

/// Fixed input normalization: (v - 127.5) / 64.
template <typename T>
void write_normalized(const Image& img, T* dst) {
  const auto b = img.bytes();
  for (std::size_t i = 0; i < b.size(); ++i)
    dst[i] = (static_cast<T>(b[i]) - T(127.5)) / T(64);
}

template <typename T>
Tensor<T> to_tensor(const Image& img) {
  Tensor<T> t(Shape{1, img.height(), img.width(), 3});
  write_normalized(img, t.data().data());
  return t;
}

/// Packs equally sized images into one N x H x W x 3 batch.
template <typename T>
Tensor<T> to_batch(const std::vector<Image>& imgs) {
  require(!imgs.empty(), ErrorKind::dimension, "empty image batch");
  const std::size_t h = imgs[0].height(), w = imgs[0].width();
  Tensor<T> t(Shape{imgs.size(), h, w, 3});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    require(imgs[n].height() == h && imgs[n].width() == w, ErrorKind::dimension,
            "images in a batch must share a size");
    write_normalized(imgs[n], t.data().data() + n * h * w * 3);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Augmentation

inline Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t size) {
  require(y0 + size <= img.height() && x0 + size <= img.width(), ErrorKind::out_of_bounds,
          "crop window exceeds image");
  Image out(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) out.set(y, x, img.get(y0 + y, x0 + x));
  return out;
}

/// Square crop with offset uniform over all valid positions.
inline Image random_crop(const Image& img, std::size_t out_size, std::uint64_t seed) {
  require(out_size > 0 && out_size <= img.height() && out_size <= img.width(),
          ErrorKind::invalid_argument,
          "crop size " + std::to_string(out_size) + " exceeds image " +
              std::to_string(img.height()) + "x" + std::to_string(img.width()));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dy(0, img.height() - out_size);
  std::uniform_int_distribution<std::size_t> dx(0, img.width() - out_size);
  const std::size_t y0 = dy(rng);
  const std::size_t x0 = dx(rng);
  return crop(img, y0, x0, out_size);
}

inline Image center_crop(const Image& img, std::size_t out_size) {
  require(out_size <= img.height() && out_size <= img.width(), ErrorKind::invalid_argument,
          "crop size exceeds image");
  return crop(img, (img.height() - out_size) / 2, (img.width() - out_size) / 2, out_size);
}

inline Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) out.set(y, x, img.get(y, img.width() - 1 - x));
  return out;
}

/// The flip decision for a seed; mirror() flips iff this is true.
inline bool mirror_decision(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return std::bernoulli_distribution(0.5)(rng);
}

/// Horizontal flip with probability 1/2.
inline Image mirror(const Image& img, std::uint64_t seed) {
  return mirror_decision(seed) ? flip_horizontal(img) : img;
}

// ---------------------------------------------------------------------------
// PNG

inline void write_png(const Image& img, const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorKind::io, "cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io, "PNG encoding failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto bytes = img.bytes();
  for (std::size_t y = 0; y < img.height(); ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * img.width() * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Decodes any PNG to 8-bit RGB (alpha dropped, gray expanded, 16-bit stripped).
inline Image read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  require(fp != nullptr, ErrorKind::missing_input, "cannot open image: " + path);
  unsigned char sig[8];
  require(std::fread(sig, 1, 8, fp.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0,
          ErrorKind::malformed_input, "not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::io, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::malformed_input, "PNG decoding failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  Image img(h, w);
  auto bytes = img.bytes();
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = bytes.data() + y * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace povmap
