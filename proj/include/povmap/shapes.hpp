#pragma once

// Object-centric pretraining task: one filled shape (disc, square or
// triangle) on a noisy textured background.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "povmap/image.hpp"
#include "povmap/noise.hpp"
#include "povmap/seed.hpp"
#include "povmap/trainer.hpp"

namespace povmap {

inline constexpr int kShapeClasses = 3;

inline std::string_view shape_name(int label) {
  static constexpr std::string_view names[] = {"disc", "square", "triangle"};
  return names[label];
}

/// Deterministic in (seed, index); the label is index % 3.
inline Image render_shape(std::uint64_t seed, std::size_t index, std::size_t side = 64) {
  const int label = static_cast<int>(index % kShapeClasses);
  const std::uint64_t s = derive_seed(seed, index, 0x5A9E);
  std::mt19937_64 rng(s);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double S = static_cast<double>(side);

  // background: two-colour value-noise texture
  Rgb a{static_cast<std::uint8_t>(40 + 150 * u01(rng)), static_cast<std::uint8_t>(40 + 150 * u01(rng)),
        static_cast<std::uint8_t>(40 + 150 * u01(rng))};
  Rgb b{static_cast<std::uint8_t>(40 + 150 * u01(rng)), static_cast<std::uint8_t>(40 + 150 * u01(rng)),
        static_cast<std::uint8_t>(40 + 150 * u01(rng))};
  const double scale = 4.0 + 12.0 * u01(rng);
  Image img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double t = noise::fbm(s, static_cast<double>(x), static_cast<double>(y), scale, 2);
      img.set(y, x, Rgb{static_cast<std::uint8_t>(a.r + (b.r - a.r) * t),
                        static_cast<std::uint8_t>(a.g + (b.g - a.g) * t),
                        static_cast<std::uint8_t>(a.b + (b.b - a.b) * t)});
    }

  // foreground object, contrasting with the background mean
  const double radius = S * (0.18 + 0.14 * u01(rng));
  const double cx = S / 2 + (u01(rng) - 0.5) * (S - 2.2 * radius);
  const double cy = S / 2 + (u01(rng) - 0.5) * (S - 2.2 * radius);
  const double angle = u01(rng) * 2.0 * std::numbers::pi;
  const double bg = (a.r + a.g + a.b + b.r + b.g + b.b) / 6.0;
  const double base = bg > 128 ? 20 + 60 * u01(rng) : 175 + 60 * u01(rng);
  const Rgb fg{static_cast<std::uint8_t>(std::clamp(base + 40 * (u01(rng) - 0.5), 0.0, 255.0)),
               static_cast<std::uint8_t>(std::clamp(base + 40 * (u01(rng) - 0.5), 0.0, 255.0)),
               static_cast<std::uint8_t>(std::clamp(base + 40 * (u01(rng) - 0.5), 0.0, 255.0))};
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double rx = (ca * dx + sa * dy) / radius, ry = (-sa * dx + ca * dy) / radius;
      bool inside = false;
      switch (label) {
        case 0: inside = rx * rx + ry * ry <= 1.0; break;
        case 1: inside = std::abs(rx) <= 0.8 && std::abs(ry) <= 0.8; break;
        default:  // equilateral triangle inscribed in the unit circle
          inside = ry >= -0.5 && ry <= 1.0 && std::abs(rx) <= (1.0 - ry) / std::sqrt(3.0);
          break;
      }
      if (inside) img.set(y, x, fg);
    }
  return img;
}

/// `count` shape images starting at `offset` (so train and validation sets
/// drawn from one seed never overlap).
inline ImageSet shapes_dataset(std::uint64_t seed, std::size_t count, std::size_t offset = 0,
                               std::size_t side = 64) {
  return {count, [=](std::size_t i) { return render_shape(seed, offset + i, side); },
          [=](std::size_t i) { return static_cast<int>((offset + i) % kShapeClasses); }};
}

}  // namespace povmap
