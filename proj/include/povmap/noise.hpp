#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "povmap/seed.hpp"

namespace povmap::noise {

inline double lattice(std::uint64_t seed, long ix, long iy) {
  return unit_hash(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x9E3779B1ULL +
                                static_cast<std::uint64_t>(iy) * 0x85EBCA77ULL));
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Bilinearly interpolated lattice noise in [0, 1).
inline double value(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

/// Fractal sum of `octaves` value-noise layers, normalized to [0, 1).
inline double fbm(std::uint64_t seed, double x, double y, double scale, int octaves) {
  double sum = 0.0, amp = 1.0, norm = 0.0, freq = 1.0 / scale;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value(mix64(seed + static_cast<std::uint64_t>(o)), x * freq, y * freq);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

/// Replaces values by their rank quantile in (0, 1); ties keep index order.
inline void rank_normalize(std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  const double n = static_cast<double>(v.size());
  for (std::size_t r = 0; r < idx.size(); ++r) v[idx[r]] = (static_cast<double>(r) + 0.5) / n;
}

}  // namespace povmap::noise
