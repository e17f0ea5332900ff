#pragma once

#include <cstdint>
#include <string_view>

namespace povmap {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stage seeds: mix64(root XOR fnv1a(label)). Every random stream in a run
/// is derived from one root seed this way.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept {
  return mix64(root ^ fnv1a(label));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  return mix64(mix64(root ^ mix64(a)) ^ b);
}

/// Uniform double in [0, 1) from a hashed key.
constexpr double unit_hash(std::uint64_t key) noexcept {
  return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

}  // namespace povmap
