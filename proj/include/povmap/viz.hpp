#pragma once

// Filter interpretation: per-filter activation maps, maximally activating
// tiles, and image/heat-map montages.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <string>
#include <vector>

#include "povmap/image.hpp"
#include "povmap/network.hpp"
#include "povmap/tiles.hpp"

namespace povmap {

struct FilterActivation {
  std::size_t layer = 0;
  std::size_t filter = 0;
  double score = 0.0;  // mean of map
  std::size_t h = 0, w = 0;
  std::vector<double> map;  // post-ReLU, row-major h x w
};

namespace detail_viz {

template <typename T>
void check_filter(const Network<T>& net, std::size_t layer, std::size_t filter) {
  require(layer < net.layers().size(), ErrorKind::out_of_bounds,
          "layer " + std::to_string(layer) + " out of range");
  const auto k = net.layer(layer).kind;
  require(k == LayerKind::conv || k == LayerKind::conv_from_fc, ErrorKind::invalid_argument,
          "layer " + std::to_string(layer) + " is not convolutional");
  require(filter < net.layer(layer).out_channels, ErrorKind::out_of_bounds,
          "filter " + std::to_string(filter) + " out of range for layer " + std::to_string(layer) +
              " with " + std::to_string(net.layer(layer).out_channels) + " filters");
}

}  // namespace detail_viz

/// Activations of one filter for a batch of images (fixed-input networks
/// take centre crops).
template <typename T>
std::vector<FilterActivation> activation_maps(const Network<T>& net, std::size_t layer,
                                              std::size_t filter, const std::vector<Image>& images) {
  detail_viz::check_filter(net, layer, filter);
  std::vector<Image> fitted;
  for (const auto& img : images) fitted.push_back(net.mode() == NetMode::fully_convolutional
                                                      ? img
                                                      : center_crop(img, net.input_extent().h));
  const Tensor<T> a = net.forward(to_batch<T>(fitted), layer);
  const std::size_t N = a.shape()[0], H = a.shape()[1], W = a.shape()[2], C = a.shape()[3];
  std::vector<FilterActivation> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    FilterActivation& f = out[n];
    f.layer = layer;
    f.filter = filter;
    f.h = H;
    f.w = W;
    f.map.resize(H * W);
    double s = 0.0;
    for (std::size_t i = 0; i < H * W; ++i) {
      f.map[i] = std::max(0.0, static_cast<double>(a[(n * H * W + i) * C + filter]));
      s += f.map[i];
    }
    f.score = s / static_cast<double>(H * W);
  }
  return out;
}

template <typename T>
FilterActivation activation_score(const Network<T>& net, std::size_t layer, std::size_t filter,
                                  const Image& image) {
  return activation_maps(net, layer, filter, {image}).front();
}

struct RankedTile {
  std::string id;
  std::size_t index = 0;  // record index in the dataset
  double score = 0.0;
};

/// Descending score, ties by tile id. `subset` lists record indices to
/// consider (all records when empty).
template <typename T>
std::vector<RankedTile> top_activating(const Network<T>& net, std::size_t layer, std::size_t filter,
                                       const TileDataset& data, std::size_t n,
                                       std::vector<std::size_t> subset = {}, std::size_t batch = 64) {
  detail_viz::check_filter(net, layer, filter);
  if (subset.empty())
    for (std::size_t i = 0; i < data.size(); ++i) subset.push_back(i);
  std::vector<RankedTile> all;
  for (std::size_t start = 0; start < subset.size(); start += batch) {
    std::vector<Image> imgs;
    const std::size_t end = std::min(subset.size(), start + batch);
    for (std::size_t i = start; i < end; ++i) imgs.push_back(data.image(subset[i]));
    const auto acts = activation_maps(net, layer, filter, imgs);
    for (std::size_t i = start; i < end; ++i)
      all.push_back({data[subset[i]].id, subset[i], acts[i - start].score});
  }
  std::sort(all.begin(), all.end(), [](const RankedTile& a, const RankedTile& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (all.size() > n) all.resize(n);
  return all;
}

/// Every filter of `layer` scored on the same images in one pass per batch:
/// scores[f][i] for filter f and image i.
template <typename T>
std::vector<std::vector<double>> layer_scores(const Network<T>& net, std::size_t layer,
                                              const TileDataset& data,
                                              const std::vector<std::size_t>& subset,
                                              std::size_t batch = 64) {
  detail_viz::check_filter(net, layer, 0);
  const std::size_t F = net.layer(layer).out_channels;
  std::vector<std::vector<double>> scores(F, std::vector<double>(subset.size()));
  for (std::size_t start = 0; start < subset.size(); start += batch) {
    std::vector<Image> imgs;
    const std::size_t end = std::min(subset.size(), start + batch);
    for (std::size_t i = start; i < end; ++i) {
      const Image img = data.image(subset[i]);
      imgs.push_back(net.mode() == NetMode::fully_convolutional ? img
                                                                : center_crop(img, net.input_extent().h));
    }
    const Tensor<T> a = net.forward(to_batch<T>(imgs), layer);
    const std::size_t H = a.shape()[1], W = a.shape()[2], C = a.shape()[3];
    for (std::size_t i = start; i < end; ++i)
      for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::size_t p = 0; p < H * W; ++p)
          s += std::max(0.0, static_cast<double>(a[((i - start) * H * W + p) * C + f]));
        scores[f][i] = s / static_cast<double>(H * W);
      }
  }
  return scores;
}

/// Ranks `scores` (aligned with `subset`) the same way top_activating does.
inline std::vector<RankedTile> rank_scores(const TileDataset& data, const std::vector<std::size_t>& subset,
                                           const std::vector<double>& scores, std::size_t n) {
  std::vector<RankedTile> all;
  for (std::size_t i = 0; i < subset.size(); ++i) all.push_back({data[subset[i]].id, subset[i], scores[i]});
  std::sort(all.begin(), all.end(), [](const RankedTile& a, const RankedTile& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (all.size() > n) all.resize(n);
  return all;
}

struct Purity {
  Terrain terrain = Terrain::water;
  double share = 0.0;
};

/// Share of the most common terrain among ranked world tiles.
inline Purity terrain_purity(const TileDataset& data, const std::vector<RankedTile>& ranked) {
  require(data.world() != nullptr, ErrorKind::missing_input, "terrain purity needs world tiles");
  require(!ranked.empty(), ErrorKind::insufficient_data, "terrain purity of an empty set");
  std::map<Terrain, std::size_t> counts;
  for (const auto& r : ranked) {
    const Cell c = data[r.index].cell;
    ++counts[data.world()->terrain_at(c.x, c.y)];
  }
  Purity p;
  std::size_t best = 0;
  for (auto [t, n] : counts)
    if (n > best) {
      best = n;
      p.terrain = t;
    }
  p.share = static_cast<double>(best) / static_cast<double>(ranked.size());
  return p;
}

// ---------------------------------------------------------------------------
// Montage

/// Black -> red -> yellow -> white.
inline Rgb heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const double r = std::clamp(3.0 * v, 0.0, 1.0), g = std::clamp(3.0 * v - 1.0, 0.0, 1.0),
               b = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
  return Rgb{static_cast<std::uint8_t>(std::lround(255 * r)), static_cast<std::uint8_t>(std::lround(255 * g)),
             static_cast<std::uint8_t>(std::lround(255 * b))};
}

/// Min-max normalized copy; a map with no range becomes all zeros.
inline std::vector<double> normalize_map(const std::vector<double>& m) {
  if (m.empty()) return m;
  const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
  std::vector<double> out(m.size(), 0.0);
  if (*hi > *lo)
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = (m[i] - *lo) / (*hi - *lo);
  return out;
}

inline constexpr std::size_t kMontagePairsPerRow = 5;

/// Image / heat-map pairs, five pairs per row: n images give a
/// ceil(n/5) x 2*min(n,5) grid of cells. Maps are upsampled nearest-neighbour.
inline Image render_montage(const std::vector<Image>& images, const std::vector<FilterActivation>& maps) {
  require(images.size() == maps.size(), ErrorKind::dimension,
          std::to_string(images.size()) + " images but " + std::to_string(maps.size()) + " maps");
  require(!images.empty(), ErrorKind::insufficient_data, "montage of no images");
  const std::size_t S = images[0].height();
  for (const auto& img : images)
    require(img.height() == S && img.width() == S, ErrorKind::dimension, "montage images must share one square size");
  const std::size_t n = images.size();
  const std::size_t pairs = std::min(n, kMontagePairsPerRow);
  const std::size_t grid_rows = (n + kMontagePairsPerRow - 1) / kMontagePairsPerRow;
  Image out(grid_rows * S, 2 * pairs * S);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t gy = k / kMontagePairsPerRow, gx = 2 * (k % kMontagePairsPerRow);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) out.set(gy * S + y, gx * S + x, images[k].get(y, x));
    const auto& m = maps[k];
    const auto norm = normalize_map(m.map);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const double v = m.h && m.w ? norm[(y * m.h / S) * m.w + x * m.w / S] : 0.0;
        out.set(gy * S + y, (gx + 1) * S + x, heat_color(v));
      }
  }
  return out;
}

inline void export_montage(const std::vector<Image>& images, const std::vector<FilterActivation>& maps,
                           const std::string& path) {
  write_png(render_montage(images, maps), path);
}

inline void write_scores_csv(const std::vector<RankedTile>& ranked, std::size_t layer, std::size_t filter,
                             const std::string& path, bool append = false) {
  const bool header = !append || !std::filesystem::exists(path);
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17);
  if (header) os << "tile_id,layer,filter,score\n";
  for (const auto& r : ranked) os << r.id << ',' << layer << ',' << filter << ',' << r.score << '\n';
}

}  // namespace povmap
