#pragma once

// Run configuration: plain `key = value` files with `#` comments.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/csv.hpp"
#include "povmap/error.hpp"

namespace povmap {

struct ChainConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  std::size_t world_side = 256;
  std::size_t tile_px = 96;
  std::size_t feature_dim = 256;

  // P1: shape pretraining
  std::size_t p1_train_images = 2000;
  std::size_t p1_val_images = 400;
  std::size_t p1_iterations = 3000;
  double p1_learning_rate = 0.01;
  std::size_t p1_decay_every = 2000;
  std::size_t p1_batch = 32;
  std::size_t p1_eval_every = 250;

  // P2: lights fine-tuning
  std::size_t p2_tiles = 20000;
  double p2_val_fraction = 0.05;
  std::size_t p2_classes = 3;  // 3 = GMM bins, 64 = raw intensities
  std::size_t p2_iterations = 3000;
  double p2_learning_rate = 0.005;
  std::size_t p2_decay_every = 2000;
  std::size_t p2_batch = 32;
  std::size_t p2_eval_every = 250;
  bool p2_convert_first = true;
  bool p2_crop_baseline = true;
  std::vector<std::size_t> p2_freeze;

  // P3: poverty
  std::size_t p3_groups = 200;
  std::size_t p3_outer_folds = 10;
  std::size_t p3_coarse = 20;
  std::size_t p3_fine = 20;
  bool p3_hog = true;

  // Map
  std::size_t map_block = 10;
  double map_radius = 55.0;  // world cells
  std::size_t map_regions = 4;

  // Filter visualization
  std::size_t viz_top = 25;
  long viz_layer = -1;  // -1: last conv layer

  // Transfer speedup
  std::size_t speedup_seeds = 5;
  std::size_t speedup_iterations = 600;
  std::size_t speedup_eval_every = 25;
  std::size_t speedup_max_eval = 0;  // 0 = whole validation split
  double speedup_threshold = 0.75;
};

namespace detail_config {

template <typename N>
N parse_value(const std::string& v, const std::string& where) {
  N out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size(), ErrorKind::config,
          where + ": cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::config, where + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(ChainConfig&, const std::string&, const std::string&)>;

template <typename N>
Setter num(N ChainConfig::*field) {
  return [field](ChainConfig& c, const std::string& v, const std::string& where) {
    c.*field = parse_value<N>(v, where);
  };
}

inline Setter flag(bool ChainConfig::*field) {
  return [field](ChainConfig& c, const std::string& v, const std::string& where) {
    c.*field = parse_bool(v, where);
  };
}

}  // namespace detail_config

struct ConfigKey {
  std::string name;
  std::string help;
  detail_config::Setter set;
  std::function<std::string(const ChainConfig&)> get;
};

namespace detail_config {

template <typename N>
std::function<std::string(const ChainConfig&)> show(N ChainConfig::*field) {
  return [field](const ChainConfig& c) {
    std::ostringstream os;
    os << std::boolalpha << c.*field;
    return os.str();
  };
}

}  // namespace detail_config

/// Every accepted key, in documentation order.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail_config;
  using C = ChainConfig;
#define POVMAP_KEY(name, field, kind, help) \
  ConfigKey { name, help, kind(&C::field), show(&C::field) }
  static const std::vector<ConfigKey> keys = {
      POVMAP_KEY("seed", seed, num, "root seed; stage seeds are derived from it"),
      POVMAP_KEY("threads", threads, num, "worker threads for feature extraction and map scans"),
      POVMAP_KEY("world.side", world_side, num, "side of the synthetic world in cells"),
      POVMAP_KEY("tile_px", tile_px, num, "tile size in pixels"),
      POVMAP_KEY("model.feature_dim", feature_dim, num, "width of the hidden fully connected layers"),
      POVMAP_KEY("p1.train_images", p1_train_images, num, "shape images for pretraining"),
      POVMAP_KEY("p1.val_images", p1_val_images, num, "held-out shape images"),
      POVMAP_KEY("p1.iterations", p1_iterations, num, "SGD iterations"),
      POVMAP_KEY("p1.learning_rate", p1_learning_rate, num, "initial learning rate"),
      POVMAP_KEY("p1.decay_every", p1_decay_every, num, "iterations between 10x learning-rate drops (0 = never)"),
      POVMAP_KEY("p1.batch", p1_batch, num, "minibatch size"),
      POVMAP_KEY("p1.eval_every", p1_eval_every, num, "iterations between validation passes"),
      POVMAP_KEY("p2.tiles", p2_tiles, num, "lights tiles sampled from the world"),
      POVMAP_KEY("p2.val_fraction", p2_val_fraction, num, "validation share of the lights tiles"),
      POVMAP_KEY("p2.classes", p2_classes, num, "3 for GMM bins, 64 for raw intensities"),
      POVMAP_KEY("p2.iterations", p2_iterations, num, "SGD iterations"),
      POVMAP_KEY("p2.learning_rate", p2_learning_rate, num, "initial learning rate"),
      POVMAP_KEY("p2.decay_every", p2_decay_every, num, "iterations between 10x learning-rate drops (0 = never)"),
      POVMAP_KEY("p2.batch", p2_batch, num, "minibatch size"),
      POVMAP_KEY("p2.eval_every", p2_eval_every, num, "iterations between validation passes"),
      POVMAP_KEY("p2.convert_first", p2_convert_first, flag, "convert to fully convolutional before fine-tuning"),
      POVMAP_KEY("p2.crop_baseline", p2_crop_baseline, flag, "also fine-tune the fixed-input random-crop model"),
      ConfigKey{"p2.freeze", "comma-separated layer indices kept fixed during fine-tuning",
                [](C& c, const std::string& v, const std::string& where) {
                  c.p2_freeze.clear();
                  std::string item;
                  std::istringstream is(v);
                  while (std::getline(is, item, ','))
                    if (!std::string(trim(item)).empty())
                      c.p2_freeze.push_back(parse_value<std::size_t>(std::string(trim(item)), where));
                },
                [](const C& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.p2_freeze.size(); ++i)
                    s += (i ? "," : "") + std::to_string(c.p2_freeze[i]);
                  return s;
                }},
      POVMAP_KEY("p3.groups", p3_groups, num, "household groups surveyed"),
      POVMAP_KEY("p3.outer_folds", p3_outer_folds, num, "outer cross-validation folds"),
      POVMAP_KEY("p3.coarse", p3_coarse, num, "coarse lambda grid size"),
      POVMAP_KEY("p3.fine", p3_fine, num, "fine lambda grid size"),
      POVMAP_KEY("p3.hog", p3_hog, flag, "include the HOG + color histogram baseline"),
      POVMAP_KEY("map.block", map_block, num, "world cells per map block side"),
      POVMAP_KEY("map.radius", map_radius, num, "smoothing radius in world cells (0 = none)"),
      POVMAP_KEY("map.regions", map_regions, num, "districts per side for aggregation"),
      POVMAP_KEY("viz.top", viz_top, num, "maximally activating tiles per filter"),
      POVMAP_KEY("viz.layer", viz_layer, num, "layer to inspect (-1 = last conv layer)"),
      POVMAP_KEY("speedup.seeds", speedup_seeds, num, "paired seeds for the pretrained vs scratch comparison (0 = skip)"),
      POVMAP_KEY("speedup.iterations", speedup_iterations, num, "iteration cap per speedup run"),
      POVMAP_KEY("speedup.eval_every", speedup_eval_every, num, "iterations between validation passes"),
      POVMAP_KEY("speedup.max_eval", speedup_max_eval, num, "validation tiles per pass (0 = all)"),
      POVMAP_KEY("speedup.threshold", speedup_threshold, num, "validation accuracy to reach"),
  };
#undef POVMAP_KEY
  return keys;
}

/// Applies one key. `where` prefixes error messages.
inline void set_config_value(ChainConfig& c, const std::string& key, const std::string& value,
                             const std::string& where) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(c, value, where);
      return;
    }
  fail(ErrorKind::config, where + ": unknown key '" + key + "'");
}

/// Parses `key = value` lines onto `c`. All errors found are reported
/// together, each with its line number.
inline void parse_config(ChainConfig& c, std::istream& is, const std::string& source) {
  std::vector<std::string> errors;
  std::string line;
  for (std::size_t n = 1; std::getline(is, line); ++n) {
    const auto hash = line.find('#');
    const std::string body(trim(std::string_view(line).substr(0, hash)));
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(n);
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key(trim(std::string_view(body).substr(0, eq)));
    const std::string value(trim(std::string_view(body).substr(eq + 1)));
    try {
      set_config_value(c, key, value, where);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  if (errors.empty()) return;
  std::string msg = errors[0];
  for (std::size_t i = 1; i < errors.size(); ++i) msg += "; " + errors[i];
  fail(ErrorKind::config, msg);
}

inline ChainConfig load_config(const std::string& path, ChainConfig base = {}) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::missing_input, "missing config file: " + path);
  parse_config(base, is, path);
  return base;
}

inline void write_config(const ChainConfig& c, std::ostream& os) {
  for (const auto& k : config_keys()) os << k.name << " = " << k.get(c) << '\n';
}

}  // namespace povmap
