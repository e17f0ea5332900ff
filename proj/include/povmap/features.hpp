#pragma once

// Household groups and group-level feature blocks: CNN transfer features,
// nighttime-light statistics, survey attributes, and a HOG + colour
// histogram baseline.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/csv.hpp"
#include "povmap/network.hpp"
#include "povmap/parallel.hpp"
#include "povmap/world.hpp"

namespace povmap {

// ---------------------------------------------------------------------------
// Groups

struct Household {
  std::string id;
  Cell cell;  // true location
  bool poor = false;
  std::string roof;        // thatch | metal | tile
  double rooms = 0.0;
  std::string house_type;  // hut | brick | concrete
  double dist_road = 0.0;
  double dist_market = 0.0;
  int urban = 0;
  double temp = 0.0;
  double precip = 0.0;
};

struct HouseholdGroup {
  std::string id;
  double center_x = 0.0;  // published (jittered) centre, cell units
  double center_y = 0.0;
  std::vector<Household> households;

  /// Majority of household flags; an even split counts as poor.
  int label() const {
    require(!households.empty(), ErrorKind::insufficient_data, "group " + id + " has no households");
    std::size_t poor = 0;
    for (const auto& h : households) poor += h.poor;
    return 2 * poor >= households.size() ? 1 : 0;
  }
};

inline std::string group_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "g" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

struct GroupOptions {
  std::size_t min_households = 5;
  std::size_t max_households = 12;
  double jitter = 5.0;        // maximum published-centre offset per axis, cells
  double spread = 1.5;        // household scatter around the true centre, cells
  double poverty_contrast = 1.0;  // sharpens household poverty probabilities around 0.5
};

/// Synthetic survey: group locations favour settled land near survey sites;
/// each household is poor with probability given by the poverty latent at
/// its cell, and its survey attributes are drawn conditional on that flag.
inline std::vector<HouseholdGroup> generate_groups(const World& w, std::size_t n,
                                                   std::uint64_t seed,
                                                   const GroupOptions& opt = {}) {
  require(n >= 1, ErrorKind::invalid_argument, "need at least one group");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> ucell(0, static_cast<int>(w.side) - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int last = static_cast<int>(w.side) - 1;
  std::vector<HouseholdGroup> out;
  while (out.size() < n) {
    Cell c;
    if (!w.survey_sites.empty() && u01(rng) < 0.5) {
      std::uniform_int_distribution<std::size_t> us(0, w.survey_sites.size() - 1);
      const Cell s = w.survey_sites[us(rng)];
      c = {std::clamp(static_cast<int>(std::lround(s.x + 12 * gauss(rng))), 0, last),
           std::clamp(static_cast<int>(std::lround(s.y + 12 * gauss(rng))), 0, last)};
    } else {
      c = {ucell(rng), ucell(rng)};
    }
    if (w.terrain_at(c.x, c.y) == Terrain::water) continue;
    HouseholdGroup g;
    g.id = group_id(out.size());
    std::uniform_int_distribution<std::size_t> nh(opt.min_households, opt.max_households);
    const std::size_t count = nh(rng);
    double sx = 0.0, sy = 0.0;
    while (g.households.size() < count) {
      Cell hc{std::clamp(static_cast<int>(std::lround(c.x + opt.spread * gauss(rng))), 0, last),
              std::clamp(static_cast<int>(std::lround(c.y + opt.spread * gauss(rng))), 0, last)};
      if (w.terrain_at(hc.x, hc.y) == Terrain::water) hc = c;
      const std::size_t i = w.index(hc.x, hc.y);
      Household h;
      h.id = g.id + "-h" + std::to_string(g.households.size());
      h.cell = hc;
      const double p = std::clamp(0.5 + opt.poverty_contrast * (w.poverty[i] - 0.5), 0.0, 1.0);
      h.poor = u01(rng) < p;
      const double r = u01(rng);
      if (h.poor) h.roof = r < 0.7 ? "thatch" : (r < 0.95 ? "metal" : "tile");
      else h.roof = r < 0.2 ? "thatch" : (r < 0.8 ? "metal" : "tile");
      std::poisson_distribution<int> extra(h.poor ? 0.8 : 1.8);
      h.rooms = 1.0 + extra(rng) + (h.poor ? 0.0 : 1.0);
      const double t = u01(rng);
      if (h.poor) h.house_type = t < 0.6 ? "hut" : (t < 0.9 ? "brick" : "concrete");
      else h.house_type = t < 0.15 ? "hut" : (t < 0.55 ? "brick" : "concrete");
      h.dist_road = std::max(0.0, w.road_distance[i] + 0.5 * gauss(rng));
      h.dist_market = std::max(0.0, w.market_distance[i] + 0.5 * gauss(rng));
      h.urban = w.terrain[i] == Terrain::urban || w.development[i] > 0.7 ? 1 : 0;
      h.temp = w.temperature[i] + 0.3 * gauss(rng);
      h.precip = w.precipitation[i] + 20.0 * gauss(rng);
      sx += hc.x;
      sy += hc.y;
      g.households.push_back(std::move(h));
    }
    std::uniform_real_distribution<double> jit(-opt.jitter, opt.jitter);
    g.center_x = std::clamp(sx / count + jit(rng), 0.0, static_cast<double>(last));
    g.center_y = std::clamp(sy / count + jit(rng), 0.0, static_cast<double>(last));
    out.push_back(std::move(g));
  }
  return out;
}

/// The block_cells x block_cells cells centred on (cx, cy), clipped to the
/// world (fewer tiles at edges).
inline std::vector<Cell> area_cells(const World& w, double cx, double cy, int block_cells = 10) {
  require(cx >= 0.0 && cy >= 0.0 && cx < static_cast<double>(w.side) &&
              cy < static_cast<double>(w.side),
          ErrorKind::out_of_bounds, "group centre outside the world");
  const int x0 = static_cast<int>(std::floor(cx + 0.5)) - block_cells / 2;
  const int y0 = static_cast<int>(std::floor(cy + 0.5)) - block_cells / 2;
  std::vector<Cell> out;
  for (int y = y0; y < y0 + block_cells; ++y)
    for (int x = x0; x < x0 + block_cells; ++x)
      if (w.in_bounds(x, y)) out.push_back({x, y});
  return out;
}

inline std::vector<Cell> group_tiles(const World& w, const HouseholdGroup& g) {
  return area_cells(w, g.center_x, g.center_y, 10);
}

// ---------------------------------------------------------------------------
// Nighttime-light statistics

inline constexpr std::array<int, 9> kLightEdges{0, 1, 4, 8, 16, 24, 32, 48, 64};
inline constexpr std::size_t kLightFeatureDim = 13;

inline std::vector<std::string> lights_feature_names() {
  std::vector<std::string> n{"mean", "max", "min", "std", "median"};
  for (std::size_t b = 0; b + 1 < kLightEdges.size(); ++b)
    n.push_back("hist_" + std::to_string(kLightEdges[b]) + "_" + std::to_string(kLightEdges[b + 1]));
  return n;
}

/// [mean, max, min, std (population), median] + counts in the bins
/// [0,1) [1,4) [4,8) [8,16) [16,24) [24,32) [32,48) [48,64).
inline std::vector<double> lights_stats(std::span<const int> values) {
  require(!values.empty(), ErrorKind::insufficient_data, "lights features of an empty area");
  std::vector<double> v(values.begin(), values.end());
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  const double median = m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  std::vector<double> out{mean, v.back(), v.front(), std::sqrt(ss / n), median};
  for (std::size_t b = 0; b + 1 < kLightEdges.size(); ++b) {
    double c = 0.0;
    for (double x : v) c += x >= kLightEdges[b] && x < kLightEdges[b + 1];
    out.push_back(c);
  }
  return out;
}

inline std::vector<double> lights_features(const World& w, const std::vector<Cell>& cells) {
  std::vector<int> vals;
  for (const Cell& c : cells) vals.push_back(w.intensity_at(c.x, c.y));
  return lights_stats(vals);
}

// ---------------------------------------------------------------------------
// HOG + colour histogram baseline

inline constexpr std::size_t kHogDim = 9 * 16 + 24;

/// 9 unsigned orientation bins over a 4x4 cell grid (L2-normalized as one
/// vector) followed by 8-bin histograms of R, G and B (fractions).
inline std::vector<double> hog_color_features(const Image& img) {
  const std::size_t H = img.height(), W = img.width();
  std::vector<double> gray(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const Rgb p = img.get(y, x);
      gray[y * W + x] = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
    }
  std::vector<double> out(kHogDim, 0.0);
  for (std::size_t y = 1; y + 1 < H; ++y)
    for (std::size_t x = 1; x + 1 < W; ++x) {
      const double gx = gray[y * W + x + 1] - gray[y * W + x - 1];
      const double gy = gray[(y + 1) * W + x] - gray[(y - 1) * W + x];
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += std::numbers::pi;
      const std::size_t bin = std::min<std::size_t>(8, static_cast<std::size_t>(ang / std::numbers::pi * 9));
      const std::size_t cy = std::min<std::size_t>(3, y * 4 / H), cx = std::min<std::size_t>(3, x * 4 / W);
      out[(cy * 4 + cx) * 9 + bin] += mag;
    }
  double norm = 0.0;
  for (std::size_t i = 0; i < 144; ++i) norm += out[i] * out[i];
  norm = std::sqrt(norm) + 1e-12;
  for (std::size_t i = 0; i < 144; ++i) out[i] /= norm;
  const double inv = 1.0 / static_cast<double>(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) out[144 + c * 8 + img.channel(y, x, c) / 32] += inv;
  return out;
}

// ---------------------------------------------------------------------------
// CNN transfer features

/// Mean of per-image feature vectors. Images are batched; the result does not
/// depend on their order beyond floating-point summation order, which is fixed
/// by sorting contributions per coordinate.
template <typename T>
std::vector<double> mean_features(const Network<T>& net, const std::vector<Image>& images,
                                  std::size_t batch = 50) {
  require(!images.empty(), ErrorKind::insufficient_data, "transfer features of an empty tile list");
  std::vector<std::vector<double>> per_image;
  for (std::size_t start = 0; start < images.size(); start += batch) {
    std::vector<Image> chunk(images.begin() + static_cast<long>(start),
                             images.begin() + static_cast<long>(std::min(images.size(), start + batch)));
    const Tensor<T> f = extract_features(net, to_batch<T>(chunk));
    const std::size_t F = f.shape()[1];
    for (std::size_t r = 0; r < chunk.size(); ++r)
      per_image.emplace_back(f.data().begin() + static_cast<long>(r * F),
                             f.data().begin() + static_cast<long>((r + 1) * F));
  }
  const std::size_t F = per_image[0].size();
  std::vector<double> mean(F, 0.0);
  std::vector<double> col(per_image.size());
  for (std::size_t k = 0; k < F; ++k) {
    for (std::size_t i = 0; i < per_image.size(); ++i) col[i] = per_image[i][k];
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (double v : col) s += v;
    mean[k] = s / static_cast<double>(col.size());
  }
  return mean;
}

template <typename T>
std::vector<double> transfer_features(const Network<T>& net, const World& w,
                                      const std::vector<Cell>& cells, std::size_t tile_px = 96) {
  std::vector<Image> imgs;
  imgs.reserve(cells.size());
  for (const Cell& c : cells) imgs.push_back(render_tile(w, c.x, c.y, tile_px));
  return mean_features(net, imgs);
}

// ---------------------------------------------------------------------------
// Feature table

struct FeatureBlock {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // one per group, in table row order

  std::size_t width() const { return columns.size(); }
};

struct FeatureTable {
  std::vector<std::string> row_ids;
  std::vector<int> labels;
  std::vector<double> mean_intensity;  // per group, for the zero-light analysis
  std::map<std::string, FeatureBlock> blocks;

  std::size_t rows() const { return row_ids.size(); }

  void add_block(const std::string& name, FeatureBlock b) {
    require(!blocks.count(name), ErrorKind::uniqueness, "duplicate feature block '" + name + "'");
    require(b.rows.size() == rows(), ErrorKind::dimension,
            "block '" + name + "' has " + std::to_string(b.rows.size()) + " rows, table has " +
                std::to_string(rows()));
    for (const auto& r : b.rows) {
      require(r.size() == b.width(), ErrorKind::dimension, "block '" + name + "' row width mismatch");
      for (double v : r)
        require(std::isfinite(v), ErrorKind::numeric, "block '" + name + "' has a missing value");
    }
    blocks.emplace(name, std::move(b));
  }

  const FeatureBlock& block(const std::string& name) const {
    auto it = blocks.find(name);
    require(it != blocks.end(), ErrorKind::invalid_argument, "unknown feature block '" + name + "'");
    return it->second;
  }
};

/// Row-major design matrix with the named blocks side by side.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
  std::vector<std::string> names;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

/// Raw (unstandardized) concatenation; standardization happens inside each
/// training fold.
inline Matrix concat_blocks(const FeatureTable& t, const std::vector<std::string>& names) {
  require(!names.empty(), ErrorKind::invalid_argument, "no feature blocks requested");
  Matrix m;
  m.rows = t.rows();
  for (const auto& n : names) {
    const auto& b = t.block(n);
    m.cols += b.width();
    for (const auto& c : b.columns) m.names.push_back(n + "." + c);
  }
  m.data.resize(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::size_t c0 = 0;
    for (const auto& n : names) {
      const auto& b = t.block(n);
      std::copy(b.rows[r].begin(), b.rows[r].end(), m.data.begin() + static_cast<long>(r * m.cols + c0));
      c0 += b.width();
    }
  }
  return m;
}

/// CSV with columns group_id,label,<block>.<column>... for every block.
inline void write_feature_table(const FeatureTable& t, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17);
  os << "group_id,label";
  for (const auto& [name, b] : t.blocks)
    for (const auto& c : b.columns) os << ',' << name << '.' << c;
  os << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    os << t.row_ids[r] << ',' << t.labels[r];
    for (const auto& [name, b] : t.blocks)
      for (double v : b.rows[r]) os << ',' << v;
    os << '\n';
  }
}

/// Inverse of write_feature_table. Labels of -1 mean unlabeled.
inline FeatureTable read_feature_table(const std::string& path) {
  const CsvTable csv = read_csv(path);
  require(csv.header.size() >= 2 && csv.header[0] == "group_id" && csv.header[1] == "label",
          ErrorKind::malformed_input, path + ": expected group_id,label,<block>.<column>...");
  std::vector<std::pair<std::string, std::string>> cols;  // (block, column)
  for (std::size_t j = 2; j < csv.header.size(); ++j) {
    const auto dot = csv.header[j].find('.');
    require(dot != std::string::npos && dot > 0, ErrorKind::malformed_input,
            path + ": column '" + csv.header[j] + "' is not <block>.<column>");
    cols.emplace_back(csv.header[j].substr(0, dot), csv.header[j].substr(dot + 1));
  }
  std::map<std::string, FeatureBlock> blocks;
  for (const auto& [b, c] : cols) blocks[b].columns.push_back(c);
  FeatureTable t;
  std::set<std::string> seen;
  for (const auto& row : csv.rows) {
    const std::string where = path + ":" + std::to_string(row.line);
    require(seen.insert(row.fields[0]).second, ErrorKind::uniqueness, where + ": duplicate group id");
    t.row_ids.push_back(row.fields[0]);
    const int label = parse_number<int>(row.fields[1], where);
    require(label >= -1 && label <= 1, ErrorKind::malformed_input, where + ": label must be -1, 0 or 1");
    t.labels.push_back(label);
    for (auto& [name, b] : blocks) b.rows.emplace_back();
    for (std::size_t j = 0; j < cols.size(); ++j)
      blocks[cols[j].first].rows.back().push_back(parse_number<double>(row.fields[j + 2], where));
  }
  for (auto& [name, b] : blocks) t.add_block(name, std::move(b));
  if (t.blocks.count("lights"))
    for (const auto& r : t.block("lights").rows) t.mean_intensity.push_back(r[0]);
  return t;
}

// ---------------------------------------------------------------------------
// Survey CSV: group_id,household_id,poor,roof,rooms,house_type,dist_road,
// dist_market,urban,temp,precip

inline void write_survey_csv(const std::vector<HouseholdGroup>& groups, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17);
  os << "group_id,household_id,poor,roof,rooms,house_type,dist_road,dist_market,urban,temp,precip\n";
  for (const auto& g : groups)
    for (const auto& h : g.households)
      os << g.id << ',' << h.id << ',' << (h.poor ? 1 : 0) << ',' << h.roof << ',' << h.rooms << ','
         << h.house_type << ',' << h.dist_road << ',' << h.dist_market << ',' << h.urban << ','
         << h.temp << ',' << h.precip << '\n';
}

/// Group table: group_id,center_x,center_y.
inline void write_groups_csv(const std::vector<HouseholdGroup>& groups, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17) << "group_id,center_x,center_y\n";
  for (const auto& g : groups) os << g.id << ',' << g.center_x << ',' << g.center_y << '\n';
}

struct SurveyBlock {
  std::vector<std::string> group_ids;  // sorted
  std::vector<int> labels;             // household majority, ties poor
  FeatureBlock block;
};

/// Per-group means of the survey attributes. Categorical columns (roof,
/// house_type) are one-hot encoded first, so their means are category
/// shares. Columns are sorted by name. When `known_groups` is non-empty,
/// every group id in the file must appear in it.
inline SurveyBlock ingest_survey(const std::string& path,
                                 const std::vector<std::string>& known_groups = {}) {
  const CsvTable t = read_csv(path);
  static const char* required[] = {"group_id", "household_id", "poor", "roof", "rooms",
                                   "house_type", "dist_road", "dist_market", "urban", "temp",
                                   "precip"};
  for (const char* c : required) t.column(c);
  const std::set<std::string> known(known_groups.begin(), known_groups.end());
  const std::vector<std::string> numeric{"dist_market", "dist_road", "precip", "rooms", "temp", "urban"};
  const std::vector<std::string> categorical{"house_type", "roof"};

  std::set<std::string> levels;  // "roof=metal" ...
  for (const auto& row : t.rows)
    for (const auto& c : categorical) {
      const std::string& v = row.fields[t.column(c)];
      require(!v.empty(), ErrorKind::malformed_input,
              path + ":" + std::to_string(row.line) + ": empty " + c);
      levels.insert(c + "=" + v);
    }
  std::vector<std::string> columns(numeric.begin(), numeric.end());
  columns.insert(columns.end(), levels.begin(), levels.end());
  std::sort(columns.begin(), columns.end());

  struct Acc {
    std::vector<double> sum;
    std::size_t n = 0;
    std::size_t poor = 0;
  };
  std::map<std::string, Acc> acc;
  std::set<std::string> households;
  for (const auto& row : t.rows) {
    const std::string where = path + ":" + std::to_string(row.line);
    const std::string& gid = row.fields[t.column("group_id")];
    require(known.empty() || known.count(gid), ErrorKind::referential,
            where + ": unknown group id '" + gid + "'");
    require(households.insert(gid + "/" + row.fields[t.column("household_id")]).second,
            ErrorKind::uniqueness, where + ": duplicate household id");
    const int poor = parse_number<int>(row.fields[t.column("poor")], where);
    require(poor == 0 || poor == 1, ErrorKind::malformed_input, where + ": poor must be 0 or 1");
    Acc& a = acc[gid];
    if (a.sum.empty()) a.sum.assign(columns.size(), 0.0);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const std::string& col = columns[j];
      const auto eq = col.find('=');
      if (eq == std::string::npos) {
        a.sum[j] += parse_number<double>(row.fields[t.column(col)], where);
      } else {
        a.sum[j] += row.fields[t.column(col.substr(0, eq))] == col.substr(eq + 1) ? 1.0 : 0.0;
      }
    }
    ++a.n;
    a.poor += static_cast<std::size_t>(poor);
  }
  require(!acc.empty(), ErrorKind::malformed_input, path + ": no households");
  SurveyBlock out;
  out.block.columns = columns;
  for (auto& [gid, a] : acc) {
    out.group_ids.push_back(gid);
    out.labels.push_back(2 * a.poor >= a.n ? 1 : 0);
    for (auto& v : a.sum) v /= static_cast<double>(a.n);
    out.block.rows.push_back(a.sum);
  }
  return out;
}

struct GroupCentre {
  std::string id;
  double x = 0.0, y = 0.0;
};

inline std::vector<GroupCentre> read_groups_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = t.column("group_id"), cx = t.column("center_x"), cy = t.column("center_y");
  std::vector<GroupCentre> out;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    const std::string where = path + ":" + std::to_string(row.line);
    GroupCentre g{row.fields[ci], parse_number<double>(row.fields[cx], where),
                  parse_number<double>(row.fields[cy], where)};
    require(seen.insert(g.id).second, ErrorKind::uniqueness, where + ": duplicate group id");
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Table assembly

struct TableInputs {
  const World* world = nullptr;
  std::vector<GroupCentre> groups;
  std::string survey_csv;                     // optional
  const Network<float>* transfer = nullptr;   // lights-fine-tuned, converted
  const Network<float>* imagenet = nullptr;   // pretrained on the object task only
  bool hog = true;
  std::size_t tile_px = 96;
  std::size_t threads = 1;
};

/// Builds blocks "lights", "survey", "transfer", "imgnet" and "hog" (those
/// whose inputs are available). Rows follow the group order of `groups`;
/// labels come from the survey when given.
inline FeatureTable build_feature_table(const TableInputs& in) {
  require(in.world != nullptr, ErrorKind::missing_input, "feature table needs a world");
  const World& w = *in.world;
  FeatureTable t;
  for (const auto& g : in.groups) t.row_ids.push_back(g.id);
  const std::size_t n = in.groups.size();
  std::vector<std::vector<Cell>> cells(n);
  for (std::size_t i = 0; i < n; ++i) cells[i] = area_cells(w, in.groups[i].x, in.groups[i].y, 10);

  FeatureBlock lights{lights_feature_names(), {}};
  for (std::size_t i = 0; i < n; ++i) {
    lights.rows.push_back(lights_features(w, cells[i]));
    t.mean_intensity.push_back(lights.rows.back()[0]);
  }

  t.labels.assign(n, -1);
  if (!in.survey_csv.empty()) {
    auto s = ingest_survey(in.survey_csv, t.row_ids);
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < s.group_ids.size(); ++i) pos[s.group_ids[i]] = i;
    FeatureBlock survey{s.block.columns, {}};
    for (std::size_t i = 0; i < n; ++i) {
      auto it = pos.find(t.row_ids[i]);
      require(it != pos.end(), ErrorKind::referential,
              "group '" + t.row_ids[i] + "' has no survey households");
      survey.rows.push_back(s.block.rows[it->second]);
      t.labels[i] = s.labels[it->second];
    }
    t.add_block("survey", std::move(survey));
  }
  t.add_block("lights", std::move(lights));

  auto cnn_block = [&](const Network<float>& net, const std::string& prefix) {
    FeatureBlock b;
    const std::size_t F = net.feature_dim();
    for (std::size_t k = 0; k < F; ++k) b.columns.push_back(prefix + std::to_string(k));
    b.rows.resize(n);
    parallel_for(n, in.threads, [&](std::size_t i) {
      b.rows[i] = transfer_features(net, w, cells[i], in.tile_px);
    });
    return b;
  };
  if (in.transfer) t.add_block("transfer", cnn_block(*in.transfer, "f"));
  if (in.imagenet) t.add_block("imgnet", cnn_block(*in.imagenet, "f"));
  if (in.hog) {
    FeatureBlock b;
    for (std::size_t k = 0; k < 144; ++k) b.columns.push_back("hog" + std::to_string(k));
    for (const char* ch : {"r", "g", "b"})
      for (int k = 0; k < 8; ++k) b.columns.push_back(std::string(ch) + "hist" + std::to_string(k));
    b.rows.resize(n);
    parallel_for(n, in.threads, [&](std::size_t i) {
      std::vector<double> mean(kHogDim, 0.0);
      for (const Cell& c : cells[i]) {
        const auto f = hog_color_features(render_tile(w, c.x, c.y, in.tile_px));
        for (std::size_t k = 0; k < kHogDim; ++k) mean[k] += f[k];
      }
      for (auto& v : mean) v /= static_cast<double>(cells[i].size());
      b.rows[i] = std::move(mean);
    });
    t.add_block("hog", std::move(b));
  }
  return t;
}

}  // namespace povmap
