#pragma once

// Poverty probability rasters: block scan with the transfer model and a
// logistic classifier, disk smoothing, region aggregation, PNG/CSV output.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "povmap/features.hpp"
#include "povmap/image.hpp"
#include "povmap/logreg.hpp"
#include "povmap/parallel.hpp"

namespace povmap {

struct ProbRaster {
  std::size_t rows = 0, cols = 0;
  std::size_t block_cells = 10;  // world cells per raster cell side
  std::size_t world_side = 0;
  double smoothing_radius = 0.0;  // world cells; 0 when unsmoothed
  std::vector<double> prob;       // row-major

  double at(std::size_t r, std::size_t c) const { return prob[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return prob[r * cols + c]; }
  double mean() const {
    double s = 0.0;
    for (double v : prob) s += v;
    return s / static_cast<double>(prob.size());
  }
};

/// Image for world cell (x, y).
using TileSource = std::function<Image(int x, int y)>;

inline TileSource world_tiles(const World& w, std::size_t tile_px) {
  return [&w, tile_px](int x, int y) { return render_tile(w, x, y, tile_px); };
}

/// One probability per block of block_cells x block_cells world cells
/// (partial blocks at the far edges use the cells that exist). The block
/// feature is the mean transfer feature of its tiles.
inline ProbRaster scan(std::size_t world_side, const TileSource& tiles, const Network<float>& net,
                       const LogRegModel& clf, std::size_t block_cells = 10, std::size_t threads = 1) {
  require(block_cells >= 1, ErrorKind::invalid_argument, "block size must be positive");
  require(world_side >= 1, ErrorKind::invalid_argument, "empty world");
  require(net.mode() == NetMode::fully_convolutional, ErrorKind::invalid_argument,
          "scan needs a converted (fully convolutional) network");
  require(clf.weights.size() == static_cast<Eigen::Index>(net.feature_dim()), ErrorKind::dimension,
          "classifier expects " + std::to_string(clf.weights.size()) + " features, network gives " +
              std::to_string(net.feature_dim()));
  ProbRaster r;
  r.block_cells = block_cells;
  r.world_side = world_side;
  r.rows = r.cols = (world_side + block_cells - 1) / block_cells;
  r.prob.assign(r.rows * r.cols, 0.0);
  DMat feats(static_cast<Eigen::Index>(r.rows * r.cols), static_cast<Eigen::Index>(net.feature_dim()));
  parallel_for(r.rows * r.cols, threads, [&](std::size_t b) {
    const std::size_t br = b / r.cols, bc = b % r.cols;
    std::vector<Image> imgs;
    for (std::size_t y = br * block_cells; y < std::min(world_side, (br + 1) * block_cells); ++y)
      for (std::size_t x = bc * block_cells; x < std::min(world_side, (bc + 1) * block_cells); ++x)
        imgs.push_back(tiles(static_cast<int>(x), static_cast<int>(y)));
    const auto f = mean_features(net, imgs);
    for (std::size_t k = 0; k < f.size(); ++k) feats(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = f[k];
  });
  r.prob = predict_proba(clf, feats);
  return r;
}

inline ProbRaster scan(const World& w, const Network<float>& net, const LogRegModel& clf,
                       std::size_t block_cells = 10, std::size_t tile_px = 96, std::size_t threads = 1) {
  return scan(w.side, world_tiles(w, tile_px), net, clf, block_cells, threads);
}

/// Uniform disk mean over raster cells within Euclidean `radius` (raster
/// units), normalized by the in-bounds part of the disk.
inline ProbRaster smooth(const ProbRaster& in, double radius) {
  require(radius >= 0.0 && std::isfinite(radius), ErrorKind::invalid_argument,
          "smoothing radius must be >= 0");
  ProbRaster out = in;
  out.smoothing_radius = radius * static_cast<double>(in.block_cells);
  if (radius == 0.0) return out;
  const long R = static_cast<long>(std::floor(radius));
  std::vector<std::pair<long, long>> offsets;
  for (long dy = -R; dy <= R; ++dy)
    for (long dx = -R; dx <= R; ++dx)
      if (static_cast<double>(dx * dx + dy * dy) <= radius * radius) offsets.emplace_back(dy, dx);
  const long rows = static_cast<long>(in.rows), cols = static_cast<long>(in.cols);
  for (long y = 0; y < rows; ++y)
    for (long x = 0; x < cols; ++x) {
      double s = 0.0;
      std::size_t n = 0;
      for (auto [dy, dx] : offsets) {
        const long yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= rows || xx >= cols) continue;
        s += in.prob[static_cast<std::size_t>(yy * cols + xx)];
        ++n;
      }
      out.prob[static_cast<std::size_t>(y * cols + x)] = s / static_cast<double>(n);
    }
  return out;
}

/// Radius given in world cells (55 cells is about half a degree of latitude).
inline ProbRaster smooth_cells(const ProbRaster& in, double radius_cells) {
  return smooth(in, radius_cells / static_cast<double>(in.block_cells));
}

// ---------------------------------------------------------------------------
// Regions

struct RegionMap {
  std::size_t rows = 0, cols = 0;
  std::vector<std::string> region;  // row-major, one label per raster cell
};

/// Rectangular districts: a grid of `per_side` x `per_side` regions named
/// "d<row>_<col>".
inline RegionMap grid_regions(std::size_t rows, std::size_t cols, std::size_t per_side) {
  require(per_side >= 1, ErrorKind::invalid_argument, "need at least one region per side");
  RegionMap m{rows, cols, {}};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m.region.push_back("d" + std::to_string(r * per_side / rows) + "_" + std::to_string(c * per_side / cols));
  return m;
}

/// CSV `row,col,region_id`; every raster cell must be labelled exactly once.
inline RegionMap read_regions(const std::string& path, std::size_t rows, std::size_t cols) {
  const CsvTable t = read_csv(path);
  const std::size_t cr = t.column("row"), cc = t.column("col"), ci = t.column("region_id");
  RegionMap m{rows, cols, std::vector<std::string>(rows * cols)};
  std::vector<bool> seen(rows * cols, false);
  for (const auto& row : t.rows) {
    const std::string where = path + ":" + std::to_string(row.line);
    const auto r = parse_number<std::size_t>(row.fields[cr], where);
    const auto c = parse_number<std::size_t>(row.fields[cc], where);
    require(r < rows && c < cols, ErrorKind::dimension,
            where + ": cell (" + std::to_string(r) + ", " + std::to_string(c) + ") outside the raster");
    require(!seen[r * cols + c], ErrorKind::uniqueness, where + ": cell labelled twice");
    require(!row.fields[ci].empty(), ErrorKind::malformed_input, where + ": empty region id");
    seen[r * cols + c] = true;
    m.region[r * cols + c] = row.fields[ci];
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    require(seen[i], ErrorKind::malformed_input,
            path + ": cell (" + std::to_string(i / cols) + ", " + std::to_string(i % cols) + ") has no region");
  return m;
}

inline void write_regions(const RegionMap& m, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << "row,col,region_id\n";
  for (std::size_t i = 0; i < m.region.size(); ++i)
    os << i / m.cols << ',' << i % m.cols << ',' << m.region[i] << '\n';
}

struct RegionStat {
  double mean = 0.0;
  std::size_t blocks = 0;
};

inline std::map<std::string, RegionStat> aggregate(const ProbRaster& r, const RegionMap& m) {
  require(m.rows == r.rows && m.cols == r.cols && m.region.size() == r.prob.size(),
          ErrorKind::dimension,
          "region map is " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ", raster is " +
              std::to_string(r.rows) + "x" + std::to_string(r.cols));
  std::map<std::string, RegionStat> out;
  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < r.prob.size(); ++i) {
    sums[m.region[i]] += r.prob[i];
    ++out[m.region[i]].blocks;
  }
  for (auto& [id, st] : out) st.mean = sums[id] / static_cast<double>(st.blocks);
  return out;
}

inline void write_region_stats(const std::map<std::string, RegionStat>& stats, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17) << "region_id,blocks,mean_prob\n";
  for (const auto& [id, st] : stats) os << id << ',' << st.blocks << ',' << st.mean << '\n';
}

// ---------------------------------------------------------------------------
// Output

/// Linear green (0) -> yellow (0.5) -> red (1) in RGB.
inline Rgb poverty_color(double p) {
  p = std::clamp(p, 0.0, 1.0);
  if (p <= 0.5) return Rgb{static_cast<std::uint8_t>(std::lround(510.0 * p)), 255, 0};
  return Rgb{255, static_cast<std::uint8_t>(std::lround(510.0 * (1.0 - p))), 0};
}

inline constexpr std::size_t kLegendGap = 4;
inline constexpr std::size_t kLegendWidth = 12;

/// Each raster cell becomes a scale x scale square; a legend strip (1 at
/// the top, 0 at the bottom) sits to the right after a white gap.
inline Image render_raster(const ProbRaster& r, std::size_t scale = 8) {
  require(scale >= 1, ErrorKind::invalid_argument, "scale must be positive");
  const std::size_t H = std::max<std::size_t>(r.rows * scale, 2), W = r.cols * scale;
  Image img(H, W + kLegendGap + kLegendWidth, Rgb{255, 255, 255});
  for (std::size_t y = 0; y < r.rows * scale; ++y)
    for (std::size_t x = 0; x < W; ++x) img.set(y, x, poverty_color(r.at(y / scale, x / scale)));
  for (std::size_t y = 0; y < H; ++y) {
    const Rgb c = poverty_color(1.0 - static_cast<double>(y) / static_cast<double>(H - 1));
    for (std::size_t x = 0; x < kLegendWidth; ++x) img.set(y, W + kLegendGap + x, c);
  }
  return img;
}

inline void write_raster_png(const ProbRaster& r, const std::string& path, std::size_t scale = 8) {
  write_png(render_raster(r, scale), path);
}

inline void write_raster_csv(const ProbRaster& r, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  require(f != nullptr, ErrorKind::io, "cannot write " + path);
  std::fputs("row,col,prob\n", f);
  for (std::size_t i = 0; i < r.prob.size(); ++i)
    std::fprintf(f, "%zu,%zu,%.17g\n", i / r.cols, i % r.cols, r.prob[i]);
  require(std::fclose(f) == 0, ErrorKind::io, "error closing " + path);
}

/// Inverse of write_raster_csv; extent comes from the largest indices.
inline ProbRaster read_raster_csv(const std::string& path, std::size_t block_cells = 10) {
  const CsvTable t = read_csv(path);
  const std::size_t cr = t.column("row"), cc = t.column("col"), cp = t.column("prob");
  std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
  std::size_t rows = 0, cols = 0;
  for (const auto& row : t.rows) {
    const std::string where = path + ":" + std::to_string(row.line);
    const auto r = parse_number<std::size_t>(row.fields[cr], where);
    const auto c = parse_number<std::size_t>(row.fields[cc], where);
    const auto p = parse_number<double>(row.fields[cp], where);
    require(p >= 0.0 && p <= 1.0, ErrorKind::range, where + ": probability outside [0, 1]");
    cells.emplace_back(r, c, p);
    rows = std::max(rows, r + 1);
    cols = std::max(cols, c + 1);
  }
  require(cells.size() == rows * cols, ErrorKind::malformed_input, path + ": raster has missing or repeated cells");
  ProbRaster out;
  out.rows = rows;
  out.cols = cols;
  out.block_cells = block_cells;
  out.world_side = rows * block_cells;
  out.prob.assign(rows * cols, -1.0);
  for (auto [r, c, p] : cells) {
    require(out.at(r, c) < 0.0, ErrorKind::uniqueness, path + ": repeated cell");
    out.at(r, c) = p;
  }
  return out;
}

}  // namespace povmap
