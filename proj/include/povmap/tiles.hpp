#pragma once

// Labeled tile datasets: sampling from a synthetic world, train/val
// splitting, GMM intensity binning, class rebalancing and ingestion of
// user-supplied tile directories.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "povmap/csv.hpp"
#include "povmap/gmm.hpp"
#include "povmap/world.hpp"

namespace povmap {

enum class Split : std::uint8_t { train, val };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "val"; }

struct TileRecord {
  std::string id;
  std::string origin;  // id of the record this one was resampled from (itself if original)
  int intensity = 0;   // 0..63
  std::optional<int> bin;
  Split split = Split::train;
  Cell cell;
  std::shared_ptr<const Image> pixels;  // decoded image for ingested tiles
};

/// Tiles are rendered on demand from the world unless a record carries pixels.
class TileDataset {
 public:
  TileDataset() = default;
  TileDataset(std::shared_ptr<const World> world, std::size_t tile_px)
      : world_(std::move(world)), tile_px_(tile_px) {}

  std::vector<TileRecord>& records() noexcept { return records_; }
  const std::vector<TileRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const TileRecord& operator[](std::size_t i) const { return records_.at(i); }
  std::size_t tile_px() const noexcept { return tile_px_; }
  const std::shared_ptr<const World>& world() const noexcept { return world_; }
  void set_tile_px(std::size_t px) noexcept { tile_px_ = px; }

  Image image(std::size_t i) const {
    const TileRecord& r = records_.at(i);
    if (r.pixels) return *r.pixels;
    require(world_ != nullptr, ErrorKind::missing_input, "tile " + r.id + " has no image source");
    return render_tile(*world_, r.cell.x, r.cell.y, tile_px_);
  }

  bool binned() const {
    return !records_.empty() &&
           std::all_of(records_.begin(), records_.end(), [](const auto& r) { return r.bin.has_value(); });
  }

  /// Indices of records in a split, in record order.
  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
      if (records_[i].split == s) out.push_back(i);
    return out;
  }

  /// Records with the same configuration but a different record list.
  TileDataset with_records(std::vector<TileRecord> records) const {
    TileDataset d(world_, tile_px_);
    d.records_ = std::move(records);
    return d;
  }

 private:
  std::shared_ptr<const World> world_;
  std::size_t tile_px_ = 0;
  std::vector<TileRecord> records_;
};

inline std::string tile_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "t" + std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

struct SampleOptions {
  double near_share = 0.8;    // fraction drawn around survey sites
  double site_sigma = 10.0;   // cells
};

/// n tiles labeled with the world intensity at their cell. Most are drawn
/// from a Gaussian around a random survey site, the rest uniformly.
inline TileDataset sample_dataset(std::shared_ptr<const World> world, std::size_t n,
                                  std::uint64_t seed, std::size_t tile_px = 96,
                                  const SampleOptions& opt = {}) {
  require(n >= 1, ErrorKind::invalid_argument, "sample_dataset needs n >= 1");
  require(world != nullptr, ErrorKind::missing_input, "sample_dataset: no world");
  const World& w = *world;
  TileDataset d(world, tile_px);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> ucell(0, static_cast<int>(w.side) - 1);
  std::normal_distribution<double> jitter(0.0, opt.site_sigma);
  const int last = static_cast<int>(w.side) - 1;
  d.records().reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Cell c;
    if (!w.survey_sites.empty() && u01(rng) < opt.near_share) {
      std::uniform_int_distribution<std::size_t> usite(0, w.survey_sites.size() - 1);
      const Cell s = w.survey_sites[usite(rng)];
      c.x = std::clamp(static_cast<int>(std::lround(s.x + jitter(rng))), 0, last);
      c.y = std::clamp(static_cast<int>(std::lround(s.y + jitter(rng))), 0, last);
    } else {
      c.x = ucell(rng);
      c.y = ucell(rng);
    }
    TileRecord r;
    r.id = tile_id(i);
    r.origin = r.id;
    r.cell = c;
    r.intensity = w.intensity_at(c.x, c.y);
    d.records().push_back(std::move(r));
  }
  return d;
}

/// Deterministic split by world cell: all tiles of a cell land on the same
/// side. Cells are shuffled and assigned to validation until the validation
/// share reaches `val_fraction`.
inline TileDataset split_dataset(const TileDataset& d, double val_fraction, std::uint64_t seed) {
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::range,
          "validation fraction must lie in (0, 1)");
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_cell;
  for (std::size_t i = 0; i < d.size(); ++i) by_cell[{d[i].cell.x, d[i].cell.y}].push_back(i);
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [cell, idx] : by_cell) groups.push_back(&idx);
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  auto records = d.records();
  const double target = val_fraction * static_cast<double>(d.size());
  std::size_t n_val = 0;
  for (const auto* g : groups) {
    const Split s = static_cast<double>(n_val) < target ? Split::val : Split::train;
    if (s == Split::val) n_val += g->size();
    for (std::size_t i : *g) records[i].split = s;
  }
  return d.with_records(std::move(records));
}

// ---------------------------------------------------------------------------
// Binning and rebalancing

/// Assigns each record the argmax-responsibility component of `gmm`
/// (components are stored in increasing order of mean, so bin 0 is darkest).
inline TileDataset bin_labels(const GmmModel& gmm, const TileDataset& d) {
  require(gmm.fitted(), ErrorKind::unfitted_model, "bin_labels: GMM has not been fitted");
  auto records = d.records();
  for (auto& r : records) r.bin = static_cast<int>(gmm.assign(static_cast<double>(r.intensity)));
  return d.with_records(std::move(records));
}

/// Counts after the half-of-max rule: the largest class is cut to at most
/// twice the second largest, then every class is raised to ceil(max/2).
inline std::vector<std::size_t> rebalance_targets(const std::vector<std::size_t>& counts) {
  require(!counts.empty(), ErrorKind::unbalanceable, "no classes to rebalance");
  for (std::size_t k = 0; k < counts.size(); ++k)
    require(counts[k] > 0, ErrorKind::unbalanceable,
            "class " + std::to_string(k) + " is empty; cannot rebalance");
  if (counts.size() == 1) return counts;
  std::vector<std::size_t> sorted = counts;
  std::sort(sorted.rbegin(), sorted.rend());
  const std::size_t top = std::min(sorted[0], 2 * sorted[1]);
  const std::size_t floor_count = (top + 1) / 2;
  std::vector<std::size_t> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    out[k] = std::max(std::min(counts[k], top), floor_count);
  return out;
}

/// Resamples each split independently so that every class has at least half
/// as many records as the most frequent one. Downsampling is a uniform subset
/// without replacement; upsampling keeps all originals and adds duplicates
/// drawn with replacement (ids suffixed "~k", origin kept).
inline TileDataset rebalance(const TileDataset& d, std::uint64_t seed, std::size_t num_classes = 3) {
  require(d.binned(), ErrorKind::invalid_argument, "rebalance needs a binned dataset");
  std::vector<TileRecord> out;
  std::mt19937_64 rng(seed);
  for (Split s : {Split::train, Split::val}) {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    bool any = false;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i].split == s) {
        const int b = *d[i].bin;
        require(b >= 0 && static_cast<std::size_t>(b) < num_classes, ErrorKind::range,
                "bin " + std::to_string(b) + " outside class range");
        by_class[static_cast<std::size_t>(b)].push_back(i);
        any = true;
      }
    if (!any) continue;
    std::vector<std::size_t> counts;
    for (const auto& c : by_class) counts.push_back(c.size());
    const auto targets = rebalance_targets(counts);
    for (std::size_t k = 0; k < num_classes; ++k) {
      auto idx = by_class[k];
      if (targets[k] < idx.size()) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(targets[k]);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) out.push_back(d[i]);
      } else {
        for (std::size_t i : idx) out.push_back(d[i]);
        std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
        std::map<std::size_t, int> copies;
        for (std::size_t extra = idx.size(); extra < targets[k]; ++extra) {
          const std::size_t i = idx[pick(rng)];
          TileRecord r = d[i];
          r.id = r.id + "~" + std::to_string(++copies[i]);
          out.push_back(std::move(r));
        }
      }
    }
  }
  return d.with_records(std::move(out));
}

inline std::vector<std::size_t> class_counts(const TileDataset& d, Split s, std::size_t k = 3) {
  std::vector<std::size_t> c(k, 0);
  for (const auto& r : d.records())
    if (r.split == s && r.bin && *r.bin >= 0 && static_cast<std::size_t>(*r.bin) < k)
      ++c[static_cast<std::size_t>(*r.bin)];
  return c;
}

// ---------------------------------------------------------------------------
// Directory ingestion: index.csv with tile_id,path,intensity,bin,split,cell_x,cell_y

inline TileDataset ingest_directory(const std::filesystem::path& dir) {
  const auto index = dir / "index.csv";
  require(std::filesystem::exists(index), ErrorKind::missing_input,
          "missing dataset index: " + index.string());
  const CsvTable t = read_csv(index.string());
  const std::size_t c_id = t.column("tile_id"), c_path = t.column("path"),
                    c_int = t.column("intensity"), c_bin = t.column("bin"),
                    c_split = t.column("split"), c_x = t.column("cell_x"), c_y = t.column("cell_y");
  TileDataset d(nullptr, 0);
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    const std::string where = index.string() + ":" + std::to_string(row.line);
    const auto& f = row.fields;
    TileRecord r;
    r.id = f[c_id];
    require(!r.id.empty(), ErrorKind::malformed_input, where + ": empty tile_id");
    require(seen.insert(r.id).second, ErrorKind::uniqueness,
            where + ": duplicate tile_id '" + r.id + "'");
    r.origin = r.id;
    r.intensity = parse_number<int>(f[c_int], where);
    require(r.intensity >= 0 && r.intensity <= 63, ErrorKind::range,
            where + ": intensity " + f[c_int] + " outside [0, 63]");
    if (!f[c_bin].empty()) {
      r.bin = parse_number<int>(f[c_bin], where);
      require(*r.bin >= 0 && *r.bin <= 63, ErrorKind::range, where + ": bin out of range");
    }
    if (f[c_split] == "train") r.split = Split::train;
    else if (f[c_split] == "val") r.split = Split::val;
    else fail(ErrorKind::malformed_input, where + ": split must be train or val");
    r.cell = {parse_number<int>(f[c_x], where), parse_number<int>(f[c_y], where)};
    const auto img_path = dir / f[c_path];
    require(std::filesystem::exists(img_path), ErrorKind::missing_input,
            where + ": missing image " + img_path.string());
    r.pixels = std::make_shared<const Image>(read_png(img_path.string()));
    d.records().push_back(std::move(r));
  }
  require(d.size() > 0, ErrorKind::malformed_input, index.string() + ": no rows");
  const std::size_t px = d[0].pixels->height();
  for (const auto& r : d.records())
    require(r.pixels->height() == px && r.pixels->width() == px, ErrorKind::dimension,
            "tile " + r.id + ": all tiles must be square and share one size");
  d.set_tile_px(px);
  return d;
}

/// index.csv rows; `with_paths` adds tiles/<id>.png in the path column.
inline void write_index(const TileDataset& d, const std::filesystem::path& path, bool with_paths) {
  std::ofstream idx(path);
  require(static_cast<bool>(idx), ErrorKind::io, "cannot write " + path.string());
  idx << "tile_id,path,intensity,bin,split,cell_x,cell_y\n";
  for (const auto& r : d.records())
    idx << r.id << ',' << (with_paths ? "tiles/" + r.id + ".png" : "") << ',' << r.intensity << ','
        << (r.bin ? std::to_string(*r.bin) : "") << ',' << to_string(r.split) << ',' << r.cell.x << ','
        << r.cell.y << '\n';
}

/// Writes every record as <dir>/tiles/<id>.png plus index.csv.
inline void export_directory(const TileDataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tiles");
  for (std::size_t i = 0; i < d.size(); ++i) write_png(d.image(i), (dir / "tiles" / (d[i].id + ".png")).string());
  write_index(d, dir / "index.csv", true);
}

}  // namespace povmap
