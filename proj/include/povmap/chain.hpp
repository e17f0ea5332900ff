#pragma once

// The P1 -> P2 -> P3 chain: shape pretraining, lights fine-tuning, poverty
// classification, plus the map, filter inspection and speedup runs that hang
// off it.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/checkpoint.hpp"
#include "povmap/config.hpp"
#include "povmap/cv.hpp"
#include "povmap/features.hpp"
#include "povmap/gmm.hpp"
#include "povmap/raster.hpp"
#include "povmap/shapes.hpp"
#include "povmap/tiles.hpp"
#include "povmap/trainer.hpp"
#include "povmap/viz.hpp"

namespace povmap {

// ---------------------------------------------------------------------------
// Transfer graph

struct TransferGraph {
  std::vector<std::string> stages;
  std::vector<std::pair<std::string, std::string>> edges;  // knowledge flows first -> second

  bool has_stage(const std::string& s) const {
    return std::find(stages.begin(), stages.end(), s) != stages.end();
  }

  void add_stage(const std::string& s) {
    require(!has_stage(s), ErrorKind::graph, "stage '" + s + "' added twice");
    stages.push_back(s);
  }

  void add_edge(const std::string& from, const std::string& to) {
    require(has_stage(from) && has_stage(to), ErrorKind::graph,
            "edge " + from + " -> " + to + " names an unknown stage");
    edges.emplace_back(from, to);
  }

  /// Topological order (ties by insertion order); a cycle is a graph error.
  std::vector<std::string> order() const {
    std::map<std::string, std::size_t> indeg;
    for (const auto& s : stages) indeg[s] = 0;
    for (const auto& [a, b] : edges) ++indeg[b];
    std::vector<std::string> out;
    std::set<std::string> done;
    while (out.size() < stages.size()) {
      bool progressed = false;
      for (const auto& s : stages)
        if (!done.count(s) && indeg[s] == 0) {
          out.push_back(s);
          done.insert(s);
          for (const auto& [a, b] : edges)
            if (a == s) --indeg[b];
          progressed = true;
          break;
        }
      if (!progressed) {
        std::string left;
        for (const auto& s : stages)
          if (!done.count(s)) left += (left.empty() ? "" : ", ") + s;
        fail(ErrorKind::graph, "transfer graph has a cycle through: " + left);
      }
    }
    return out;
  }

  /// True when `from` reaches `to` along edges.
  bool precedes(const std::string& from, const std::string& to) const {
    std::vector<std::string> stack{from};
    std::set<std::string> seen;
    while (!stack.empty()) {
      const std::string s = stack.back();
      stack.pop_back();
      for (const auto& [a, b] : edges)
        if (a == s && seen.insert(b).second) {
          if (b == to) return true;
          stack.push_back(b);
        }
    }
    return false;
  }

  /// Refuses a stage reading a checkpoint from anything but a predecessor.
  void require_source(const std::string& consumer, const std::string& producer) const {
    require(has_stage(consumer) && has_stage(producer), ErrorKind::graph,
            "unknown stage in " + producer + " -> " + consumer);
    require(precedes(producer, consumer), ErrorKind::graph,
            "stage " + consumer + " consumes a checkpoint from " + producer + ", which is not a predecessor");
  }

  static TransferGraph linear_chain() {
    TransferGraph g;
    for (const char* s : {"P1", "P2", "P3"}) g.add_stage(s);
    g.add_edge("P1", "P2");
    g.add_edge("P2", "P3");
    return g;
  }
};

// ---------------------------------------------------------------------------
// P1

inline MiniFOptions minif_options(const ChainConfig& c, std::size_t classes, std::uint64_t seed) {
  MiniFOptions o;
  o.input_side = 64;
  o.feature_dim = c.feature_dim;
  o.num_classes = classes;
  o.seed = seed;
  return o;
}

struct P1Result {
  Network<float> net;
  double val_accuracy = 0.0;
  double untrained_accuracy = 0.0;
  std::size_t best_iteration = 0;
  std::vector<CurvePoint> curve;
};

inline ImageSet p1_validation_set(const ChainConfig& c) {
  return shapes_dataset(derive_seed(c.seed, "p1.data"), c.p1_val_images, c.p1_train_images);
}

inline P1Result pretrain_p1(const ChainConfig& c, const std::function<void(const CurvePoint&)>& on_eval = {}) {
  require(c.p1_train_images >= 3 && c.p1_val_images >= 3, ErrorKind::insufficient_data,
          "pretraining needs at least one image of each shape class");
  const std::uint64_t data_seed = derive_seed(c.seed, "p1.data");
  Network<float> net = build_minif<float>(minif_options(c, kShapeClasses, derive_seed(c.seed, "p1.init")));
  const ImageSet train_set = cached(shapes_dataset(data_seed, c.p1_train_images, 0));
  const ImageSet val = cached(p1_validation_set(c));
  P1Result out;
  out.untrained_accuracy = accuracy(net, val);
  TrainConfig t;
  t.learning_rate = c.p1_learning_rate;
  t.decay_every = c.p1_decay_every;
  t.batch_size = c.p1_batch;
  t.max_iterations = c.p1_iterations;
  t.eval_every = c.p1_eval_every;
  t.seed = derive_seed(c.seed, "p1.sgd");
  auto r = train(std::move(net), train_set, val, t, on_eval);
  out.net = std::move(r.best);
  out.val_accuracy = r.best_val_accuracy;
  out.best_iteration = r.best_iteration;
  out.curve = std::move(r.curve);
  return out;
}

// ---------------------------------------------------------------------------
// Lights data

struct LightsData {
  TileDataset tiles;      // binned (and rebalanced in 3-class mode)
  std::optional<GmmModel> gmm;
  std::size_t classes = 3;
};

inline LightsData prepare_lights(std::shared_ptr<const World> w, const ChainConfig& c) {
  require(c.p2_classes == 3 || c.p2_classes == 64, ErrorKind::invalid_argument,
          "p2.classes must be 3 (GMM bins) or 64 (raw intensities)");
  LightsData out;
  out.classes = c.p2_classes;
  TileDataset d = sample_dataset(std::move(w), c.p2_tiles, derive_seed(c.seed, "p2.sample"), c.tile_px);
  d = split_dataset(d, c.p2_val_fraction, derive_seed(c.seed, "p2.split"));
  if (c.p2_classes == 3) {
    std::vector<double> v;
    for (const auto& r : d.records())
      if (r.split == Split::train) v.push_back(static_cast<double>(r.intensity));
    out.gmm = fit_gmm1d(v, 3, derive_seed(c.seed, "p2.gmm"));
    d = rebalance(bin_labels(*out.gmm, d), derive_seed(c.seed, "p2.rebalance"), 3);
  } else {
    auto recs = d.records();
    for (auto& r : recs) r.bin = r.intensity;
    d = d.with_records(std::move(recs));
  }
  out.tiles = std::move(d);
  return out;
}

/// Images of one split, rendered once per distinct cell.
inline ImageSet tile_images(const TileDataset& d, Split s) {
  require(d.binned(), ErrorKind::invalid_argument, "training on lights tiles needs binned labels");
  auto store = std::make_shared<std::vector<Image>>();
  auto slot = std::make_shared<std::vector<std::size_t>>();
  auto labels = std::make_shared<std::vector<int>>();
  std::map<std::pair<int, int>, std::size_t> seen;
  for (std::size_t i : d.indices(s)) {
    const TileRecord& r = d[i];
    const auto key = std::make_pair(r.cell.x, r.cell.y);
    auto it = seen.find(key);
    if (it == seen.end() || r.pixels) {
      it = seen.insert_or_assign(key, store->size()).first;
      store->push_back(d.image(i));
    }
    slot->push_back(it->second);
    labels->push_back(*r.bin);
  }
  return {slot->size(), [store, slot](std::size_t i) { return (*store)[(*slot)[i]]; },
          [labels](std::size_t i) { return (*labels)[i]; }};
}

// ---------------------------------------------------------------------------
// P2

enum class WeightSource { from_p1, reinitialized };

inline std::string_view to_string(WeightSource s) {
  return s == WeightSource::from_p1 ? "from-P1" : "re-initialized";
}

struct ProvenanceEntry {
  std::size_t layer = 0;
  std::string tensor;  // "weights" or "bias"
  WeightSource source = WeightSource::from_p1;
};

struct P2Start {
  Network<float> net;
  std::vector<ProvenanceEntry> provenance;
};

/// Network for the lights task initialized from P1. When `convert` is set
/// the result is fully convolutional and every conv_from_fc layer is drawn
/// afresh from U(+-1/sqrt(fan_in)); otherwise it keeps the fixed input and
/// only the classifier layer is redrawn.
inline P2Start init_from_p1(const Network<float>& p1, std::size_t classes, bool convert, std::uint64_t seed) {
  require(p1.mode() == NetMode::fixed_input, ErrorKind::invalid_argument,
          "the P1 checkpoint must be a fixed-input network");
  auto layers = p1.layers();
  const std::size_t cls = p1.classifier_layer();
  layers[cls].out_channels = classes;
  Network<float> net(layers, p1.input_extent(), NetMode::fixed_input, seed);
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (net.params()[i] && i != cls) net.params()[i] = p1.params()[i];
  std::set<std::size_t> fresh;
  if (convert) {
    net = convolutionalize(net);
    for (std::size_t i = 0; i < net.layers().size(); ++i)
      if (net.layer(i).kind == LayerKind::conv_from_fc) fresh.insert(i);
  } else {
    fresh.insert(cls);
  }
  for (std::size_t i : fresh) net.reinit_layer(i, derive_seed(seed, i));
  P2Start out{std::move(net), {}};
  for (std::size_t i = 0; i < out.net.layers().size(); ++i)
    if (out.net.params()[i])
      for (const char* t : {"weights", "bias"})
        out.provenance.push_back(
            {i, t, fresh.count(i) ? WeightSource::reinitialized : WeightSource::from_p1});
  return out;
}

/// Paired control for init_from_p1: the same redrawn layers with the same
/// seed, but the transferred layers are He-initialized instead of copied.
inline Network<float> init_scratch(const Network<float>& p1, std::size_t classes, bool convert, std::uint64_t seed) {
  auto layers = p1.layers();
  const std::size_t cls = p1.classifier_layer();
  layers[cls].out_channels = classes;
  Network<float> net(layers, p1.input_extent(), NetMode::fixed_input, seed);
  net.init_he(derive_seed(seed, "scratch"));
  if (convert) net = convolutionalize(net);
  for (std::size_t i = 0; i < net.layers().size(); ++i)
    if (convert ? net.layer(i).kind == LayerKind::conv_from_fc : i == cls) net.reinit_layer(i, derive_seed(seed, i));
  return net;
}

struct P2Result {
  Network<float> fcn;
  double fcn_val_accuracy = 0.0;
  std::vector<CurvePoint> fcn_curve;
  std::vector<ProvenanceEntry> provenance;
  std::optional<Network<float>> crop;
  std::optional<double> crop_val_accuracy;
  std::vector<CurvePoint> crop_curve;
};

inline TrainConfig p2_train_config(const ChainConfig& c, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = c.p2_learning_rate;
  t.decay_every = c.p2_decay_every;
  t.batch_size = c.p2_batch;
  t.max_iterations = c.p2_iterations;
  t.eval_every = c.p2_eval_every;
  t.freeze_layers = c.p2_freeze;
  t.seed = seed;
  return t;
}

inline P2Result finetune_p2(const Network<float>& p1, const LightsData& lights, const ChainConfig& c,
                            const std::function<void(const std::string&, const CurvePoint&)>& on_eval = {}) {
  require(lights.tiles.binned(), ErrorKind::invalid_argument,
          "fine-tuning needs a binned lights dataset (run the GMM binning first)");
  const ImageSet train_set = tile_images(lights.tiles, Split::train);
  const ImageSet val = tile_images(lights.tiles, Split::val);
  require(train_set.size() > 0 && val.size() > 0, ErrorKind::insufficient_data,
          "lights dataset needs both train and validation tiles");
  auto hook = [&](const std::string& name) {
    return std::function<void(const CurvePoint&)>([&, name](const CurvePoint& p) {
      if (on_eval) on_eval(name, p);
    });
  };
  P2Result out;
  if (c.p2_convert_first) {
    P2Start s = init_from_p1(p1, lights.classes, true, derive_seed(c.seed, "p2.init"));
    auto r = train(std::move(s.net), train_set, val, p2_train_config(c, derive_seed(c.seed, "p2.sgd")), hook("fcn"));
    out.fcn = std::move(r.best);
    out.fcn_val_accuracy = r.best_val_accuracy;
    out.fcn_curve = std::move(r.curve);
    out.provenance = std::move(s.provenance);
  }
  if (c.p2_crop_baseline || !c.p2_convert_first) {
    P2Start s = init_from_p1(p1, lights.classes, false, derive_seed(c.seed, "p2.init.crop"));
    auto r = train(std::move(s.net), train_set, val, p2_train_config(c, derive_seed(c.seed, "p2.sgd.crop")),
                   hook("crop"));
    out.crop = std::move(r.best);
    out.crop_val_accuracy = r.best_val_accuracy;
    out.crop_curve = std::move(r.curve);
    if (!c.p2_convert_first) {
      // Fine-tuned first, converted afterwards: the converted layers carry
      // fine-tuned weights.
      out.fcn = convolutionalize(*out.crop);
      out.fcn_val_accuracy = accuracy(out.fcn, val);
      out.fcn_curve = out.crop_curve;
      out.provenance = std::move(s.provenance);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// P3

struct Family {
  std::string name;
  std::vector<std::string> blocks;
};

/// Survey, ImgNet, Lights, ImgNet+Lights, Transfer, and the HOG sanity check
/// when that block exists.
inline std::vector<Family> default_families(const FeatureTable& t) {
  std::vector<Family> f{{"Survey", {"survey"}},
                        {"ImgNet", {"imgnet"}},
                        {"Lights", {"lights"}},
                        {"ImgNet+Lights", {"imgnet", "lights"}},
                        {"Transfer", {"transfer"}}};
  if (t.blocks.count("hog")) f.push_back({"HOG", {"hog"}});
  std::erase_if(f, [&](const Family& fam) {
    return std::any_of(fam.blocks.begin(), fam.blocks.end(), [&](const auto& b) { return !t.blocks.count(b); });
  });
  return f;
}

struct P3Result {
  std::vector<std::pair<std::string, CvReport>> reports;
  std::optional<ConditionalRates> conditional;  // from the transfer family
  std::optional<LogRegModel> map_classifier;    // transfer family fitted on every group
};

inline const CvReport* find_report(const P3Result& r, const std::string& name) {
  for (const auto& [n, rep] : r.reports)
    if (n == name) return &rep;
  return nullptr;
}

/// Median of the per-fold lambdas.
inline double consensus_lambda(const CvReport& r) {
  std::vector<double> l;
  for (const auto& f : r.folds) l.push_back(f.lambda);
  require(!l.empty(), ErrorKind::insufficient_data, "no folds");
  std::sort(l.begin(), l.end());
  return l.size() % 2 ? l[l.size() / 2] : 0.5 * (l[l.size() / 2 - 1] + l[l.size() / 2]);
}

inline LogRegModel fit_final_classifier(const DMat& X, const std::vector<int>& y, double lambda) {
  const Standardizer st = Standardizer::fit(X);
  LogRegModel m = fit_l1_logreg(st.apply(X), y, lambda, LogRegOptions{5000, 1e-10, nullptr});
  m.standardizer = st;
  return m;
}

inline P3Result run_p3(const FeatureTable& t, const ChainConfig& c, std::vector<Family> families = {}) {
  require(t.rows() >= 40, ErrorKind::insufficient_data,
          "poverty evaluation needs at least 40 groups, got " + std::to_string(t.rows()));
  std::size_t poor = 0;
  for (int v : t.labels) {
    require(v == 0 || v == 1, ErrorKind::invalid_argument, "every group needs a 0/1 label");
    poor += v == 1;
  }
  require(poor > 0 && poor < t.rows(), ErrorKind::insufficient_data, "poverty labels have a single class");
  if (families.empty()) families = default_families(t);
  P3Result out;
  for (const auto& fam : families) {
    const DMat X = to_eigen(concat_blocks(t, fam.blocks));
    CvOptions o;
    o.k_outer = c.p3_outer_folds;
    o.coarse_points = c.p3_coarse;
    o.fine_points = c.p3_fine;
    o.seed = derive_seed(c.seed, "p3.folds");
    o.threads = c.threads;
    CvReport rep = nested_cv(X, t.labels, o);
    if (fam.name == "Transfer") {
      out.conditional = conditional_analysis(t.mean_intensity, t.labels, rep.oof_pred);
      out.map_classifier = fit_final_classifier(X, t.labels, consensus_lambda(rep));
    }
    out.reports.emplace_back(fam.name, std::move(rep));
  }
  return out;
}

inline std::string format_conditional(const ConditionalRates& r) {
  std::ostringstream os;
  auto line = [&](const char* name, const Rate& rt) {
    os << name << " = " << fmt_metric(rt.value) << " (n=" << rt.count << ")\n";
  };
  line("P(predicted poor | zero lights)", r.pred_poor_given_dark);
  line("P(poor | zero lights)", r.poor_given_dark);
  line("P(poor | lit)", r.poor_given_lit);
  return os.str();
}

// ---------------------------------------------------------------------------
// Map

struct MapResult {
  ProbRaster raw, smoothed;
  RegionMap regions;
  std::map<std::string, RegionStat> stats;
};

inline MapResult run_map(const World& w, const Network<float>& fcn, const LogRegModel& clf, const ChainConfig& c) {
  MapResult m;
  m.raw = scan(w, fcn, clf, c.map_block, c.tile_px, c.threads);
  m.smoothed = smooth_cells(m.raw, c.map_radius);
  m.regions = grid_regions(m.raw.rows, m.raw.cols, c.map_regions);
  m.stats = aggregate(m.smoothed, m.regions);
  return m;
}

inline void write_map(const MapResult& m, const std::filesystem::path& dir) {
  write_raster_png(m.smoothed, (dir / "map.png").string());
  write_raster_csv(m.smoothed, (dir / "map.csv").string());
  write_raster_csv(m.raw, (dir / "map_raw.csv").string());
  write_regions(m.regions, (dir / "regions.csv").string());
  write_region_stats(m.stats, (dir / "region_stats.csv").string());
}

// ---------------------------------------------------------------------------
// Filter inspection

struct FilterPurity {
  std::size_t filter = 0;
  Purity purity;
  std::vector<RankedTile> top;
};

struct VizResult {
  std::size_t layer = 0;
  std::vector<FilterPurity> filters;
  std::size_t best = 0;  // index into filters with the highest purity
};

/// Validation tiles of the lights set, one per original record.
inline std::vector<std::size_t> validation_originals(const TileDataset& d) {
  std::vector<std::size_t> out;
  for (std::size_t i : d.indices(Split::val))
    if (d[i].id == d[i].origin) out.push_back(i);
  return out;
}

inline std::size_t resolve_layer(const Network<float>& net, long layer) {
  if (layer >= 0) return static_cast<std::size_t>(layer);
  const auto last = net.last_conv_layer();
  require(last.has_value(), ErrorKind::invalid_argument, "network has no convolutional layer");
  return *last;
}

inline VizResult run_viz(const Network<float>& net, const TileDataset& d, std::size_t layer, std::size_t n,
                         std::vector<std::size_t> subset = {}) {
  if (subset.empty()) subset = validation_originals(d);
  require(!subset.empty(), ErrorKind::insufficient_data, "no tiles to rank");
  VizResult v;
  v.layer = layer;
  const auto scores = layer_scores(net, layer, d, subset);
  for (std::size_t f = 0; f < scores.size(); ++f) {
    FilterPurity fp;
    fp.filter = f;
    fp.top = rank_scores(d, subset, scores[f], n);
    fp.purity = terrain_purity(d, fp.top);
    v.filters.push_back(std::move(fp));
  }
  for (std::size_t f = 1; f < v.filters.size(); ++f)
    if (v.filters[f].purity.share > v.filters[v.best].purity.share) v.best = f;
  return v;
}

inline void write_viz(const Network<float>& net, const TileDataset& d, const VizResult& v,
                      const std::filesystem::path& dir) {
  const std::string scores = (dir / "filter_scores.csv").string();
  std::filesystem::remove(scores);
  for (const auto& f : v.filters) write_scores_csv(f.top, v.layer, f.filter, scores, true);
  {
    std::ofstream os(dir / "filter_purity.csv");
    require(static_cast<bool>(os), ErrorKind::io, "cannot write filter_purity.csv");
    os << "layer,filter,terrain,share\n";
    for (const auto& f : v.filters)
      os << v.layer << ',' << f.filter << ',' << to_string(f.purity.terrain) << ',' << f.purity.share << '\n';
  }
  const auto& best = v.filters[v.best];
  std::vector<Image> imgs;
  for (const auto& r : best.top) imgs.push_back(d.image(r.index));
  export_montage(imgs, activation_maps(net, v.layer, best.filter, imgs), (dir / "filter_montage.png").string());
}

// ---------------------------------------------------------------------------
// Pretrained vs scratch

struct SpeedupPair {
  std::uint64_t seed = 0;
  std::optional<std::size_t> pretrained, scratch;  // first evaluation at or above the threshold
};

struct SpeedupReport {
  std::vector<SpeedupPair> pairs;
  std::size_t cap = 0;  // runs that never reach the threshold count as cap + 1

  static double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  }
  double median_of(bool pre) const {
    std::vector<double> v;
    for (const auto& p : pairs) {
      const auto& x = pre ? p.pretrained : p.scratch;
      v.push_back(static_cast<double>(x.value_or(cap + 1)));
    }
    return median(v);
  }
  bool pretrained_faster() const { return !pairs.empty() && median_of(true) < median_of(false); }
};

inline SpeedupReport transfer_speedup(const Network<float>& p1, const LightsData& lights, const ChainConfig& c) {
  const ImageSet train_set = tile_images(lights.tiles, Split::train);
  const ImageSet val = tile_images(lights.tiles, Split::val);
  SpeedupReport rep;
  rep.cap = c.speedup_iterations;
  for (std::size_t s = 0; s < c.speedup_seeds; ++s) {
    const std::uint64_t seed = derive_seed(derive_seed(c.seed, "speedup"), s);
    TrainConfig t;
    t.learning_rate = c.p2_learning_rate;
    t.batch_size = c.p2_batch;
    t.max_iterations = c.speedup_iterations;
    t.eval_every = c.speedup_eval_every;
    t.max_eval = c.speedup_max_eval;
    t.stop_accuracy = c.speedup_threshold;
    t.seed = seed;
    SpeedupPair pair;
    pair.seed = seed;
    pair.pretrained = train(init_from_p1(p1, lights.classes, true, seed).net, train_set, val, t).threshold_iteration;
    pair.scratch = train(init_scratch(p1, lights.classes, true, seed), train_set, val, t).threshold_iteration;
    rep.pairs.push_back(pair);
  }
  return rep;
}

inline void write_speedup_csv(const SpeedupReport& r, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  auto cell = [&](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("NA"); };
  os << "seed,pretrained_iterations,scratch_iterations\n";
  for (const auto& p : r.pairs) os << p.seed << ',' << cell(p.pretrained) << ',' << cell(p.scratch) << '\n';
  os << "median," << r.median_of(true) << ',' << r.median_of(false) << '\n';
}

// ---------------------------------------------------------------------------
// Manifest

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string hash_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::missing_input, "cannot hash missing file " + p.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), {});
  return hex64(fnv1a(bytes));
}

inline std::string hash_tiles(const TileDataset& d) {
  std::ostringstream os;
  for (const auto& r : d.records())
    os << r.id << ' ' << r.cell.x << ' ' << r.cell.y << ' ' << r.intensity << ' ' << r.bin.value_or(-1) << ' '
       << to_string(r.split) << '\n';
  return hex64(fnv1a(os.str()));
}

/// Ordered key = value lines.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  template <typename V>
  void set(const std::string& key, const V& value) {
    std::ostringstream os;
    os << std::setprecision(17) << std::boolalpha << value;
    for (auto& [k, v] : entries)
      if (k == key) {
        v = os.str();
        return;
      }
    entries.emplace_back(key, os.str());
  }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    return std::nullopt;
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
    for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  }

  static Manifest read(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::missing_input, "missing manifest: " + path);
    Manifest m;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
      if (trim(line).empty()) continue;
      const auto eq = line.find(" = ");
      require(eq != std::string::npos, ErrorKind::malformed_input,
              path + ":" + std::to_string(n) + ": expected 'key = value'");
      m.entries.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return m;
  }
};

// ---------------------------------------------------------------------------
// Whole chain

struct ChainRun {
  TransferGraph graph;
  ChainConfig config;
  std::shared_ptr<const World> world;
  P1Result p1;
  LightsData lights;
  P2Result p2;
  FeatureTable table;
  P3Result p3;
  MapResult map;
  VizResult viz;
  std::optional<SpeedupReport> speedup;
  Manifest manifest;
};

using ChainLog = std::function<void(const std::string&)>;

/// Runs every stage in graph order and writes artifacts under `out`.
inline ChainRun run_chain(const ChainConfig& c, const std::filesystem::path& out,
                          const TransferGraph& graph = TransferGraph::linear_chain(), const ChainLog& log = {}) {
  namespace fs = std::filesystem;
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  ChainRun run;
  run.graph = graph;
  run.config = c;
  const auto order = graph.order();
  for (const char* s : {"P1", "P2", "P3"})
    require(graph.has_stage(s), ErrorKind::graph, std::string("transfer graph lacks stage ") + s);
  graph.require_source("P2", "P1");
  graph.require_source("P3", "P2");
  graph.require_source("P3", "P1");  // ImgNet baseline features
  fs::create_directories(out);
  Manifest& man = run.manifest;
  man.set("seed", c.seed);
  std::string order_s;
  for (const auto& s : order) order_s += (order_s.empty() ? "" : " -> ") + s;
  man.set("graph.order", order_s);
  {
    std::ofstream os(out / "config.cfg");
    write_config(c, os);
  }

  // World
  const std::uint64_t world_seed = derive_seed(c.seed, "world");
  run.world = std::make_shared<const World>(generate_world({c.world_side, world_seed}));
  save_world(*run.world, out / "world");
  man.set("world.seed", world_seed);
  man.set("world.side", c.world_side);
  man.set("world.hash", hash_file(out / "world" / "world.bin"));

  // P1
  say("P1: pretraining on shapes");
  run.p1 = pretrain_p1(c, [&](const CurvePoint& p) {
    say("  P1 iter " + std::to_string(p.iteration) + " val " + fmt_metric(p.val_accuracy));
  });
  save_checkpoint(run.p1.net, (out / "p1.ckpt").string());
  man.set("p1.seed", derive_seed(c.seed, "p1.init"));
  man.set("p1.checkpoint", "p1.ckpt");
  man.set("p1.checkpoint_hash", hash_file(out / "p1.ckpt"));
  man.set("p1.val_accuracy", run.p1.val_accuracy);
  man.set("p1.untrained_accuracy", run.p1.untrained_accuracy);

  // P2
  say("P2: lights data");
  run.lights = prepare_lights(run.world, c);
  write_index(run.lights.tiles, out / "lights_index.csv", false);
  man.set("p2.dataset_hash", hash_tiles(run.lights.tiles));
  man.set("p2.tiles", run.lights.tiles.size());
  if (run.lights.gmm) {
    std::ostringstream m;
    for (double v : run.lights.gmm->means) m << (m.tellp() ? " " : "") << v;
    man.set("p2.gmm_means", m.str());
  }
  say("P2: fine-tuning");
  run.p2 = finetune_p2(run.p1.net, run.lights, c, [&](const std::string& name, const CurvePoint& p) {
    say("  P2 " + name + " iter " + std::to_string(p.iteration) + " val " + fmt_metric(p.val_accuracy));
  });
  save_checkpoint(run.p2.fcn, (out / "p2_fcn.ckpt").string());
  man.set("p2.source", "p1.ckpt");
  man.set("p2.checkpoint", "p2_fcn.ckpt");
  man.set("p2.checkpoint_hash", hash_file(out / "p2_fcn.ckpt"));
  man.set("p2.fcn_val_accuracy", run.p2.fcn_val_accuracy);
  if (run.p2.crop) {
    save_checkpoint(*run.p2.crop, (out / "p2_crop.ckpt").string());
    man.set("p2.crop_checkpoint", "p2_crop.ckpt");
    man.set("p2.crop_val_accuracy", *run.p2.crop_val_accuracy);
  }
  {
    std::ofstream os(out / "provenance.csv");
    os << "layer,tensor,source\n";
    for (const auto& e : run.p2.provenance) os << e.layer << ',' << e.tensor << ',' << to_string(e.source) << '\n';
  }

  // P3
  say("P3: groups and features");
  const auto groups = generate_groups(*run.world, c.p3_groups, derive_seed(c.seed, "p3.groups"));
  write_groups_csv(groups, (out / "groups.csv").string());
  write_survey_csv(groups, (out / "survey.csv").string());
  man.set("p3.groups_hash", hash_file(out / "groups.csv"));
  man.set("p3.survey_hash", hash_file(out / "survey.csv"));
  const Network<float> imgnet = convolutionalize(run.p1.net);
  TableInputs in;
  in.world = run.world.get();
  in.groups = read_groups_csv((out / "groups.csv").string());
  in.survey_csv = (out / "survey.csv").string();
  in.transfer = &run.p2.fcn;
  in.imagenet = &imgnet;
  in.hog = c.p3_hog;
  in.tile_px = c.tile_px;
  in.threads = c.threads;
  run.table = build_feature_table(in);
  write_feature_table(run.table, (out / "features.csv").string());
  say("P3: nested cross-validation");
  run.p3 = run_p3(run.table, c);
  fs::create_directories(out / "reports");
  for (const auto& [name, rep] : run.p3.reports) {
    write_cv_csv(rep, (out / "reports" / ("cv_" + name + ".csv")).string());
    man.set("p3." + name + ".accuracy", rep.mean.accuracy);
    man.set("p3." + name + ".auc", fmt_metric(rep.mean.auc, 17));
  }
  {
    std::ofstream os(out / "reports" / "table.txt");
    os << format_family_table(run.p3.reports);
    if (run.p3.conditional) os << '\n' << format_conditional(*run.p3.conditional);
  }
  say(format_family_table(run.p3.reports));

  // Map
  if (run.p3.map_classifier) {
    save_logreg(*run.p3.map_classifier, (out / "classifier.txt").string());
    say("map: scanning " + std::to_string(c.world_side) + "x" + std::to_string(c.world_side) + " world");
    run.map = run_map(*run.world, run.p2.fcn, *run.p3.map_classifier, c);
    write_map(run.map, out);
    man.set("map.csv_hash", hash_file(out / "map.csv"));
  }

  // Filters
  say("viz: ranking validation tiles");
  run.viz = run_viz(run.p2.fcn, run.lights.tiles, resolve_layer(run.p2.fcn, c.viz_layer), c.viz_top);
  write_viz(run.p2.fcn, run.lights.tiles, run.viz, out);
  man.set("viz.layer", run.viz.layer);
  man.set("viz.best_filter", run.viz.filters[run.viz.best].filter);
  man.set("viz.best_terrain", to_string(run.viz.filters[run.viz.best].purity.terrain));
  man.set("viz.best_purity", run.viz.filters[run.viz.best].purity.share);

  // Speedup
  if (c.speedup_seeds > 0) {
    say("speedup: paired pretrained and scratch runs");
    run.speedup = transfer_speedup(run.p1.net, run.lights, c);
    write_speedup_csv(*run.speedup, (out / "speedup.csv").string());
    man.set("speedup.median_pretrained", run.speedup->median_of(true));
    man.set("speedup.median_scratch", run.speedup->median_of(false));
  }
  man.write((out / "manifest.txt").string());
  return run;
}

}  // namespace povmap
