#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "povmap/raster.hpp"
#include "povmap/viz.hpp"
#include "test_support.hpp"

using namespace povmap;
using test_support::expect_error;
using test_support::scratch_dir;

namespace {

Network<float> tiny_converted(std::uint64_t seed = 3) {
  MiniFOptions o;
  o.input_side = 16;
  o.feature_dim = 6;
  o.conv1_filters = 4;
  o.conv2_filters = 4;
  o.conv3_filters = 4;
  o.seed = seed;
  return convolutionalize(build_minif<float>(o));
}

LogRegModel unit_classifier(std::size_t d, double w = 0.3, double b = -0.2) {
  LogRegModel m;
  m.weights = DVec::Constant(static_cast<Eigen::Index>(d), w);
  m.intercept = b;
  return m;
}

ProbRaster raster_from(std::size_t rows, std::size_t cols, std::vector<double> p) {
  ProbRaster r;
  r.rows = rows;
  r.cols = cols;
  r.block_cells = 10;
  r.world_side = rows * 10;
  r.prob = std::move(p);
  return r;
}

Image noise_image(std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  Image img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x)
      img.set(y, x, Rgb{static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng)),
                        static_cast<std::uint8_t>(u(rng))});
  return img;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scan

TEST(Scan, BlockCountCoversWorld) {
  const auto net = tiny_converted();
  const auto clf = unit_classifier(net.feature_dim());
  const Image fixed = noise_image(24, 1);
  const TileSource src = [&](int, int) { return fixed; };
  for (auto [side, block, expect] : {std::tuple{40, 10, 4}, {45, 10, 5}, {30, 30, 1}, {7, 3, 3}}) {
    const ProbRaster r = scan(side, src, net, clf, block);
    EXPECT_EQ(r.rows, static_cast<std::size_t>(expect)) << side << "/" << block;
    EXPECT_EQ(r.cols, r.rows);
    EXPECT_EQ(r.prob.size(), r.rows * r.cols);
  }
}

TEST(Scan, ConstantSourceGivesConstantRaster) {
  const auto net = tiny_converted();
  const auto clf = unit_classifier(net.feature_dim());
  const Image fixed = noise_image(24, 2);
  const ProbRaster r = scan(25, [&](int, int) { return fixed; }, net, clf, 5);
  for (double p : r.prob) {
    EXPECT_NEAR(p, r.prob[0], 1e-6);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Scan, BlockProbabilityUsesMeanOfItsTiles) {
  const auto net = tiny_converted();
  const auto clf = unit_classifier(net.feature_dim(), 0.7, 0.1);
  const TileSource src = [](int x, int y) { return noise_image(24, static_cast<std::uint64_t>(y * 100 + x)); };
  const ProbRaster r = scan(4, src, net, clf, 2);
  std::vector<Image> block;
  for (int y = 2; y < 4; ++y)
    for (int x = 0; x < 2; ++x) block.push_back(src(x, y));
  const auto f = mean_features(net, block);
  DMat X(1, static_cast<Eigen::Index>(f.size()));
  for (std::size_t k = 0; k < f.size(); ++k) X(0, static_cast<Eigen::Index>(k)) = f[k];
  EXPECT_NEAR(r.at(1, 0), predict_proba(clf, X)[0], 1e-12);
}

TEST(Scan, ThreadCountDoesNotChangeResult) {
  const auto net = tiny_converted();
  const auto clf = unit_classifier(net.feature_dim());
  const TileSource src = [](int x, int y) { return noise_image(24, static_cast<std::uint64_t>(y * 31 + x)); };
  const auto a = scan(6, src, net, clf, 2, 1), b = scan(6, src, net, clf, 2, 3);
  EXPECT_EQ(a.prob, b.prob);
}

TEST(Scan, RejectsFixedInputAndWidthMismatch) {
  MiniFOptions o;
  o.input_side = 16;
  o.feature_dim = 6;
  const auto fixed_net = build_minif<float>(o);
  const Image img = noise_image(16, 3);
  expect_error([&] { scan(4, [&](int, int) { return img; }, fixed_net, unit_classifier(6), 2); },
               ErrorKind::invalid_argument);
  const auto net = tiny_converted();
  expect_error([&] { scan(4, [&](int, int) { return img; }, net, unit_classifier(5), 2); }, ErrorKind::dimension);
}

// ---------------------------------------------------------------------------
// Smoothing

TEST(Smooth, RadiusZeroIsIdentity) {
  const ProbRaster r = raster_from(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  EXPECT_EQ(smooth(r, 0.0).prob, r.prob);
}

TEST(Smooth, ConstantRasterUnchanged) {
  const ProbRaster r = raster_from(5, 5, std::vector<double>(25, 0.37));
  for (double rad : {1.0, 2.5, 5.5})
    for (double p : smooth(r, rad).prob) EXPECT_NEAR(p, 0.37, 1e-12);
}

TEST(Smooth, PlusKernelHandMeans) {
  // 3x3 with radius 1: each cell averages itself and its in-bounds 4-neighbours.
  const ProbRaster r = raster_from(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  const ProbRaster s = smooth(r, 1.0);
  EXPECT_DOUBLE_EQ(s.at(1, 1), 1.0 / 5.0);
  EXPECT_DOUBLE_EQ(s.at(0, 1), 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(s.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(s.smoothing_radius, 10.0);
}

TEST(Smooth, InteriorMeanPreservedWithZeroPadding) {
  // Mass away from the border is spread, not lost.
  std::vector<double> p(81, 0.0);
  p[4 * 9 + 4] = 1.0;
  p[3 * 9 + 5] = 0.5;
  const ProbRaster s = smooth(raster_from(9, 9, p), 1.5);
  double sum = 0.0;
  for (double v : s.prob) sum += v;
  EXPECT_NEAR(sum, 1.5, 1e-12);
}

TEST(Smooth, WorldCellRadiusConvertsByBlockSize) {
  std::vector<double> p(49);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(i % 7) / 7.0;
  const ProbRaster r = raster_from(7, 7, p);
  EXPECT_EQ(smooth_cells(r, 20.0).prob, smooth(r, 2.0).prob);
  expect_error([&] { smooth(r, -1.0); }, ErrorKind::invalid_argument);
}

// ---------------------------------------------------------------------------
// Regions

TEST(Aggregate, SingleRegionEqualsOverallMean) {
  const ProbRaster r = raster_from(3, 4, {0.1, 0.9, 0.3, 0.3, 0.7, 0.2, 0.5, 0.5, 0.0, 1.0, 0.4, 0.6});
  const auto stats = aggregate(r, grid_regions(3, 4, 1));
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_DOUBLE_EQ(stats.begin()->second.mean, r.mean());
  EXPECT_EQ(stats.begin()->second.blocks, 12u);
}

TEST(Aggregate, HalvesAndCheckerboard) {
  const ProbRaster r = raster_from(2, 2, {0.2, 0.4, 0.6, 0.8});
  RegionMap halves{2, 2, {"top", "top", "bottom", "bottom"}};
  auto s = aggregate(r, halves);
  EXPECT_DOUBLE_EQ(s["top"].mean, 0.3);
  EXPECT_DOUBLE_EQ(s["bottom"].mean, 0.7);
  RegionMap checker{2, 2, {"a", "b", "b", "a"}};
  s = aggregate(r, checker);
  EXPECT_DOUBLE_EQ(s["a"].mean, 0.5);
  EXPECT_DOUBLE_EQ(s["b"].mean, 0.5);
  EXPECT_EQ(s["a"].blocks, 2u);
}

TEST(Aggregate, ExtentMismatchIsDimensionError) {
  const ProbRaster r = raster_from(2, 2, {0.2, 0.4, 0.6, 0.8});
  expect_error([&] { aggregate(r, grid_regions(3, 2, 1)); }, ErrorKind::dimension);
}

TEST(Regions, FileRoundTripAndValidation) {
  const auto dir = scratch_dir("regions");
  const RegionMap m = grid_regions(4, 4, 2);
  write_regions(m, (dir / "r.csv").string());
  EXPECT_EQ(read_regions((dir / "r.csv").string(), 4, 4).region, m.region);
  EXPECT_EQ(m.region[0], "d0_0");
  EXPECT_EQ(m.region[15], "d1_1");
  {
    std::ofstream os(dir / "gap.csv");
    os << "row,col,region_id\n0,0,a\n0,1,a\n1,0,a\n";
  }
  expect_error([&] { read_regions((dir / "gap.csv").string(), 2, 2); }, ErrorKind::malformed_input);
  {
    std::ofstream os(dir / "out.csv");
    os << "row,col,region_id\n5,0,a\n";
  }
  expect_error([&] { read_regions((dir / "out.csv").string(), 2, 2); }, ErrorKind::dimension);
}

// ---------------------------------------------------------------------------
// Output

TEST(Ramp, EndpointsAndMiddle) {
  EXPECT_EQ(poverty_color(0.0), (Rgb{0, 255, 0}));
  EXPECT_EQ(poverty_color(0.5), (Rgb{255, 255, 0}));
  EXPECT_EQ(poverty_color(1.0), (Rgb{255, 0, 0}));
  EXPECT_EQ(poverty_color(-3.0), poverty_color(0.0));
}

TEST(RasterPng, CornerColoursAndLegend) {
  const auto dir = scratch_dir("png");
  const ProbRaster r = raster_from(2, 2, {0.0, 1.0, 0.5, 0.0});
  const std::string path = (dir / "map.png").string();
  write_raster_png(r, path, 4);
  const Image img = read_png(path);
  ASSERT_EQ(img.height(), 8u);
  ASSERT_EQ(img.width(), 8u + kLegendGap + kLegendWidth);
  EXPECT_EQ(img.get(0, 0), poverty_color(0.0));
  EXPECT_EQ(img.get(0, 7), poverty_color(1.0));
  EXPECT_EQ(img.get(7, 0), poverty_color(0.5));
  EXPECT_EQ(img.get(7, 7), poverty_color(0.0));
  EXPECT_EQ(img.get(0, 8), (Rgb{255, 255, 255}));
  EXPECT_EQ(img.get(0, 8 + kLegendGap), poverty_color(1.0));
  EXPECT_EQ(img.get(7, 8 + kLegendGap), poverty_color(0.0));
}

TEST(RasterCsv, RoundTripIsBitExact) {
  const auto dir = scratch_dir("csv");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(12);
  for (double& v : p) v = u(rng);
  p[3] = 0.0;
  p[7] = 1.0;
  const ProbRaster r = raster_from(3, 4, p);
  write_raster_csv(r, (dir / "r.csv").string());
  const ProbRaster back = read_raster_csv((dir / "r.csv").string());
  EXPECT_EQ(back.rows, 3u);
  EXPECT_EQ(back.cols, 4u);
  EXPECT_EQ(back.prob, r.prob);
}

TEST(RasterCsv, RejectsOutOfRangeAndRepeats) {
  const auto dir = scratch_dir("csvbad");
  {
    std::ofstream os(dir / "range.csv");
    os << "row,col,prob\n0,0,1.5\n";
  }
  expect_error([&] { read_raster_csv((dir / "range.csv").string()); }, ErrorKind::range);
  {
    std::ofstream os(dir / "rep.csv");
    os << "row,col,prob\n0,0,0.5\n0,0,0.5\n";
  }
  expect_error([&] { read_raster_csv((dir / "rep.csv").string()); }, ErrorKind::malformed_input);
}

TEST(ClassifierFile, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("clf");
  DMat X(40, 3);
  std::vector<int> y(40);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = g(rng) * (j + 1) + j;
    y[static_cast<std::size_t>(i)] = X(i, 0) + 0.3 * g(rng) > 0 ? 1 : 0;
  }
  const Standardizer st = Standardizer::fit(X);
  LogRegModel m = fit_l1_logreg(st.apply(X), y, 0.01);
  m.standardizer = st;
  save_logreg(m, (dir / "m.txt").string());
  const LogRegModel back = load_logreg((dir / "m.txt").string());
  EXPECT_EQ(back.lambda, m.lambda);
  EXPECT_EQ(back.intercept, m.intercept);
  EXPECT_TRUE(back.weights == m.weights);
  EXPECT_EQ(predict_proba(back, X), predict_proba(m, X));
  LogRegModel bare = m;
  bare.standardizer.reset();
  expect_error([&] { save_logreg(bare, (dir / "bare.txt").string()); }, ErrorKind::invalid_argument);
  expect_error([&] { load_logreg((dir / "none.txt").string()); }, ErrorKind::missing_input);
}

// ---------------------------------------------------------------------------
// Filter visualization

TEST(Activation, BatchInvariant) {
  const auto net = tiny_converted();
  const std::size_t layer = *net.last_conv_layer();
  std::vector<Image> imgs;
  for (std::uint64_t s = 0; s < 5; ++s) imgs.push_back(noise_image(24, s + 10));
  const auto batch = activation_maps(net, layer, 1, imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto one = activation_score(net, layer, 1, imgs[i]);
    EXPECT_NEAR(one.score, batch[i].score, 1e-6);
    ASSERT_EQ(one.map.size(), batch[i].map.size());
    for (std::size_t k = 0; k < one.map.size(); ++k) EXPECT_NEAR(one.map[k], batch[i].map[k], 1e-6);
  }
}

TEST(Activation, ScoreIsMeanOfNonNegativeMap) {
  const auto net = tiny_converted();
  const auto a = activation_score(net, 0, 2, noise_image(24, 4));
  double s = 0.0;
  for (double v : a.map) {
    EXPECT_GE(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(a.score, s / static_cast<double>(a.map.size()), 1e-12);
  EXPECT_EQ(a.map.size(), a.h * a.w);
}

TEST(Activation, BadLayerOrFilter) {
  const auto net = tiny_converted();
  const Image img = noise_image(24, 1);
  expect_error([&] { activation_score(net, 99, 0, img); }, ErrorKind::out_of_bounds);
  expect_error([&] { activation_score(net, 1, 0, img); }, ErrorKind::invalid_argument);  // relu
  expect_error([&] { activation_score(net, 0, 4, img); }, ErrorKind::out_of_bounds);
}

TEST(TopActivating, SortedWithIdTieBreakAndLayerScoresAgree) {
  auto world = std::make_shared<const World>(generate_world({48, 4}));
  TileDataset d(world, 24);
  for (std::size_t i = 0; i < 30; ++i) {
    TileRecord r;
    r.id = tile_id(i);
    r.origin = r.id;
    r.cell = Cell{static_cast<int>((i * 7) % 48), static_cast<int>((i * 13) % 48)};
    d.records().push_back(r);
  }
  // Duplicate cells give tied scores.
  auto recs = d.records();
  recs[29].cell = recs[3].cell;
  d = d.with_records(recs);
  const auto net = tiny_converted();
  const std::size_t layer = *net.last_conv_layer();
  const auto top = top_activating(net, layer, 0, d, 25, {}, 7);
  ASSERT_EQ(top.size(), 25u);
  for (std::size_t i = 1; i < top.size(); ++i) {
    EXPECT_GE(top[i - 1].score, top[i].score);
    if (top[i - 1].score == top[i].score) {
      EXPECT_LT(top[i - 1].id, top[i].id);
    }
  }
  std::vector<std::size_t> all(d.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto scores = layer_scores(net, layer, d, all, 11);
  const auto ranked = rank_scores(d, all, scores[0], 25);
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(ranked[i].id, top[i].id);
    EXPECT_NEAR(ranked[i].score, top[i].score, 1e-6);
  }
  const Purity p = terrain_purity(d, top);
  EXPECT_GT(p.share, 0.0);
  EXPECT_LE(p.share, 1.0);
}

TEST(Montage, GridShapes) {
  const auto net = tiny_converted();
  std::vector<Image> imgs;
  for (std::uint64_t s = 0; s < 25; ++s) imgs.push_back(noise_image(24, s));
  const auto maps = activation_maps(net, 0, 0, imgs);
  const Image m25 = render_montage(imgs, maps);
  EXPECT_EQ(m25.height(), 5u * 24);
  EXPECT_EQ(m25.width(), 10u * 24);
  const Image m1 = render_montage({imgs[0]}, {maps[0]});
  EXPECT_EQ(m1.height(), 24u);
  EXPECT_EQ(m1.width(), 2u * 24);
  EXPECT_EQ(m1.get(5, 6), imgs[0].get(5, 6));
  expect_error([&] { render_montage(imgs, {maps[0]}); }, ErrorKind::dimension);
}

TEST(Montage, NormalizationAndFlatMap) {
  EXPECT_EQ(normalize_map({2.0, 4.0, 3.0}), (std::vector<double>{0.0, 1.0, 0.5}));
  EXPECT_EQ(normalize_map({3.0, 3.0}), (std::vector<double>{0.0, 0.0}));
  FilterActivation flat;
  flat.h = flat.w = 2;
  flat.map = {0.7, 0.7, 0.7, 0.7};
  const Image img = noise_image(8, 1);
  const Image m = render_montage({img}, {flat});
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 8; x < 16; ++x) EXPECT_EQ(m.get(y, x), heat_color(0.0));
  EXPECT_EQ(heat_color(1.0), (Rgb{255, 255, 255}));
}

TEST(Montage, ScoresCsvAppends) {
  const auto dir = scratch_dir("scores");
  const std::string path = (dir / "s.csv").string();
  write_scores_csv({{"t0", 0, 0.5}}, 3, 1, path);
  write_scores_csv({{"t1", 1, 0.25}}, 3, 2, path, true);
  std::ifstream is(path);
  std::string all((std::istreambuf_iterator<char>(is)), {});
  EXPECT_EQ(all, "tile_id,layer,filter,score\nt0,3,1,0.5\nt1,3,2,0.25\n");
}
