#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "povmap/cv.hpp"
#include "povmap/features.hpp"
#include "povmap/logreg.hpp"
#include "povmap/metrics.hpp"
#include "test_support.hpp"

using namespace povmap;
using test_support::expect_error;

namespace {

const World& world128() {
  static const World w = generate_world({128, 2});
  return w;
}

HouseholdGroup group_with_flags(std::initializer_list<int> flags) {
  HouseholdGroup g;
  g.id = "g";
  for (int f : flags) {
    Household h;
    h.poor = f == 1;
    g.households.push_back(h);
  }
  return g;
}

Network<float> small_converted(std::uint64_t seed) {
  MiniFOptions o;
  o.feature_dim = 24;
  o.seed = seed;
  return convolutionalize(build_minif<float>(o));
}

std::filesystem::path write_survey(const std::string& name, const std::string& body) {
  const auto dir = test_support::scratch_dir(name);
  std::ofstream os(dir / "survey.csv");
  os << "group_id,household_id,poor,roof,rooms,house_type,dist_road,dist_market,urban,temp,precip\n" << body;
  return dir / "survey.csv";
}

}  // namespace

// ---------------------------------------------------------------------------
// Groups

TEST(Groups, MajorityLabelWithTiesPoor) {
  EXPECT_EQ(group_with_flags({1, 1, 0}).label(), 1);
  EXPECT_EQ(group_with_flags({0, 0, 1}).label(), 0);
  EXPECT_EQ(group_with_flags({1, 0}).label(), 1);
  EXPECT_EQ(group_with_flags({0, 0, 1, 1}).label(), 1);
  EXPECT_EQ(group_with_flags({0}).label(), 0);
  expect_error([] { group_with_flags({}).label(); }, ErrorKind::insufficient_data);
}

TEST(Groups, GeneratedGroupsRespectJitterAndSize) {
  const World& w = world128();
  const auto groups = generate_groups(w, 60, 3);
  ASSERT_EQ(groups.size(), 60u);
  std::set<std::string> ids;
  for (const auto& g : groups) {
    EXPECT_TRUE(ids.insert(g.id).second);
    ASSERT_GE(g.households.size(), 1u);
    double sx = 0, sy = 0;
    for (const auto& h : g.households) {
      sx += h.cell.x;
      sy += h.cell.y;
    }
    sx /= g.households.size();
    sy /= g.households.size();
    EXPECT_LE(std::abs(g.center_x - sx), 5.0 + 1e-9);
    EXPECT_LE(std::abs(g.center_y - sy), 5.0 + 1e-9);
    EXPECT_TRUE(g.label() == 0 || g.label() == 1);
  }
  const auto again = generate_groups(w, 60, 3);
  EXPECT_EQ(again[17].center_x, groups[17].center_x);
  EXPECT_EQ(again[17].households.size(), groups[17].households.size());
}

TEST(Groups, InteriorAreaHasHundredDistinctTiles) {
  const World& w = world128();
  const auto cells = area_cells(w, 64.0, 64.0);
  EXPECT_EQ(cells.size(), 100u);
  std::set<std::pair<int, int>> uniq;
  for (const auto& c : cells) uniq.insert({c.x, c.y});
  EXPECT_EQ(uniq.size(), 100u);
}

TEST(Groups, CornerAreaIsClamped) {
  const World& w = world128();
  for (auto [x, y] : {std::pair{0.0, 0.0}, std::pair{127.0, 127.0}, std::pair{0.0, 127.0}}) {
    const auto cells = area_cells(w, x, y);
    EXPECT_GE(cells.size(), 25u);
    for (const auto& c : cells) EXPECT_TRUE(w.in_bounds(c.x, c.y));
  }
  expect_error([&] { area_cells(w, -1.0, 3.0); }, ErrorKind::out_of_bounds);
  expect_error([&] { area_cells(w, 3.0, 128.0); }, ErrorKind::out_of_bounds);
}

// ---------------------------------------------------------------------------
// Lights statistics

TEST(LightsStats, AllZeroArea) {
  const std::vector<int> v(100, 0);
  const auto f = lights_stats(v);
  ASSERT_EQ(f.size(), kLightFeatureDim);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[5], 100.0);
  for (std::size_t b = 6; b < 13; ++b) EXPECT_EQ(f[b], 0.0);
}

TEST(LightsStats, UniformTen) {
  const std::vector<int> v(100, 10);
  const auto f = lights_stats(v);
  EXPECT_EQ(f[3], 0.0);
  EXPECT_EQ(f[4], 10.0);
  EXPECT_EQ(f[5 + 3], 100.0);  // [8, 16)
}

TEST(LightsStats, HandBuiltTwoByTwo) {
  const std::vector<int> v{0, 2, 5, 40};
  const auto f = lights_stats(v);
  EXPECT_DOUBLE_EQ(f[0], 11.75);
  EXPECT_EQ(f[1], 40.0);
  EXPECT_EQ(f[2], 0.0);
  EXPECT_NEAR(f[3], std::sqrt(269.1875), 1e-12);
  EXPECT_EQ(f[4], 3.5);
  const std::vector<double> hist(f.begin() + 5, f.end());
  EXPECT_EQ(hist, (std::vector<double>{1, 1, 1, 0, 0, 0, 1, 0}));
}

TEST(LightsStats, HistogramSumsToTileCount) {
  const World& w = world128();
  for (double c : {5.0, 40.0, 64.0, 127.0}) {
    const auto cells = area_cells(w, c, c);
    const auto f = lights_features(w, cells);
    double s = 0;
    for (std::size_t b = 5; b < 13; ++b) s += f[b];
    EXPECT_EQ(s, static_cast<double>(cells.size()));
  }
  expect_error([] { lights_stats(std::vector<int>{}); }, ErrorKind::insufficient_data);
  EXPECT_EQ(lights_feature_names().size(), kLightFeatureDim);
}

// ---------------------------------------------------------------------------
// Transfer features

TEST(TransferFeatures, SingleTileAndHandMean) {
  const auto net = small_converted(3);
  const World& w = world128();
  std::vector<Image> tiles;
  for (int i = 0; i < 4; ++i) tiles.push_back(render_tile(w, 30 + 7 * i, 50, 96));
  std::vector<std::vector<double>> per;
  for (const auto& t : tiles) {
    const auto f = extract_features(net, to_batch<float>({t}));
    per.emplace_back(f.data().begin(), f.data().end());
  }
  const auto one = mean_features(net, {tiles[0]});
  ASSERT_EQ(one.size(), 24u);
  for (std::size_t k = 0; k < one.size(); ++k) EXPECT_DOUBLE_EQ(one[k], per[0][k]);
  const auto four = mean_features(net, tiles);
  for (std::size_t k = 0; k < four.size(); ++k)
    EXPECT_NEAR(four[k], (per[0][k] + per[1][k] + per[2][k] + per[3][k]) / 4.0, 1e-6);
}

TEST(TransferFeatures, OrderAndDuplicationInvariant) {
  const auto net = small_converted(4);
  const World& w = world128();
  std::vector<Cell> cells = area_cells(w, 60.0, 60.0, 3);
  const auto base = transfer_features(net, w, cells);
  std::reverse(cells.begin(), cells.end());
  EXPECT_EQ(transfer_features(net, w, cells), base);
  cells.insert(cells.end(), cells.begin(), cells.end());
  const auto dup = transfer_features(net, w, cells);
  for (std::size_t k = 0; k < base.size(); ++k) EXPECT_NEAR(dup[k], base[k], 1e-9 * (1 + std::abs(base[k])));
  expect_error([&] { mean_features(net, {}); }, ErrorKind::insufficient_data);
}

// ---------------------------------------------------------------------------
// Survey ingestion

TEST(Survey, AveragesNumericFields) {
  const auto p = write_survey("survey_avg",
                              "g1,h1,1,thatch,2,hut,1,2,0,20,900\n"
                              "g1,h2,0,metal,4,brick,3,4,1,22,1100\n");
  const auto s = ingest_survey(p.string());
  ASSERT_EQ(s.group_ids, std::vector<std::string>{"g1"});
  const auto& cols = s.block.columns;
  const auto at = [&](const std::string& c) {
    return s.block.rows[0][static_cast<std::size_t>(std::find(cols.begin(), cols.end(), c) - cols.begin())];
  };
  EXPECT_EQ(at("rooms"), 3.0);
  EXPECT_EQ(at("temp"), 21.0);
  EXPECT_EQ(at("roof=thatch") + at("roof=metal"), 1.0);
  EXPECT_EQ(at("roof=thatch"), 0.5);
  EXPECT_EQ(s.labels[0], 1);  // 1 of 2 poor: tie
  EXPECT_TRUE(std::is_sorted(cols.begin(), cols.end()));
}

TEST(Survey, ReingestionIsIdentical) {
  const World& w = world128();
  const auto groups = generate_groups(w, 12, 5);
  const auto dir = test_support::scratch_dir("survey_re");
  write_survey_csv(groups, (dir / "s.csv").string());
  const auto a = ingest_survey((dir / "s.csv").string());
  const auto b = ingest_survey((dir / "s.csv").string());
  EXPECT_EQ(a.block.rows, b.block.rows);
  EXPECT_EQ(a.block.columns, b.block.columns);
  for (std::size_t i = 0; i < groups.size(); ++i) EXPECT_EQ(a.labels[i], groups[i].label());
}

TEST(Survey, UnknownGroupAndMissingColumn) {
  const auto p = write_survey("survey_ref", "g9,h1,1,thatch,2,hut,1,2,0,20,900\n");
  const std::string msg =
      expect_error([&] { ingest_survey(p.string(), {"g1", "g2"}); }, ErrorKind::referential);
  EXPECT_NE(msg.find("g9"), std::string::npos);
  const auto dir = test_support::scratch_dir("survey_cols");
  std::ofstream(dir / "s.csv") << "group_id,household_id,poor\ng1,h1,1\n";
  expect_error([&] { ingest_survey((dir / "s.csv").string()); }, ErrorKind::malformed_input);
  expect_error([] { ingest_survey("/nonexistent/s.csv"); }, ErrorKind::missing_input);
}

// ---------------------------------------------------------------------------
// Feature table

namespace {

FeatureTable two_block_table() {
  FeatureTable t;
  t.row_ids = {"a", "b"};
  t.labels = {0, 1};
  t.add_block("lights", FeatureBlock{lights_feature_names(), {std::vector<double>(13, 1.0),
                                                              std::vector<double>(13, 2.0)}});
  FeatureBlock tr;
  for (int k = 0; k < 256; ++k) tr.columns.push_back("f" + std::to_string(k));
  tr.rows = {std::vector<double>(256, 3.0), std::vector<double>(256, 4.0)};
  t.add_block("transfer", tr);
  return t;
}

}  // namespace

TEST(FeatureTableTest, ConcatWidthsAndOrder) {
  const auto t = two_block_table();
  const auto one = concat_blocks(t, {"lights"});
  EXPECT_EQ(one.cols, 13u);
  EXPECT_EQ(one(1, 0), 2.0);
  const auto ab = concat_blocks(t, {"lights", "transfer"});
  const auto ba = concat_blocks(t, {"transfer", "lights"});
  EXPECT_EQ(ab.cols, 269u);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 269; ++c) EXPECT_EQ(ab(r, c), ba(r, (c + 256) % 269));
  expect_error([&] { concat_blocks(t, {"survey"}); }, ErrorKind::invalid_argument);
}

TEST(FeatureTableTest, RejectsBadBlocks) {
  auto t = two_block_table();
  expect_error([&] { t.add_block("lights", FeatureBlock{{"x"}, {{1.0}, {2.0}}}); }, ErrorKind::uniqueness);
  expect_error([&] { t.add_block("short", FeatureBlock{{"x"}, {{1.0}}}); }, ErrorKind::dimension);
  expect_error([&] { t.add_block("nan", FeatureBlock{{"x"}, {{1.0}, {NAN}}}); }, ErrorKind::numeric);
}

TEST(FeatureTableTest, CsvHasBlockPrefixes) {
  const auto dir = test_support::scratch_dir("ftable");
  write_feature_table(two_block_table(), (dir / "t.csv").string());
  const auto csv = read_csv((dir / "t.csv").string());
  EXPECT_EQ(csv.header.size(), 2u + 269u);
  EXPECT_EQ(csv.header[2], "lights.mean");
  EXPECT_EQ(csv.header.back(), "transfer.f255");
  EXPECT_EQ(csv.rows.size(), 2u);
}

TEST(FeatureTableTest, ReadBackIsExact) {
  auto t = two_block_table();
  t.add_block("survey", FeatureBlock{{"roof=metal", "rooms"}, {{0.25, 1.0 / 3.0}, {0.1, 2.5}}});
  const auto dir = test_support::scratch_dir("ftable_read");
  write_feature_table(t, (dir / "t.csv").string());
  const auto back = read_feature_table((dir / "t.csv").string());
  EXPECT_EQ(back.row_ids, t.row_ids);
  EXPECT_EQ(back.labels, t.labels);
  ASSERT_EQ(back.blocks.size(), 3u);
  for (const auto& [name, b] : t.blocks) {
    EXPECT_EQ(back.block(name).columns, b.columns) << name;
    EXPECT_EQ(back.block(name).rows, b.rows) << name;
  }
  EXPECT_EQ(back.mean_intensity, (std::vector<double>{1.0, 2.0}));

  std::ofstream(dir / "bad.csv") << "group_id,label,nodot\na,0,1\n";
  expect_error([&] { read_feature_table((dir / "bad.csv").string()); }, ErrorKind::malformed_input);
  std::ofstream(dir / "dup.csv") << "group_id,label,x.a\na,0,1\na,1,2\n";
  expect_error([&] { read_feature_table((dir / "dup.csv").string()); }, ErrorKind::uniqueness);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

// Brute force over all positive/negative pairs.
std::optional<double> pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  if (den == 0) return std::nullopt;
  return num / den;
}

}  // namespace

TEST(MetricsTest, PerfectPredictions) {
  const std::vector<int> y{0, 1, 1, 0, 1};
  const auto m = compute_metrics(y, y, {0.1, 0.9, 0.8, 0.2, 0.7});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.auc, 1.0);
}

TEST(MetricsTest, AllNegativePredictions) {
  std::vector<int> y(10, 0);
  y[0] = y[1] = y[2] = 1;
  const auto m = compute_metrics(y, std::vector<int>(10, 0));
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(MetricsTest, AucWithTieMatchesPairs) {
  const std::vector<int> y{1, 0, 1, 0, 1, 0};
  const std::vector<double> s{0.9, 0.4, 0.4, 0.1, 0.7, 0.8};
  const auto a = auc(y, s);
  ASSERT_TRUE(a.has_value());
  EXPECT_DOUBLE_EQ(*a, *pairwise_auc(y, s));
  EXPECT_DOUBLE_EQ(*a, 6.5 / 9.0);
}

TEST(MetricsTest, RandomCasesMatchBruteForce) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    std::vector<int> y(n), p(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      p[i] = static_cast<int>(rng() % 2);
      s[i] = static_cast<double>(rng() % 5) / 4.0;  // coarse scores force ties
    }
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] && p[i]) ++tp;
      if (!y[i] && p[i]) ++fp;
      if (!y[i] && !p[i]) ++tn;
      if (y[i] && !p[i]) ++fn;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const auto m = compute_metrics(y, p, s);
    EXPECT_EQ(m.accuracy, (tp + tn) / static_cast<double>(n));
    EXPECT_EQ(m.precision, prec);
    EXPECT_EQ(m.recall, rec);
    EXPECT_EQ(m.f1, f1);
    const auto ref = pairwise_auc(y, s);
    ASSERT_EQ(m.auc.has_value(), ref.has_value());
    if (ref) {
      EXPECT_EQ(*m.auc, *ref) << "trial " << trial;
    }
  }
}

TEST(MetricsTest, ErrorsAndUndefinedAuc) {
  expect_error([] { compute_metrics(std::vector<int>{1, 0}, std::vector<int>{1}); }, ErrorKind::dimension);
  EXPECT_FALSE(auc(std::vector<int>{1, 1, 1}, std::vector<double>{0.1, 0.2, 0.3}).has_value());
}

// ---------------------------------------------------------------------------
// L1 logistic regression

namespace {

DMat to_mat(const std::vector<std::vector<double>>& rows) {
  DMat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

struct Problem {
  DMat X;
  std::vector<int> y;
};

Problem random_problem(std::uint64_t seed, std::size_t n, std::size_t d, double signal = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Problem p{DMat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)), {}};
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.3;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = g(rng);
      p.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      if (j < 2) z += signal * v * (j == 0 ? 1.5 : -1.0);
    }
    p.y.push_back(u(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0);
  }
  return p;
}

}  // namespace

TEST(LogReg, KillThresholdZeroesWeights) {
  const auto p = random_problem(1, 80, 6);
  const double kill = kill_threshold(p.X, p.y);
  const auto m = fit_l1_logreg(p.X, p.y, kill * 1.0001);
  EXPECT_EQ(m.weights.cwiseAbs().maxCoeff(), 0.0);
  double rate = 0;
  for (int v : p.y) rate += v;
  rate /= p.y.size();
  EXPECT_NEAR(m.intercept, std::log(rate / (1 - rate)), 1e-6);
  const auto below = fit_l1_logreg(p.X, p.y, kill * 0.8);
  EXPECT_GT(below.weights.cwiseAbs().maxCoeff(), 0.0);
}

TEST(LogReg, SeparableTwoPointsGetsSign) {
  const DMat X = to_mat({{-1.0}, {1.0}});
  const auto m = fit_l1_logreg(X, {0, 1}, 0.0, {200, 0.0, nullptr});
  EXPECT_GT(m.weights[0], 0.0);
  const auto flipped = fit_l1_logreg(X, {1, 0}, 0.0, {200, 0.0, nullptr});
  EXPECT_LT(flipped.weights[0], 0.0);
}

TEST(LogReg, ObjectiveNonincreasing) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = random_problem(seed, 60, 10);
    const auto m = fit_l1_logreg(p.X, p.y, 0.02);
    for (std::size_t i = 1; i < m.objective.size(); ++i)
      EXPECT_LE(m.objective[i], m.objective[i - 1] + 1e-12);
    EXPECT_TRUE(m.converged);
  }
}

TEST(LogReg, MatchesBruteForceGrid) {
  const auto p = random_problem(42, 20, 2, 0.8);
  const double lambda = 0.1;
  const auto m = fit_l1_logreg(p.X, p.y, lambda);
  const double ours = logreg_objective(p.X, p.y, m.weights, m.intercept, lambda);
  // Grid over (w1, w2) in [-5, 5] at step 0.01; b is solved exactly by Newton
  // for each pair (convex in b), which can only lower the grid value.
  double best = INFINITY;
  double b = 0.0;
  std::vector<double> z(20);
  for (int i = -500; i <= 500; ++i)
    for (int j = -500; j <= 500; ++j) {
      const double w1 = i * 0.01, w2 = j * 0.01;
      for (std::size_t r = 0; r < 20; ++r) z[r] = w1 * p.X(static_cast<Eigen::Index>(r), 0) + w2 * p.X(static_cast<Eigen::Index>(r), 1);
      for (int it = 0; it < 30; ++it) {
        double g = 0, h = 0;
        for (std::size_t r = 0; r < 20; ++r) {
          const double s = 1.0 / (1.0 + std::exp(-(z[r] + b)));
          g += s - p.y[r];
          h += s * (1 - s);
        }
        const double step = g / std::max(h, 1e-12);
        b -= step;
        if (std::abs(step) < 1e-10) break;
      }
      double f = 0;
      for (std::size_t r = 0; r < 20; ++r) {
        const double t = z[r] + b;
        f += (t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) - p.y[r] * t;
      }
      best = std::min(best, f / 20 + lambda * (std::abs(w1) + std::abs(w2)));
    }
  EXPECT_NEAR(ours, best, 1e-4);
  EXPECT_LE(ours, best + 1e-9);
}

TEST(LogReg, PredictProba) {
  LogRegModel zero;
  zero.weights = DVec::Zero(3);
  EXPECT_EQ(predict_proba(zero, DMat::Ones(2, 3)), (std::vector<double>{0.5, 0.5}));
  LogRegModel one;
  one.weights = DVec::Constant(1, 2.0);
  one.intercept = -1.0;
  const auto p = predict_proba(one, to_mat({{0.0}, {0.5}, {1.0}, {3.0}}));
  EXPECT_DOUBLE_EQ(p[0], 1.0 / (1.0 + std::exp(1.0)));
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_DOUBLE_EQ(p[2], 1.0 / (1.0 + std::exp(-1.0)));
  EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
  expect_error([&] { predict_proba(one, DMat::Ones(2, 2)); }, ErrorKind::dimension);
}

TEST(LogReg, InputErrors) {
  const DMat X = to_mat({{1.0}, {2.0}});
  expect_error([&] { fit_l1_logreg(X, {0, 2}, 0.1); }, ErrorKind::invalid_argument);
  DMat bad = X;
  bad(1, 0) = NAN;
  expect_error([&] { fit_l1_logreg(bad, {0, 1}, 0.1); }, ErrorKind::numeric);
  expect_error([&] { fit_l1_logreg(X, {0, 1, 1}, 0.1); }, ErrorKind::dimension);
}

// ---------------------------------------------------------------------------
// Nested cross-validation

TEST(Folds, StratifiedDisjointCovering) {
  std::vector<int> y;
  for (int i = 0; i < 93; ++i) y.push_back(i % 3 == 0 ? 1 : 0);
  const auto f = stratified_folds(y, 10, 4);
  std::vector<std::array<int, 2>> counts(10, {0, 0});
  for (std::size_t i = 0; i < y.size(); ++i) {
    ASSERT_LT(f[i], 10u);
    counts[f[i]][static_cast<std::size_t>(y[i])]++;
  }
  for (int c = 0; c < 2; ++c) {
    int lo = 1 << 20, hi = 0;
    for (const auto& k : counts) {
      lo = std::min(lo, k[static_cast<std::size_t>(c)]);
      hi = std::max(hi, k[static_cast<std::size_t>(c)]);
    }
    EXPECT_LE(hi - lo, 1);
  }
  EXPECT_EQ(stratified_folds(y, 10, 4), f);
}

TEST(Folds, TooFewOfAClass) {
  std::vector<int> y(50, 0);
  for (int i = 0; i < 9; ++i) y[static_cast<std::size_t>(i)] = 1;
  expect_error([&] { stratified_folds(y, 10, 1); }, ErrorKind::fold);
  expect_error([] { stratified_folds(std::vector<int>(30, 1), 10, 1); }, ErrorKind::fold);
}

TEST(NestedCv, PerfectFeatureEveryFold) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  DMat X(60, 3);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 60; ++i) {
    const int label = i % 2;
    y.push_back(label);
    X(i, 0) = label ? 2.0 + std::abs(g(rng)) : -2.0 - std::abs(g(rng));
    X(i, 1) = g(rng);
    X(i, 2) = g(rng);
  }
  const auto rep = nested_cv(X, y, {});
  for (const auto& f : rep.folds) EXPECT_EQ(f.metrics.accuracy, 1.0) << "fold " << f.fold;
  EXPECT_EQ(rep.mean.accuracy, 1.0);
}

TEST(NestedCv, NoLeakageAndExactAveraging) {
  const auto p = random_problem(9, 70, 5);
  const auto rep = nested_cv(p.X, p.y, {});
  EXPECT_TRUE(rep.leakage().empty());
  std::set<std::size_t> all;
  for (const auto& f : rep.folds) {
    EXPECT_FALSE(f.tuning_rows.empty());
    all.insert(f.test_rows.begin(), f.test_rows.end());
    EXPECT_GE(f.lambda, 0.0);
    EXPECT_LE(f.lambda, f.lambda_max * (1.0 + 1.0 / 19.0) + 1e-12);
  }
  EXPECT_EQ(all.size(), 70u);
  double acc = 0, f1 = 0;
  for (const auto& f : rep.folds) {
    acc += f.metrics.accuracy;
    f1 += f.metrics.f1;
  }
  EXPECT_EQ(rep.mean.accuracy, acc / 10.0);
  EXPECT_EQ(rep.mean.f1, f1 / 10.0);
}

TEST(NestedCv, PureNoiseNearBaseRate) {
  double mean_acc = 0;
  const std::size_t n = 80;
  const double base = 0.6;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    DMat X(static_cast<Eigen::Index>(n), 8);
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      y.push_back(i < static_cast<std::size_t>(base * n) ? 0 : 1);
      for (Eigen::Index j = 0; j < 8; ++j) X(static_cast<Eigen::Index>(i), j) = g(rng);
    }
    CvOptions o;
    o.seed = seed;
    const auto rep = nested_cv(X, y, o);
    EXPECT_TRUE(rep.leakage().empty());
    mean_acc += rep.mean.accuracy / 10.0;
  }
  const double sigma = std::sqrt(base * (1 - base) / (10.0 * n));
  EXPECT_NEAR(mean_acc, base, 3 * sigma) << "mean accuracy " << mean_acc;
}

TEST(NestedCv, ReportCsvHasFoldAndMeanRows) {
  const auto p = random_problem(2, 50, 3);
  const auto rep = nested_cv(p.X, p.y, {});
  const auto dir = test_support::scratch_dir("cvcsv");
  write_cv_csv(rep, (dir / "r.csv").string());
  const auto csv = read_csv((dir / "r.csv").string());
  ASSERT_EQ(csv.rows.size(), 11u);
  EXPECT_EQ(csv.rows.back().fields[0], "mean");
  const auto table = format_family_table({{"Lights", rep}});
  EXPECT_NE(table.find("Accuracy"), std::string::npos);
  EXPECT_NE(table.find("AUC"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Zero-light conditional analysis

TEST(Conditional, HandCountsAndUndefined) {
  const auto r = conditional_analysis({0.0, 0.0, 3.0, 7.5}, {1, 0, 0, 1}, {1, 1, 0, 0});
  EXPECT_EQ(r.poor_given_dark.value, 0.5);
  EXPECT_EQ(r.poor_given_dark.count, 2u);
  EXPECT_EQ(r.pred_poor_given_dark.value, 1.0);
  EXPECT_EQ(r.poor_given_lit.value, 0.5);
  const auto all_dark_poor = conditional_analysis({0.0, 0.0}, {1, 1}, {0, 1});
  EXPECT_EQ(all_dark_poor.poor_given_dark.value, 1.0);
  EXPECT_FALSE(all_dark_poor.poor_given_lit.value.has_value());
  EXPECT_EQ(all_dark_poor.poor_given_lit.count, 0u);
}
