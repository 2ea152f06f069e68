#include <gtest/gtest.h>

#include <cmath>
#include <tuple>

#include "depthsynth/patch_index.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"

using namespace depthsynth;

using oracle::random_db;
using oracle::scan;

TEST(Windows, FiveByFiveHasNineInteriorPatches) {
  const Mask m(25, 1);
  const PatchWindows w = accepted_windows(m, 5, 5, 3);
  ASSERT_EQ(w.centers.size(), 9u);
  EXPECT_EQ(w.centers.front(), (PixelCoord{1, 1}));
  EXPECT_EQ(w.centers.back(), (PixelCoord{3, 3}));
}

TEST(Windows, HalfCoverageRule) {
  // 3x3 window needs 5 foreground pixels and a foreground center.
  Mask m = {0, 0, 0,  //
            1, 1, 1,  //
            1, 0, 0};
  EXPECT_EQ(accepted_windows(m, 3, 3, 3).centers.size(), 0u);
  m[8] = 1;
  EXPECT_EQ(accepted_windows(m, 3, 3, 3).centers.size(), 1u);
  m[4] = 0;
  EXPECT_EQ(accepted_windows(m, 3, 3, 3).centers.size(), 0u);
}

TEST(Windows, Errors) {
  const Mask m(25, 1);
  EXPECT_THROW(accepted_windows(m, 5, 5, 4), Error);
  EXPECT_THROW(accepted_windows(m, 5, 5, 1), Error);
  EXPECT_THROW(accepted_windows(m, 5, 5, 7), Error);
  EXPECT_THROW(accepted_windows(m, 5, 4, 3), Error);
}

TEST(Features, ZScoreOfWindow) {
  std::vector<double> v(25);
  for (int i = 0; i < 25; ++i) v[i] = 3.0 + 2.0 * i;
  const ChannelGrid g(5, 5, v, Mask(25, 1));
  const PatchFeatureSet f = extract_patches({{"i", &g, 1.0, Normalization::zscore, -1, false}}, 3, {});
  // window at (1,1): values 3+2*{0,1,2,5,6,7,10,11,12}
  const double idx[9] = {0, 1, 2, 5, 6, 7, 10, 11, 12};
  double mean = 0;
  for (double x : idx) mean += x;
  mean /= 9;
  double var = 0;
  for (double x : idx) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / 9);
  for (int j = 0; j < 9; ++j) EXPECT_NEAR(f.row(0)[j], (idx[j] - mean) / sd, 1e-12);
}

TEST(Features, WeightedAssemblyByHand) {
  // intensity 0.2140 (z-scored), depth 0.1116 (raw), position 0.0092
  testgen::Gen gen(4);
  const ChannelGrid in = gen.grid(7, 7, gen.full_mask(7, 7));
  const ChannelGrid dp = gen.grid(7, 7, gen.full_mask(7, 7), -2, 2);
  ExtractOptions o;
  o.position_weight = 0.0092;
  o.centroid = {2.5, 3.25};
  const PatchFeatureSet f = extract_patches(
      {{"intensity", &in, 0.2140, Normalization::zscore, -1, false},
       {"depth", &dp, 0.1116, Normalization::none, -1, false}},
      5, o);
  ASSERT_EQ(f.layout.dim, 25 + 25 + 2);
  ASSERT_EQ(f.layout.segments.size(), 3u);
  EXPECT_EQ(f.layout.segments[2].name, "position");
  for (std::size_t r = 0; r < f.size(); ++r) {
    const PixelCoord c = f.centers[r];
    std::vector<double> w;
    for (int y = c.y - 2; y <= c.y + 2; ++y)
      for (int x = c.x - 2; x <= c.x + 2; ++x) w.push_back(in.at(x, y));
    double m = 0, v = 0;
    for (double x : w) m += x;
    m /= 25;
    for (double x : w) v += (x - m) * (x - m);
    const double sd = std::sqrt(v / 25);
    int j = 0;
    for (int y = c.y - 2; y <= c.y + 2; ++y) {
      for (int x = c.x - 2; x <= c.x + 2; ++x, ++j) {
        EXPECT_NEAR(f.row(r)[j], std::sqrt(0.2140) * (in.at(x, y) - m) / sd, 1e-12);
        EXPECT_NEAR(f.row(r)[25 + j], std::sqrt(0.1116) * dp.at(x, y), 1e-12);
      }
    }
    EXPECT_NEAR(f.row(r)[50], std::sqrt(0.0092) * (c.x - 2.5), 1e-12);
    EXPECT_NEAR(f.row(r)[51], std::sqrt(0.0092) * (c.y - 3.25), 1e-12);
  }
}

TEST(Features, FlatWindowIsZero) {
  const ChannelGrid g(5, 5, 0.7, true);
  const PatchFeatureSet f = extract_patches({{"i", &g, 1.0, Normalization::zscore, -1, false}}, 3, {});
  for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(Features, IlluminationInvariance) {
  // a*I + b gives the same z-scored and ref-scaled entries for a > 0.
  testgen::Gen gen(8);
  const Mask m = gen.blob_mask(12, 12);
  const ChannelGrid i1 = gen.smooth(12, 12, m);
  const ChannelGrid h1 = gen.grid(12, 12, m, -0.1, 0.1);
  std::vector<double> a(m.size()), b(m.size());
  for (std::size_t p = 0; p < m.size(); ++p) {
    a[p] = m[p] ? 1.7 * i1[p] + 0.3 : 0;
    b[p] = m[p] ? 1.7 * h1[p] : 0;
  }
  const ChannelGrid i2(12, 12, a, m), h2(12, 12, b, m);
  auto stack = [](const ChannelGrid* i, const ChannelGrid* h) {
    return std::vector<FeatureChannel>{{"i", i, 0.3, Normalization::zscore, -1, false},
                                       {"i_hf", h, 0.3, Normalization::scale_by_ref, 0, false}};
  };
  const PatchFeatureSet f1 = extract_patches(stack(&i1, &h1), 3, {});
  const PatchFeatureSet f2 = extract_patches(stack(&i2, &h2), 3, {});
  ASSERT_EQ(f1.data.size(), f2.data.size());
  for (std::size_t j = 0; j < f1.data.size(); ++j) EXPECT_NEAR(f1.data[j], f2.data[j], 1e-9);
}

TEST(Features, ZeroPositionWeightIgnoresLocation) {
  // Same content at two places: distance 0 with weight 0, positive otherwise.
  std::vector<double> v(100, 0.0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) v[y * 10 + x] = ((x * 7 + y * 3) % 5) * 0.1;
  const ChannelGrid g(10, 10, v, Mask(100, 1));
  for (double pw : {0.0, 0.5}) {
    ExtractOptions o;
    o.position_weight = pw;
    const PatchFeatureSet f = extract_patches({{"i", &g, 1.0, Normalization::none, -1, false}}, 3, o);
    // windows at (2,2) and (7,2) see identical content (period 5 in x)
    std::size_t a = 0, b = 0;
    for (std::size_t r = 0; r < f.size(); ++r) {
      if (f.centers[r] == PixelCoord{2, 2}) a = r;
      if (f.centers[r] == PixelCoord{7, 2}) b = r;
    }
    const double d = feature_distance(f.row(a), f.row(b), f.layout, all_present(f.layout));
    if (pw == 0.0) {
      EXPECT_EQ(d, 0.0);
    } else {
      EXPECT_NEAR(d, 0.5 * 25, 1e-12);
    }
  }
}

TEST(Features, AbsentChannelIsExcluded) {
  testgen::Gen gen(2);
  const ChannelGrid a = gen.grid(6, 6, gen.full_mask(6, 6));
  const PatchFeatureSet f = extract_patches(
      {{"a", &a, 1.0, Normalization::none, -1, false}, {"b", nullptr, 1.0, Normalization::none, -1, true}}, 3,
      {});
  EXPECT_EQ(f.present, PresenceMask{0b101});
}

TEST(Features, Errors) {
  const ChannelGrid a(6, 6, 1.0, true), b(5, 6, 1.0, true);
  EXPECT_THROW(extract_patches({{"a", &a, 1, Normalization::none, -1, false},
                                {"b", &b, 1, Normalization::none, -1, false}},
                               3, {}),
               Error);
  EXPECT_THROW(extract_patches({{"a", &a, -1, Normalization::none, -1, false}}, 3, {}), Error);
  EXPECT_THROW(extract_patches({{"a", &a, 1, Normalization::scale_by_ref, 0, false}}, 3, {}), Error);
  EXPECT_THROW(extract_patches({{"a", nullptr, 1, Normalization::none, -1, false}}, 3, {}), Error);
}

TEST(Aggregation, GaussianWeights) {
  const auto g = aggregation_weights(3, 1.0);
  EXPECT_DOUBLE_EQ(g[4], 1.0);
  EXPECT_NEAR(g[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(g[1], std::exp(-0.5), 1e-15);
  for (double v : aggregation_weights(5, INFINITY)) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(aggregation_weights(3, 0.0), Error);
}

TEST(Index, ExactMatchesLinearScanProperty) {
  // 1000 random query/index pairs spread over 40 databases.
  int checked = 0;
  for (int db = 0; db < 40; ++db) {
    testgen::Gen g(500 + db);
    std::vector<ChannelGrid> keep;
    const int k = g.coin() ? 3 : 5;
    PatchFeatureSet set = random_db(g, g.integer(1, 3), g.integer(k + 2, 16), g.integer(k + 2, 16), k,
                                    g.coin() ? 0.0 : 0.05, keep);
    if (g.coin(0.3)) {  // duplicate rows to force ties
      set.append(set);
    }
    const PatchIndex index = build_index(set);
    for (int q = 0; q < 25; ++q, ++checked) {
      std::vector<double> v(set.layout.dim);
      const std::size_t base = static_cast<std::size_t>(g.integer(0, static_cast<int>(set.size()) - 1));
      for (int j = 0; j < set.layout.dim; ++j) v[j] = set.row(base)[j] + g.uniform(-0.3, 0.3);
      const PresenceMask mask = g.coin() ? all_present(set.layout) : PresenceMask{0b101};
      const PatchQueryResult got = index.query(v.data(), mask);
      const PatchQueryResult want = scan(set, v.data(), mask);
      ASSERT_EQ(got.example, want.example) << "db " << db << " q " << q;
      ASSERT_EQ(got.center, want.center) << "db " << db << " q " << q;
      ASSERT_NEAR(got.distance, want.distance, 1e-9);
      const PatchQueryResult bf = index.brute_force(v.data(), mask);
      EXPECT_EQ(bf.row, want.row);
    }
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Index, ApproximateWithinBound) {
  testgen::Gen g(31);
  std::vector<ChannelGrid> keep;
  PatchFeatureSet set = random_db(g, 3, 20, 20, 5, 0.01, keep);
  SearchOptions opt;
  opt.eps = 0.5;
  const PatchIndex index = build_index(set, opt);
  for (int q = 0; q < 100; ++q) {
    std::vector<double> v(set.layout.dim);
    for (auto& x : v) x = g.uniform(-1, 1);
    const auto got = index.query(v.data(), all_present(set.layout));
    const auto want = scan(set, v.data(), all_present(set.layout));
    EXPECT_LE(got.distance, (1.0 + opt.eps) * want.distance + 1e-12);
  }
}

TEST(Index, HintsDoNotChangeAnswer) {
  testgen::Gen g(12);
  std::vector<ChannelGrid> keep;
  PatchFeatureSet set = random_db(g, 2, 14, 14, 3, 0.0, keep);
  const PatchIndex index = build_index(set);
  for (int q = 0; q < 50; ++q) {
    std::vector<double> v(set.layout.dim);
    for (auto& x : v) x = g.uniform(-1, 1);
    std::vector<std::size_t> hints = {static_cast<std::size_t>(g.integer(0, static_cast<int>(set.size()) - 1))};
    EXPECT_EQ(index.query(v.data(), all_present(set.layout), hints).row,
              index.query(v.data(), all_present(set.layout)).row);
  }
}

TEST(Index, TieBreakOnExampleThenRowMajor) {
  std::vector<PatchFeature> fs = {
      {{3, 1}, {1.0, 0.0}, 1, 0}, {{2, 2}, {0.0, 1.0}, 0, 0}, {{1, 2}, {0.0, 1.0}, 0, 0}, {{0, 0}, {1.0, 0.0}, 0, 0}};
  const PatchIndex index = build_index(fs);
  // equidistant from all four
  const PatchQueryResult r = query_nearest(index, {{}, {0.5, 0.5}, -1, 0});
  EXPECT_EQ(r.example, 0);
  EXPECT_EQ(r.center, (PixelCoord{0, 0}));
  const PatchQueryResult r2 = query_nearest(index, {{}, {0.0, 1.0}, -1, 0});
  EXPECT_EQ(r2.center, (PixelCoord{1, 2}));
}

TEST(Index, RowLookup) {
  testgen::Gen g(3);
  std::vector<ChannelGrid> keep;
  PatchFeatureSet set = random_db(g, 2, 9, 9, 3, 0.0, keep);
  const PatchIndex index = build_index(set);
  for (std::size_t r = 0; r < set.size(); ++r) EXPECT_EQ(index.row_of(set.examples[r], set.centers[r]), static_cast<long>(r));
  EXPECT_EQ(index.row_of(7, {1, 1}), -1);
}

TEST(Index, Errors) {
  EXPECT_THROW(build_index(std::vector<PatchFeature>{}), Error);
  EXPECT_THROW(build_index(std::vector<PatchFeature>{{{0, 0}, {1.0}, 0, 0}, {{0, 0}, {1.0, 2.0}, 0, 0}}), Error);
  const PatchIndex index = build_index(std::vector<PatchFeature>{{{0, 0}, {1.0, 2.0}, 0, 0}});
  EXPECT_THROW(query_nearest(index, {{}, {1.0}, -1, 0}), Error);
}
