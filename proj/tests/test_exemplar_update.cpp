#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "depthsynth/exemplar_update.hpp"
#include "depthsynth/modes.hpp"
#include "support/fixtures.hpp"
#include "support/gen.hpp"

using namespace depthsynth;

using testfx::residual_oracle;

TEST(UpdateViews, SymmetricMeanDropsFirstListed) {
  const ViewUpdate u = update_views({{{0, 0}, {20, 0}}, {}, {}, 10.0}, {100, 100});
  EXPECT_DOUBLE_EQ(u.mean.alpha, 10.0);
  EXPECT_DOUBLE_EQ(u.mean.beta, 0.0);
  ASSERT_TRUE(u.dropped);
  EXPECT_EQ(*u.dropped, (ViewAngles{0, 0}));
  EXPECT_FALSE(u.merged);
  ASSERT_EQ(u.state.active_views.size(), 2u);
  EXPECT_EQ(u.state.active_views[0], (ViewAngles{20, 0}));
  EXPECT_EQ(u.state.active_views[1], (ViewAngles{10, 0}));
}

TEST(UpdateViews, DegenerateWeightsMerge) {
  const ViewUpdate u = update_views({{{0, 0}, {20, 0}}, {}, {}, 10.0}, {0, 300});
  EXPECT_DOUBLE_EQ(u.mean.alpha, 20.0);
  EXPECT_TRUE(u.merged);
  ASSERT_EQ(u.state.active_views.size(), 1u);
  EXPECT_EQ(u.state.active_views[0], (ViewAngles{20, 0}));
}

TEST(UpdateViews, SeedLayoutSnapsToNearestGridView) {
  std::vector<ViewAngles> grid;
  for (int a = -20; a <= 20; a += 5)
    for (int b = -40; b <= 0; b += 5) grid.push_back({double(a), double(b)});
  const std::vector<ViewAngles> seeds = {{20, 0}, {-20, 0}, {20, -40}, {-20, -40}};
  // usage weights with mean (-6, -24): alpha share on +20 is 0.35, beta share on -40 is 0.6
  const std::vector<double> usage = {0.35 * 0.4, 0.65 * 0.4, 0.35 * 0.6, 0.65 * 0.6};
  const ViewUpdate u = update_views({seeds, {}, grid, 10.0}, usage);
  EXPECT_NEAR(u.mean.alpha, -6.0, 1e-12);
  EXPECT_NEAR(u.mean.beta, -24.0, 1e-12);
  ViewAngles best = grid.front();
  for (const auto& v : grid)
    if (angular_distance(v, u.mean) < angular_distance(best, u.mean)) best = v;
  EXPECT_EQ(u.snapped, best);
  EXPECT_EQ(*u.dropped, (ViewAngles{20, 0}));
  EXPECT_FALSE(u.merged);
  EXPECT_EQ(u.state.active_views.back(), best);
}

TEST(UpdateViews, TrajectoryApproachesHeavilyUsedRegion) {
  std::vector<ViewAngles> grid;
  for (int a = -20; a <= 20; a += 2)
    for (int b = -40; b <= 0; b += 2) grid.push_back({double(a), double(b)});
  const ViewAngles target{-6, -24};
  ViewState vs{{{20, 0}, {-20, 0}, {20, -40}, {-20, -40}}, {}, grid, 5.0};
  double prev = INFINITY;
  for (int step = 0; step < 2; ++step) {
    std::vector<double> usage;
    for (const auto& v : vs.active_views) usage.push_back(1000.0 / (1.0 + angular_distance(v, target)));
    const ViewUpdate u = update_views(vs, usage);
    const double d = angular_distance(u.snapped, target);
    EXPECT_LT(d, prev) << "step " << step;
    prev = d;
    vs = u.state;
  }
}

TEST(UpdateViews, NoopAndErrors) {
  const ViewUpdate u = update_views({{{5, 5}}, {}, {}, 10.0}, {3});
  EXPECT_TRUE(u.noop);
  EXPECT_EQ(u.state.active_views.size(), 1u);
  EXPECT_THROW(update_views({{}, {}, {}, 10.0}, {}), Error);
  EXPECT_THROW(update_views({{{0, 0}, {1, 1}}, {}, {}, 10.0}, {1}), Error);
  EXPECT_THROW(update_views({{{0, 0}, {100, 1}}, {}, {}, 10.0}, {1, 1}), Error);
  EXPECT_THROW(update_views({{{0, 0}, {10, 1}}, {}, {}, 10.0}, {1, -1}), Error);
}

TEST(AlignedResidual, TranslationAndOffsetCancel) {
  testgen::Gen g(6);
  Mask m(400, 0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) m[y * 20 + x] = (x - 9) * (x - 9) + (y - 10) * (y - 12) / 2 < 30;
  const ChannelGrid d = g.smooth(20, 20, m);
  const ChannelGrid moved = shifted(translated(d, 2, -1), 3.0);
  EXPECT_NEAR(aligned_residual(d, moved), 0.0, 1e-20);
  EXPECT_TRUE(std::isinf(aligned_residual(d, ChannelGrid(20, 20))));
}

TEST(AlignedResidual, MatchesOracle) {
  for (int s = 0; s < 30; ++s) {
    testgen::Gen g(60 + s);
    const int w = g.integer(8, 20), h = g.integer(8, 20);
    const ChannelGrid a = g.grid(w, h, g.blob_mask(w, h)), b = g.grid(w, h, g.blob_mask(w, h));
    EXPECT_NEAR(aligned_residual(a, b), residual_oracle(a, b), 1e-12);
  }
}

TEST(UpdateObjects, ExactCopyAdmittedFirst) {
  testgen::Gen g(7);
  const Mask m = g.blob_mask(16, 16);
  const ChannelGrid cur = g.smooth(16, 16, m);
  std::vector<ObjectCandidate> pool = {{"a", g.smooth(16, 16, m)}, {"b", g.smooth(16, 16, m)}, {"z", cur}};
  const ObjectUpdate u = update_objects({{"a", 5}, {"q", 1}}, cur, pool, 1, 2);
  EXPECT_EQ(u.dropped, std::vector<std::string>{"q"});
  ASSERT_EQ(u.admitted.size(), 1u);
  EXPECT_EQ(u.admitted[0], "z");
  EXPECT_EQ(u.ranking.front().first, "z");
}

TEST(UpdateObjects, IdenticalCandidatesTieToLowestId) {
  const ChannelGrid d(8, 8, 1.0, true);
  const ObjectUpdate u = update_objects({{"m", 2}, {"n", 1}}, d, {{"y", d}, {"c", d}, {"k", d}}, 1, 2);
  EXPECT_EQ(u.admitted, std::vector<std::string>{"c"});
  EXPECT_EQ(u.kept, std::vector<std::string>{"m"});
}

TEST(UpdateObjects, SixCandidateOrderMatchesOracle) {
  testgen::Gen g(8);
  const ChannelGrid cur = g.smooth(18, 18, g.blob_mask(18, 18));
  std::vector<ObjectCandidate> pool;
  for (int i = 0; i < 6; ++i) pool.push_back({"o" + std::to_string(i), g.smooth(18, 18, g.blob_mask(18, 18))});
  std::vector<std::pair<double, std::string>> want;
  for (const auto& c : pool) want.emplace_back(residual_oracle(cur, c.depth), c.object_id);
  std::sort(want.begin(), want.end());
  const ObjectUpdate u = update_objects({{"x", 0}}, cur, pool, 1, 6);
  ASSERT_EQ(u.admitted.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(u.admitted[i], want[i].second);
}

TEST(UpdateObjects, ResidualOptimalityProperty) {
  for (int s = 0; s < 40; ++s) {
    testgen::Gen g(900 + s);
    const ChannelGrid cur = g.smooth(14, 14, g.blob_mask(14, 14));
    const int n = g.integer(3, 8);
    std::vector<ObjectCandidate> pool;
    std::map<std::string, double> res;
    for (int i = 0; i < n; ++i) {
      pool.push_back({"p" + std::to_string(i), g.smooth(14, 14, g.blob_mask(14, 14))});
      res[pool.back().object_id] = residual_oracle(cur, pool.back().depth);
    }
    const std::vector<ObjectUsage> active = {{"p0", g.uniform(0, 10)}, {"p1", g.uniform(0, 10)}};
    const ObjectUpdate u = update_objects(active, cur, pool, 1, 2);
    ASSERT_FALSE(u.exhausted);
    EXPECT_EQ(u.kept.size() + u.admitted.size(), 2u);
    for (const auto& a : u.admitted)
      for (const auto& [id, r] : res) {
        const bool chosen = std::find(u.kept.begin(), u.kept.end(), id) != u.kept.end() ||
                            std::find(u.admitted.begin(), u.admitted.end(), id) != u.admitted.end();
        if (!chosen) EXPECT_LE(res[a], r) << "seed " << s;
      }
  }
}

TEST(UpdateObjects, EqualUsageDropsByIdAndExhaustionKeepsSet) {
  const ChannelGrid d(6, 6, 0.0, true);
  const ObjectUpdate u = update_objects({{"b", 1}, {"a", 1}, {"c", 1}}, d, {{"a", d}, {"b", d}, {"c", d}, {"d", d}}, 2, 3);
  EXPECT_EQ(u.dropped, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(u.admitted, (std::vector<std::string>{"a", "b"}));
  const ObjectUpdate v = update_objects({{"a", 1}, {"b", 2}}, d, {{"b", d}}, 1, 2);
  EXPECT_TRUE(v.exhausted);
  EXPECT_EQ(v.kept, (std::vector<std::string>{"a", "b"}));
  EXPECT_THROW(update_objects({{"a", 1}}, d, {}, 2, 1), Error);
}

TEST(ExemplarUpdater, ActiveSetStaysWithinLimit) {
  const std::vector<ViewAngles> views = {{0, 0}, {30, -20}, {-30, -20}};
  auto pool = testfx::small_db("superellipsoid", 7, views, 44);
  const MappingExample query = pool.front();
  pool.erase(pool.begin(), pool.begin() + 3);
  for (std::size_t limit : {3u, 6u, 12u}) {
    ExampleDatabase db({{"intensity"}, {"depth"}}, pool, limit);
    RunOptions opt;
    opt.m = 4;
    std::vector<IterationRecord> recs;
    opt.sink = [&](const IterationRecord& r) { recs.push_back(r); };
    const ModeResult r = run_mode(mode_spec(Mode::depth), {{"intensity", query.channel("intensity")}}, db, opt);
    EXPECT_LE(r.final_active.size(), limit);
    for (const auto& rec : recs) EXPECT_LE(rec.active.size(), limit);
    for (const auto& ev : r.updates) {
      EXPECT_FALSE(ev.active_views.empty());
      EXPECT_LE(ev.active_views.size() * ev.active_objects.size(), std::max<std::size_t>(limit, ev.active_views.size()));
    }
    EXPECT_LE(r.updates.size(), static_cast<std::size_t>(20));
  }
}

TEST(ExemplarUpdater, Errors) {
  EXPECT_THROW(ExemplarUpdater({}, {{0, 0}}, {}, 3), Error);
  EXPECT_THROW(ExemplarUpdater({"a"}, {}, {}, 3), Error);
  EXPECT_THROW(ExemplarUpdater({"a"}, {{0, 0}}, {}, 0), Error);
  auto pool = testfx::small_db("sphere", 1, {{0, 0}}, 2);
  ExampleDatabase db({{"intensity"}, {"depth"}}, pool, 4);
  EXPECT_THROW(ExemplarUpdater({"nope"}, {{0, 0}}, {}, 3).apply(db), Error);
}
