#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

#include "depthsynth/modes.hpp"
#include "depthsynth/optimizer.hpp"
#include "support/fixtures.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"

using namespace depthsynth;

namespace {

const ChannelSchema kDepthSchema{{"intensity"}, {"depth"}};

SynthesisConfig depth_config() { return synthesis_config(mode_spec(Mode::depth), RunOptions{}); }

std::vector<FeatureChannel> one_channel(const ChannelGrid* g) {
  return {{"i", g, 1.0, Normalization::none, -1, false}};
}

}  // namespace

TEST(GetSimilarPatches, SelfMatchHasZeroDistance) {
  testgen::Gen g(1);
  const ChannelGrid img = g.grid(12, 10, g.blob_mask(12, 10));
  ExtractOptions ex;
  ex.example = 0;
  const PatchFeatureSet db = extract_patches(one_channel(&img), 3, ex);
  const PatchFeatureSet q = extract_patches(one_channel(&img), 3, {});
  const PatchIndex index(db);
  const AssignmentField a = get_similar_patches(q, index, all_present(q.layout));
  ASSERT_EQ(a.matches.size(), q.size());
  for (std::size_t i = 0; i < a.matches.size(); ++i) {
    EXPECT_EQ(a.matches[i].center, q.centers[i]);
    EXPECT_EQ(a.matches[i].distance, 0.0);
  }
  EXPECT_EQ(a.total_distance(), 0.0);
}

TEST(GetSimilarPatches, CloserExemplarTakesEverythingAndUsageIsCounted) {
  testgen::Gen g(2);
  const Mask m = g.full_mask(10, 10);
  const ChannelGrid q = g.grid(10, 10, m);
  std::vector<double> va(100), vb(100);
  for (int i = 0; i < 100; ++i) {
    va[i] = q[i] + 0.01;
    vb[i] = q[i] + 0.5;
  }
  const ChannelGrid A(10, 10, va, m), B(10, 10, vb, m);
  ExtractOptions oa, ob;
  oa.example = 0;
  ob.example = 1;
  PatchFeatureSet set = extract_patches(one_channel(&A), 3, oa);
  set.append(extract_patches(one_channel(&B), 3, ob));
  const PatchIndex index(set);
  std::vector<MappingExample> ex(2);
  for (int e = 0; e < 2; ++e) {
    ex[e].object_id = "o" + std::to_string(e);
    ex[e].channels = {{"intensity", e ? B : A}, {"depth", q}};
  }
  ExampleDatabase db(kDepthSchema, ex, 4);
  db.add_usage(1, 99);
  const PatchFeatureSet qf = extract_patches(one_channel(&q), 3, {});
  const AssignmentField a = get_similar_patches(qf, index, all_present(qf.layout), &db);
  for (const auto& mt : a.matches) EXPECT_EQ(mt.example, 0);
  EXPECT_EQ(db.example(0).usage_count, qf.size());
  EXPECT_EQ(db.example(1).usage_count, 0u);
}

TEST(GetSimilarPatches, MatchesExhaustiveArgmin) {
  testgen::Gen g(3);
  std::vector<ChannelGrid> ex;
  PatchFeatureSet set;
  for (int e = 0; e < 3; ++e) {
    ex.push_back(g.grid(16, 16, g.blob_mask(16, 16)));
  }
  for (int e = 0; e < 3; ++e) {
    ExtractOptions o;
    o.example = e;
    set.append(extract_patches(one_channel(&ex[e]), 3, o));
  }
  const ChannelGrid q = g.grid(16, 16, g.blob_mask(16, 16));
  const PatchFeatureSet qf = extract_patches(one_channel(&q), 3, {});
  const PatchIndex index(set);
  const AssignmentField a = get_similar_patches(qf, index, all_present(qf.layout));
  for (std::size_t i = 0; i < qf.size(); ++i) {
    double best = INFINITY;
    std::size_t arg = 0;
    for (std::size_t r = 0; r < set.size(); ++r) {
      double d = 0;
      for (int j = 0; j < 9; ++j) d += std::pow(qf.row(i)[j] - set.row(r)[j], 2);
      if (d < best) {  // rows are already in (example, y, x) order
        best = d;
        arg = r;
      }
    }
    EXPECT_EQ(a.matches[i].row, arg) << "patch " << i;
    EXPECT_NEAR(a.matches[i].distance, best, 1e-12);
  }
}

TEST(GetSimilarPatches, Errors) {
  const ChannelGrid img(6, 6, 1.0, true);
  const PatchFeatureSet f = extract_patches(one_channel(&img), 3, {});
  const PatchIndex index(f);
  const PatchFeatureSet f5 = extract_patches(one_channel(&img), 5, {});
  EXPECT_THROW(get_similar_patches(f5, index, all_present(f5.layout)), Error);
  EXPECT_THROW(get_similar_patches(f, index, all_present(f.layout), nullptr, {{0}}), Error);
}

TEST(UpdateDepths, ConstantEstimates) {
  const Mask m(49, 1);
  const PatchWindows qw = accepted_windows(m, 7, 7, 3);
  const ChannelGrid t(7, 7, 2.5, true);
  const PatchWindows tw = accepted_windows(t.mask(), 7, 7, 3);
  AssignmentField a;
  for (const auto& c : qw.centers) {
    a.centers.push_back(c);
    a.matches.push_back({0, tw.centers[(c.x * 7 + c.y) % tw.centers.size()], 0.0, 0});
  }
  const ChannelGrid out = update_depths(a, qw, {{&t, &tw}}, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 2.5);
}

TEST(UpdateDepths, SymmetricPairAveragesToOne) {
  // 5x3 image, k=3: centers (1,1) and (3,1) both cover column 2 at equal weight.
  const Mask m(15, 1);
  const PatchWindows qw = accepted_windows(m, 5, 3, 3);
  const ChannelGrid zero(3, 3, 0.0, true), two(3, 3, 2.0, true);
  const PatchWindows tw = accepted_windows(zero.mask(), 3, 3, 3);
  AssignmentField a;
  a.centers = {{1, 1}, {3, 1}};
  a.matches = {{0, {1, 1}, 0, 0}, {1, {1, 1}, 0, 0}};
  const ChannelGrid out = update_depths(a, qw, {{&zero, &tw}, {&two, &tw}}, 1.0);
  for (int y = 0; y < 3; ++y) {
    EXPECT_DOUBLE_EQ(out.at(2, y), 1.0);
    EXPECT_DOUBLE_EQ(out.at(0, y), 0.0);
    EXPECT_DOUBLE_EQ(out.at(4, y), 2.0);
  }
}

TEST(UpdateDepths, MatchesDoubleLoopOracle) {
  for (int inst = 0; inst < 50; ++inst) {
    testgen::Gen g(4000 + inst);
    const bool masked = inst >= 25;
    const int k = g.coin() ? 3 : 5;
    const int w = g.integer(k + 2, 14), h = g.integer(k + 2, 14);
    const Mask qm = masked ? g.blob_mask(w, h) : g.full_mask(w, h);
    const PatchWindows qw = accepted_windows(qm, w, h, k);
    if (qw.centers.empty()) continue;
    const int ne = g.integer(1, 3);
    std::vector<ChannelGrid> tg;
    std::vector<PatchWindows> tw;
    for (int e = 0; e < ne; ++e) {
      const int ew = g.integer(k + 1, 12), eh = g.integer(k + 1, 12);
      Mask em = masked ? g.blob_mask(ew, eh) : g.full_mask(ew, eh);
      tg.push_back(g.grid(ew, eh, em, -3, 3));
      tw.push_back(accepted_windows(em, ew, eh, k));
    }
    std::vector<ExemplarTarget> targets;
    for (int e = 0; e < ne; ++e) targets.push_back({&tg[e], &tw[e]});
    AssignmentField a;
    for (const auto& c : qw.centers) {
      int e = g.integer(0, ne - 1);
      while (tw[e].centers.empty()) e = (e + 1) % ne;
      a.centers.push_back(c);
      a.matches.push_back({e, tw[e].centers[g.integer(0, static_cast<int>(tw[e].centers.size()) - 1)], 0, 0});
    }
    const double sigma = g.uniform(0.5, 3.0);
    const ChannelGrid got = update_depths(a, qw, targets, sigma);

    const auto [num, den] = oracle::accumulate(a, qm, w, h, k, tg, sigma);
    for (std::size_t p = 0; p < num.size(); ++p) {
      ASSERT_EQ(got.foreground(p), qm[p] != 0);
      if (den[p] > 0) EXPECT_NEAR(got[p], num[p] / den[p], 1e-9) << "instance " << inst;
    }
  }
}

TEST(UpdateDepths, UncoveredPixelsKeepPrevious) {
  // An isolated pixel far from every accepted window.
  Mask m(8 * 8, 0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) m[y * 8 + x] = 1;
  m[7 * 8 + 7] = 1;  // isolated pixel, no accepted window reaches it
  const PatchWindows qw = accepted_windows(m, 8, 8, 3);
  ASSERT_FALSE(qw.centers.empty());
  const ChannelGrid t(3, 3, 1.0, true);
  const PatchWindows tw = accepted_windows(t.mask(), 3, 3, 3);
  AssignmentField a;
  a.centers = qw.centers;
  a.matches.assign(qw.centers.size(), {0, {1, 1}, 0, 0});
  std::vector<double> pv(64, 9.0);
  const ChannelGrid prev(8, 8, pv, m);
  EXPECT_DOUBLE_EQ(update_depths(a, qw, {{&t, &tw}}, 1.0, &prev).at(7, 7), 9.0);
  EXPECT_DOUBLE_EQ(update_depths(a, qw, {{&t, &tw}}, 1.0).at(7, 7), 1.0);
}

TEST(UpdateDepths, RejectsBadAssignments) {
  const Mask m(25, 1);
  const PatchWindows qw = accepted_windows(m, 5, 5, 3);
  AssignmentField a;
  a.centers = {{2, 2}};
  a.matches = {{3, {1, 1}, 0, 0}};
  EXPECT_THROW(update_depths(a, qw, {}, 1.0), Error);
  a.matches.clear();
  EXPECT_THROW(update_depths(a, qw, {}, 1.0), Error);
}

TEST(Estimate, MemorizesAnInDatabaseExemplar) {
  auto pool = testfx::small_db("superellipsoid", 3, {{0, 0}}, 21);
  ExampleDatabase db(kDepthSchema, pool, 12);
  const SynthesisResult r = estimate(testfx::source_of(pool[1], "intensity"), db, depth_config());
  EXPECT_LT(testfx::mean_abs(pool[1].channel("depth"), r.target("depth")), 1e-4);
  for (const auto& lv : r.levels) EXPECT_LE(lv.iterations, 3) << "level " << lv.level;
  EXPECT_TRUE(r.converged);
}

TEST(Estimate, SingleExemplarProvenance) {
  auto pool = testfx::small_db("blobs", 2, {{0, 0}}, 5);
  ExampleDatabase db(kDepthSchema, {pool[0]}, 12);
  SynthesisConfig cfg = depth_config();
  const SynthesisResult r = estimate(testfx::source_of(pool[1], "intensity"), db, cfg);
  const Pyramid ex = build_laplacian(pool[0].channel("depth"), cfg.levels);
  for (int l = 0; l < cfg.levels; ++l) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < ex.levels[l].size(); ++i)
      if (ex.levels[l].foreground(i)) {
        lo = std::min(lo, ex.levels[l][i]);
        hi = std::max(hi, ex.levels[l][i]);
      }
    const ChannelGrid& b = r.bands[0].levels[l];
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b.foreground(i)) {
        EXPECT_GE(b[i], lo - 1e-12);
        EXPECT_LE(b[i], hi + 1e-12);
      }
  }
  for (const auto& m : r.final_assignments.matches) EXPECT_EQ(m.example, 0);
}

TEST(Estimate, PlausibilityNeverDecreasesProperty) {
  const char* classes[] = {"sphere", "superellipsoid", "blobs", "heightfield"};
  for (int run = 0; run < 8; ++run) {
    testgen::Gen g(700 + run);
    auto pool = testfx::small_db(classes[run % 4], 4, {{0, 0}, {g.uniform(-30, 30), g.uniform(-30, 0)}}, 700 + run);
    const MappingExample query = pool.back();
    pool.resize(pool.size() - 2);
    ExampleDatabase db(kDepthSchema, pool, 12);
    SynthesisConfig cfg = depth_config();
    cfg.weights.set("position", g.uniform(0.0, 0.05));
    cfg.weights.set("depth", g.uniform(0.05, 0.3));
    const SynthesisResult r = estimate(testfx::source_of(query, "intensity"), db, cfg);
    for (const auto& lv : r.levels) {
      ASSERT_LE(lv.iterations, cfg.max_iters);
      for (std::size_t i = 1; i < lv.records.size(); ++i) {
        EXPECT_GE(lv.records[i].plausibility_log, lv.records[i - 1].plausibility_log - 1e-9)
            << "run " << run << " level " << lv.level << " it " << i + 1;
      }
      for (const auto& rec : lv.records) EXPECT_TRUE(std::isfinite(rec.plausibility_log));
    }
  }
}

TEST(Estimate, DeterministicAndCovering) {
  auto pool = testfx::small_db("heightfield", 3, {{0, 0}}, 9);
  const auto q = testfx::source_of(pool[2], "intensity");
  pool.pop_back();
  ExampleDatabase db1(kDepthSchema, pool, 12), db2(kDepthSchema, pool, 12);
  const SynthesisResult a = estimate(q, db1, depth_config());
  const SynthesisResult b = estimate(q, db2, depth_config());
  const ChannelGrid& da = a.target("depth");
  const ChannelGrid& db = b.target("depth");
  ASSERT_EQ(da.mask(), q[0].grid.mask());
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (!da.foreground(i)) continue;
    EXPECT_TRUE(std::isfinite(da[i]));
    EXPECT_EQ(da[i], db[i]);
  }
  ASSERT_EQ(a.levels.size(), b.levels.size());
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    ASSERT_EQ(a.levels[l].records.size(), b.levels[l].records.size());
    for (std::size_t i = 0; i < a.levels[l].records.size(); ++i)
      EXPECT_EQ(a.levels[l].records[i].plausibility_log, b.levels[l].records[i].plausibility_log);
  }
}

TEST(Estimate, DiagnosticsAreJsonLines) {
  auto pool = testfx::small_db("sphere", 2, {{0, 0}}, 3);
  ExampleDatabase db(kDepthSchema, {pool[0]}, 12);
  std::vector<std::string> lines;
  estimate(testfx::source_of(pool[1], "intensity"), db, depth_config(), {},
           [&](const IterationRecord& r) { lines.push_back(r.to_json()); });
  ASSERT_FALSE(lines.empty());
  for (const auto& l : lines) {
    EXPECT_EQ(l.find('\n'), std::string::npos);
    const auto j = nlohmann::json::parse(l);
    EXPECT_TRUE(j.contains("plausibility_log"));
    EXPECT_TRUE(j.contains("changed"));
  }
  EXPECT_TRUE(nlohmann::json::parse(lines.front())["mean_change"].is_null());
}

TEST(Estimate, MaxItersCapsAndFlags) {
  auto pool = testfx::small_db("blobs", 3, {{0, 0}}, 13);
  ExampleDatabase db(kDepthSchema, {pool[0], pool[1]}, 12);
  SynthesisConfig cfg = depth_config();
  cfg.max_iters = 1;
  const SynthesisResult r = estimate(testfx::source_of(pool[2], "intensity"), db, cfg);
  EXPECT_FALSE(r.converged);
  for (const auto& lv : r.levels) EXPECT_EQ(lv.iterations, 1);
}

TEST(Estimate, Errors) {
  auto pool = testfx::small_db("sphere", 1, {{0, 0}}, 1);
  ExampleDatabase db(kDepthSchema, pool, 12);
  const auto q = testfx::source_of(pool[0], "intensity");
  SynthesisConfig cfg = depth_config();
  cfg.levels = 0;
  EXPECT_THROW(estimate(q, db, cfg), Error);
  cfg = depth_config();
  cfg.k = {5, 7};
  EXPECT_THROW(estimate(q, db, cfg), Error);
  EXPECT_THROW(estimate(testfx::source_of(pool[0], "depth"), db, depth_config()), Error);
  ExampleDatabase empty(kDepthSchema, {}, 12);
  EXPECT_THROW(estimate(q, empty, depth_config()), Error);
  try {
    estimate({{"intensity", ChannelGrid(32, 32)}}, db, depth_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no object pixels"), std::string::npos);
  }
}
