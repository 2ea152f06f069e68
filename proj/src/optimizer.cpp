#include "depthsynth/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "depthsynth/parallel.hpp"

namespace depthsynth {

double AssignmentField::total_distance() const {
  double s = 0.0;
  for (const auto& m : matches) {
    s += m.distance;
  }
  return s;
}

std::string IterationRecord::to_json() const {
  nlohmann::json j;
  j["level"] = level;
  j["iteration"] = iteration;
  j["plausibility_log"] = plausibility_log;
  j["patches"] = patches;
  j["changed"] = changed;
  if (std::isnan(mean_change)) {
    j["mean_change"] = nullptr;
  } else {
    j["mean_change"] = mean_change;
  }
  j["db_changed"] = db_changed;
  j["active"] = active;
  return j.dump();
}

const ChannelGrid& SynthesisResult::target(const std::string& name) const {
  for (const auto& t : targets) {
    if (t.name == name) {
      return t.grid;
    }
  }
  throw Error("no synthesized target '" + name + "'");
}

AssignmentField get_similar_patches(const PatchFeatureSet& query, const PatchIndex& index,
                                    PresenceMask mask, ExampleDatabase* db,
                                    const std::vector<std::vector<std::size_t>>& hints) {
  if (index.size() == 0) {
    throw Error("empty database");
  }
  if (!(query.layout == index.features().layout)) {
    throw Error("query features do not match the index layout");
  }
  if (!hints.empty() && hints.size() != query.size()) {
    throw Error("hint list size mismatch");
  }
  const PresenceMask m = mask & query.present & index.features().present;
  index.prepare(m);
  AssignmentField out;
  out.level = query.level;
  out.centers = query.centers;
  out.matches.resize(query.size());
  parallel_for(query.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::span<const std::size_t> h =
          hints.empty() ? std::span<const std::size_t>{} : std::span<const std::size_t>(hints[i]);
      out.matches[i] = index.query(query.row(i), m, h);
    }
  });
  if (db != nullptr) {
    db->reset_usage();
    for (const auto& match : out.matches) {
      db->add_usage(static_cast<std::size_t>(match.example), 1);
    }
  }
  return out;
}

ChannelGrid update_depths(const AssignmentField& assignments, const PatchWindows& query_windows,
                          const std::vector<ExemplarTarget>& targets, double sigma_agg,
                          const ChannelGrid* previous) {
  const int w = query_windows.width;
  const int h = query_windows.height;
  const int k = query_windows.k;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (assignments.matches.size() != assignments.centers.size()) {
    throw Error("assignment field is inconsistent");
  }
  const auto g = aggregation_weights(k, sigma_agg);
  std::vector<double> num(n, 0.0);
  std::vector<double> den(n, 0.0);
  for (std::size_t i = 0; i < assignments.matches.size(); ++i) {
    const PatchQueryResult& m = assignments.matches[i];
    if (m.example < 0 || static_cast<std::size_t>(m.example) >= targets.size() ||
        targets[m.example].values == nullptr || targets[m.example].windows == nullptr) {
      throw Error("assignment references an example without target values");
    }
    const ExemplarTarget& et = targets[m.example];
    if (et.windows->k != k) {
      throw Error("exemplar window size differs from the query's");
    }
    const PixelCoord c = assignments.centers[i];
    for (int j = 0; j < k * k; ++j) {
      const int p = query_windows.source_pixel(c, j);
      const int sp = et.windows->source_pixel(m.center, j);
      num[p] += g[j] * (*et.values)[static_cast<std::size_t>(sp)];
      den[p] += g[j];
    }
  }
  Mask fg(n, 0);
  Mask covered(n, 0);
  bool any = false;
  for (std::size_t p = 0; p < n; ++p) {
    fg[p] = query_windows.nearest[p] == static_cast<int>(p);
    covered[p] = den[p] > 0.0;
    any = any || covered[p];
  }
  if (!any) {
    throw Error("no pixel received an estimate");
  }
  ChannelGrid out(w, h);
  std::vector<int> nearest_covered;
  for (std::size_t p = 0; p < n; ++p) {
    if (!fg[p]) {
      continue;
    }
    if (covered[p]) {
      out.set(p, num[p] / den[p]);
    } else if (previous != nullptr && previous->foreground(p)) {
      out.set(p, (*previous)[p]);
    } else {
      if (nearest_covered.empty()) {
        nearest_covered = nearest_foreground(covered, w, h);
      }
      const auto q = static_cast<std::size_t>(nearest_covered[p]);
      out.set(p, num[q] / den[q]);
    }
  }
  return out;
}

namespace {

struct LevelChannels {
  std::vector<ChannelGrid> src_g;
  std::vector<ChannelGrid> src_hf;
  std::vector<ChannelGrid> tgt_band;
  std::vector<ChannelGrid> tgt_low;  // empty at the coarsest level
};

// Source Gaussian levels and high-frequency bands for `levels` levels. The
// band at level l is G_l - expand(G_{l+1}); when the image cannot hold one
// more level the coarsest band is zero.
void source_levels(const ChannelGrid& grid, int levels, std::vector<ChannelGrid>& g_out,
                   std::vector<ChannelGrid>& hf_out) {
  const int avail = max_pyramid_levels(grid.width(), grid.height());
  if (avail < levels) {
    throw Error("grid too small for " + std::to_string(levels) + " pyramid levels");
  }
  const int n = std::min(levels + 1, avail);
  const Pyramid lap = build_laplacian(grid, n);
  const Pyramid gauss = build_gaussian(grid, n);
  g_out.clear();
  hf_out.clear();
  for (int l = 0; l < levels; ++l) {
    g_out.push_back(gauss.levels[l]);
    if (l + 1 < n) {
      hf_out.push_back(lap.levels[l]);
    } else {
      const ChannelGrid& base = gauss.levels[l];
      ChannelGrid zero(base.width(), base.height());
      for (std::size_t i = 0; i < base.size(); ++i) {
        if (base.foreground(i)) {
          zero.set(i, 0.0);
        }
      }
      hf_out.push_back(std::move(zero));
    }
  }
}

// Per-level channels of one exemplar, built on first use.
struct ExemplarLevels {
  std::vector<LevelChannels> levels;
  std::map<int, PatchWindows> windows;  // by level
  std::vector<Point2> centroids;
};

ExemplarLevels build_exemplar_levels(const MappingExample& ex, const ChannelSchema& schema,
                                     int levels) {
  ExemplarLevels out;
  out.levels.resize(levels);
  for (const auto& s : schema.sources) {
    std::vector<ChannelGrid> g;
    std::vector<ChannelGrid> hf;
    source_levels(ex.channel(s), levels, g, hf);
    for (int l = 0; l < levels; ++l) {
      out.levels[l].src_g.push_back(std::move(g[l]));
      out.levels[l].src_hf.push_back(std::move(hf[l]));
    }
  }
  for (const auto& t : schema.targets) {
    const ChannelGrid& grid = ex.channel(t);
    const Pyramid lap = build_laplacian(grid, levels);
    const Pyramid gauss = build_gaussian(grid, levels);
    for (int l = 0; l < levels; ++l) {
      out.levels[l].tgt_band.push_back(lap.levels[l]);
      if (l + 1 < levels) {
        const ChannelGrid& fine = gauss.levels[l];
        out.levels[l].tgt_low.push_back(
            expand(gauss.levels[l + 1], fine.width(), fine.height(), fine.mask()));
      }
    }
  }
  for (int l = 0; l < levels; ++l) {
    out.centroids.push_back(foreground_centroid(out.levels[l].src_g.front()));
  }
  return out;
}

struct StackLayout {
  std::size_t n_sources = 0;
  std::size_t n_targets = 0;
  bool has_low = false;

  std::size_t band_segment(std::size_t t) const {
    return 2 * n_sources + (has_low ? n_targets : 0) + t;
  }
  PresenceMask band_bits() const {
    PresenceMask m = 0;
    for (std::size_t t = 0; t < n_targets; ++t) {
      m |= PresenceMask{1} << band_segment(t);
    }
    return m;
  }
};

// Stack order: source Gaussians, source bands, target lows, target bands.
std::vector<FeatureChannel> make_stack(const ChannelSchema& schema, const SynthesisConfig& cfg,
                                       const std::vector<const ChannelGrid*>& g,
                                       const std::vector<const ChannelGrid*>& hf,
                                       const std::vector<const ChannelGrid*>& low,
                                       const std::vector<const ChannelGrid*>& band, bool has_low) {
  std::vector<FeatureChannel> stack;
  const auto normalized = [&](const std::string& s) {
    return std::find(cfg.normalized_sources.begin(), cfg.normalized_sources.end(), s) !=
           cfg.normalized_sources.end();
  };
  for (std::size_t s = 0; s < schema.sources.size(); ++s) {
    const auto& name = schema.sources[s];
    stack.push_back({name, g[s], cfg.weights.get(name),
                     normalized(name) ? Normalization::zscore : Normalization::none, -1, false});
  }
  for (std::size_t s = 0; s < schema.sources.size(); ++s) {
    const auto& name = schema.sources[s];
    const bool norm = normalized(name);
    stack.push_back({name + "_hf", hf[s], cfg.weights.get(name + "_hf", name),
                     norm ? Normalization::scale_by_ref : Normalization::none,
                     norm ? static_cast<int>(s) : -1, false});
  }
  if (has_low) {
    for (std::size_t t = 0; t < schema.targets.size(); ++t) {
      const auto& name = schema.targets[t];
      stack.push_back({name + "_low", low[t], cfg.weights.get(name + "_low", name),
                       Normalization::none, -1, false});
    }
  }
  for (std::size_t t = 0; t < schema.targets.size(); ++t) {
    const auto& name = schema.targets[t];
    stack.push_back({name, band[t], cfg.weights.get(name), Normalization::none, -1, true});
  }
  return stack;
}

std::string describe(const MappingExample& e) {
  std::ostringstream os;
  os << e.object_id << "@" << e.view.alpha << "," << e.view.beta;
  return os.str();
}

double band_change(const ChannelGrid& now, const ChannelGrid& before, double* range) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < now.size(); ++i) {
    if (now.foreground(i)) {
      sum += std::abs(now[i] - before[i]);
      ++n;
    }
  }
  *range = foreground_range(now);
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

SynthesisResult estimate(const std::vector<NamedChannel>& query, ExampleDatabase& db,
                         const SynthesisConfig& cfg, const UpdateHook& hook,
                         const DiagnosticsSink& sink) {
  const int L = cfg.levels;
  if (L < 1) {
    throw Error("levels must be at least 1");
  }
  if (static_cast<int>(cfg.k.size()) != L) {
    throw Error("need one patch size per level");
  }
  if (cfg.max_iters < 1) {
    throw Error("max_iters must be at least 1");
  }
  if (db.active().empty()) {
    throw Error("empty database");
  }
  const ChannelSchema& schema = db.schema();
  if (schema.sources.empty() || schema.targets.empty()) {
    throw Error("schema needs sources and targets");
  }
  std::vector<const ChannelGrid*> qsrc;
  for (const auto& s : schema.sources) {
    const ChannelGrid* found = nullptr;
    for (const auto& c : query) {
      if (c.name == s) {
        found = &c.grid;
      }
    }
    if (found == nullptr) {
      throw Error("schema mismatch: query lacks source '" + s + "'");
    }
    if (!qsrc.empty() && !found->same_mask(*qsrc.front())) {
      throw Error("query channels differ in dimensions or mask");
    }
    qsrc.push_back(found);
  }
  if (qsrc.front()->foreground_count() == 0) {
    throw Error("no object pixels");
  }

  const std::size_t S = schema.sources.size();
  const std::size_t T = schema.targets.size();
  std::vector<LevelChannels> qlev(L);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<ChannelGrid> g;
    std::vector<ChannelGrid> hf;
    source_levels(*qsrc[s], L, g, hf);
    for (int l = 0; l < L; ++l) {
      qlev[l].src_g.push_back(std::move(g[l]));
      qlev[l].src_hf.push_back(std::move(hf[l]));
    }
  }

  std::map<std::size_t, ExemplarLevels> cache;
  auto exemplar = [&](std::size_t e) -> ExemplarLevels& {
    auto it = cache.find(e);
    if (it == cache.end()) {
      it = cache.emplace(e, build_exemplar_levels(db.example(e), schema, L)).first;
    }
    return it->second;
  };

  SynthesisResult result;
  result.bands.assign(T, Pyramid{PyramidKind::laplacian, std::vector<ChannelGrid>(L)});
  std::vector<ChannelGrid> est_gauss(T);
  int updates_done = 0;

  AssignmentField coarse_assign;
  std::vector<int> coarse_lookup;
  int coarse_w = 0;
  int coarse_h = 0;

  for (int l = L - 1; l >= 0; --l) {
    const bool coarsest = l == L - 1;
    const int k = cfg.k[L - 1 - l];
    const double sigma = cfg.sigma_agg == 0.0 ? k / 3.0 : cfg.sigma_agg;
    const ChannelGrid& qbase = qlev[l].src_g.front();
    const int w = qbase.width();
    const int h = qbase.height();
    const PatchWindows qwin = accepted_windows(qbase.mask(), w, h, k);
    if (qwin.centers.empty()) {
      throw Error("no accepted query windows at level " + std::to_string(l));
    }
    const Point2 qcentroid = foreground_centroid(qbase);
    std::vector<int> lookup(static_cast<std::size_t>(w) * h, -1);
    for (std::size_t i = 0; i < qwin.centers.size(); ++i) {
      lookup[static_cast<std::size_t>(qwin.centers[i].y) * w + qwin.centers[i].x] = static_cast<int>(i);
    }

    std::vector<ChannelGrid> low(coarsest ? 0 : T);
    for (std::size_t t = 0; t < low.size(); ++t) {
      low[t] = expand(est_gauss[t], w, h, qbase.mask());
    }
    const StackLayout sl{S, T, !coarsest};

    std::unique_ptr<PatchIndex> index;
    std::vector<ExemplarTarget> mtargets;
    auto rebuild = [&] {
      PatchFeatureSet set;
      for (std::size_t e : db.active()) {
        ExemplarLevels& ex = exemplar(e);
        LevelChannels& lc = ex.levels[l];
        auto wit = ex.windows.find(l);
        if (wit == ex.windows.end() || wit->second.k != k) {
          const ChannelGrid& b = lc.src_g.front();
          wit = ex.windows.insert_or_assign(l, accepted_windows(b.mask(), b.width(), b.height(), k)).first;
        }
        std::vector<const ChannelGrid*> g, hf, lw, bd;
        for (auto& c : lc.src_g) g.push_back(&c);
        for (auto& c : lc.src_hf) hf.push_back(&c);
        for (auto& c : lc.tgt_low) lw.push_back(&c);
        for (auto& c : lc.tgt_band) bd.push_back(&c);
        const auto stack = make_stack(schema, cfg, g, hf, lw, bd, !coarsest);
        ExtractOptions opt{cfg.weights.get("position"), ex.centroids[l], sigma, static_cast<int>(e), l};
        set.append(extract_patches(stack, wit->second, opt));
      }
      if (set.size() == 0) {
        throw Error("database has no accepted windows at level " + std::to_string(l));
      }
      index = std::make_unique<PatchIndex>(std::move(set), SearchOptions{cfg.eps, cfg.brute_force});
      mtargets.assign(db.size(), ExemplarTarget{});
    };
    rebuild();

    std::vector<ChannelGrid> band(T);
    bool have_band = false;
    AssignmentField prev;
    LevelTrace trace;
    trace.level = l;
    trace.k = k;

    for (int it = 1; it <= cfg.max_iters; ++it) {
      std::vector<const ChannelGrid*> g, hf, lw, bd;
      for (auto& c : qlev[l].src_g) g.push_back(&c);
      for (auto& c : qlev[l].src_hf) hf.push_back(&c);
      for (auto& c : low) lw.push_back(&c);
      for (auto& c : band) bd.push_back(have_band ? &c : nullptr);
      const auto stack = make_stack(schema, cfg, g, hf, lw, bd, !coarsest);
      const PatchFeatureSet qfeat =
          extract_patches(stack, qwin, {cfg.weights.get("position"), qcentroid, sigma, -1, l});
      const PresenceMask mask = have_band ? all_present(qfeat.layout)
                                          : all_present(qfeat.layout) & ~sl.band_bits();

      // Warm-start rows: the previous match, shifted neighbor matches, and
      // on a level's first pass the upsampled coarser match.
      std::vector<std::vector<std::size_t>> hints(qwin.centers.size());
      auto push = [&](std::vector<std::size_t>& hv, int example, int x, int y) {
        const long r = index->row_of(example, {x, y});
        if (r >= 0) {
          hv.push_back(static_cast<std::size_t>(r));
        }
      };
      static constexpr int kDx[5] = {0, -1, 1, 0, 0};
      static constexpr int kDy[5] = {0, 0, 0, -1, 1};
      for (std::size_t i = 0; i < qwin.centers.size(); ++i) {
        const PixelCoord c = qwin.centers[i];
        auto& hv = hints[i];
        if (!prev.matches.empty()) {
          for (int d = 0; d < 5; ++d) {
            const int nx = c.x + kDx[d];
            const int ny = c.y + kDy[d];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const int ni = lookup[static_cast<std::size_t>(ny) * w + nx];
            if (ni < 0) continue;
            const auto& m = prev.matches[ni];
            push(hv, m.example, m.center.x - kDx[d], m.center.y - kDy[d]);
          }
        } else if (!coarse_assign.matches.empty()) {
          const int cx = c.x / 2;
          const int cy = c.y / 2;
          for (int d = 0; d < 5; ++d) {
            const int nx = cx + kDx[d];
            const int ny = cy + kDy[d];
            if (nx < 0 || ny < 0 || nx >= coarse_w || ny >= coarse_h) continue;
            const int ni = coarse_lookup[static_cast<std::size_t>(ny) * coarse_w + nx];
            if (ni < 0) continue;
            const auto& m = coarse_assign.matches[ni];
            push(hv, m.example, 2 * (m.center.x - kDx[d]) + (c.x - 2 * cx),
                 2 * (m.center.y - kDy[d]) + (c.y - 2 * cy));
          }
        }
      }

      AssignmentField cur = get_similar_patches(qfeat, *index, mask, &db, hints);
      cur.level = l;
      cur.iteration = it;

      IterationRecord rec;
      rec.level = l;
      rec.iteration = it;
      rec.patches = cur.matches.size();
      if (prev.matches.empty()) {
        rec.changed = cur.matches.size();
      } else {
        for (std::size_t i = 0; i < cur.matches.size(); ++i) {
          const auto& a = cur.matches[i];
          const auto& b = prev.matches[i];
          rec.changed += a.example != b.example || !(a.center == b.center);
        }
      }

      // M-step, one target channel at a time.
      std::vector<ChannelGrid> next(T);
      bool small_change = have_band;
      double worst = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t e : db.active()) {
          ExemplarLevels& ex = exemplar(e);
          mtargets[e] = {&ex.levels[l].tgt_band[t], &ex.windows.at(l)};
        }
        next[t] = update_depths(cur, qwin, mtargets, sigma, have_band ? &band[t] : nullptr);
        if (have_band) {
          double range = 0.0;
          const double change = band_change(next[t], band[t], &range);
          worst = std::max(worst, range > 0.0 ? change / range : (change > 0.0 ? HUGE_VAL : 0.0));
          small_change = small_change && (range > 0.0 ? change < cfg.change_tolerance * range
                                                      : change == 0.0);
        }
      }
      if (have_band) {
        rec.mean_change = worst;
      }
      band = std::move(next);
      have_band = true;

      // Objective after the M-step: the new estimate against the assignments
      // over every segment. Exact E- and M-steps never increase it.
      {
        std::vector<const ChannelGrid*> bd2;
        for (auto& c : band) bd2.push_back(&c);
        const auto stack2 = make_stack(schema, cfg, g, hf, lw, bd2, !coarsest);
        const PatchFeatureSet after =
            extract_patches(stack2, qwin, {cfg.weights.get("position"), qcentroid, sigma, -1, l});
        const PatchFeatureSet& rows = index->features();
        const PresenceMask full = all_present(after.layout) & rows.present;
        double total = 0.0;
        for (std::size_t i = 0; i < cur.matches.size(); ++i) {
          total += feature_distance(after.row(i), rows.row(cur.matches[i].row), after.layout, full);
        }
        rec.plausibility_log = -0.5 * total;
      }

      if (coarsest && hook && updates_done < cfg.max_exemplar_updates) {
        UpdateContext ctx{l, it, &band.front(), &cur};
        if (hook(db, ctx)) {
          ++updates_done;
          rec.db_changed = true;
          rebuild();
        }
      }
      for (std::size_t e : db.active()) {
        rec.active.push_back(describe(db.example(e)));
      }
      if (sink) {
        sink(rec);
      }
      trace.records.push_back(rec);
      trace.iterations = it;
      if (cfg.keep_assignments) {
        result.history.push_back(cur);
      }
      const bool done = !rec.db_changed && it > 1 && (rec.changed == 0 || small_change);
      prev = std::move(cur);
      if (done) {
        trace.converged = true;
        break;
      }
    }
    if (!trace.converged) {
      result.converged = false;
    }
    for (std::size_t t = 0; t < T; ++t) {
      result.bands[t].levels[l] = band[t];
      if (coarsest) {
        est_gauss[t] = band[t];
      } else {
        ChannelGrid sum(w, h);
        for (std::size_t i = 0; i < sum.size(); ++i) {
          if (band[t].foreground(i)) {
            sum.set(i, band[t][i] + low[t][i]);
          }
        }
        est_gauss[t] = std::move(sum);
      }
    }
    result.levels.push_back(std::move(trace));
    coarse_assign = prev;
    coarse_lookup = std::move(lookup);
    coarse_w = w;
    coarse_h = h;
  }
  result.final_assignments = coarse_assign;
  for (std::size_t t = 0; t < T; ++t) {
    result.targets.push_back({schema.targets[t], collapse(result.bands[t])});
  }
  return result;
}

}  // namespace depthsynth
