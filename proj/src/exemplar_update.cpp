#include "depthsynth/exemplar_update.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "depthsynth/pyramid.hpp"

namespace depthsynth {

namespace {

void check_window(const ViewAngles& v) {
  if (std::abs(v.alpha) > 90.0 || std::abs(v.beta) > 90.0) {
    throw Error("view update needs angles within [-90, 90]");
  }
}

}  // namespace

ViewUpdate update_views(const ViewState& vs, const std::vector<double>& usage) {
  if (vs.active_views.empty()) {
    throw Error("no active views");
  }
  if (usage.size() != vs.active_views.size()) {
    throw Error("usage must cover every active view");
  }
  for (const auto& v : vs.active_views) {
    check_window(v);
  }
  for (double u : usage) {
    if (!(u >= 0.0)) {
      throw Error("view usage must be non-negative");
    }
  }
  ViewUpdate out;
  out.state = vs;
  out.state.tallies = usage;
  if (vs.active_views.size() == 1) {
    out.noop = true;
    out.mean = out.snapped = vs.active_views.front();
    return out;
  }
  double total = 0.0;
  for (double u : usage) {
    total += u;
  }
  const std::size_t n = usage.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double wgt = total > 0.0 ? usage[i] / total : 1.0 / static_cast<double>(n);
    out.mean.alpha += wgt * vs.active_views[i].alpha;
    out.mean.beta += wgt * vs.active_views[i].beta;
  }
  out.snapped = out.mean;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : vs.available_views) {
    const double d = angular_distance(a, out.mean);
    if (d < best) {
      best = d;
      out.snapped = a;
    }
  }
  std::size_t drop = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (usage[i] < usage[drop]) {
      drop = i;
    }
  }
  out.dropped = vs.active_views[drop];
  ViewState next;
  next.available_views = vs.available_views;
  next.merge_threshold = vs.merge_threshold;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == drop) {
      continue;
    }
    next.active_views.push_back(vs.active_views[i]);
    next.tallies.push_back(usage[i]);
    if (angular_distance(vs.active_views[i], out.snapped) < vs.merge_threshold) {
      out.merged = true;
    }
  }
  if (!out.merged) {
    next.active_views.push_back(out.snapped);
    next.tallies.push_back(0.0);
  }
  out.state = std::move(next);
  return out;
}

double aligned_residual(const ChannelGrid& depth, const ChannelGrid& candidate) {
  if (depth.foreground_count() == 0 || candidate.foreground_count() == 0) {
    return std::numeric_limits<double>::infinity();
  }
  const Point2 cd = foreground_centroid(depth);
  const Point2 cc = foreground_centroid(candidate);
  const int dx = static_cast<int>(std::lround(cd.x - cc.x));
  const int dy = static_cast<int>(std::lround(cd.y - cc.y));
  const double md = foreground_mean(depth);
  const double mc = foreground_mean(candidate);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const int sx = x - dx;
      const int sy = y - dy;
      if (!depth.foreground(x, y) || !candidate.in_bounds(sx, sy) || !candidate.foreground(sx, sy)) {
        continue;
      }
      const double d = (depth.at(x, y) - md) - (candidate.at(sx, sy) - mc);
      sum += d * d;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(n);
}

ObjectUpdate update_objects(const std::vector<ObjectUsage>& active, const ChannelGrid& current_depth,
                            const std::vector<ObjectCandidate>& pool, std::size_t drop_count,
                            std::size_t target_size) {
  if (drop_count > active.size()) {
    throw Error("drop_count exceeds the active set");
  }
  ObjectUpdate out;
  std::vector<ObjectUsage> order = active;
  std::stable_sort(order.begin(), order.end(), [](const ObjectUsage& a, const ObjectUsage& b) {
    return a.usage < b.usage || (a.usage == b.usage && a.object_id < b.object_id);
  });
  std::set<std::string> dropped;
  for (std::size_t i = 0; i < drop_count; ++i) {
    dropped.insert(order[i].object_id);
  }
  for (const auto& a : active) {
    if (dropped.count(a.object_id)) {
      out.dropped.push_back(a.object_id);
    } else {
      out.kept.push_back(a.object_id);
    }
  }
  for (const auto& c : pool) {
    out.ranking.emplace_back(c.object_id, aligned_residual(current_depth, c.depth));
  }
  std::stable_sort(out.ranking.begin(), out.ranking.end(), [](const auto& a, const auto& b) {
    return a.second < b.second || (a.second == b.second && a.first < b.first);
  });
  std::set<std::string> taken(out.kept.begin(), out.kept.end());
  for (const auto& [id, r] : out.ranking) {
    if (out.kept.size() + out.admitted.size() >= target_size) {
      break;
    }
    if (taken.insert(id).second) {
      out.admitted.push_back(id);
    }
  }
  if (out.kept.size() + out.admitted.size() < target_size) {
    out.exhausted = true;
    out.kept.clear();
    for (const auto& a : active) {
      out.kept.push_back(a.object_id);
    }
    out.dropped.clear();
    out.admitted.clear();
  }
  return out;
}

ExemplarUpdater::ExemplarUpdater(std::vector<std::string> seed_objects,
                                 std::vector<ViewAngles> seed_views, ExemplarUpdateConfig config,
                                 int levels)
    : objects_(std::move(seed_objects)), views_(std::move(seed_views)), config_(config), levels_(levels) {
  if (objects_.empty() || views_.empty()) {
    throw Error("exemplar updater needs seed objects and views");
  }
  if (levels_ < 1) {
    throw Error("levels must be at least 1");
  }
}

std::vector<std::size_t> ExemplarUpdater::active_indices(const ExampleDatabase& db) const {
  std::vector<std::size_t> out;
  for (const auto& id : objects_) {
    std::vector<std::size_t> mine;
    for (const auto& v : views_) {
      if (auto i = db.find(id, v)) {
        mine.push_back(*i);
      }
    }
    if (out.size() + mine.size() > db.active_limit()) {
      break;
    }
    out.insert(out.end(), mine.begin(), mine.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void ExemplarUpdater::apply(ExampleDatabase& db) const {
  const auto idx = active_indices(db);
  if (idx.empty()) {
    throw Error("no pool example matches the seed objects and views");
  }
  db.set_active(idx);
}

const ChannelGrid& ExemplarUpdater::coarse_depth(const ExampleDatabase& db, std::size_t example) {
  auto it = coarse_cache_.find(example);
  if (it == coarse_cache_.end()) {
    const ChannelGrid& d = db.example(example).channel(db.schema().targets.front());
    const int n = std::min(levels_, max_pyramid_levels(d.width(), d.height()));
    it = coarse_cache_.emplace(example, build_gaussian(d, n).levels.back()).first;
  }
  return it->second;
}

bool ExemplarUpdater::operator()(ExampleDatabase& db, const UpdateContext& ctx) {
  UpdateEvent ev;
  ev.iteration = ctx.iteration;
  std::vector<double> view_usage(views_.size(), 0.0);
  std::map<std::string, double> object_usage;
  for (const auto& id : objects_) {
    object_usage[id] = 0.0;
  }
  for (std::size_t e : db.active()) {
    const MappingExample& ex = db.example(e);
    for (std::size_t v = 0; v < views_.size(); ++v) {
      if (views_[v] == ex.view) {
        view_usage[v] += static_cast<double>(ex.usage_count);
      }
    }
    if (object_usage.count(ex.object_id)) {
      object_usage[ex.object_id] += static_cast<double>(ex.usage_count);
    }
  }

  std::vector<ViewAngles> next_views = views_;
  std::vector<double> next_tallies = view_usage;
  if (config_.views && views_.size() > 1) {
    std::vector<ViewAngles> available;
    for (const auto& ex : db.examples()) {
      if (std::find(available.begin(), available.end(), ex.view) == available.end()) {
        available.push_back(ex.view);
      }
    }
    ev.views = update_views({views_, view_usage, available, config_.merge_threshold}, view_usage);
    next_views = ev.views.state.active_views;
    next_tallies = ev.views.state.tallies;
  } else {
    ev.views.noop = true;
  }

  std::size_t target = objects_.size();
  const std::size_t cap = db.active_limit() / next_views.size();
  if (ev.views.merged) {
    // Keep |objects| x |views| where it was.
    const std::size_t before = objects_.size() * views_.size();
    target = std::max(target, (before + next_views.size() - 1) / next_views.size());
  }
  target = std::min(target, std::max<std::size_t>(1, cap));

  std::vector<std::string> next_objects = objects_;
  if ((config_.objects && objects_.size() > 1) || target > objects_.size()) {
    std::size_t drop = 0;
    if (config_.objects && objects_.size() > 1) {
      drop = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(config_.replace_fraction * objects_.size())));
      drop = std::min(drop, objects_.size() - 1);
    }
    // Candidates are compared at the most used surviving view.
    std::size_t dominant = 0;
    for (std::size_t v = 1; v < next_views.size(); ++v) {
      if (next_tallies[v] > next_tallies[dominant]) {
        dominant = v;
      }
    }
    std::vector<ObjectCandidate> pool;
    for (const auto& id : db.object_ids()) {
      std::optional<std::size_t> e = db.find(id, next_views[dominant]);
      for (std::size_t v = 0; !e && v < next_views.size(); ++v) {
        e = db.find(id, next_views[v]);
      }
      if (e) {
        pool.push_back({id, coarse_depth(db, *e)});
      }
    }
    std::vector<ObjectUsage> usage;
    for (const auto& id : objects_) {
      usage.push_back({id, object_usage[id]});
    }
    ev.objects = update_objects(usage, *ctx.coarse_estimate, pool, drop, target);
    if (!ev.objects.exhausted) {
      next_objects = ev.objects.kept;
      next_objects.insert(next_objects.end(), ev.objects.admitted.begin(), ev.objects.admitted.end());
    }
  }

  const auto old_views = views_;
  const auto old_objects = objects_;
  views_ = next_views;
  objects_ = next_objects;
  const auto idx = active_indices(db);
  if (idx.empty()) {
    views_ = old_views;
    objects_ = old_objects;
    ev.changed = false;
  } else {
    ev.changed = idx != db.active();
    if (ev.changed) {
      db.set_active(idx);
    }
  }
  ev.active_views = views_;
  ev.active_objects = objects_;
  events_.push_back(ev);
  return ev.changed;
}

UpdateHook ExemplarUpdater::hook() {
  return [this](ExampleDatabase& db, const UpdateContext& ctx) { return (*this)(db, ctx); };
}

}  // namespace depthsynth
