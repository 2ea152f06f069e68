#include "depthsynth/modes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>
#include <set>
#include <tuple>

namespace depthsynth {

Mode parse_mode(const std::string& name) {
  if (name == "depth") return Mode::depth;
  if (name == "backside") return Mode::backside;
  if (name == "colorize") return Mode::colorize;
  throw Error("unknown mode '" + name + "'");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::depth:
      return "depth";
    case Mode::backside:
      return "backside";
    case Mode::colorize:
      return "colorize";
  }
  return "?";
}

ModeSpec mode_spec(Mode mode) {
  ModeSpec s;
  s.mode = mode;
  switch (mode) {
    case Mode::depth:
      s.schema = {{"intensity"}, {"depth"}};
      s.default_weights = ChannelWeights{{"intensity", 0.2140}, {"depth", 0.1116}, {"position", 0.0092}};
      s.default_k = {5, 7, 9};
      s.normalized_sources = {"intensity"};
      s.update_exemplars = true;
      s.default_m = 4;
      break;
    case Mode::backside:
      s.schema = {{"depth"}, {"back"}};
      s.default_weights = ChannelWeights{{"depth", 1.0}, {"back", 1.0}, {"position", 0.01}};
      s.default_k = {5, 7, 9};
      s.update_exemplars = false;
      s.default_m = 4;
      break;
    case Mode::colorize:
      s.schema = {{"depth"}, {"intensity", "cb", "cr"}};
      s.default_weights = ChannelWeights{{"depth", 0.08}, {"depth_hf", 0.06}, {"intensity", 8.0},
                                         {"cb", 1.1},     {"cr", 1.1},       {"position", 10.0}};
      // 7, 11, 9 from fine to coarse.
      s.default_k = {9, 11, 7};
      s.update_exemplars = false;
      s.default_m = 2;
      break;
  }
  return s;
}

SynthesisConfig synthesis_config(const ModeSpec& spec, const RunOptions& options) {
  SynthesisConfig cfg;
  cfg.levels = options.levels;
  if (options.k) {
    cfg.k = *options.k;
  } else {
    std::vector<int> k = spec.default_k;
    while (static_cast<int>(k.size()) < options.levels) {
      k.insert(k.begin(), k.front());
    }
    cfg.k.assign(k.end() - options.levels, k.end());
  }
  cfg.weights = options.weights ? *options.weights : spec.default_weights;
  if (!cfg.weights.contains("position")) {
    cfg.weights.set("position", 0.0);
  }
  cfg.normalized_sources = spec.normalized_sources;
  cfg.sigma_agg = options.sigma_agg;
  cfg.max_iters = options.max_iters;
  cfg.eps = options.eps;
  cfg.brute_force = options.brute_force;
  cfg.max_exemplar_updates = options.max_exemplar_updates;
  cfg.keep_assignments = options.keep_assignments;
  return cfg;
}

std::string config_snapshot(const ModeSpec& spec, const RunOptions& options, std::size_t active_limit) {
  const SynthesisConfig cfg = synthesis_config(spec, options);
  std::ostringstream os;
  os << "mode=" << mode_name(spec.mode) << " weights=" << cfg.weights.to_string() << " levels=" << cfg.levels
     << " k=";
  for (std::size_t i = 0; i < cfg.k.size(); ++i) {
    os << (i ? "," : "") << cfg.k[i];
  }
  os << " sigma_agg=";
  if (cfg.sigma_agg == 0.0) {
    os << "k/3";
  } else {
    os << cfg.sigma_agg;
  }
  os << " max_iters=" << cfg.max_iters << " eps=" << cfg.eps << (cfg.brute_force ? " brute_force" : "")
     << " update_exemplars=" << (options.update_exemplars.value_or(spec.update_exemplars) ? "on" : "off")
     << " max_updates=" << cfg.max_exemplar_updates << " m=" << (options.m != 0 ? options.m : spec.default_m)
     << " active_limit=" << active_limit;
  return os.str();
}

const ChannelGrid& ModeResult::output(const std::string& name) const {
  for (const auto& o : outputs) {
    if (o.name == name) {
      return o.grid;
    }
  }
  throw Error("no output '" + name + "'");
}

double appearance_distance(const ChannelGrid& query, const ChannelGrid& example) {
  if (query.foreground_count() == 0 || example.foreground_count() == 0) {
    return std::numeric_limits<double>::infinity();
  }
  const Point2 cq = foreground_centroid(query);
  const Point2 ce = foreground_centroid(example);
  const int dx = static_cast<int>(std::lround(cq.x - ce.x));
  const int dy = static_cast<int>(std::lround(cq.y - ce.y));
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < query.height(); ++y) {
    for (int x = 0; x < query.width(); ++x) {
      const int sx = x - dx;
      const int sy = y - dy;
      if (!query.foreground(x, y) || !example.in_bounds(sx, sy) || !example.foreground(sx, sy)) {
        continue;
      }
      const double d = query.at(x, y) - example.at(sx, sy);
      sum += d * d;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(n);
}

namespace {

std::tuple<double, std::string, double, double> rank_key(double score, const MappingExample& e) {
  return {score, e.object_id, e.view.alpha, e.view.beta};
}

}  // namespace

std::vector<std::size_t> preselect_by_depth(const ExampleDatabase& db, const ChannelGrid& depth,
                                            std::size_t m) {
  std::vector<std::pair<std::tuple<double, std::string, double, double>, std::size_t>> ranked;
  for (std::size_t i = 0; i < db.size(); ++i) {
    const MappingExample& e = db.example(i);
    ranked.push_back({rank_key(aligned_residual(depth, e.channel("depth")), e), i});
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  std::set<std::string> seen;
  for (const auto& [key, i] : ranked) {
    if (out.size() >= m) {
      break;
    }
    if (seen.insert(db.example(i).object_id).second) {
      out.push_back(i);
    }
  }
  return out;
}

namespace {

// Zero mean, unit variance over the foreground; a flat image maps to zeros.
ChannelGrid standardized(const ChannelGrid& g) {
  const std::size_t n = g.foreground_count();
  if (n == 0) {
    return g;
  }
  const double mean = foreground_mean(g);
  double var = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.foreground(i)) {
      var += (g[i] - mean) * (g[i] - mean);
    }
  }
  var /= static_cast<double>(n);
  const double scale = var < 1e-12 ? 0.0 : 1.0 / std::sqrt(var);
  ChannelGrid out(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.foreground(i)) {
      out.set(i, (g[i] - mean) * scale);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> seed_objects_by_appearance(const ExampleDatabase& db,
                                                    const ChannelGrid& intensity,
                                                    const std::vector<ViewAngles>& views,
                                                    std::size_t m) {
  const ChannelGrid q = standardized(intensity);
  std::map<std::string, double> best;
  for (std::size_t i = 0; i < db.size(); ++i) {
    const MappingExample& e = db.example(i);
    if (!views.empty() && std::find(views.begin(), views.end(), e.view) == views.end()) {
      continue;
    }
    const double d = appearance_distance(q, standardized(e.channel("intensity")));
    auto it = best.find(e.object_id);
    if (it == best.end() || d < it->second) {
      best[e.object_id] = d;
    }
  }
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& [id, d] : best) {
    ranked.emplace_back(d, id);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < m; ++i) {
    out.push_back(ranked[i].second);
  }
  return out;
}

ExampleDatabase make_database(const ModeSpec& spec, std::vector<MappingExample> examples,
                              std::size_t active_limit) {
  return ExampleDatabase(spec.schema, std::move(examples), active_limit);
}

ModeResult run_mode(const ModeSpec& spec, const std::vector<NamedChannel>& query,
                    ExampleDatabase& db, const RunOptions& options) {
  if (db.schema().sources != spec.schema.sources || db.schema().targets != spec.schema.targets) {
    throw Error("schema mismatch: database schema differs from mode " + mode_name(spec.mode));
  }
  std::set<std::string> given;
  for (const auto& c : query) {
    if (!given.insert(c.name).second) {
      throw Error("schema mismatch: duplicate query channel '" + c.name + "'");
    }
  }
  if (given != std::set<std::string>(spec.schema.sources.begin(), spec.schema.sources.end())) {
    throw Error("schema mismatch: query channels must be exactly the mode sources");
  }
  if (db.size() == 0) {
    throw Error("empty database");
  }
  const SynthesisConfig cfg = synthesis_config(spec, options);
  const std::size_t m = options.m != 0 ? options.m : spec.default_m;

  std::vector<NamedChannel> q = query;
  double depth_offset = 0.0;
  for (auto& c : q) {
    if (c.name == "depth") {
      DepthMap d = normalize_depth_frame(c.grid);
      depth_offset = d.offset;
      c.grid = std::move(d.grid);
    }
  }
  auto source = [&](const std::string& name) -> const ChannelGrid& {
    for (const auto& c : q) {
      if (c.name == name) return c.grid;
    }
    throw Error("missing query channel " + name);
  };

  ModeResult out;
  UpdateHook hook;
  std::unique_ptr<ExemplarUpdater> updater;
  if (spec.mode == Mode::depth) {
    std::vector<ViewAngles> views = options.seed_views;
    if (views.empty()) {
      for (const auto& e : db.examples()) {
        if (std::find(views.begin(), views.end(), e.view) == views.end()) {
          views.push_back(e.view);
        }
      }
    }
    const std::size_t cap = std::max<std::size_t>(1, db.active_limit() / views.size());
    const auto seeds = seed_objects_by_appearance(db, source("intensity"), views, std::min(m, cap));
    if (seeds.empty()) {
      throw Error("no database object is visible at the seed views");
    }
    updater = std::make_unique<ExemplarUpdater>(seeds, views, options.update, cfg.levels);
    updater->apply(db);
    if (options.update_exemplars.value_or(spec.update_exemplars)) {
      hook = updater->hook();
    }
  } else {
    const auto picks = preselect_by_depth(db, source("depth"), std::min(m, db.active_limit()));
    db.set_active(picks);
  }

  out.synthesis = estimate(q, db, cfg, hook, options.sink);
  out.final_active = db.active();
  if (updater) {
    out.updates = updater->events();
  }
  for (const auto& t : out.synthesis.targets) {
    if (spec.mode == Mode::depth && t.name == "depth") {
      out.outputs.push_back({t.name, normalize_depth_frame(t.grid).grid});
    } else if (spec.mode == Mode::backside) {
      out.outputs.push_back({t.name, shifted(t.grid, depth_offset)});
    } else {
      out.outputs.push_back(t);
    }
  }
  return out;
}

}  // namespace depthsynth
