#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "depthsynth/eval.hpp"
#include "depthsynth/image_io.hpp"
#include "depthsynth/modes.hpp"
#include "depthsynth/parallel.hpp"
#include "depthsynth/synth_data.hpp"

namespace fs = std::filesystem;
using namespace depthsynth;

namespace {

constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

// Config files: JSON when the first non-blank byte is '{', otherwise CLI11's
// TOML/INI reader (plain key=value lines work). Top-level keys belong to the
// subcommand being run; a nested object named after a subcommand scopes its
// keys explicitly.
class ConfigReader : public CLI::ConfigTOML {
 public:
  explicit ConfigReader(const CLI::App* app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    std::vector<CLI::ConfigItem> items;
    if (first != std::string::npos && text[first] == '{') {
      const auto doc = nlohmann::json::parse(text);
      flatten(doc, {}, items);
    } else {
      std::istringstream is(text);
      items = CLI::ConfigTOML::from_config(is);
      // k=5,7,9 comes back split; every option here takes one string
      for (auto& item : items) {
        if (item.inputs.size() > 1) {
          std::string joined;
          for (const auto& in : item.inputs) {
            joined += (joined.empty() ? "" : ",") + in;
          }
          item.inputs = {joined};
        }
      }
    }
    const std::string sub = active_subcommand();
    for (auto& item : items) {
      if (item.parents.empty() && !sub.empty() && !is_global(item.name)) {
        item.parents.push_back(sub);
      }
    }
    return items;
  }

 private:
  std::string active_subcommand() const {
    const auto subs = app_->get_subcommands();
    return subs.empty() ? std::string{} : subs.front()->get_name();
  }

  bool is_global(const std::string& name) const {
    return app_->get_option_no_throw("--" + name) != nullptr;
  }

  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) {
      return v.get<std::string>();
    }
    if (v.is_boolean()) {
      return v.get<bool>() ? "true" : "false";
    }
    return v.dump();
  }

  void flatten(const nlohmann::json& node, std::vector<std::string> parents,
               std::vector<CLI::ConfigItem>& out) const {
    for (const auto& [key, value] : node.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_object() && parents.empty() && app_->get_subcommand_no_throw(key) != nullptr) {
        flatten(value, {key}, out);
        continue;
      }
      if (value.is_object()) {
        // {"weights": {"depth": 0.1}} -> "depth=0.1"
        std::string joined;
        for (const auto& [n, w] : value.items()) {
          joined += (joined.empty() ? "" : ",") + n + "=" + scalar(w);
        }
        item.inputs = {joined};
      } else if (value.is_array()) {
        std::string joined;
        for (const auto& v : value) {
          joined += (joined.empty() ? "" : ",") + scalar(v);
        }
        item.inputs = {joined};
      } else {
        item.inputs = {scalar(value)};
      }
      out.push_back(std::move(item));
    }
  }

  const CLI::App* app_;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) {
      throw Error("bad integer list '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw Error("empty integer list");
  }
  return out;
}

// "name=value,name=value" on top of `base`.
ChannelWeights parse_weights(const std::string& text, ChannelWeights base) {
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error("bad weight '" + tok + "', expected name=value");
    }
    std::size_t used = 0;
    const std::string num = tok.substr(eq + 1);
    const double v = std::stod(num, &used);
    if (used != num.size()) {
      throw Error("bad weight value '" + num + "'");
    }
    base.set(tok.substr(0, eq), v);
  }
  return base;
}

// Options shared by estimate and evaluate.
struct RunFlags {
  std::string mode = "depth";
  std::string weights;
  int levels = 3;
  std::string k;
  std::string update_exemplars;
  std::size_t active_limit = 12;
  int max_iters = 20;
  double sigma_agg = 0.0;
  double eps = 0.0;
  bool brute_force = false;
  std::size_t m = 0;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--mode", mode, "depth, backside or colorize")
        ->check(CLI::IsMember({"depth", "backside", "colorize"}));
    app->add_option("--weights", weights, "Channel weights as name=value,...; unnamed channels keep the mode default");
    app->add_option("--levels", levels, "Pyramid levels")->check(CLI::Range(1, 12));
    app->add_option("--k", k, "Patch sizes per level, coarsest first (e.g. 5,7,9)");
    app->add_option("--update-exemplars", update_exemplars, "on or off; default per mode")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--active-limit", active_limit, "Active exemplar cap")->check(CLI::PositiveNumber);
    app->add_option("--max-iters", max_iters, "EM iterations per level")->check(CLI::PositiveNumber);
    app->add_option("--sigma-agg", sigma_agg, "Aggregation sigma; 0 means k/3")->check(CLI::NonNegativeNumber);
    app->add_option("--eps", eps, "Approximate search slack; 0 is exact")->check(CLI::NonNegativeNumber);
    app->add_flag("--brute-force", brute_force, "Linear scan instead of the tree");
    app->add_option("--m", m, "Objects used for synthesis; 0 takes the mode default");
    app->add_option("--seed", seed, "Recorded in the snapshot; the synthesis itself is deterministic");
  }

  ModeSpec spec() const { return mode_spec(parse_mode(mode)); }

  RunOptions options(const ModeSpec& spec) const {
    RunOptions o;
    if (!weights.empty()) {
      o.weights = parse_weights(weights, spec.default_weights);
    }
    o.levels = levels;
    if (!k.empty()) {
      o.k = parse_int_list(k);
    }
    if (!update_exemplars.empty()) {
      o.update_exemplars = update_exemplars == "on";
    }
    o.max_iters = max_iters;
    o.sigma_agg = sigma_agg;
    o.eps = eps;
    o.brute_force = brute_force;
    o.m = m;
    return o;
  }

  std::string snapshot(const ModeSpec& spec, const RunOptions& o) const {
    return config_snapshot(spec, o, active_limit) + " seed=" + std::to_string(seed);
  }
};

ChannelGrid apply_mask(const ChannelGrid& grid, const Mask& mask, int w, int h) {
  if (grid.width() != w || grid.height() != h) {
    throw Error("query and mask sizes differ");
  }
  std::vector<double> values(grid.values().begin(), grid.values().end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i] && !grid.foreground(i)) {
      throw Error("query has no value at a mask pixel");
    }
  }
  return ChannelGrid(w, h, std::move(values), mask);
}

nlohmann::json update_json(const UpdateEvent& e) {
  nlohmann::json j;
  j["event"] = "update";
  j["iteration"] = e.iteration;
  j["changed"] = e.changed;
  j["view_mean"] = {e.views.mean.alpha, e.views.mean.beta};
  j["view_snapped"] = {e.views.snapped.alpha, e.views.snapped.beta};
  j["merged"] = e.views.merged;
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : e.active_views) {
    views.push_back({v.alpha, v.beta});
  }
  j["active_views"] = views;
  j["active_objects"] = e.active_objects;
  j["dropped"] = e.objects.dropped;
  j["admitted"] = e.objects.admitted;
  return j;
}

struct EstimateArgs {
  RunFlags run;
  std::string query;
  std::string mask;
  std::string db;
  std::string out;
  bool allow_nonconverged = false;
};

int run_estimate(const EstimateArgs& a) {
  const ModeSpec spec = a.run.spec();
  RunOptions opts = a.run.options(spec);
  std::cout << a.run.snapshot(spec, opts) << "\n";

  int w = 0;
  int h = 0;
  const Mask mask = io::read_mask(a.mask, &w, &h);
  const std::string source = spec.schema.sources.front();
  const ChannelGrid raw = spec.mode == Mode::depth ? io::read_pgm(a.query) : io::read_depth(a.query);
  const ChannelGrid query = apply_mask(raw, mask, w, h);

  ExampleDatabase db = make_database(spec, read_manifest(a.db), a.run.active_limit);

  fs::create_directories(a.out);
  std::ofstream diag(fs::path(a.out) / "diagnostics.jsonl");
  opts.sink = [&diag](const IterationRecord& r) { diag << r.to_json() << "\n"; };

  const ModeResult res = run_mode(spec, {{source, query}}, db, opts);
  for (const auto& e : res.updates) {
    diag << update_json(e).dump() << "\n";
  }
  nlohmann::json summary;
  summary["event"] = "summary";
  summary["converged"] = res.synthesis.converged;
  summary["updates"] = res.updates.size();
  diag << summary.dump() << "\n";

  switch (spec.mode) {
    case Mode::depth:
      io::write_depth(fs::path(a.out) / "depth.bin", res.output("depth"));
      break;
    case Mode::backside:
      io::write_depth(fs::path(a.out) / "back.bin", res.output("back"));
      break;
    case Mode::colorize: {
      const io::YCbCrImage ycc{res.output("intensity"), res.output("cb"), res.output("cr")};
      io::write_ppm(fs::path(a.out) / "color.ppm", io::to_rgb(ycc));
      break;
    }
  }
  for (const auto& level : res.synthesis.levels) {
    std::cout << "level " << level.level << " k=" << level.k << " iterations=" << level.iterations
              << (level.converged ? " converged" : " not converged") << "\n";
  }
  std::cout << "exemplar updates: " << res.updates.size() << "\n";
  if (!res.synthesis.converged) {
    std::cerr << "warning: synthesis did not converge\n";
    return a.allow_nonconverged ? 0 : kExitNotConverged;
  }
  return 0;
}

struct GenArgs {
  std::string cls;
  int objects = 12;
  std::string views = "0,0;30,-20";
  std::uint64_t seed = 1;
  int size = 0;
  std::string out;
};

int run_gen(const GenArgs& a) {
  ClassSpec cls = class_preset(a.cls);
  if (a.size > 0) {
    cls.width = a.size;
    cls.height = a.size;
  }
  const auto views = parse_views(a.views);
  std::cout << "class=" << cls.name << " objects=" << a.objects << " views=" << a.views << " seed=" << a.seed
            << " size=" << cls.width << "x" << cls.height << "\n";
  const auto examples = generate_database(cls, a.objects, views, a.seed);
  const fs::path manifest = write_manifest(a.out, examples);
  std::cout << "wrote " << examples.size() << " exemplars to " << manifest.string() << "\n";
  return 0;
}

struct EvalArgs {
  RunFlags run;
  std::string db;
  std::string out;
  bool search = false;
  std::string train;
  std::string cache;
  std::string cache_key;
  int max_evals = 60;
};

int run_evaluate(const EvalArgs& a) {
  const ModeSpec spec = a.run.spec();
  EvalOptions eo;
  eo.mode = spec.mode;
  eo.run = a.run.options(spec);
  eo.active_limit = a.run.active_limit;

  if (a.search) {
    if (a.train.empty()) {
      throw Error("--search-weights needs --train");
    }
    const auto init = eo.run.weights.value_or(spec.default_weights);
    const auto training = read_manifest(a.train);
    WeightSearchOptions so;
    so.max_evals = a.max_evals;
    auto search = [&] { return search_weights(training, init, eo, so).weights; };
    const std::string key = a.cache_key.empty() ? mode_name(spec.mode) : a.cache_key;
    WeightCache cache = a.cache.empty() ? WeightCache() : WeightCache(a.cache);
    eo.run.weights = cache.get_or_search(key, search);
    std::cout << "searched weights: " << eo.run.weights->to_string() << "\n";
  }
  std::cout << a.run.snapshot(spec, eo.run) << "\n";

  const EvalReport report = leave_one_out(read_manifest(a.db), eo);
  std::cout << report.to_table();
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    os << report.to_csv();
    if (!os) {
      throw Error("cannot write " + a.out);
    }
  }
  return 0;
}

struct PreviewArgs {
  std::string depth;
  std::string out;
  double z_scale = 1.0;
};

// Lambertian hillshade, light from the upper left. Depth units follow the
// renderer: the image spans 2 units horizontally.
int run_preview(const PreviewArgs& a) {
  const ChannelGrid d = io::read_depth(a.depth);
  const int w = d.width();
  const int h = d.height();
  std::cout << "depth=" << a.depth << " z_scale=" << a.z_scale << "\n";
  const double px = 2.0 / w;
  const double lx = -1.0;
  const double ly = -1.0;
  const double lz = 1.5;
  const double ln = std::sqrt(lx * lx + ly * ly + lz * lz);
  auto slope = [&](int x, int y, int dx, int dy) {
    const bool fwd = d.in_bounds(x + dx, y + dy) && d.foreground(x + dx, y + dy);
    const bool back = d.in_bounds(x - dx, y - dy) && d.foreground(x - dx, y - dy);
    if (fwd && back) {
      return (d.at(x + dx, y + dy) - d.at(x - dx, y - dy)) / (2.0 * px);
    }
    if (fwd) {
      return (d.at(x + dx, y + dy) - d.at(x, y)) / px;
    }
    if (back) {
      return (d.at(x, y) - d.at(x - dx, y - dy)) / px;
    }
    return 0.0;
  };
  ChannelGrid shade(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!d.foreground(x, y)) {
        continue;
      }
      // depth grows away from the viewer, so the surface height is -depth
      const double gx = -a.z_scale * slope(x, y, 1, 0);
      const double gy = -a.z_scale * slope(x, y, 0, 1);
      const double nn = std::sqrt(gx * gx + gy * gy + 1.0);
      const double dot = (-gx * lx - gy * ly + lz) / (nn * ln);
      shade.set(x, y, std::clamp(0.15 + 0.85 * dot, 0.0, 1.0));
    }
  }
  io::write_pgm(a.out, shade);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Example-based depth synthesis from a single segmented image"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  app.option_defaults()->always_capture_default();

  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker cap; 0 uses every core");
  app.set_config("--config", "", "Preload flags from a key=value, TOML or JSON file");
  app.config_formatter(std::make_shared<ConfigReader>(&app));

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Synthesize the target channels for one query");
  estimate->add_option("query", est.query, "Query: intensity PGM (depth mode) or depth raster")->required();
  estimate->add_option("mask", est.mask, "Mask PGM")->required();
  estimate->add_option("--db", est.db, "Exemplar manifest")->required();
  estimate->add_option("-o,--out", est.out, "Output directory")->required();
  estimate->add_flag("--allow-nonconverged", est.allow_nonconverged, "Exit 0 even without convergence");
  est.run.add_to(estimate);

  GenArgs gen;
  auto* gen_data = app.add_subcommand("gen-data", "Render a synthetic exemplar database");
  gen_data->add_option("--class", gen.cls, "Shape class")
      ->required()
      ->check(CLI::IsMember({"sphere", "superellipsoid", "blobs", "heightfield"}));
  gen_data->add_option("--objects", gen.objects, "Number of objects")->check(CLI::PositiveNumber);
  gen_data->add_option("--views", gen.views, "Views as \"a1,b1;a2,b2\" in degrees");
  gen_data->add_option("--seed", gen.seed, "Parameter seed");
  gen_data->add_option("--size", gen.size, "Image side in pixels; 0 keeps the preset")->check(CLI::NonNegativeNumber);
  gen_data->add_option("-o,--out", gen.out, "Output directory")->required();

  EvalArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Leave-one-out evaluation against the naive baseline");
  evaluate->add_option("--db", ev.db, "Exemplar manifest")->required();
  evaluate->add_option("-o,--out", ev.out, "CSV report");
  evaluate->add_flag("--search-weights", ev.search, "Fit the weights on --train first");
  evaluate->add_option("--train", ev.train, "Training manifest for the weight search");
  evaluate->add_option("--weights-cache", ev.cache, "JSON file caching searched weights");
  evaluate->add_option("--cache-key", ev.cache_key, "Cache entry name; defaults to the mode");
  evaluate->add_option("--max-evals", ev.max_evals, "Weight search budget")->check(CLI::PositiveNumber);
  ev.run.add_to(evaluate);

  PreviewArgs pv;
  auto* preview = app.add_subcommand("render-preview", "Hillshade a depth raster");
  preview->add_option("depth", pv.depth, "Depth raster")->required();
  preview->add_option("-o,--out", pv.out, "Output PGM")->required();
  preview->add_option("--z-scale", pv.z_scale, "Relief exaggeration");

  CLI11_PARSE(app, argc, argv);

  try {
    set_thread_count(threads);
    std::cout << "threads=" << thread_count() << "\n";
    if (estimate->parsed()) {
      return run_estimate(est);
    }
    if (gen_data->parsed()) {
      return run_gen(gen);
    }
    if (evaluate->parsed()) {
      return run_evaluate(ev);
    }
    return run_preview(pv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
