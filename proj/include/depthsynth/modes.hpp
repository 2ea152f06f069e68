#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "depthsynth/exemplar_update.hpp"
#include "depthsynth/mapping.hpp"
#include "depthsynth/optimizer.hpp"

namespace depthsynth {

enum class Mode { depth, backside, colorize };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct ModeSpec {
  Mode mode = Mode::depth;
  ChannelSchema schema;
  ChannelWeights default_weights;
  /// Patch size per level, coarsest first.
  std::vector<int> default_k;
  std::vector<std::string> normalized_sources;
  bool update_exemplars = false;
  /// Number of objects used for synthesis.
  std::size_t default_m = 4;
};

ModeSpec mode_spec(Mode mode);

struct RunOptions {
  std::optional<ChannelWeights> weights;
  std::optional<std::vector<int>> k;
  int levels = 3;
  double sigma_agg = 0.0;
  int max_iters = 20;
  double eps = 0.0;
  bool brute_force = false;
  std::optional<bool> update_exemplars;
  int max_exemplar_updates = 4;
  ExemplarUpdateConfig update;
  /// Objects used for synthesis; 0 takes the mode default.
  std::size_t m = 0;
  /// Seed views for the depth mode; empty uses every view in the pool.
  std::vector<ViewAngles> seed_views;
  bool keep_assignments = false;
  DiagnosticsSink sink;
};

/// The synthesis config run_mode would use for `spec` and `options`.
SynthesisConfig synthesis_config(const ModeSpec& spec, const RunOptions& options);

/// One-line description of every effective setting, for logs and reports.
std::string config_snapshot(const ModeSpec& spec, const RunOptions& options, std::size_t active_limit);

struct ModeResult {
  /// Outputs in schema target order. The depth mode output is in the
  /// centroid-zero frame; the backside and colorize outputs share the frame
  /// of the query depth.
  std::vector<NamedChannel> outputs;
  SynthesisResult synthesis;
  /// Pool indices active at the end of the run.
  std::vector<std::size_t> final_active;
  std::vector<UpdateEvent> updates;

  const ChannelGrid& output(const std::string& name) const;
};

/// Mean squared intensity difference after aligning mask centroids (integer
/// shift), over the mask intersection. Infinity when the masks do not meet.
double appearance_distance(const ChannelGrid& query, const ChannelGrid& example);

/// The `m` examples (distinct objects) with the smallest aligned depth
/// residual to `depth`, ties by (object id, view).
std::vector<std::size_t> preselect_by_depth(const ExampleDatabase& db, const ChannelGrid& depth,
                                            std::size_t m);

/// The `m` objects whose best view is nearest in appearance to `intensity`.
/// Both sides are standardized over their foreground first, so the choice
/// ignores gain and bias.
std::vector<std::string> seed_objects_by_appearance(const ExampleDatabase& db,
                                                    const ChannelGrid& intensity,
                                                    const std::vector<ViewAngles>& views,
                                                    std::size_t m);

/// Builds a database over `examples` with the mode's schema.
ExampleDatabase make_database(const ModeSpec& spec, std::vector<MappingExample> examples,
                              std::size_t active_limit = 12);

/// Runs the synthesis for one mode. `query` must supply exactly the mode's
/// source channels; `db` must use the mode's schema.
ModeResult run_mode(const ModeSpec& spec, const std::vector<NamedChannel>& query,
                    ExampleDatabase& db, const RunOptions& options = {});

}  // namespace depthsynth
