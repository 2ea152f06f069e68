#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "depthsynth/grid.hpp"
#include "depthsynth/mapping.hpp"
#include "depthsynth/optimizer.hpp"

namespace depthsynth {

struct ViewState {
  std::vector<ViewAngles> active_views;
  /// Patch counts per active view.
  std::vector<double> tallies;
  /// Pre-rendered views new views snap to. Empty means no snapping.
  std::vector<ViewAngles> available_views;
  double merge_threshold = 10.0;
};

struct ViewUpdate {
  ViewState state;
  /// Usage-weighted mean of the active views before snapping.
  ViewAngles mean;
  /// The snapped mean; equal to `mean` without available views.
  ViewAngles snapped;
  std::optional<ViewAngles> dropped;
  /// The snapped view fell within merge_threshold of a surviving view, so no
  /// view was added and the caller should grow the object count instead.
  bool merged = false;
  bool noop = false;
};

/// View re-estimation. The least-used view is dropped (ties to the first
/// listed) and replaced by the usage-weighted mean view snapped to the nearest
/// available view (ties to the first available). A single active view is a
/// no-op. Angles must lie within [-90, 90].
ViewUpdate update_views(const ViewState& vs, const std::vector<double>& usage);

/// Mean squared difference of two depth grids after translating `candidate`
/// by the integer offset that best aligns the mask centroids. Each grid is
/// first shifted to zero mean over its own foreground. Compared on the mask
/// intersection; infinity when the masks do not meet.
double aligned_residual(const ChannelGrid& depth, const ChannelGrid& candidate);

struct ObjectUsage {
  std::string object_id;
  double usage = 0.0;
};

struct ObjectCandidate {
  std::string object_id;
  ChannelGrid depth;
};

struct ObjectUpdate {
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::vector<std::string> admitted;
  /// Residual of every candidate, sorted ascending (ties by id).
  std::vector<std::pair<std::string, double>> ranking;
  /// Too few candidates: the current set was kept unchanged.
  bool exhausted = false;
};

/// Object replacement. Drops the `drop_count` least-used objects (ties by id)
/// and admits the candidates with the smallest aligned residual against
/// `current_depth` until the set holds `target_size` objects. Candidates
/// already kept are skipped.
ObjectUpdate update_objects(const std::vector<ObjectUsage>& active, const ChannelGrid& current_depth,
                            const std::vector<ObjectCandidate>& pool, std::size_t drop_count,
                            std::size_t target_size);

struct ExemplarUpdateConfig {
  double merge_threshold = 10.0;
  /// Fraction of active objects replaced per update (at least one).
  double replace_fraction = 0.25;
  bool views = true;
  bool objects = true;
};

/// One accepted or attempted update, for diagnostics.
struct UpdateEvent {
  int iteration = 0;
  ViewUpdate views;
  ObjectUpdate objects;
  std::vector<ViewAngles> active_views;
  std::vector<std::string> active_objects;
  bool changed = false;
};

/// Keeps the active set equal to (active objects) x (active views) within
/// the pool, and rewrites it between EM iterations.
class ExemplarUpdater {
 public:
  /// `levels` is the synthesis pyramid depth; candidate depths are compared at
  /// its coarsest level. The comparison channel is the first schema target.
  ExemplarUpdater(std::vector<std::string> seed_objects, std::vector<ViewAngles> seed_views,
                  ExemplarUpdateConfig config, int levels);

  /// Applies the current (objects, views) to `db`.
  void apply(ExampleDatabase& db) const;

  /// The update hook for estimate().
  bool operator()(ExampleDatabase& db, const UpdateContext& ctx);
  UpdateHook hook();

  const std::vector<ViewAngles>& views() const { return views_; }
  const std::vector<std::string>& objects() const { return objects_; }
  const std::vector<UpdateEvent>& events() const { return events_; }

 private:
  std::vector<std::size_t> active_indices(const ExampleDatabase& db) const;
  const ChannelGrid& coarse_depth(const ExampleDatabase& db, std::size_t example);

  std::vector<std::string> objects_;
  std::vector<ViewAngles> views_;
  ExemplarUpdateConfig config_;
  int levels_;
  std::map<std::size_t, ChannelGrid> coarse_cache_;
  std::vector<UpdateEvent> events_;
};

}  // namespace depthsynth
