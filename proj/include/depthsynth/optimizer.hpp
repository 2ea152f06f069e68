#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "depthsynth/grid.hpp"
#include "depthsynth/mapping.hpp"
#include "depthsynth/patch_index.hpp"
#include "depthsynth/pyramid.hpp"

namespace depthsynth {

struct SynthesisConfig {
  int levels = 3;
  /// Patch size per level, coarsest first.
  std::vector<int> k = {5, 7, 9};
  ChannelWeights weights;
  /// Source channels whose windows are z-scored (their "_hf" bands are
  /// scaled by the same window std).
  std::vector<std::string> normalized_sources;
  /// Aggregation Gaussian sigma; 0 means k/3 per level, infinity a plain mean.
  double sigma_agg = 0.0;
  int max_iters = 20;
  /// Convergence on mean |change| below this fraction of the band range.
  double change_tolerance = 1e-4;
  double eps = 0.0;
  bool brute_force = false;
  /// Cap on accepted exemplar updates per run (update hook calls that change
  /// the database).
  int max_exemplar_updates = 4;
  /// Keep every iteration's assignment field in the result.
  bool keep_assignments = false;
};

/// The hidden assignment field: one match per accepted query window.
struct AssignmentField {
  int level = 0;
  int iteration = 0;
  std::vector<PixelCoord> centers;
  std::vector<PatchQueryResult> matches;

  /// Sum of match distances.
  double total_distance() const;
};

/// Diagnostics for one EM iteration.
struct IterationRecord {
  int level = 0;
  int iteration = 0;
  /// -1/2 times the summed patch distance of this iteration's assignments
  /// to the estimate after its M-step, over all segments.
  double plausibility_log = 0.0;
  std::size_t patches = 0;
  std::size_t changed = 0;
  double mean_change = std::numeric_limits<double>::quiet_NaN();
  bool db_changed = false;
  std::vector<std::string> active;

  /// One JSON object, no trailing newline.
  std::string to_json() const;
};

struct LevelTrace {
  int level = 0;
  int k = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> records;
};

struct SynthesisResult {
  /// Full-resolution synthesized targets in schema order.
  std::vector<NamedChannel> targets;
  /// Synthesized Laplacian pyramid per target.
  std::vector<Pyramid> bands;
  bool converged = true;
  std::vector<LevelTrace> levels;
  AssignmentField final_assignments;
  /// Every E-step's field, in order, when keep_assignments is set.
  std::vector<AssignmentField> history;

  const ChannelGrid& target(const std::string& name) const;
};

struct UpdateContext {
  int level = 0;
  int iteration = 0;
  /// Current coarsest-level estimate of the first target channel.
  const ChannelGrid* coarse_estimate = nullptr;
  const AssignmentField* assignments = nullptr;
};

/// Called after each M-step at the coarsest level. Returns true when it
/// changed the active set.
using UpdateHook = std::function<bool(ExampleDatabase&, const UpdateContext&)>;
using DiagnosticsSink = std::function<void(const IterationRecord&)>;

/// Where the M-step reads exemplar target values: the synthesized channel of
/// an exemplar at the current level and the exemplar's window table.
struct ExemplarTarget {
  const ChannelGrid* values = nullptr;
  const PatchWindows* windows = nullptr;
};

/// E-step. Assigns every query feature its nearest indexed patch over the
/// segments in `mask` and tallies one usage per match on `db` (after resetting
/// all usage counts) when given.
AssignmentField get_similar_patches(const PatchFeatureSet& query, const PatchIndex& index,
                                    PresenceMask mask, ExampleDatabase* db = nullptr,
                                    const std::vector<std::vector<std::size_t>>& hints = {});

/// M-step. Each pixel becomes the Gaussian-weighted mean of the exemplar values
/// the assignments place on it. A window entry that was replicated from the
/// nearest foreground pixel counts toward that pixel. Uncovered foreground
/// pixels keep `previous`, or take the nearest covered value without one.
ChannelGrid update_depths(const AssignmentField& assignments, const PatchWindows& query_windows,
                          const std::vector<ExemplarTarget>& targets, double sigma_agg,
                          const ChannelGrid* previous = nullptr);

/// Hard-EM synthesis of the schema targets from query source channels,
/// coarse to fine. `query` must hold every schema source channel.
SynthesisResult estimate(const std::vector<NamedChannel>& query, ExampleDatabase& db,
                         const SynthesisConfig& config, const UpdateHook& hook = {},
                         const DiagnosticsSink& sink = {});

}  // namespace depthsynth
