#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "depthsynth/grid.hpp"
#include "depthsynth/mapping.hpp"
#include "depthsynth/modes.hpp"

namespace depthsynth {

/// Mean absolute foreground difference after moving both grids to the
/// centroid-zero frame, divided by the foreground range of `truth` (no
/// division for a flat truth). The estimate is remasked onto the truth mask.
double l1_error(const ChannelGrid& estimate, const ChannelGrid& truth);

/// Naive baseline: the target channel of the example whose source channel is
/// nearest the query, in the centroid-zero frame and on the query mask.
/// Intensity sources compare by appearance_distance, depth sources by
/// aligned_residual. Ties go to the lower pool index. `candidates` empty means
/// the whole pool.
DepthMap baseline_estimate(const ChannelGrid& query_source, const ExampleDatabase& db,
                           const std::vector<std::size_t>& candidates = {});

/// Index into the pool chosen by baseline_estimate.
std::size_t baseline_choice(const ChannelGrid& query_source, const ExampleDatabase& db,
                            const std::vector<std::size_t>& candidates = {});

struct TTest {
  double t = 0.0;
  double p = 1.0;
  std::size_t dof = 0;
  /// Non-empty when the difference variance is zero.
  std::string warning;
};

/// Two-sided paired t-test on a - b. Zero difference variance (up to rounding
/// relative to the sample magnitudes) gives p = 1 with a warning when the mean
/// difference is zero, and t = +-inf, p = 0 otherwise.
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct QueryRecord {
  std::string object_id;
  ViewAngles view;
  double method_l1 = 0.0;
  double baseline_l1 = 0.0;
  bool converged = true;
  std::size_t updates = 0;
};

struct EvalReport {
  std::string mode;
  std::string config;
  /// Sorted by (object id, alpha, beta).
  std::vector<QueryRecord> queries;
  double method_mean = 0.0;
  double method_std = 0.0;
  double baseline_mean = 0.0;
  double baseline_std = 0.0;
  TTest ttest;

  /// Columns kind,object_id,alpha,beta,method_l1,baseline_l1 with one row per
  /// query and rows mean, std and ttest (t, p). The config is the first line,
  /// as a comment.
  std::string to_csv() const;
  /// Human-readable table with Baseline and Ours columns.
  std::string to_table() const;
};

struct EvalOptions {
  Mode mode = Mode::depth;
  RunOptions run;
  std::size_t active_limit = 12;
  /// Restrict the queries; empty means all.
  std::vector<std::string> query_objects;
  std::vector<ViewAngles> query_views;
};

/// Leave-one-out: every view of every query object is estimated with all views
/// of that object removed from the pool. Queries run in parallel.
EvalReport leave_one_out(const std::vector<MappingExample>& pool, const EvalOptions& options);

struct WeightSearchOptions {
  int max_evals = 60;
  /// Stop once the simplex size in log-weight space falls below this.
  double size_tolerance = 1e-3;
  /// Initial simplex step in log-weight space.
  double initial_step = 0.7;
};

struct WeightSearchResult {
  ChannelWeights weights;
  double objective = 0.0;
  int evaluations = 0;
  bool converged = false;
};

using WeightObjective = std::function<double(const ChannelWeights&)>;

/// Nelder-Mead over the logarithms of the non-zero weights; zero weights stay
/// zero. Returns the best point evaluated. When every evaluation gives the
/// same objective the init weights come back unchanged.
WeightSearchResult search_weights(const ChannelWeights& init, const WeightObjective& objective,
                                  const WeightSearchOptions& options = {});

/// Search with the leave-one-out mean L1 over `training` as objective. Needs at
/// least three objects.
WeightSearchResult search_weights(const std::vector<MappingExample>& training, const ChannelWeights& init,
                                  const EvalOptions& eval, const WeightSearchOptions& options = {});

/// Searched weights keyed by class name, optionally persisted as JSON.
class WeightCache {
 public:
  WeightCache() = default;
  explicit WeightCache(std::filesystem::path file);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const ChannelWeights& get(const std::string& key) const;
  void put(const std::string& key, const ChannelWeights& weights);
  /// Cached weights for `key`, running `search` and storing its result on a miss.
  ChannelWeights get_or_search(const std::string& key, const std::function<ChannelWeights()>& search);

 private:
  void save() const;
  std::filesystem::path file_;
  std::map<std::string, ChannelWeights> entries_;
};

}  // namespace depthsynth
