#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "depthsynth/grid.hpp"

namespace depthsynth {

enum class Normalization {
  none,
  /// Window z-score (population variance). Flat windows become all zeros.
  zscore,
  /// Divide by the window std of another (z-scored) channel; no centering.
  /// Used for high-frequency bands so a gain change cancels.
  scale_by_ref,
};

inline constexpr double kFlatVariance = 1e-8;

/// One channel of the stack that patch features are cut from.
struct FeatureChannel {
  std::string name;
  /// nullptr marks the channel absent: its entries are excluded from distance.
  const ChannelGrid* grid = nullptr;
  double weight = 1.0;
  Normalization normalization = Normalization::none;
  /// Stack index of the reference channel for scale_by_ref.
  int scale_ref = -1;
  /// Entries are further weighted by the aggregation Gaussian of the window
  /// offset. Set on synthesized channels so the weighted-mean update is the
  /// exact minimizer of the patch distance.
  bool spatial = false;
};

struct Segment {
  std::string name;
  int offset = 0;
  int length = 0;
};

/// Column layout of a feature vector: one k*k segment per channel in stack
/// order (row-major within the window) and a final two-entry "position" one.
struct FeatureLayout {
  int k = 0;
  std::vector<Segment> segments;
  int dim = 0;

  int segment_index(const std::string& name) const;
  friend bool operator==(const FeatureLayout& a, const FeatureLayout& b) {
    if (a.k != b.k || a.dim != b.dim || a.segments.size() != b.segments.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.segments.size(); ++i) {
      if (a.segments[i].name != b.segments[i].name || a.segments[i].length != b.segments[i].length) {
        return false;
      }
    }
    return true;
  }
};

/// Bit s set = segment s present.
using PresenceMask = std::uint32_t;
inline constexpr int kMaxSegments = 32;

inline PresenceMask all_present(const FeatureLayout& layout) {
  return layout.segments.size() >= 32 ? ~PresenceMask{0}
                                      : (PresenceMask{1} << layout.segments.size()) - 1;
}

/// Accepted k*k windows of a mask: fully inside the image, foreground center,
/// and at least ceil(k*k/2) foreground pixels. Background entries of an
/// accepted window read from the nearest foreground pixel.
struct PatchWindows {
  int k = 0;
  int width = 0;
  int height = 0;
  std::vector<PixelCoord> centers;
  /// Per pixel: itself if foreground, else the nearest foreground pixel.
  std::vector<int> nearest;

  /// Linear index of the pixel that supplies entry j (row-major) of the
  /// window centered at c.
  int source_pixel(PixelCoord c, int j) const {
    const int r = k / 2;
    const int x = c.x - r + j % k;
    const int y = c.y - r + j / k;
    return nearest[static_cast<std::size_t>(y) * width + x];
  }
};

/// Throws for even k, k outside [3, 15] or k larger than the image.
PatchWindows accepted_windows(const Mask& mask, int width, int height, int k);

/// Gaussian weight exp(-r^2 / 2 sigma^2) for each window entry, row-major.
/// Infinite sigma gives all ones.
std::vector<double> aggregation_weights(int k, double sigma);

/// A single flattened patch vector. Used for ad-hoc indices and tests; the
/// synthesis works on PatchFeatureSet rows directly.
struct PatchFeature {
  PixelCoord center;
  std::vector<double> vector;
  /// Pool index of the source example, -1 for a query.
  int example = -1;
  int level = 0;
};

/// Row-major matrix of features sharing one layout.
struct PatchFeatureSet {
  FeatureLayout layout;
  PresenceMask present = 0;
  std::vector<PixelCoord> centers;
  std::vector<int> examples;
  std::vector<double> data;
  int level = 0;

  std::size_t size() const { return centers.size(); }
  const double* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(layout.dim); }
  PatchFeature feature(std::size_t i) const;
  /// Concatenates rows; layouts and presence must agree.
  void append(const PatchFeatureSet& other);
};

struct ExtractOptions {
  double position_weight = 0.0;
  Point2 centroid;
  double sigma_agg = std::numeric_limits<double>::infinity();
  int example = -1;
  int level = 0;
};

/// Cuts one feature per accepted window of the stack's mask. Channel entries
/// are normalized, then scaled by sqrt(weight) (and sqrt of the aggregation
/// Gaussian for spatial channels). Position entries are
/// sqrt(position_weight) * (x - xc, y - yc).
PatchFeatureSet extract_patches(const std::vector<FeatureChannel>& stack, int k,
                                const ExtractOptions& options);
PatchFeatureSet extract_patches(const std::vector<FeatureChannel>& stack,
                                const PatchWindows& windows, const ExtractOptions& options);

/// Weighted squared distance over the segments in `mask`. Stops early and
/// returns the partial sum once it exceeds `bound`.
double feature_distance(const double* a, const double* b, const FeatureLayout& layout,
                        PresenceMask mask,
                        double bound = std::numeric_limits<double>::infinity());

struct SearchOptions {
  /// Approximation factor: results are within (1 + eps) of the true minimum.
  double eps = 0.0;
  bool brute_force = false;
  int pca_dims = 24;
  int leaf_size = 12;
};

struct PatchQueryResult {
  int example = -1;
  PixelCoord center;
  double distance = std::numeric_limits<double>::infinity();
  std::size_t row = 0;
};

/// Nearest-neighbor search over a feature set. Exact mode returns exactly the
/// brute-force answer with ties broken by (example, y, x).
///
/// A kd-tree is built per presence mask over a PCA projection of the present
/// columns; projected distances lower-bound true ones and leaves verify with
/// the full distance.
class PatchIndex {
 public:
  PatchIndex(PatchFeatureSet features, SearchOptions options = {});
  ~PatchIndex();
  PatchIndex(PatchIndex&&) noexcept;
  PatchIndex& operator=(PatchIndex&&) noexcept;

  const PatchFeatureSet& features() const { return features_; }
  const SearchOptions& options() const { return options_; }
  std::size_t size() const { return features_.size(); }

  /// Builds the tree for `mask` ahead of parallel queries.
  void prepare(PresenceMask mask) const;

  /// `hints` are candidate rows tried first; they only affect speed.
  PatchQueryResult query(const double* q, PresenceMask mask,
                         std::span<const std::size_t> hints = {}) const;
  PatchQueryResult brute_force(const double* q, PresenceMask mask) const;

  /// Row holding the window of `example` centered at `c`, or -1.
  long row_of(int example, PixelCoord c) const;

 private:
  struct Tree;
  const Tree& tree_for(PresenceMask mask) const;
  PatchQueryResult result_for(std::size_t row, double distance) const;

  PatchFeatureSet features_;
  SearchOptions options_;
  mutable std::unique_ptr<std::mutex> mutex_;
  mutable std::map<PresenceMask, std::unique_ptr<Tree>> trees_;
  struct RowTable {
    int width = 0;
    int height = 0;
    std::vector<long> rows;
  };
  std::map<int, RowTable> row_tables_;
};

PatchIndex build_index(PatchFeatureSet features, SearchOptions options = {});

/// Wraps loose feature vectors as a single-segment set. Throws on mixed
/// vector lengths or an empty list.
PatchIndex build_index(const std::vector<PatchFeature>& features, SearchOptions options = {});

/// Throws if the query length differs from the index dimension.
PatchQueryResult query_nearest(const PatchIndex& index, const PatchFeature& q);

}  // namespace depthsynth
