#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthsynth {

/// Raised for contract violations and malformed inputs throughout the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Mask = std::vector<std::uint8_t>;

inline constexpr double kBackground = std::numeric_limits<double>::quiet_NaN();

/// A rectangular scalar field with a foreground mask.
///
/// Background pixels hold a NaN sentinel. Every reduction in the library
/// filters on the mask, so the sentinel never enters arithmetic.
class ChannelGrid {
 public:
  ChannelGrid() = default;

  /// All-background grid.
  ChannelGrid(int width, int height);

  /// Grid with every pixel set to `fill`, foreground or background.
  ChannelGrid(int width, int height, double fill, bool foreground);

  /// Takes ownership of values and mask. Background values are replaced by
  /// the sentinel.
  ChannelGrid(int width, int height, std::vector<double> values, Mask mask);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  bool foreground(std::size_t i) const { return mask_[i] != 0; }
  bool foreground(int x, int y) const { return mask_[index(x, y)] != 0; }

  double operator[](std::size_t i) const { return values_[i]; }
  double at(int x, int y) const { return values_[index(x, y)]; }

  /// Writes a foreground value.
  void set(std::size_t i, double v) {
    values_[i] = v;
    mask_[i] = 1;
  }
  void set(int x, int y, double v) { set(index(x, y), v); }
  void set_background(std::size_t i) {
    values_[i] = kBackground;
    mask_[i] = 0;
  }

  std::span<const double> values() const { return values_; }
  const Mask& mask() const { return mask_; }

  std::size_t foreground_count() const;
  bool same_shape(const ChannelGrid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  bool same_mask(const ChannelGrid& other) const {
    return same_shape(other) && mask_ == other.mask_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
  Mask mask_;
};

/// Depth zero-point convention. Only one frame exists: zero mean over the
/// foreground depths.
enum class DepthFrame { centroid_zero };

/// A depth grid in the shared centroid-zero frame.
struct DepthMap {
  ChannelGrid grid;
  DepthFrame frame = DepthFrame::centroid_zero;
  /// The constant removed from the raw depths to reach this frame.
  double offset = 0.0;
};

/// Shifts the foreground so its mean is zero. Throws on an empty foreground.
DepthMap normalize_depth_frame(const ChannelGrid& depth);
DepthMap normalize_depth_frame(const DepthMap& depth);

/// Unweighted mean coordinates of the foreground pixels.
Point2 foreground_centroid(const ChannelGrid& grid);
Point2 foreground_centroid(const Mask& mask, int width, int height);

double foreground_mean(const ChannelGrid& grid);
/// max - min over the foreground; 0 for a single value.
double foreground_range(const ChannelGrid& grid);

/// Adds `offset` to every foreground value.
ChannelGrid shifted(const ChannelGrid& grid, double offset);

/// Copies `grid` onto a new mask. Pixels that become foreground without a
/// source value take the value of their nearest source-foreground pixel.
ChannelGrid remask(const ChannelGrid& grid, const Mask& mask);

/// For every pixel, the linear index of the Euclidean-nearest foreground
/// pixel (ties to the smallest (y, x)); -1 everywhere if the mask is empty.
std::vector<int> nearest_foreground(const Mask& mask, int width, int height);

/// Translates a grid by an integer pixel offset; pixels shifted out of frame
/// are dropped.
ChannelGrid translated(const ChannelGrid& grid, int dx, int dy);

}  // namespace depthsynth
