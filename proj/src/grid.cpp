#include "depthsynth/grid.hpp"

#include <algorithm>
#include <cmath>

namespace depthsynth {

ChannelGrid::ChannelGrid(int width, int height) : ChannelGrid(width, height, kBackground, false) {}

ChannelGrid::ChannelGrid(int width, int height, double fill, bool foreground)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw Error("grid dimensions must be positive");
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  values_.assign(n, foreground ? fill : kBackground);
  mask_.assign(n, foreground ? 1 : 0);
}

ChannelGrid::ChannelGrid(int width, int height, std::vector<double> values, Mask mask)
    : width_(width), height_(height), values_(std::move(values)), mask_(std::move(mask)) {
  if (width < 1 || height < 1) {
    throw Error("grid dimensions must be positive");
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (values_.size() != n || mask_.size() != n) {
    throw Error("grid values and mask must have width*height entries");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask_[i] == 0) {
      values_[i] = kBackground;
    } else {
      mask_[i] = 1;
    }
  }
}

std::size_t ChannelGrid::foreground_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

DepthMap normalize_depth_frame(const ChannelGrid& depth) {
  if (depth.empty() || depth.foreground_count() == 0) {
    throw Error("no object pixels");
  }
  const double mean = foreground_mean(depth);
  DepthMap out{shifted(depth, -mean), DepthFrame::centroid_zero, mean};
  // A second pass removes the residual left by rounding in the first.
  const double residual = foreground_mean(out.grid);
  if (residual != 0.0) {
    out.grid = shifted(out.grid, -residual);
    out.offset += residual;
  }
  return out;
}

DepthMap normalize_depth_frame(const DepthMap& depth) {
  DepthMap out = normalize_depth_frame(depth.grid);
  out.offset += depth.offset;
  return out;
}

Point2 foreground_centroid(const Mask& mask, int width, int height) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask[static_cast<std::size_t>(y) * width + x] != 0) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  if (n == 0) {
    throw Error("no object pixels");
  }
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

Point2 foreground_centroid(const ChannelGrid& grid) {
  if (grid.empty()) {
    throw Error("no object pixels");
  }
  return foreground_centroid(grid.mask(), grid.width(), grid.height());
}

double foreground_mean(const ChannelGrid& grid) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.foreground(i)) {
      sum += grid[i];
      ++n;
    }
  }
  if (n == 0) {
    throw Error("no object pixels");
  }
  return sum / static_cast<double>(n);
}

double foreground_range(const ChannelGrid& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.foreground(i)) {
      lo = std::min(lo, grid[i]);
      hi = std::max(hi, grid[i]);
    }
  }
  if (lo > hi) {
    throw Error("no object pixels");
  }
  return hi - lo;
}

ChannelGrid shifted(const ChannelGrid& grid, double offset) {
  ChannelGrid out = grid;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.foreground(i)) {
      out.set(i, grid[i] + offset);
    }
  }
  return out;
}

ChannelGrid remask(const ChannelGrid& grid, const Mask& mask) {
  const int w = grid.width();
  const int h = grid.height();
  if (mask.size() != grid.size()) {
    throw Error("remask: mask size mismatch");
  }
  const std::vector<int> nearest = nearest_foreground(grid.mask(), w, h);
  ChannelGrid out(w, h);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (mask[i] == 0) {
      continue;
    }
    if (grid.foreground(i)) {
      out.set(i, grid[i]);
    } else if (nearest[i] >= 0) {
      out.set(i, grid[static_cast<std::size_t>(nearest[i])]);
    } else {
      throw Error("remask: source grid has no foreground");
    }
  }
  return out;
}

std::vector<int> nearest_foreground(const Mask& mask, int width, int height) {
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<int> out(n, -1);
  if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) {
    return out;
  }
  const int max_r = std::max(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (mask[i] != 0) {
        out[i] = static_cast<int>(i);
        continue;
      }
      long best_d2 = std::numeric_limits<long>::max();
      int best = -1;
      // Ring r holds pixels at Chebyshev distance r; their squared Euclidean
      // distance is at least r^2, so the scan stops once r^2 exceeds the best.
      for (int r = 1; r <= max_r; ++r) {
        if (static_cast<long>(r) * r > best_d2) {
          break;
        }
        for (int yy = y - r; yy <= y + r; ++yy) {
          if (yy < 0 || yy >= height) {
            continue;
          }
          const bool edge_row = (yy == y - r || yy == y + r);
          const int step = edge_row ? 1 : 2 * r;
          for (int xx = x - r; xx <= x + r; xx += step) {
            if (xx < 0 || xx >= width) {
              continue;
            }
            const std::size_t j = static_cast<std::size_t>(yy) * width + xx;
            if (mask[j] == 0) {
              continue;
            }
            const long d2 = static_cast<long>(xx - x) * (xx - x) + static_cast<long>(yy - y) * (yy - y);
            if (d2 < best_d2 || (d2 == best_d2 && static_cast<int>(j) < best)) {
              best_d2 = d2;
              best = static_cast<int>(j);
            }
          }
        }
      }
      out[i] = best;
    }
  }
  return out;
}

ChannelGrid translated(const ChannelGrid& grid, int dx, int dy) {
  ChannelGrid out(grid.width(), grid.height());
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (!grid.foreground(x, y)) {
        continue;
      }
      const int tx = x + dx;
      const int ty = y + dy;
      if (out.in_bounds(tx, ty)) {
        out.set(tx, ty, grid.at(x, y));
      }
    }
  }
  return out;
}

}  // namespace depthsynth
