#include "depthsynth/pyramid.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace depthsynth {

namespace {

constexpr std::array<double, 5> kTaps = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

int half_up(int n) { return (n + 1) / 2; }

void check_levels(const ChannelGrid& grid, int n_levels) {
  if (n_levels < 1) {
    throw Error("pyramid needs at least one level");
  }
  if (grid.empty()) {
    throw Error("pyramid input is empty");
  }
  if (n_levels > max_pyramid_levels(grid.width(), grid.height())) {
    throw Error("grid too small for " + std::to_string(n_levels) + " pyramid levels");
  }
}

}  // namespace

int max_pyramid_levels(int width, int height) {
  int levels = 1;
  long side = 2;
  while (side <= width && side <= height) {
    ++levels;
    side *= 2;
  }
  return levels;
}

Mask decimate_mask(const Mask& mask, int width, int height) {
  const int cw = half_up(width);
  const int ch = half_up(height);
  Mask out(static_cast<std::size_t>(cw) * ch, 0);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      out[static_cast<std::size_t>(y) * cw + x] = mask[static_cast<std::size_t>(2 * y) * width + 2 * x];
    }
  }
  return out;
}

ChannelGrid reduce(const ChannelGrid& grid) {
  const int w = grid.width();
  const int h = grid.height();
  const int cw = half_up(w);
  const int ch = half_up(h);
  ChannelGrid out(cw, ch);
  for (int cy = 0; cy < ch; ++cy) {
    for (int cx = 0; cx < cw; ++cx) {
      const int fx = 2 * cx;
      const int fy = 2 * cy;
      if (!grid.foreground(fx, fy)) {
        continue;
      }
      double sum = 0.0;
      double wsum = 0.0;
      for (int j = 0; j < 5; ++j) {
        const int yy = clamp_index(fy + j - 2, h);
        for (int i = 0; i < 5; ++i) {
          const int xx = clamp_index(fx + i - 2, w);
          if (!grid.foreground(xx, yy)) {
            continue;
          }
          const double k = kTaps[i] * kTaps[j];
          sum += k * grid.at(xx, yy);
          wsum += k;
        }
      }
      out.set(cx, cy, sum / wsum);
    }
  }
  return out;
}

ChannelGrid expand(const ChannelGrid& coarse, int width, int height, const Mask& fine_mask) {
  const int cw = coarse.width();
  const int ch = coarse.height();
  if (half_up(width) != cw || half_up(height) != ch) {
    throw Error("expand: coarse grid is not half the fine size");
  }
  if (fine_mask.size() != static_cast<std::size_t>(width) * height) {
    throw Error("expand: mask size mismatch");
  }
  std::vector<int> nearest;  // built on first use
  ChannelGrid out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t fi = static_cast<std::size_t>(y) * width + x;
      if (fine_mask[fi] == 0) {
        continue;
      }
      double sum = 0.0;
      double wsum = 0.0;
      // Coarse sample q sits at fine position 2q; it reaches p when |p - 2q| <= 2.
      for (int qy = (y - 2) >> 1; qy <= (y + 2) >> 1; ++qy) {
        const int dy = y - 2 * qy;
        if (dy < -2 || dy > 2) {
          continue;
        }
        const int cy = clamp_index(qy, ch);
        for (int qx = (x - 2) >> 1; qx <= (x + 2) >> 1; ++qx) {
          const int dx = x - 2 * qx;
          if (dx < -2 || dx > 2) {
            continue;
          }
          const int cx = clamp_index(qx, cw);
          if (!coarse.foreground(cx, cy)) {
            continue;
          }
          const double k = kTaps[dx + 2] * kTaps[dy + 2];
          sum += k * coarse.at(cx, cy);
          wsum += k;
        }
      }
      if (wsum > 0.0) {
        out.set(fi, sum / wsum);
        continue;
      }
      if (nearest.empty()) {
        nearest = nearest_foreground(coarse.mask(), cw, ch);
      }
      const int src = nearest[coarse.index(std::min(x / 2, cw - 1), std::min(y / 2, ch - 1))];
      if (src < 0) {
        throw Error("expand: coarse grid has no foreground");
      }
      out.set(fi, coarse[static_cast<std::size_t>(src)]);
    }
  }
  return out;
}

Pyramid build_gaussian(const ChannelGrid& grid, int n_levels) {
  check_levels(grid, n_levels);
  Pyramid p{PyramidKind::gaussian, {grid}};
  for (int l = 1; l < n_levels; ++l) {
    p.levels.push_back(reduce(p.levels.back()));
    if (p.levels.back().foreground_count() == 0) {
      throw Error("mask vanishes at pyramid level " + std::to_string(l));
    }
  }
  return p;
}

Pyramid build_laplacian(const ChannelGrid& grid, int n_levels) {
  Pyramid g = build_gaussian(grid, n_levels);
  Pyramid p{PyramidKind::laplacian, {}};
  p.levels.reserve(g.levels.size());
  for (int l = 0; l + 1 < n_levels; ++l) {
    const ChannelGrid& fine = g.levels[l];
    const ChannelGrid up = expand(g.levels[l + 1], fine.width(), fine.height(), fine.mask());
    ChannelGrid band(fine.width(), fine.height());
    for (std::size_t i = 0; i < fine.size(); ++i) {
      if (fine.foreground(i)) {
        band.set(i, fine[i] - up[i]);
      }
    }
    p.levels.push_back(std::move(band));
  }
  p.levels.push_back(std::move(g.levels.back()));
  return p;
}

ChannelGrid collapse(const Pyramid& pyramid) {
  if (pyramid.kind != PyramidKind::laplacian) {
    throw Error("collapse needs a Laplacian pyramid");
  }
  if (pyramid.levels.empty()) {
    throw Error("collapse: empty pyramid");
  }
  ChannelGrid current = pyramid.levels.back();
  for (int l = pyramid.size() - 2; l >= 0; --l) {
    const ChannelGrid& band = pyramid.levels[l];
    const ChannelGrid up = expand(current, band.width(), band.height(), band.mask());
    ChannelGrid next(band.width(), band.height());
    for (std::size_t i = 0; i < band.size(); ++i) {
      if (band.foreground(i)) {
        next.set(i, band[i] + up[i]);
      }
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace depthsynth
