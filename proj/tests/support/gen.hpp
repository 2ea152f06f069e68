#pragma once

// Small generators for property tests. Every case draws from its own seeded
// engine so a failure message can name the seed that reproduces it.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "depthsynth/grid.hpp"
#include "depthsynth/mapping.hpp"

namespace testgen {

using depthsynth::ChannelGrid;
using depthsynth::Mask;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  std::mt19937_64& engine() { return rng_; }

  /// Blob-shaped mask: union of random discs, never empty.
  Mask blob_mask(int w, int h, int discs = 3) {
    Mask m(static_cast<std::size_t>(w) * h, 0);
    for (int d = 0; d < discs; ++d) {
      const double cx = uniform(0.25 * w, 0.75 * w);
      const double cy = uniform(0.25 * h, 0.75 * h);
      const double r = uniform(0.15, 0.35) * std::min(w, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
            m[static_cast<std::size_t>(y) * w + x] = 1;
          }
        }
      }
    }
    m[static_cast<std::size_t>(h / 2) * w + w / 2] = 1;
    return m;
  }

  Mask full_mask(int w, int h) { return Mask(static_cast<std::size_t>(w) * h, 1); }

  /// Random values on `mask`.
  ChannelGrid grid(int w, int h, const Mask& mask, double lo = 0.0, double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (auto& x : v) x = uniform(lo, hi);
    return ChannelGrid(w, h, std::move(v), mask);
  }

  /// Smooth random field: a few random sinusoids plus a ramp.
  ChannelGrid smooth(int w, int h, const Mask& mask, double amplitude = 1.0) {
    const double fx = uniform(0.05, 0.4), fy = uniform(0.05, 0.4);
    const double px = uniform(0, 6.28), py = uniform(0, 6.28);
    const double ax = uniform(-0.02, 0.02), ay = uniform(-0.02, 0.02);
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        v[static_cast<std::size_t>(y) * w + x] =
            amplitude * (0.5 + 0.25 * std::sin(fx * x + px) * std::cos(fy * y + py) + ax * x + ay * y);
      }
    }
    return ChannelGrid(w, h, std::move(v), mask);
  }

 private:
  std::mt19937_64 rng_;
};

/// Max |a - b| over the foreground of `a`; masks must match.
inline double linf(const ChannelGrid& a, const ChannelGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.foreground(i)) m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace testgen
