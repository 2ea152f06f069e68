#pragma once

// Small rendered databases shared by the synthesis tests.

#include <cmath>
#include <string>
#include <vector>

#include "depthsynth/mapping.hpp"
#include "depthsynth/synth_data.hpp"

namespace testfx {

inline depthsynth::ClassSpec small_class(const std::string& name, int size = 48) {
  depthsynth::ClassSpec c = depthsynth::class_preset(name);
  c.width = size;
  c.height = size;
  return c;
}

inline std::vector<depthsynth::MappingExample> small_db(const std::string& cls, int objects,
                                                        const std::vector<depthsynth::ViewAngles>& views,
                                                        std::uint64_t seed, int size = 48) {
  return depthsynth::generate_database(small_class(cls, size), objects, views, seed);
}

inline std::vector<depthsynth::NamedChannel> source_of(const depthsynth::MappingExample& e,
                                                       const std::string& name) {
  return {{name, e.channel(name)}};
}

/// Mean |a - b| over the foreground of `a`.
inline double mean_abs(const depthsynth::ChannelGrid& a, const depthsynth::ChannelGrid& b) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.foreground(i)) {
      s += std::abs(a[i] - b[i]);
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

// Independent residual: integer centroid shift, per-grid mean removal,
// mean squared difference over the overlap.
inline double residual_oracle(const depthsynth::ChannelGrid& d, const depthsynth::ChannelGrid& c) {
  double dx = 0, dy = 0, cx = 0, cy = 0, dm = 0, cm = 0;
  int nd = 0, nc = 0;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (d.foreground(x, y)) {
        dx += x; dy += y; dm += d.at(x, y); ++nd;
      }
  for (int y = 0; y < c.height(); ++y)
    for (int x = 0; x < c.width(); ++x)
      if (c.foreground(x, y)) {
        cx += x; cy += y; cm += c.at(x, y); ++nc;
      }
  const int sx = static_cast<int>(std::lround(dx / nd - cx / nc));
  const int sy = static_cast<int>(std::lround(dy / nd - cy / nc));
  double s = 0;
  int n = 0;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      const int u = x - sx, v = y - sy;
      if (!d.foreground(x, y) || u < 0 || v < 0 || u >= c.width() || v >= c.height() || !c.foreground(u, v)) continue;
      const double t = (d.at(x, y) - dm / nd) - (c.at(u, v) - cm / nc);
      s += t * t;
      ++n;
    }
  return n ? s / n : INFINITY;
}

}  // namespace testfx
