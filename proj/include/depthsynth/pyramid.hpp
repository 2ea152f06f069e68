#pragma once

#include <vector>

#include "depthsynth/grid.hpp"

namespace depthsynth {

enum class PyramidKind { gaussian, laplacian };

/// Levels run from finest (0) to coarsest; each level is half the size
/// (rounded up) of the previous one. A Laplacian pyramid stores band-pass
/// levels and keeps the Gaussian base at its coarsest level.
struct Pyramid {
  PyramidKind kind = PyramidKind::gaussian;
  std::vector<ChannelGrid> levels;

  int size() const { return static_cast<int>(levels.size()); }
};

/// Largest level count `grid` supports (each side >= 2^(levels-1)).
int max_pyramid_levels(int width, int height);

Pyramid build_gaussian(const ChannelGrid& grid, int n_levels);
Pyramid build_laplacian(const ChannelGrid& grid, int n_levels);

/// Upsample-and-add from the coarsest level. Throws for Gaussian pyramids.
ChannelGrid collapse(const Pyramid& pyramid);

/// 5-tap binomial blur (1 4 6 4 1)/16 in both axes, renormalized over
/// foreground taps, edges replicated, then decimated by two.
ChannelGrid reduce(const ChannelGrid& grid);

/// Mask of the next coarser level: the even-indexed samples.
Mask decimate_mask(const Mask& mask, int width, int height);

/// Zero-insertion upsampling followed by the same blur with gain four,
/// renormalized over foreground coarse taps. The output carries `fine_mask`.
/// Fine pixels with no foreground coarse tap in reach take the value of the
/// nearest coarse foreground sample.
ChannelGrid expand(const ChannelGrid& coarse, int width, int height, const Mask& fine_mask);

}  // namespace depthsynth
