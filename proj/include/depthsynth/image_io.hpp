#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "depthsynth/grid.hpp"

namespace depthsynth::io {

/// Binary 8-bit PGM (P5, maxval 255). Values in [0, 1] map to 0..255. Every
/// pixel reads as foreground; background writes as 0.
ChannelGrid read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const ChannelGrid& grid);

/// Masks are PGMs with 0 = background and 255 = foreground. Any non-zero
/// byte reads as foreground.
Mask read_mask(const std::filesystem::path& path, int* width = nullptr, int* height = nullptr);
void write_mask(const std::filesystem::path& path, const Mask& mask, int width, int height);

struct RgbImage {
  ChannelGrid r;
  ChannelGrid g;
  ChannelGrid b;
};

/// Binary 8-bit PPM (P6).
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Depth raster: the ASCII lines "DEPTH", "<width>", "<height>", then
/// width*height little-endian float32 values, row-major. Background is the
/// IEEE quiet NaN 0x7FC00000.
ChannelGrid read_depth(const std::filesystem::path& path);
void write_depth(const std::filesystem::path& path, const ChannelGrid& grid);

/// Full-range (JPEG) YCbCr, all components in [0, 1].
std::array<double, 3> rgb_to_ycbcr(double r, double g, double b);
std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr);

struct YCbCrImage {
  ChannelGrid y;
  ChannelGrid cb;
  ChannelGrid cr;
};
YCbCrImage to_ycbcr(const RgbImage& rgb);
RgbImage to_rgb(const YCbCrImage& ycc);

/// Quantization used by the 8-bit formats.
inline double quantize8(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<double>(static_cast<int>(c * 255.0 + 0.5)) / 255.0;
}

}  // namespace depthsynth::io
