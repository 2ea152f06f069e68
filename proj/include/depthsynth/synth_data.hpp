#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthsynth/grid.hpp"
#include "depthsynth/mapping.hpp"

namespace depthsynth {

using Vec3 = std::array<double, 3>;

enum class ShapeFamily { sphere, superellipsoid, blobs, heightfield };

std::string family_name(ShapeFamily f);

/// Additive Gaussian offset of the implicit function; positive amplitude
/// grows the surface outward.
struct Bump {
  Vec3 center{};
  double amplitude = 0.0;
  double sigma = 0.1;
};

/// Ellipsoid component of a blended-blob shape, rotated by `angle` radians
/// about the z axis.
struct Blob {
  Vec3 center{};
  Vec3 radii{0.3, 0.3, 0.3};
  double angle = 0.0;
};

struct Spot {
  Vec3 center{};
  double radius = 0.1;
  Vec3 color{};
};

enum class Pattern { uniform, stripes, blotches };

/// Procedural RGB albedo in object coordinates.
struct Texture {
  Pattern pattern = Pattern::uniform;
  Vec3 base{0.8, 0.8, 0.8};
  Vec3 accent{0.3, 0.3, 0.3};
  double frequency = 10.0;
  double phase = 0.0;
  /// Direction of stripes in the object xy plane (radians).
  double orientation = 0.0;
  std::vector<Spot> spots;
};

struct ShapeSpec {
  ShapeFamily family = ShapeFamily::sphere;
  /// Sphere radius.
  double radius = 0.8;
  /// Superellipsoid semi-axes and exponents (1 = ellipsoid).
  Vec3 axes{0.6, 0.8, 0.5};
  double e1 = 1.0;
  double e2 = 1.0;
  std::vector<Bump> bumps;
  /// Blended blobs, smooth-min sharpness.
  std::vector<Blob> blobs;
  double blend = 8.0;
  /// Heightfield solid: outline semi-axes, outline wobble and phase, front and
  /// back dome heights, and the minimum thickness on both sides.
  double outline_a = 0.75;
  double outline_b = 0.4;
  double wobble = 0.0;
  double wobble_phase = 0.0;
  double front_height = 0.2;
  double back_height = 0.2;
  double thickness0 = 0.05;
  Texture texture;
  ViewAngles view;
  /// Direction towards the light in the view frame (normalized on use).
  Vec3 light{-0.3, 0.4, 1.0};
  int width = 64;
  int height = 64;
};

/// Throws for parameters outside their valid ranges.
void validate_shape(const ShapeSpec& spec);

/// Implicit function of the shape in object coordinates; negative inside.
double shape_field(const ShapeSpec& spec, const Vec3& p);

/// Raw orthographic layers. The image spans [-1, 1] horizontally with square
/// pixels; the camera looks down -z of the view frame and depth is -z, so the
/// back layer is the last exit point along the ray and never lies in front
/// of the first entry.
struct RenderLayers {
  ChannelGrid front;
  ChannelGrid back;
  ChannelGrid intensity;
  ChannelGrid cb;
  ChannelGrid cr;
  /// Shaded color, for PPM output.
  ChannelGrid r;
  ChannelGrid g;
  ChannelGrid b;
};

RenderLayers render_layers(const ShapeSpec& spec);

/// Renders an exemplar with channels intensity, depth, back, cb and cr. The
/// front depth is shifted to zero foreground mean and the back layer by the
/// same amount. Intensity and RGB are quantized to 8 bits, chroma (from the
/// quantized RGB) and depths to float32, so manifests round-trip exactly. Throws "degenerate shape" for an
/// empty foreground.
MappingExample render(const ShapeSpec& spec, const std::string& object_id);

struct ClassSpec {
  std::string name;
  ShapeFamily family = ShapeFamily::sphere;
  int width = 64;
  int height = 64;
};

/// Presets: "sphere", "superellipsoid", "blobs", "heightfield".
ClassSpec class_preset(const std::string& name);

/// Draws the shape of object `index` for `seed`; the view is left frontal.
ShapeSpec sample_shape(const ClassSpec& cls, std::uint64_t seed, int index);

std::string object_id(const ClassSpec& cls, std::uint64_t seed, int index);

/// n_objects parameter draws, each rendered at every view, object-major.
std::vector<MappingExample> generate_database(const ClassSpec& cls, int n_objects,
                                              const std::vector<ViewAngles>& views,
                                              std::uint64_t seed);

/// Parses "a1,b1;a2,b2".
std::vector<ViewAngles> parse_views(const std::string& text);

/// Writes every example's files into `dir` plus `dir/manifest.txt`; returns
/// the manifest path. Chroma goes to float rasters (cb=, cr=); the color PPM
/// is a preview. Without cb=/cr= fields, read_manifest derives chroma from
/// the PPM.
std::filesystem::path write_manifest(const std::filesystem::path& dir,
                                     const std::vector<MappingExample>& examples);

/// Reads a manifest; paths resolve relative to its directory.
std::vector<MappingExample> read_manifest(const std::filesystem::path& manifest);

}  // namespace depthsynth
