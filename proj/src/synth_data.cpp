#include "depthsynth/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "depthsynth/image_io.hpp"

namespace depthsynth {

namespace {

constexpr double kZMax = 1.6;
constexpr int kMarchSteps = 320;
constexpr int kBisections = 60;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

double sq(double v) { return v * v; }

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0)) {
    throw Error("zero-length vector");
  }
  return {v[0] / n, v[1] / n, v[2] / n};
}

// p_view = Rx(beta) * Ry(alpha) * p_obj.
struct Rotation {
  double m[3][3];

  explicit Rotation(const ViewAngles& v) {
    const double a = v.alpha * std::numbers::pi / 180.0;
    const double b = v.beta * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
    const double ry[3][3] = {{ca, 0, sa}, {0, 1, 0}, {-sa, 0, ca}};
    const double rx[3][3] = {{1, 0, 0}, {0, cb, -sb}, {0, sb, cb}};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        m[i][j] = 0.0;
        for (int k = 0; k < 3; ++k) {
          m[i][j] += rx[i][k] * ry[k][j];
        }
      }
    }
  }
  Vec3 to_view(const Vec3& p) const {
    return {m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2]};
  }
  Vec3 to_object(const Vec3& p) const {
    return {m[0][0] * p[0] + m[1][0] * p[1] + m[2][0] * p[2],
            m[0][1] * p[0] + m[1][1] * p[1] + m[2][1] * p[2],
            m[0][2] * p[0] + m[1][2] * p[1] + m[2][2] * p[2]};
  }
};

double bumps_at(const std::vector<Bump>& bumps, const Vec3& p) {
  double s = 0.0;
  for (const auto& b : bumps) {
    const double r2 = sq(p[0] - b.center[0]) + sq(p[1] - b.center[1]) + sq(p[2] - b.center[2]);
    s += b.amplitude * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
  }
  return s;
}

double outline_rho(const ShapeSpec& s, double x, double y) {
  const double r = std::sqrt(sq(x / s.outline_a) + sq(y / s.outline_b));
  const double theta = std::atan2(y / s.outline_b, x / s.outline_a);
  return r * (1.0 + s.wobble * std::sin(3.0 * theta + s.wobble_phase));
}

Vec3 albedo(const Texture& t, const Vec3& p) {
  Vec3 c = t.base;
  switch (t.pattern) {
    case Pattern::uniform:
      break;
    case Pattern::stripes: {
      const double u = p[0] * std::cos(t.orientation) + p[1] * std::sin(t.orientation);
      const double s = 0.5 + 0.5 * std::sin(t.frequency * u + t.phase);
      for (int i = 0; i < 3; ++i) c[i] = t.base[i] * (1.0 - s) + t.accent[i] * s;
      break;
    }
    case Pattern::blotches: {
      const double s = 0.5 + 0.25 * std::sin(t.frequency * p[0] + t.phase) *
                                 std::sin(t.frequency * 0.7 * p[1] + 2.0 * t.phase) +
                       0.25 * std::sin(t.frequency * 0.5 * (p[0] + p[1] + p[2]) + t.phase);
      for (int i = 0; i < 3; ++i) c[i] = t.base[i] * (1.0 - s) + t.accent[i] * s;
      break;
    }
  }
  for (const auto& spot : t.spots) {
    const double r2 = sq(p[0] - spot.center[0]) + sq(p[1] - spot.center[1]) + sq(p[2] - spot.center[2]);
    const double w = std::exp(-r2 / (2.0 * spot.radius * spot.radius));
    for (int i = 0; i < 3; ++i) c[i] = c[i] * (1.0 - w) + spot.color[i] * w;
  }
  for (auto& v : c) v = clamp01(v);
  return c;
}

}  // namespace

std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::sphere:
      return "sphere";
    case ShapeFamily::superellipsoid:
      return "superellipsoid";
    case ShapeFamily::blobs:
      return "blobs";
    case ShapeFamily::heightfield:
      return "heightfield";
  }
  return "?";
}

void validate_shape(const ShapeSpec& s) {
  validate_view(s.view);
  if (s.width < 8 || s.height < 8) {
    throw Error("render size must be at least 8x8");
  }
  switch (s.family) {
    case ShapeFamily::sphere:
      if (!(s.radius > 0.0 && s.radius <= 1.4)) throw Error("sphere radius must lie in (0, 1.4]");
      break;
    case ShapeFamily::superellipsoid:
      for (double a : s.axes) {
        if (!(a > 0.0 && a <= 1.4)) throw Error("superellipsoid axes must lie in (0, 1.4]");
      }
      if (!(s.e1 >= 0.1 && s.e1 <= 4.0 && s.e2 >= 0.1 && s.e2 <= 4.0)) {
        throw Error("superellipsoid exponents must lie in [0.1, 4]");
      }
      break;
    case ShapeFamily::blobs:
      if (s.blobs.empty()) throw Error("blob shape needs at least one blob");
      for (const auto& b : s.blobs) {
        for (double r : b.radii) {
          if (!(r > 0.0)) throw Error("blob radii must be positive");
        }
      }
      if (!(s.blend > 0.0)) throw Error("blend must be positive");
      break;
    case ShapeFamily::heightfield:
      if (!(s.outline_a > 0.0 && s.outline_b > 0.0 && s.outline_a <= 1.4 && s.outline_b <= 1.4)) {
        throw Error("heightfield outline must lie in (0, 1.4]");
      }
      if (!(s.thickness0 > 0.0) || s.front_height < 0.0 || s.back_height < 0.0 ||
          s.front_height + s.thickness0 > 1.4 || s.back_height + s.thickness0 > 1.4) {
        throw Error("heightfield heights out of range");
      }
      if (!(std::abs(s.wobble) < 0.5)) throw Error("wobble must lie in (-0.5, 0.5)");
      break;
  }
  for (const auto& b : s.bumps) {
    if (!(b.sigma > 0.0)) throw Error("bump sigma must be positive");
  }
  normalized(s.light);
}

double shape_field(const ShapeSpec& s, const Vec3& p) {
  double f = 0.0;
  switch (s.family) {
    case ShapeFamily::sphere:
      f = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - s.radius;
      break;
    case ShapeFamily::superellipsoid: {
      const double xy = std::pow(std::abs(p[0] / s.axes[0]), 2.0 / s.e2) +
                        std::pow(std::abs(p[1] / s.axes[1]), 2.0 / s.e2);
      f = std::pow(xy, s.e2 / s.e1) + std::pow(std::abs(p[2] / s.axes[2]), 2.0 / s.e1) - 1.0;
      break;
    }
    case ShapeFamily::blobs: {
      double acc = 0.0;
      for (const auto& b : s.blobs) {
        const double c = std::cos(b.angle), sn = std::sin(b.angle);
        const double dx = p[0] - b.center[0], dy = p[1] - b.center[1], dz = p[2] - b.center[2];
        const double u = c * dx + sn * dy;
        const double v = -sn * dx + c * dy;
        const double d = std::sqrt(sq(u / b.radii[0]) + sq(v / b.radii[1]) + sq(dz / b.radii[2])) - 1.0;
        acc += std::exp(-s.blend * d);
      }
      f = -std::log(acc) / s.blend;
      break;
    }
    case ShapeFamily::heightfield: {
      const double rho = outline_rho(s, p[0], p[1]);
      const double dome = std::sqrt(std::max(0.0, 1.0 - rho * rho));
      const double hf = s.thickness0 + s.front_height * dome;
      const double hb = s.thickness0 + s.back_height * dome;
      f = std::max({rho - 1.0, p[2] - hf, -p[2] - hb});
      break;
    }
  }
  return f - bumps_at(s.bumps, p);
}

RenderLayers render_layers(const ShapeSpec& spec) {
  validate_shape(spec);
  const int w = spec.width;
  const int h = spec.height;
  const Rotation rot(spec.view);
  const Vec3 light = normalized(spec.light);
  RenderLayers out{ChannelGrid(w, h), ChannelGrid(w, h), ChannelGrid(w, h), ChannelGrid(w, h),
                   ChannelGrid(w, h), ChannelGrid(w, h), ChannelGrid(w, h), ChannelGrid(w, h)};
  const double pixel = 2.0 / w;
  const double dz = 2.0 * kZMax / kMarchSteps;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const double xv = (px + 0.5) * pixel - 1.0;
      const double yv = (0.5 * h - (py + 0.5)) * pixel;
      auto field = [&](double z) { return shape_field(spec, rot.to_object({xv, yv, z})); };
      // Bisect between an outside z and an inside z.
      auto refine = [&](double outside, double inside) {
        for (int i = 0; i < kBisections; ++i) {
          const double mid = 0.5 * (outside + inside);
          if (field(mid) <= 0.0) {
            inside = mid;
          } else {
            outside = mid;
          }
        }
        return 0.5 * (outside + inside);
      };
      double entry = std::numeric_limits<double>::quiet_NaN();
      double prev = kZMax;
      for (int i = 1; i <= kMarchSteps; ++i) {
        const double z = kZMax - i * dz;
        if (field(z) <= 0.0) {
          entry = refine(prev, z);
          break;
        }
        prev = z;
      }
      if (std::isnan(entry)) {
        continue;
      }
      double exit = entry;
      prev = -kZMax;
      for (int i = 1; i <= kMarchSteps; ++i) {
        const double z = -kZMax + i * dz;
        if (z >= entry) {
          break;
        }
        if (field(z) <= 0.0) {
          exit = refine(prev, z);
          break;
        }
        prev = z;
      }
      const Vec3 po = rot.to_object({xv, yv, entry});
      constexpr double e = 1e-5;
      Vec3 grad;
      for (int a = 0; a < 3; ++a) {
        Vec3 p1 = po, p0 = po;
        p1[a] += e;
        p0[a] -= e;
        grad[a] = (shape_field(spec, p1) - shape_field(spec, p0)) / (2.0 * e);
      }
      double shade = 0.0;
      const double gn = std::sqrt(grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]);
      if (gn > 0.0) {
        const Vec3 nv = rot.to_view({grad[0] / gn, grad[1] / gn, grad[2] / gn});
        shade = std::max(0.0, nv[0] * light[0] + nv[1] * light[1] + nv[2] * light[2]);
      }
      const Vec3 alb = albedo(spec.texture, po);
      const std::size_t i = out.front.index(px, py);
      out.front.set(i, -entry);
      out.back.set(i, -exit);
      const double r = alb[0] * shade, g = alb[1] * shade, b = alb[2] * shade;
      out.r.set(i, r);
      out.g.set(i, g);
      out.b.set(i, b);
      const auto ycc = io::rgb_to_ycbcr(r, g, b);
      out.intensity.set(i, ycc[0]);
      out.cb.set(i, ycc[1]);
      out.cr.set(i, ycc[2]);
    }
  }
  return out;
}

MappingExample render(const ShapeSpec& spec, const std::string& id) {
  const RenderLayers raw = render_layers(spec);
  if (raw.front.foreground_count() == 0) {
    throw Error("degenerate shape: empty foreground");
  }
  const int w = spec.width;
  const int h = spec.height;
  const double mean = foreground_mean(raw.front);
  ChannelGrid intensity(w, h), depth(w, h), back(w, h), cb(w, h), cr(w, h);
  for (std::size_t i = 0; i < raw.front.size(); ++i) {
    if (!raw.front.foreground(i)) {
      continue;
    }
    intensity.set(i, io::quantize8(raw.intensity[i]));
    const double r = io::quantize8(raw.r[i]);
    const double g = io::quantize8(raw.g[i]);
    const double b = io::quantize8(raw.b[i]);
    const auto ycc = io::rgb_to_ycbcr(r, g, b);
    cb.set(i, static_cast<float>(ycc[1]));
    cr.set(i, static_cast<float>(ycc[2]));
    depth.set(i, static_cast<float>(raw.front[i] - mean));
    back.set(i, static_cast<float>(raw.back[i] - mean));
  }
  MappingExample ex;
  ex.object_id = id;
  ex.view = spec.view;
  ex.channels = {{"intensity", std::move(intensity)},
                 {"depth", std::move(depth)},
                 {"back", std::move(back)},
                 {"cb", std::move(cb)},
                 {"cr", std::move(cr)}};
  validate_example(ex);
  return ex;
}

ClassSpec class_preset(const std::string& name) {
  if (name == "sphere") return {name, ShapeFamily::sphere};
  if (name == "superellipsoid") return {name, ShapeFamily::superellipsoid};
  if (name == "blobs") return {name, ShapeFamily::blobs};
  if (name == "heightfield") return {name, ShapeFamily::heightfield};
  throw Error("unknown class '" + name + "'");
}

std::string object_id(const ClassSpec& cls, std::uint64_t seed, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", index);
  return cls.name + "_s" + std::to_string(seed) + "_" + buf;
}

ShapeSpec sample_shape(const ClassSpec& cls, std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto color = [&](double lo, double hi) { return Vec3{uni(lo, hi), uni(lo, hi), uni(lo, hi)}; };

  ShapeSpec s;
  s.family = cls.family;
  s.width = cls.width;
  s.height = cls.height;
  switch (cls.family) {
    case ShapeFamily::sphere:
      s.radius = uni(0.55, 0.9);
      s.texture.base = color(0.5, 0.95);
      break;
    case ShapeFamily::superellipsoid: {
      // Bust-like head: a rounded block with nose, brow and cheek structure
      // at fixed relative positions and dark eye spots.
      s.axes = {uni(0.48, 0.62), uni(0.66, 0.82), uni(0.42, 0.56)};
      s.e1 = uni(0.6, 1.0);
      s.e2 = uni(0.65, 1.0);
      const double a = s.axes[0], b = s.axes[1], c = s.axes[2];
      s.bumps.push_back({{0.0, -0.05 * b, 0.95 * c}, uni(0.5, 0.9), uni(0.07, 0.1)});
      s.bumps.push_back({{-0.35 * a, 0.25 * b, 0.85 * c}, uni(0.15, 0.3), 0.09});
      s.bumps.push_back({{0.35 * a, 0.25 * b, 0.85 * c}, uni(0.15, 0.3), 0.09});
      s.bumps.push_back({{-0.35 * a, 0.12 * b, 0.9 * c}, -uni(0.2, 0.35), 0.07});
      s.bumps.push_back({{0.35 * a, 0.12 * b, 0.9 * c}, -uni(0.2, 0.35), 0.07});
      s.bumps.push_back({{0.0, -0.45 * b, 0.85 * c}, uni(0.1, 0.25), 0.08});
      s.texture.pattern = Pattern::uniform;
      s.texture.base = {uni(0.7, 0.95), uni(0.55, 0.8), uni(0.45, 0.7)};
      const Vec3 eye = color(0.05, 0.3);
      s.texture.spots.push_back({{-0.35 * a, 0.12 * b, 0.8 * c}, 0.05, eye});
      s.texture.spots.push_back({{0.35 * a, 0.12 * b, 0.8 * c}, 0.05, eye});
      s.texture.spots.push_back({{0.0, -0.45 * b, 0.85 * c}, 0.05, {uni(0.6, 0.9), 0.2, 0.25}});
      break;
    }
    case ShapeFamily::blobs: {
      // Torso plus 2-4 limbs radiating in the image plane.
      s.blobs.push_back({{0.0, uni(-0.05, 0.05), 0.0}, {uni(0.26, 0.36), uni(0.36, 0.48), uni(0.2, 0.3)}, uni(-0.3, 0.3)});
      const int limbs = 2 + static_cast<int>(uni(0.0, 3.0));
      const double start = uni(0.0, 2.0 * std::numbers::pi);
      for (int i = 0; i < limbs; ++i) {
        const double ang = start + 2.0 * std::numbers::pi * i / limbs + uni(-0.3, 0.3);
        const double dist = uni(0.38, 0.5);
        s.blobs.push_back({{dist * std::cos(ang), dist * std::sin(ang), uni(-0.08, 0.08)},
                           {uni(0.12, 0.17), uni(0.26, 0.36), uni(0.1, 0.16)},
                           ang - std::numbers::pi / 2.0});
      }
      s.blend = uni(6.0, 10.0);
      s.texture.pattern = Pattern::blotches;
      s.texture.base = color(0.55, 0.95);
      s.texture.accent = color(0.2, 0.5);
      s.texture.frequency = uni(5.0, 9.0);
      s.texture.phase = uni(0.0, 6.28);
      break;
    }
    case ShapeFamily::heightfield: {
      // Flat, fish-like slab with domed sides and striped texture.
      s.outline_a = uni(0.62, 0.85);
      s.outline_b = uni(0.3, 0.48);
      s.wobble = uni(0.0, 0.18);
      s.wobble_phase = uni(0.0, 6.28);
      s.front_height = uni(0.12, 0.3);
      s.back_height = uni(0.12, 0.3);
      s.thickness0 = uni(0.02, 0.06);
      s.texture.pattern = Pattern::stripes;
      s.texture.base = color(0.55, 0.95);
      s.texture.accent = color(0.1, 0.45);
      s.texture.frequency = uni(14.0, 26.0);
      s.texture.phase = uni(0.0, 6.28);
      s.texture.orientation = uni(-0.6, 0.6);
      s.texture.spots.push_back({{0.55 * s.outline_a, 0.1 * s.outline_b, 0.2}, 0.05, color(0.0, 0.2)});
      break;
    }
  }
  return s;
}

std::vector<MappingExample> generate_database(const ClassSpec& cls, int n_objects,
                                              const std::vector<ViewAngles>& views,
                                              std::uint64_t seed) {
  if (n_objects < 1) {
    throw Error("need at least one object");
  }
  if (views.empty()) {
    throw Error("need at least one view");
  }
  std::vector<MappingExample> out;
  for (int i = 0; i < n_objects; ++i) {
    ShapeSpec s = sample_shape(cls, seed, i);
    for (const auto& v : views) {
      s.view = v;
      out.push_back(render(s, object_id(cls, seed, i)));
    }
  }
  return out;
}

std::vector<ViewAngles> parse_views(const std::string& text) {
  std::vector<ViewAngles> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    const auto comma = item.find(',');
    if (comma == std::string::npos) {
      throw Error("bad view '" + item + "', expected alpha,beta");
    }
    try {
      ViewAngles v{std::stod(item.substr(0, comma)), std::stod(item.substr(comma + 1))};
      validate_view(v);
      out.push_back(v);
    } catch (const std::invalid_argument&) {
      throw Error("bad view '" + item + "'");
    }
  }
  if (out.empty()) {
    throw Error("no views given");
  }
  return out;
}

namespace {

std::string angle_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::filesystem::path write_manifest(const std::filesystem::path& dir,
                                     const std::vector<MappingExample>& examples) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.txt";
  std::ofstream out(manifest);
  if (!out) {
    throw Error("cannot write " + manifest.string());
  }
  out << "# id alpha beta files\n";
  out.precision(17);
  for (const auto& e : examples) {
    const std::string stem = e.object_id + "_a" + angle_tag(e.view.alpha) + "_b" + angle_tag(e.view.beta);
    const int w = e.width();
    const int h = e.height();
    io::write_mask(dir / (stem + "_mask.pgm"), e.mask(), w, h);
    io::write_pgm(dir / (stem + "_intensity.pgm"), e.channel("intensity"));
    io::write_depth(dir / (stem + "_depth.bin"), e.channel("depth"));
    io::write_depth(dir / (stem + "_back.bin"), e.channel("back"));
    io::YCbCrImage ycc{e.channel("intensity"), e.channel("cb"), e.channel("cr")};
    io::RgbImage rgb = io::to_rgb(ycc);
    io::write_ppm(dir / (stem + "_color.ppm"), rgb);
    // The PPM is a preview; chroma is kept exactly in float rasters.
    io::write_depth(dir / (stem + "_cb.bin"), e.channel("cb"));
    io::write_depth(dir / (stem + "_cr.bin"), e.channel("cr"));
    out << e.object_id << " " << e.view.alpha << " " << e.view.beta << " mask=" << stem << "_mask.pgm"
        << " intensity=" << stem << "_intensity.pgm depth=" << stem << "_depth.bin back=" << stem
        << "_back.bin color=" << stem << "_color.ppm cb=" << stem << "_cb.bin cr=" << stem << "_cr.bin\n";
  }
  return manifest;
}

std::vector<MappingExample> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) {
    throw Error("cannot open manifest " + manifest.string());
  }
  const auto base = manifest.parent_path();
  std::vector<MappingExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    MappingExample e;
    if (!(ls >> e.object_id >> e.view.alpha >> e.view.beta)) {
      throw Error(manifest.string() + ":" + std::to_string(lineno) + ": expected id alpha beta");
    }
    std::map<std::string, std::string> files;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        throw Error(manifest.string() + ":" + std::to_string(lineno) + ": bad field '" + tok + "'");
      }
      files[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    for (const char* key : {"mask", "intensity", "depth"}) {
      if (!files.count(key)) {
        throw Error(manifest.string() + ":" + std::to_string(lineno) + ": missing " + key + "=");
      }
    }
    int w = 0, h = 0;
    const Mask mask = io::read_mask(base / files["mask"], &w, &h);
    auto masked = [&](const ChannelGrid& g, const std::string& what) {
      if (g.width() != w || g.height() != h) {
        throw Error(manifest.string() + ":" + std::to_string(lineno) + ": " + what + " size differs from mask");
      }
      std::vector<double> v(g.values().begin(), g.values().end());
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (mask[i] && !g.foreground(i)) {
          throw Error(manifest.string() + ":" + std::to_string(lineno) + ": " + what +
                      " lacks values inside the mask");
        }
      }
      return ChannelGrid(w, h, std::move(v), mask);
    };
    e.channels.push_back({"intensity", masked(io::read_pgm(base / files["intensity"]), "intensity")});
    e.channels.push_back({"depth", masked(io::read_depth(base / files["depth"]), "depth")});
    if (files.count("back")) {
      e.channels.push_back({"back", masked(io::read_depth(base / files["back"]), "back")});
    }
    if (files.count("cb") && files.count("cr")) {
      e.channels.push_back({"cb", masked(io::read_depth(base / files["cb"]), "cb")});
      e.channels.push_back({"cr", masked(io::read_depth(base / files["cr"]), "cr")});
    } else if (files.count("color")) {
      const io::RgbImage rgb = io::read_ppm(base / files["color"]);
      ChannelGrid cb(w, h), cr(w, h);
      if (rgb.r.width() != w || rgb.r.height() != h) {
        throw Error(manifest.string() + ":" + std::to_string(lineno) + ": color size differs from mask");
      }
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
          const auto ycc = io::rgb_to_ycbcr(rgb.r[i], rgb.g[i], rgb.b[i]);
          cb.set(i, ycc[1]);
          cr.set(i, ycc[2]);
        }
      }
      e.channels.push_back({"cb", std::move(cb)});
      e.channels.push_back({"cr", std::move(cr)});
    }
    validate_example(e);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace depthsynth
