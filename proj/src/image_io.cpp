#include "depthsynth/image_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace depthsynth::io {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  return out;
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') {
        c = in.get();
      }
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) {
    throw Error("truncated header in " + path.string());
  }
  // `c` was the single whitespace byte that terminates the header token.
  return tok;
}

int parse_dim(const std::string& tok, const std::filesystem::path& path) {
  try {
    const int v = std::stoi(tok);
    if (v < 1) {
      throw Error("");
    }
    return v;
  } catch (...) {
    throw Error("bad dimension '" + tok + "' in " + path.string());
  }
}

struct NetpbmHeader {
  int width;
  int height;
};

NetpbmHeader read_netpbm_header(std::istream& in, const std::string& magic,
                                const std::filesystem::path& path) {
  if (next_token(in, path) != magic) {
    throw Error(path.string() + " is not a binary " + magic + " file");
  }
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  if (next_token(in, path) != "255") {
    throw Error(path.string() + ": only maxval 255 is supported");
  }
  return {w, h};
}

std::vector<std::uint8_t> read_bytes(std::istream& in, std::size_t n,
                                     const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error("truncated pixel data in " + path.string());
  }
  return buf;
}

std::uint8_t to_byte(double v) {
  if (!std::isfinite(v)) {
    return 0;
  }
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<std::uint8_t>(c * 255.0 + 0.5);
}

}  // namespace

ChannelGrid read_pgm(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const auto [w, h] = read_netpbm_header(in, "P5", path);
  const auto bytes = read_bytes(in, static_cast<std::size_t>(w) * h, path);
  std::vector<double> values(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    values[i] = bytes[i] / 255.0;
  }
  return ChannelGrid(w, h, std::move(values), Mask(bytes.size(), 1));
}

void write_pgm(const std::filesystem::path& path, const ChannelGrid& grid) {
  std::ofstream out = open_out(path);
  out << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
  std::vector<std::uint8_t> bytes(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    bytes[i] = grid.foreground(i) ? to_byte(grid[i]) : 0;
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Mask read_mask(const std::filesystem::path& path, int* width, int* height) {
  std::ifstream in = open_in(path);
  const auto [w, h] = read_netpbm_header(in, "P5", path);
  auto bytes = read_bytes(in, static_cast<std::size_t>(w) * h, path);
  for (auto& b : bytes) {
    b = b != 0 ? 1 : 0;
  }
  if (width != nullptr) {
    *width = w;
  }
  if (height != nullptr) {
    *height = h;
  }
  return bytes;
}

void write_mask(const std::filesystem::path& path, const Mask& mask, int width, int height) {
  if (mask.size() != static_cast<std::size_t>(width) * height) {
    throw Error("write_mask: size mismatch");
  }
  std::ofstream out = open_out(path);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    bytes[i] = mask[i] != 0 ? 255 : 0;
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const auto [w, h] = read_netpbm_header(in, "P6", path);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto bytes = read_bytes(in, 3 * n, path);
  std::vector<double> r(n), g(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = bytes[3 * i] / 255.0;
    g[i] = bytes[3 * i + 1] / 255.0;
    b[i] = bytes[3 * i + 2] / 255.0;
  }
  return {ChannelGrid(w, h, std::move(r), Mask(n, 1)), ChannelGrid(w, h, std::move(g), Mask(n, 1)),
          ChannelGrid(w, h, std::move(b), Mask(n, 1))};
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  if (!image.r.same_shape(image.g) || !image.r.same_shape(image.b)) {
    throw Error("write_ppm: channel shapes differ");
  }
  std::ofstream out = open_out(path);
  out << "P6\n" << image.r.width() << " " << image.r.height() << "\n255\n";
  std::vector<std::uint8_t> bytes(3 * image.r.size());
  for (std::size_t i = 0; i < image.r.size(); ++i) {
    const bool fg = image.r.foreground(i);
    bytes[3 * i] = fg ? to_byte(image.r[i]) : 0;
    bytes[3 * i + 1] = fg ? to_byte(image.g[i]) : 0;
    bytes[3 * i + 2] = fg ? to_byte(image.b[i]) : 0;
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ChannelGrid read_depth(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  if (next_token(in, path) != "DEPTH") {
    throw Error(path.string() + " is not a DEPTH raster");
  }
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto bytes = read_bytes(in, 4 * n, path);
  std::vector<double> values(n);
  Mask mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    const float f = std::bit_cast<float>(bits);
    if (!std::isnan(f)) {
      values[i] = f;
      mask[i] = 1;
    }
  }
  return ChannelGrid(w, h, std::move(values), std::move(mask));
}

void write_depth(const std::filesystem::path& path, const ChannelGrid& grid) {
  std::ofstream out = open_out(path);
  out << "DEPTH\n" << grid.width() << "\n" << grid.height() << "\n";
  std::vector<std::uint8_t> bytes(4 * grid.size());
  constexpr std::uint32_t kQuietNan = 0x7FC00000u;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::uint32_t bits =
        grid.foreground(i) ? std::bit_cast<std::uint32_t>(static_cast<float>(grid[i])) : kQuietNan;
    bytes[4 * i] = static_cast<std::uint8_t>(bits & 0xFFu);
    bytes[4 * i + 1] = static_cast<std::uint8_t>((bits >> 8) & 0xFFu);
    bytes[4 * i + 2] = static_cast<std::uint8_t>((bits >> 16) & 0xFFu);
    bytes[4 * i + 3] = static_cast<std::uint8_t>((bits >> 24) & 0xFFu);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {
constexpr double kKr = 0.299;
constexpr double kKb = 0.114;
constexpr double kKg = 1.0 - kKr - kKb;
}  // namespace

std::array<double, 3> rgb_to_ycbcr(double r, double g, double b) {
  const double y = kKr * r + kKg * g + kKb * b;
  return {y, 0.5 + (b - y) / (2.0 * (1.0 - kKb)), 0.5 + (r - y) / (2.0 * (1.0 - kKr))};
}

std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr) {
  const double r = y + 2.0 * (1.0 - kKr) * (cr - 0.5);
  const double b = y + 2.0 * (1.0 - kKb) * (cb - 0.5);
  return {r, (y - kKr * r - kKb * b) / kKg, b};
}

YCbCrImage to_ycbcr(const RgbImage& rgb) {
  const int w = rgb.r.width();
  const int h = rgb.r.height();
  YCbCrImage out{ChannelGrid(w, h), ChannelGrid(w, h), ChannelGrid(w, h)};
  for (std::size_t i = 0; i < rgb.r.size(); ++i) {
    if (!rgb.r.foreground(i)) {
      continue;
    }
    const auto ycc = rgb_to_ycbcr(rgb.r[i], rgb.g[i], rgb.b[i]);
    out.y.set(i, ycc[0]);
    out.cb.set(i, ycc[1]);
    out.cr.set(i, ycc[2]);
  }
  return out;
}

RgbImage to_rgb(const YCbCrImage& ycc) {
  const int w = ycc.y.width();
  const int h = ycc.y.height();
  RgbImage out{ChannelGrid(w, h), ChannelGrid(w, h), ChannelGrid(w, h)};
  for (std::size_t i = 0; i < ycc.y.size(); ++i) {
    if (!ycc.y.foreground(i)) {
      continue;
    }
    const auto rgb = ycbcr_to_rgb(ycc.y[i], ycc.cb[i], ycc.cr[i]);
    out.r.set(i, rgb[0]);
    out.g.set(i, rgb[1]);
    out.b.set(i, rgb[2]);
  }
  return out;
}

}  // namespace depthsynth::io
