#pragma once

// Surface and image files used by the command-line tool.
//
// HDMS surface file, little endian:
//   "HDMS"  u32 version (1)  u32 G  u32 channels (3)  then G*G*3 float32,
//   row-major over (row, column, xyz).

#include <filesystem>
#include <sstream>

#include "hdmnet/io.hpp"
#include "hdmnet/render.hpp"

namespace hdmnet {

inline constexpr std::uint32_t kSurfaceVersion = 1;
inline constexpr std::size_t kSurfaceHeaderBytes = 16;

inline std::vector<std::uint8_t> encode_surface(std::span<const float> xyz, std::size_t g) {
  if (xyz.size() != g * g * 3) throw FormatError("surface has " + std::to_string(xyz.size()) + " values, expected G*G*3");
  ByteWriter w;
  w.put_string("HDMS");
  w.put<std::uint32_t>(kSurfaceVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g));
  w.put<std::uint32_t>(3);
  w.put_array<float>(xyz);
  return w.take();
}

struct SurfaceFile {
  std::size_t grid_side = 0;
  std::vector<float> xyz;
};

inline SurfaceFile decode_surface(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.get_string(4) != "HDMS") throw FormatError("not an HDMS surface file");
  if (r.get<std::uint32_t>() != kSurfaceVersion) throw FormatError("unsupported surface file version");
  SurfaceFile s;
  s.grid_side = r.get<std::uint32_t>();
  if (r.get<std::uint32_t>() != 3) throw FormatError("surface file must have 3 channels");
  s.xyz = r.get_array<float>(s.grid_side * s.grid_side * 3);
  if (r.remaining()) throw FormatError("trailing bytes after surface data");
  return s;
}

/// Wavefront OBJ: one `v` per grid vertex, two triangles per cell.
inline std::string surface_obj(std::span<const float> xyz, std::size_t g) {
  std::ostringstream os;
  os << "# " << g << "x" << g << " grid surface\n";
  os.precision(9);
  for (std::size_t k = 0; k < g * g; ++k) os << "v " << xyz[3 * k] << ' ' << xyz[3 * k + 1] << ' ' << xyz[3 * k + 2] << '\n';
  for (std::size_t i = 0; i + 1 < g; ++i)
    for (std::size_t j = 0; j + 1 < g; ++j) {
      const std::size_t k = i * g + j + 1;  // 1-based
      os << "f " << k << ' ' << k + 1 << ' ' << k + g << '\n';
      os << "f " << k + 1 << ' ' << k + g + 1 << ' ' << k + g << '\n';
    }
  return os.str();
}

/// Binary PPM (P6, maxval 255) of a square RGB image.
inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const auto head = "P6\n" + std::to_string(img.side) + " " + std::to_string(img.side) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

/// Reads a binary PPM; the image must be square with maxval 255.
inline Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += char(bytes[pos++]);
    if (t.empty()) throw FormatError("truncated PPM header");
    return t;
  };
  if (token() != "P6") throw FormatError("only binary PPM (P6) images are supported");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::logic_error&) {
    throw FormatError("malformed PPM header");
  }
  ++pos;  // single whitespace before the raster
  if (maxval != 255) throw FormatError("PPM maxval must be 255");
  if (w != h) throw FormatError("image must be square, got " + std::to_string(w) + "x" + std::to_string(h));
  if (bytes.size() < pos + w * h * 3) throw FormatError("truncated PPM raster");
  return {w, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + w * h * 3))};
}

/// Binary PGM (P5) of values in [0,1].
inline std::vector<std::uint8_t> encode_pgm(std::span<const double> values, std::size_t side) {
  const auto head = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (double v : values) out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
  return out;
}

}  // namespace hdmnet
