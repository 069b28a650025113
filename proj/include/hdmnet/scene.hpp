#pragma once

// Scene description for the synthetic dataset: deformation families,
// camera poses, point lights, textures and shading.

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hdmnet/geometry.hpp"
#include "hdmnet/io.hpp"
#include "json.hpp"

namespace hdmnet {

using Vec3 = std::array<double, 3>;

/// Rotation of the surface about its rest centre, in degrees. Pose 0 with
/// zero angles is the reference camera in which ground truth is expressed.
struct CameraPose {
  double yaw_deg = 0;
  double pitch_deg = 0;
  bool operator==(const CameraPose&) const = default;
};

/// Point light in reference-camera coordinates.
struct PointLight {
  Vec3 position{0, 0, 0};
  double intensity = 1.0;
  bool operator==(const PointLight&) const = default;
};

enum class ShadingModel { lambert, cook_torrance };

struct Shading {
  ShadingModel model = ShadingModel::cook_torrance;
  double ambient = 0.25;
  double diffuse = 0.75;
  double specular = 0.6;
  double roughness = 0.3;  // Beckmann slope
  double fresnel0 = 0.2;
  std::array<std::uint8_t, 3> background{40, 40, 40};
  bool operator==(const Shading&) const = default;
};

/// Amplitudes and rates of the bend / fold / wave families. All-zero
/// amplitudes leave every state at the rest grid.
struct DeformationParams {
  double bend_curvature = 2.0;   // peak curvature of the cylindrical bend (1/units)
  double bend_width = 0.1;       // logistic blend width of the bend onset
  double fold_curvature = 5.0;   // peak curvature at the fold crease
  double fold_width = 0.06;      // Gaussian crease width
  double wave_amplitude = 0.012;
  double wave_frequency = 1.5;   // cycles across the sheet
  double tilt_deg = 8.0;         // rigid wobble
  double cycles = 3.0;           // trajectory frequency over the whole sequence
  double max_step = 0.05;        // per-vertex displacement bound between states
  bool operator==(const DeformationParams&) const = default;
};

/// Texture source: a named procedural generator, or a raw RGB file.
struct TextureSpec {
  std::string name;
  std::string generator;  // checkerboard, noise, stripes, blobs; empty when `path` is set
  std::string path;       // raw 8-bit RGB, side×side×3 bytes
  std::size_t side = 128;
  bool operator==(const TextureSpec&) const = default;
};

struct Texture {
  std::string name;
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  /// Bilinear lookup at (u,v) in [0,1]^2, returns linear [0,1] RGB.
  Vec3 sample(double u, double v) const {
    const double x = std::clamp(u, 0.0, 1.0) * double(width - 1);
    const double y = std::clamp(v, 0.0, 1.0) * double(height - 1);
    const auto x0 = std::min(static_cast<std::size_t>(x), width - 1);
    const auto y0 = std::min(static_cast<std::size_t>(y), height - 1);
    const auto x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double ax = x - double(x0), ay = y - double(y0);
    Vec3 out{};
    for (std::size_t c = 0; c < 3; ++c) {
      auto at = [&](std::size_t yy, std::size_t xx) { return double(rgb[(yy * width + xx) * 3 + c]); };
      out[c] = ((1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x1)) + ay * ((1 - ax) * at(y1, x0) + ax * at(y1, x1))) /
               255.0;
    }
    return out;
  }
};

struct SplitPattern {
  std::size_t period = 5;
  std::size_t test_len = 1;
  bool operator==(const SplitPattern&) const = default;
};

struct SceneConfig {
  std::size_t num_states = 200;
  std::size_t grid_side = 17;
  double side_length = 1.0;
  double depth = 2.6;  // distance of the rest surface centre from the camera
  std::size_t image_side = 64;
  CameraIntrinsics intrinsics = CameraIntrinsics::reference();  // for 256-pixel renders
  std::vector<CameraPose> poses{{0, 0}, {20, -10}};
  std::vector<PointLight> lights{{{0.4, -0.6, 0.2}, 1.0}, {{-1.2, 0.9, 1.4}, 1.0}};
  std::vector<TextureSpec> textures = default_textures();
  Shading shading{};
  DeformationParams deformation{};
  SplitPattern split{};
  std::size_t holdout_texture = 3;  // carpet
  std::size_t holdout_light = 1;
  std::uint64_t seed = 7;

  static std::vector<TextureSpec> default_textures() {
    return {{"endoscopy", "blobs", "", 128},
            {"graffiti", "stripes", "", 128},
            {"clothes", "checkerboard", "", 128},
            {"carpet", "noise", "", 128}};
  }

  static SceneConfig desk() { return {}; }

  /// Full-size scene: 4648 states, 256 px images, five poses and five lights.
  static SceneConfig full() {
    SceneConfig c;
    c.num_states = 4648;
    c.grid_side = 73;
    c.image_side = 256;
    c.poses = {{0, 0}, {20, 0}, {-20, 0}, {0, 15}, {0, -15}};
    c.lights = {{{0.4, -0.6, 0.2}, 1.0},
                {{-1.2, 0.9, 1.4}, 1.0},
                {{1.5, 1.0, 1.0}, 1.0},
                {{0.0, -1.5, 1.5}, 1.0},
                {{-0.8, -0.8, 0.0}, 1.0}};
    return c;
  }

  /// K rescaled from the 256-pixel reference renders to image_side.
  CameraIntrinsics camera() const { return intrinsics.scaled(double(image_side) / 256.0); }

  Vec3 centre() const { return {0.0, 0.0, depth}; }

  std::size_t sample_count() const { return num_states * textures.size() * lights.size() * poses.size(); }

  void validate() const {
    if (num_states < 2) throw ConfigError("num_states must be at least 2");
    if (grid_side < 2) throw ConfigError("grid_side must be at least 2");
    if (image_side < 8) throw ConfigError("image_side must be at least 8");
    if (!(side_length > 0)) throw ConfigError("side_length must be positive");
    if (!(depth > side_length)) throw ConfigError("depth must exceed side_length so the surface stays in front of the camera");
    if (poses.empty()) throw ConfigError("at least one camera pose is required");
    if (lights.empty()) throw ConfigError("at least one light is required");
    if (textures.empty()) throw ConfigError("at least one texture is required");
    for (const auto& t : textures) {
      if (t.name.empty()) throw ConfigError("texture names must be non-empty");
      if (t.path.empty() && t.generator.empty()) throw ConfigError("texture '" + t.name + "' has no source");
      if (t.side < 2) throw ConfigError("texture '" + t.name + "' side must be at least 2");
    }
    if (split.test_len < 1 || split.period <= split.test_len) {
      throw ConfigError("split pattern needs period > test_len >= 1, got period " + std::to_string(split.period) +
                        ", test_len " + std::to_string(split.test_len));
    }
    if (holdout_texture >= textures.size()) throw ConfigError("holdout_texture index out of range");
    if (holdout_light >= lights.size()) throw ConfigError("holdout_light index out of range");
    if (!(deformation.max_step > 0)) throw ConfigError("deformation max_step must be positive");
    if (!(deformation.bend_width > 0) || !(deformation.fold_width > 0)) {
      throw ConfigError("deformation widths must be positive");
    }
    if (!(shading.roughness > 0)) throw ConfigError("shading roughness must be positive");
    intrinsics.validate();
  }

  nlohmann::json to_json() const;
  static SceneConfig from_json(const nlohmann::json& j);
};

inline nlohmann::json SceneConfig::to_json() const {
  using nlohmann::json;
  json jp = json::array(), jl = json::array(), jt = json::array();
  for (const auto& p : poses) jp.push_back({{"yaw_deg", p.yaw_deg}, {"pitch_deg", p.pitch_deg}});
  for (const auto& l : lights) jl.push_back({{"position", l.position}, {"intensity", l.intensity}});
  for (const auto& t : textures)
    jt.push_back({{"name", t.name}, {"generator", t.generator}, {"path", t.path}, {"side", t.side}});
  const auto& d = deformation;
  const auto& s = shading;
  return {{"num_states", num_states},
          {"grid_side", grid_side},
          {"side_length", side_length},
          {"depth", depth},
          {"image_side", image_side},
          {"intrinsics",
           {{"fx", intrinsics.fx},
            {"fy", intrinsics.fy},
            {"cx", intrinsics.cx},
            {"cy", intrinsics.cy},
            {"mode", intrinsics.mode == ProjectionMode::perspective ? "perspective" : "orthographic"},
            {"ortho_scale", intrinsics.ortho_scale}}},
          {"poses", jp},
          {"lights", jl},
          {"textures", jt},
          {"shading",
           {{"model", s.model == ShadingModel::lambert ? "lambert" : "cook_torrance"},
            {"ambient", s.ambient},
            {"diffuse", s.diffuse},
            {"specular", s.specular},
            {"roughness", s.roughness},
            {"fresnel0", s.fresnel0},
            {"background", s.background}}},
          {"deformation",
           {{"bend_curvature", d.bend_curvature},
            {"bend_width", d.bend_width},
            {"fold_curvature", d.fold_curvature},
            {"fold_width", d.fold_width},
            {"wave_amplitude", d.wave_amplitude},
            {"wave_frequency", d.wave_frequency},
            {"tilt_deg", d.tilt_deg},
            {"cycles", d.cycles},
            {"max_step", d.max_step}}},
          {"split", {{"period", split.period}, {"test_len", split.test_len}}},
          {"holdout_texture", holdout_texture},
          {"holdout_light", holdout_light},
          {"seed", seed}};
}

inline SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
  SceneConfig c;
  try {
    c.num_states = j.at("num_states");
    c.grid_side = j.at("grid_side");
    c.side_length = j.at("side_length");
    c.depth = j.at("depth");
    c.image_side = j.at("image_side");
    const auto& k = j.at("intrinsics");
    c.intrinsics.fx = k.at("fx");
    c.intrinsics.fy = k.at("fy");
    c.intrinsics.cx = k.at("cx");
    c.intrinsics.cy = k.at("cy");
    c.intrinsics.mode =
        k.at("mode").get<std::string>() == "orthographic" ? ProjectionMode::orthographic : ProjectionMode::perspective;
    c.intrinsics.ortho_scale = k.at("ortho_scale");
    c.poses.clear();
    for (const auto& p : j.at("poses")) c.poses.push_back({p.at("yaw_deg"), p.at("pitch_deg")});
    c.lights.clear();
    for (const auto& l : j.at("lights")) c.lights.push_back({l.at("position").get<Vec3>(), l.at("intensity")});
    c.textures.clear();
    for (const auto& t : j.at("textures")) c.textures.push_back({t.at("name"), t.at("generator"), t.at("path"), t.at("side")});
    const auto& s = j.at("shading");
    c.shading.model = s.at("model").get<std::string>() == "lambert" ? ShadingModel::lambert : ShadingModel::cook_torrance;
    c.shading.ambient = s.at("ambient");
    c.shading.diffuse = s.at("diffuse");
    c.shading.specular = s.at("specular");
    c.shading.roughness = s.at("roughness");
    c.shading.fresnel0 = s.at("fresnel0");
    c.shading.background = s.at("background").get<std::array<std::uint8_t, 3>>();
    const auto& d = j.at("deformation");
    c.deformation.bend_curvature = d.at("bend_curvature");
    c.deformation.bend_width = d.at("bend_width");
    c.deformation.fold_curvature = d.at("fold_curvature");
    c.deformation.fold_width = d.at("fold_width");
    c.deformation.wave_amplitude = d.at("wave_amplitude");
    c.deformation.wave_frequency = d.at("wave_frequency");
    c.deformation.tilt_deg = d.at("tilt_deg");
    c.deformation.cycles = d.at("cycles");
    c.deformation.max_step = d.at("max_step");
    c.split.period = j.at("split").at("period");
    c.split.test_len = j.at("split").at("test_len");
    c.holdout_texture = j.at("holdout_texture");
    c.holdout_light = j.at("holdout_light");
    c.seed = j.at("seed");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scene config: ") + e.what());
  }
  return c;
}

namespace detail {

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void put_rgb(Texture& t, std::size_t x, std::size_t y, const Vec3& c) {
  for (std::size_t k = 0; k < 3; ++k) t.rgb[(y * t.width + x) * 3 + k] = to_byte(c[k]);
}

inline Vec3 mix(const Vec3& a, const Vec3& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

}  // namespace detail

/// Procedural texture by generator name. The pattern depends only on
/// (generator, name, side), never on the scene seed.
inline Texture procedural_texture(const std::string& generator, const std::string& name, std::size_t side) {
  Texture t{name, side, side, std::vector<std::uint8_t>(side * side * 3)};
  std::mt19937_64 rng(fnv1a64({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double n = double(side);
  if (generator == "checkerboard") {
    // Woven plaid: two-tone checks crossed by thin stripes.
    const Vec3 a{0.15, 0.25, 0.6}, b{0.9, 0.9, 0.85}, stripe{0.75, 0.15, 0.1};
    const std::size_t cell = std::max<std::size_t>(2, side / 8);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        Vec3 c = ((x / cell) + (y / cell)) % 2 ? a : b;
        if (x % cell == cell / 2 || y % cell == cell / 2) c = stripe;
        detail::put_rgb(t, x, y, c);
      }
  } else if (generator == "stripes") {
    // Bold diagonal bands in random saturated colours.
    std::vector<Vec3> palette;
    for (int k = 0; k < 6; ++k) palette.push_back({u01(rng), u01(rng), u01(rng)});
    const double period = n / 5.0;
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double s = (double(x) + 0.6 * double(y)) / period;
        const auto band = static_cast<std::size_t>(std::floor(s)) % palette.size();
        const double edge = s - std::floor(s);
        detail::put_rgb(t, x, y, edge < 0.12 ? Vec3{0.05, 0.05, 0.05} : palette[band]);
      }
  } else if (generator == "blobs") {
    // Reddish tissue with soft darker spots and thin vessels.
    struct Blob { double x, y, r; };
    std::vector<Blob> blobs;
    for (int k = 0; k < 14; ++k) blobs.push_back({u01(rng) * n, u01(rng) * n, (0.04 + 0.08 * u01(rng)) * n});
    const double ph = 6.283 * u01(rng);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        double shade = 0;
        for (const auto& b : blobs) {
          const double d2 = (double(x) - b.x) * (double(x) - b.x) + (double(y) - b.y) * (double(y) - b.y);
          shade += std::exp(-d2 / (2 * b.r * b.r));
        }
        Vec3 c = detail::mix({0.85, 0.45, 0.4}, {0.45, 0.08, 0.1}, std::min(1.0, shade));
        const double vessel = std::abs(std::sin(6.283 * (double(y) / n * 3.0 + 0.15 * std::sin(6.283 * double(x) / n * 2.0) + ph)));
        if (vessel < 0.06) c = {0.55, 0.05, 0.12};
        detail::put_rgb(t, x, y, c);
      }
  } else if (generator == "noise") {
    // Value noise over two octaves, warm tufted palette.
    auto lattice = [&](std::size_t cells) {
      std::vector<double> g((cells + 1) * (cells + 1));
      for (auto& v : g) v = u01(rng);
      return std::pair{g, cells};
    };
    const auto coarse = lattice(8), fine = lattice(32);
    auto value = [&](const std::pair<std::vector<double>, std::size_t>& lat, double x, double y) {
      const double fx = x * double(lat.second), fy = y * double(lat.second);
      const auto ix = std::min(static_cast<std::size_t>(fx), lat.second - 1);
      const auto iy = std::min(static_cast<std::size_t>(fy), lat.second - 1);
      const double ax = fx - double(ix), ay = fy - double(iy);
      auto at = [&](std::size_t i, std::size_t j) { return lat.first[i * (lat.second + 1) + j]; };
      return (1 - ay) * ((1 - ax) * at(iy, ix) + ax * at(iy, ix + 1)) + ay * ((1 - ax) * at(iy + 1, ix) + ax * at(iy + 1, ix + 1));
    };
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double v = 0.55 * value(coarse, double(x) / n, double(y) / n) + 0.45 * value(fine, double(x) / n, double(y) / n);
        detail::put_rgb(t, x, y, detail::mix({0.2, 0.45, 0.15}, {0.95, 0.8, 0.3}, v));
      }
  } else if (generator == "white") {
    std::fill(t.rgb.begin(), t.rgb.end(), std::uint8_t{255});
  } else {
    throw ConfigError("unknown texture generator '" + generator + "'");
  }
  return t;
}

/// Raw 8-bit RGB file of side×side pixels.
inline Texture load_raw_texture(const std::filesystem::path& path, const std::string& name, std::size_t side) {
  auto bytes = read_file(path);
  if (bytes.size() != side * side * 3) {
    throw ConfigError("texture file " + path.string() + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(side * side * 3) + " for " + std::to_string(side) + "x" + std::to_string(side) +
                      " RGB");
  }
  return {name, side, side, std::move(bytes)};
}

inline Texture materialize_texture(const TextureSpec& spec) {
  return spec.path.empty() ? procedural_texture(spec.generator, spec.name, spec.side)
                           : load_raw_texture(spec.path, spec.name, spec.side);
}

}  // namespace hdmnet
