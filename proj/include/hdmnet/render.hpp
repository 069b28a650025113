#pragma once

// Software rasterizer for grid surfaces: two triangles per cell, back-face
// culling, z-buffer, perspective-correct texture coordinates and per-pixel
// Cook-Torrance or Lambert shading under one point light.

#include <cmath>
#include <limits>
#include <vector>

#include "hdmnet/scene.hpp"

namespace hdmnet {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
  std::size_t side = 0;
  std::vector<std::uint8_t> rgb;
  std::size_t pixels() const { return side * side; }
  bool operator==(const Image&) const = default;
};

namespace detail {

inline Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(dot3(a, a));
  return n > 0 ? Vec3{a[0] / n, a[1] / n, a[2] / n} : Vec3{0, 0, 0};
}

/// Reference-frame point -> camera frame of `pose` (rotation about `centre`).
inline Vec3 to_camera(const Vec3& p, const CameraPose& pose, const Vec3& centre) {
  constexpr double deg = 3.141592653589793 / 180.0;
  const double cy = std::cos(pose.yaw_deg * deg), sy = std::sin(pose.yaw_deg * deg);
  const double cp = std::cos(pose.pitch_deg * deg), sp = std::sin(pose.pitch_deg * deg);
  const double x = p[0] - centre[0], y = p[1] - centre[1], z = p[2] - centre[2];
  const double x1 = cy * x + sy * z, z1 = -sy * x + cy * z;  // yaw about y
  const double y2 = cp * y - sp * z1, z2 = sp * y + cp * z1;  // pitch about x
  return {x1 + centre[0], y2 + centre[1], z2 + centre[2]};
}

inline double cook_torrance(const Vec3& n, const Vec3& l, const Vec3& v, const Shading& s) {
  const Vec3 h = normalized({l[0] + v[0], l[1] + v[1], l[2] + v[2]});
  const double nl = dot3(n, l), nv = dot3(n, v), nh = std::max(dot3(n, h), 1e-6), vh = std::max(dot3(v, h), 1e-6);
  if (nl <= 0 || nv <= 0) return 0;
  const double m2 = s.roughness * s.roughness, nh2 = nh * nh;
  const double d = std::exp((nh2 - 1) / (m2 * nh2)) / (3.141592653589793 * m2 * nh2 * nh2);
  const double f = s.fresnel0 + (1 - s.fresnel0) * std::pow(1 - vh, 5);
  const double g = std::min({1.0, 2 * nh * nv / vh, 2 * nh * nl / vh});
  return d * f * g / (4 * nl * nv);
}

}  // namespace detail

/// Renders a G×G×3 surface (reference frame) seen from `pose`.
inline Image render_frame(std::span<const double> surface, const CameraPose& pose, const PointLight& light,
                          const Texture& texture, const SceneConfig& cfg) {
  const std::size_t g = cfg.grid_side, side = cfg.image_side;
  if (surface.size() != g * g * 3) {
    throw DimensionError("render_frame: surface has " + std::to_string(surface.size()) + " values, expected " +
                         std::to_string(g * g * 3));
  }
  const auto cam = cfg.camera();
  const Vec3 centre = cfg.centre();
  const auto& sh = cfg.shading;

  std::vector<Vec3> p(g * g), n(g * g);
  std::vector<double> su(g * g), sv(g * g);
  for (std::size_t k = 0; k < g * g; ++k) p[k] = detail::to_camera({surface[3 * k], surface[3 * k + 1], surface[3 * k + 2]}, pose, centre);
  for (std::size_t k = 0; k < g * g; ++k) {
    if (cam.mode == ProjectionMode::perspective) {
      if (!(p[k][2] > 0)) throw DegenerateDepthError("render_frame: vertex behind the camera");
      su[k] = cam.fx * p[k][0] / p[k][2] + cam.cx;
      sv[k] = cam.fy * p[k][1] / p[k][2] + cam.cy;
    } else {
      su[k] = cam.ortho_scale * p[k][0] + cam.cx;
      sv[k] = cam.ortho_scale * p[k][1] + cam.cy;
    }
  }
  // Vertex normals from central differences, oriented towards the front side.
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const auto& down = p[std::min(i + 1, g - 1) * g + j];
      const auto& up = p[(i > 0 ? i - 1 : 0) * g + j];
      const auto& right = p[i * g + std::min(j + 1, g - 1)];
      const auto& left = p[i * g + (j > 0 ? j - 1 : 0)];
      n[i * g + j] = detail::normalized(detail::cross3(detail::sub3(down, up), detail::sub3(right, left)));
    }
  const Vec3 lp = detail::to_camera(light.position, pose, centre);

  Image img{side, std::vector<std::uint8_t>(side * side * 3)};
  for (std::size_t k = 0; k < side * side; ++k)
    for (std::size_t c = 0; c < 3; ++c) img.rgb[3 * k + c] = sh.background[c];
  std::vector<double> zbuf(side * side, std::numeric_limits<double>::infinity());

  auto shade = [&](const Vec3& pos, const Vec3& normal, double tu, double tv) {
    const Vec3 albedo = texture.sample(tu, tv);
    const Vec3 v = detail::normalized({-pos[0], -pos[1], -pos[2]});
    Vec3 nn = detail::normalized(normal);
    if (detail::dot3(nn, v) < 0) nn = {-nn[0], -nn[1], -nn[2]};
    const Vec3 l = detail::normalized(detail::sub3(lp, pos));
    const double nl = std::max(0.0, detail::dot3(nn, l));
    const double spec = sh.model == ShadingModel::cook_torrance ? sh.specular * detail::cook_torrance(nn, l, v, sh) * nl : 0.0;
    Vec3 out;
    for (std::size_t c = 0; c < 3; ++c) out[c] = albedo[c] * (sh.ambient + sh.diffuse * light.intensity * nl) + light.intensity * spec;
    return out;
  };

  auto draw = [&](std::size_t a, std::size_t b, std::size_t c) {
    const double area = (su[b] - su[a]) * (sv[c] - sv[a]) - (sv[b] - sv[a]) * (su[c] - su[a]);
    if (!(area > 0)) return;  // back-facing or degenerate
    const double umin = std::min({su[a], su[b], su[c]}), umax = std::max({su[a], su[b], su[c]});
    const double vmin = std::min({sv[a], sv[b], sv[c]}), vmax = std::max({sv[a], sv[b], sv[c]});
    const auto x0 = static_cast<long>(std::max(0.0, std::floor(umin - 0.5)));
    const auto x1 = static_cast<long>(std::min(double(side) - 1, std::ceil(umax - 0.5)));
    const auto y0 = static_cast<long>(std::max(0.0, std::floor(vmin - 0.5)));
    const auto y1 = static_cast<long>(std::min(double(side) - 1, std::ceil(vmax - 0.5)));
    const double inv_a = 1.0 / p[a][2], inv_b = 1.0 / p[b][2], inv_c = 1.0 / p[c][2];
    auto uv = [g](std::size_t k) { return std::pair{double(k % g) / double(g - 1), double(k / g) / double(g - 1)}; };
    const auto [ua, va] = uv(a);
    const auto [ub, vb] = uv(b);
    const auto [uc, vc] = uv(c);
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double px = double(x) + 0.5, py = double(y) + 0.5;
        const double wa = ((su[b] - px) * (sv[c] - py) - (sv[b] - py) * (su[c] - px)) / area;
        const double wb = ((su[c] - px) * (sv[a] - py) - (sv[c] - py) * (su[a] - px)) / area;
        const double wc = 1.0 - wa - wb;
        if (wa < 0 || wb < 0 || wc < 0) continue;
        // Perspective-correct weights.
        double ka = wa, kb = wb, kc = wc;
        if (cam.mode == ProjectionMode::perspective) {
          ka *= inv_a, kb *= inv_b, kc *= inv_c;
          const double s = ka + kb + kc;
          ka /= s, kb /= s, kc /= s;
        }
        Vec3 pos, nrm;
        for (std::size_t q = 0; q < 3; ++q) {
          pos[q] = ka * p[a][q] + kb * p[b][q] + kc * p[c][q];
          nrm[q] = ka * n[a][q] + kb * n[b][q] + kc * n[c][q];
        }
        const std::size_t pix = static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x);
        if (!(pos[2] < zbuf[pix])) continue;
        zbuf[pix] = pos[2];
        const Vec3 col = shade(pos, nrm, ka * ua + kb * ub + kc * uc, ka * va + kb * vb + kc * vc);
        for (std::size_t q = 0; q < 3; ++q) img.rgb[3 * pix + q] = detail::to_byte(col[q]);
      }
  };

  for (std::size_t i = 0; i + 1 < g; ++i)
    for (std::size_t j = 0; j + 1 < g; ++j) {
      const std::size_t k = i * g + j;
      draw(k, k + 1, k + g);
      draw(k + 1, k + g + 1, k + g);
    }
  return img;
}

}  // namespace hdmnet
