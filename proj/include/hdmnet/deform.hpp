#pragma once

// Temporally smooth, near-isometric deformations of a flat square sheet.
//
// Each row of the grid follows the same planar polyline in the x-z plane,
// built from segments of fixed length whose direction integrates a
// curvature profile: a logistic-blended cylindrical bend plus a Gaussian
// fold crease. Rows are translated copies along y, so every grid cell stays
// a planar rectangle of the rest size. A low-amplitude height wave along
// the normal and a small rigid tilt are applied on top.

#include <cmath>
#include <random>
#include <vector>

#include "hdmnet/geometry.hpp"
#include "hdmnet/scene.hpp"

namespace hdmnet {

/// Instantaneous family parameters of one state.
struct DeformationState {
  double bend_curvature = 0, bend_onset = 0;
  double fold_curvature = 0, fold_position = 0;
  double wave_amplitude = 0, wave_phase = 0, wave_direction = 0;
  double tilt_x = 0, tilt_y = 0;  // radians
};

namespace detail {

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

/// Smooth quasi-periodic trajectory in [-1,1] built from two sinusoids.
struct Trajectory {
  double f1 = 1, f2 = 2, p1 = 0, p2 = 0;
  double operator()(double tau) const {
    constexpr double two_pi = 6.283185307179586;
    return 0.6 * std::sin(two_pi * f1 * tau + p1) + 0.4 * std::sin(two_pi * f2 * tau + p2);
  }
};

inline void rotate_about(std::vector<double>& v, const Vec3& c, double ax, double ay) {
  const double cx = std::cos(ax), sx = std::sin(ax), cy = std::cos(ay), sy = std::sin(ay);
  for (std::size_t k = 0; k < v.size(); k += 3) {
    const double x = v[k] - c[0], y = v[k + 1] - c[1], z = v[k + 2] - c[2];
    // Rx(ax) then Ry(ay)
    const double y1 = cx * y - sx * z, z1 = sx * y + cx * z;
    const double x2 = cy * x + sy * z1, z2 = -sy * x + cy * z1;
    v[k] = x2 + c[0];
    v[k + 1] = y1 + c[1];
    v[k + 2] = z2 + c[2];
  }
}

}  // namespace detail

/// Vertices (G×G×3, row-major) of the sheet in state `st`, centred on
/// (0, 0, depth).
inline std::vector<double> deform_sheet(const DeformationState& st, const SceneConfig& cfg) {
  const std::size_t g = cfg.grid_side;
  const double len = cfg.side_length, step = len / double(g - 1);
  const auto& d = cfg.deformation;

  // Tangent angle psi(s) = integral of curvature from 0 to s, s in [-L/2, L/2].
  const double wb = d.bend_width, wf = d.fold_width;
  auto psi = [&](double s) {
    const double bend = st.bend_curvature * wb *
                        (detail::softplus((s - st.bend_onset) / wb) - detail::softplus(-st.bend_onset / wb));
    const double fold = st.fold_curvature * wf * std::sqrt(std::acos(-1.0) / 2) *
                        (std::erf((s - st.fold_position) / (std::sqrt(2.0) * wf)) -
                         std::erf(-st.fold_position / (std::sqrt(2.0) * wf)));
    return bend + fold;
  };

  std::vector<double> px(g), pz(g), nx(g), nz(g);
  px[0] = pz[0] = 0;
  for (std::size_t j = 0; j + 1 < g; ++j) {
    const double s_mid = -len / 2 + (double(j) + 0.5) * step;
    const double a = psi(s_mid);
    px[j + 1] = px[j] + step * std::cos(a);
    pz[j + 1] = pz[j] + step * std::sin(a);
  }
  for (std::size_t j = 0; j < g; ++j) {
    const double a = psi(-len / 2 + double(j) * step);
    nx[j] = -std::sin(a);
    nz[j] = std::cos(a);
  }

  constexpr double two_pi = 6.283185307179586;
  const double kx = std::cos(st.wave_direction) * d.wave_frequency / len;
  const double ky = std::sin(st.wave_direction) * d.wave_frequency / len;
  std::vector<double> v(g * g * 3);
  for (std::size_t i = 0; i < g; ++i) {
    const double y0 = -len / 2 + double(i) * step;
    for (std::size_t j = 0; j < g; ++j) {
      const double x0 = -len / 2 + double(j) * step;
      const double h = st.wave_amplitude == 0 ? 0.0
                                              : st.wave_amplitude * std::sin(two_pi * (kx * x0 + ky * y0) + st.wave_phase);
      double* p = &v[(i * g + j) * 3];
      p[0] = px[j] + h * nx[j];
      p[1] = y0;
      p[2] = pz[j] + h * nz[j];
    }
  }

  Vec3 mean{0, 0, 0};
  for (std::size_t k = 0; k < v.size(); ++k) mean[k % 3] += v[k];
  for (auto& m : mean) m /= double(g * g);
  if (st.tilt_x != 0 || st.tilt_y != 0) detail::rotate_about(v, mean, st.tilt_x, st.tilt_y);
  const Vec3 target = cfg.centre();
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += target[k % 3] - mean[k % 3];
  return v;
}

/// Flat rest grid at the configured depth.
inline std::vector<double> rest_surface(const SceneConfig& cfg) { return deform_sheet(DeformationState{}, cfg); }

/// Family parameters at normalised time tau for a seeded set of trajectories.
class DeformationSchedule {
 public:
  explicit DeformationSchedule(const SceneConfig& cfg) : params_(cfg.deformation) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (auto& t : traj_) {
      t.f1 = params_.cycles * (0.5 + 0.5 * u01(rng));
      t.f2 = params_.cycles * (1.0 + 1.0 * u01(rng));
      t.p1 = 6.283185307179586 * u01(rng);
      t.p2 = 6.283185307179586 * u01(rng);
    }
  }

  DeformationState at(double tau) const {
    const auto& d = params_;
    constexpr double deg = 3.141592653589793 / 180.0;
    DeformationState s;
    s.bend_curvature = d.bend_curvature * traj_[0](tau);
    s.bend_onset = 0.25 * traj_[1](tau);
    s.fold_curvature = d.fold_curvature * traj_[2](tau);
    s.fold_position = 0.3 * traj_[3](tau);
    s.wave_amplitude = d.wave_amplitude * 0.5 * (1 + traj_[4](tau));
    s.wave_phase = 6.283185307179586 * d.cycles * tau;
    s.wave_direction = 3.141592653589793 * traj_[5](tau);
    s.tilt_x = d.tilt_deg * deg * traj_[6](tau);
    s.tilt_y = d.tilt_deg * deg * traj_[7](tau);
    return s;
  }

 private:
  DeformationParams params_;
  std::array<detail::Trajectory, 8> traj_{};
};

inline double max_vertex_displacement(std::span<const double> a, std::span<const double> b) {
  double worst = 0;
  for (std::size_t k = 0; k < a.size(); k += 3) {
    const double dx = a[k] - b[k], dy = a[k + 1] - b[k + 1], dz = a[k + 2] - b[k + 2];
    worst = std::max(worst, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return worst;
}

/// num_states surfaces sampled along the seeded trajectories. The time
/// step starts at 1/num_states and is halved until the largest per-vertex
/// move stays within deformation.max_step.
inline SurfaceSequence synthesize_deformations(const SceneConfig& cfg) {
  cfg.validate();
  const DeformationSchedule schedule(cfg);
  const double base_dt = 1.0 / double(cfg.num_states);
  SurfaceSequence seq(0, cfg.grid_side, {});
  double tau = 0;
  auto prev = deform_sheet(schedule.at(tau), cfg);
  seq.append(prev);
  while (seq.frames() < cfg.num_states) {
    double dt = base_dt;
    std::vector<double> next;
    for (int halvings = 0;; ++halvings) {
      next = deform_sheet(schedule.at(tau + dt), cfg);
      if (max_vertex_displacement(prev, next) <= cfg.deformation.max_step) break;
      if (halvings == 40) throw ConfigError("deformation cannot satisfy max_step; trajectories are too fast");
      dt /= 2;
    }
    tau += dt;
    seq.append(next);
    prev = std::move(next);
  }
  return seq;
}

/// Sum of the two triangle areas of every grid cell.
inline double surface_area(std::span<const double> v, std::size_t g) {
  auto tri = [&](std::size_t a, std::size_t b, std::size_t c) {
    const double ux = v[b * 3] - v[a * 3], uy = v[b * 3 + 1] - v[a * 3 + 1], uz = v[b * 3 + 2] - v[a * 3 + 2];
    const double wx = v[c * 3] - v[a * 3], wy = v[c * 3 + 1] - v[a * 3 + 1], wz = v[c * 3 + 2] - v[a * 3 + 2];
    const double cx = uy * wz - uz * wy, cy = uz * wx - ux * wz, cz = ux * wy - uy * wx;
    return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
  };
  double area = 0;
  for (std::size_t i = 0; i + 1 < g; ++i)
    for (std::size_t j = 0; j + 1 < g; ++j) {
      const std::size_t a = i * g + j;
      area += tri(a, a + 1, a + g) + tri(a + 1, a + g + 1, a + g);
    }
  return area;
}

/// Mean over grid edges of |len - rest_len| / rest_len.
inline double mean_edge_distortion(std::span<const double> v, std::span<const double> rest, std::size_t g) {
  auto len = [](std::span<const double> p, std::size_t a, std::size_t b) {
    const double dx = p[b * 3] - p[a * 3], dy = p[b * 3 + 1] - p[a * 3 + 1], dz = p[b * 3 + 2] - p[a * 3 + 2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  };
  double total = 0;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const std::size_t a = i * g + j;
      if (j + 1 < g) {
        total += std::abs(len(v, a, a + 1) - len(rest, a, a + 1)) / len(rest, a, a + 1);
        ++edges;
      }
      if (i + 1 < g) {
        total += std::abs(len(v, a, a + g) - len(rest, a, a + g)) / len(rest, a, a + g);
        ++edges;
      }
    }
  return total / double(edges);
}

}  // namespace hdmnet
