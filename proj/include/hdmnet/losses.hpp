#pragma once

// Training losses: squared 3D error, the Gaussian-smoothing isometry prior,
// and the contour loss built on a differentiable soft rasterizer.

#include <string>

#include "hdmnet/geometry.hpp"
#include "hdmnet/sampling.hpp"
#include "hdmnet/tensor.hpp"

namespace hdmnet {

/// Affine map from image-plane pixel coordinates into raster cells:
/// r = scale * u + offset. Cell (i,j) sits at integer raster coordinate (j,i).
struct RasterMap {
  double scale = 99.0 / 256.0;
  double offset = 0.0;
};

enum class RasterRoute {
  splat,       // accumulate bilinear weights directly
  basis_warp,  // warp a centred one-hot basis per point via grid sampling
};

struct LossConfig {
  double w3d = 1.0;
  double wiso = 1.0;
  double wcont = 1.0;
  bool use_3d = true;
  bool use_iso = true;
  bool use_contour = true;
  double sigma_gauss = 1.0;
  std::size_t ksize = 5;
  std::size_t raster_side = 99;
  RasterMap raster_map{};
  RasterRoute route = RasterRoute::splat;

  /// Raster map covering an image of `image_side` pixels.
  LossConfig& fit_raster_to_image(std::size_t image_side) {
    raster_map = {double(raster_side) / double(image_side), 0.0};
    return *this;
  }

  void validate() const {
    if (w3d < 0 || wiso < 0 || wcont < 0) throw ParameterError("loss weights must be non-negative");
    if (ksize % 2 == 0) throw ParameterError("loss ksize must be odd");
    if (raster_side < 3) throw ParameterError("raster_side must be at least 3");
  }
};

namespace detail {
inline void check_surface_batch(const Shape& s, const char* op) {
  if (s.size() != 4 || s[1] != s[2] || s[3] != 3) {
    throw DimensionError(std::string(op) + " expects surfaces [F,G,G,3], got " + shape_str(s));
  }
}
}  // namespace detail

/// (1/F) sum_f ||gt_f - pred_f||_F^2
template <class T>
Tensor<T> loss_3d(const Tensor<T>& pred, const Tensor<T>& gt) {
  detail::check_surface_batch(pred.shape(), "loss_3d");
  detail::require_same_shape(pred, gt, "loss_3d");
  return scale(frobenius_norm_sq(sub(gt, pred)), T(1) / T(pred.dim(0)));
}

/// (1/F) sum_f ||blur(S_f) - S_f||_F  (unsquared norm)
template <class T>
Tensor<T> loss_iso(const Tensor<T>& pred, const LossConfig& cfg) {
  detail::check_surface_batch(pred.shape(), "loss_iso");
  const auto residual = sub(gaussian_blur2d(pred, cfg.sigma_gauss, cfg.ksize), pred);
  const std::size_t frames = pred.dim(0);
  Tensor<T> total = frobenius_norm(select(residual, 0));
  for (std::size_t f = 1; f < frames; ++f) total = add(total, frobenius_norm(select(residual, f)));
  return scale(total, T(1) / T(frames));
}

/// Bilinear splat of raster-space points [K,2] onto an R×R grid, before
/// thresholding. Points outside the grid contribute only their in-bounds
/// taps.
template <class T>
Tensor<T> splat_points(const Tensor<T>& raster_points, std::size_t side) {
  if (raster_points.rank() != 2 || raster_points.dim(1) != 2) {
    throw DimensionError("splat_points expects [K,2], got " + shape_str(raster_points.shape()));
  }
  const std::size_t k = raster_points.dim(0);
  const auto r = static_cast<std::ptrdiff_t>(side);

  // Calls visit(cell, weight, d weight/dx, d weight/dy) for each in-bounds tap.
  auto for_each_tap = [r](const T* pts, std::size_t p, auto&& visit) {
    const T x = pts[2 * p], y = pts[2 * p + 1];
    const T fx = std::floor(x), fy = std::floor(y);
    const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
    const T ax = x - fx, ay = y - fy;
    const T wx[2] = {1 - ax, ax}, wy[2] = {1 - ay, ay};
    const T dx[2] = {-1, 1};
    for (int a = 0; a < 2; ++a) {
      const std::ptrdiff_t yy = y0 + a;
      if (yy < 0 || yy >= r) continue;
      for (int b = 0; b < 2; ++b) {
        const std::ptrdiff_t xx = x0 + b;
        if (xx < 0 || xx >= r) continue;
        visit(static_cast<std::size_t>(yy * r + xx), wy[a] * wx[b], wy[a] * dx[b], dx[a] * wx[b]);
      }
    }
  };

  std::vector<T> out(side * side, T(0));
  const T* pts = raster_points.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    if (!std::isfinite(double(pts[2 * p])) || !std::isfinite(double(pts[2 * p + 1]))) {
      throw ParameterError("splat_points: non-finite point " + std::to_string(p));
    }
    for_each_tap(pts, p, [&](std::size_t cell, T w, T, T) { out[cell] += w; });
  }
  return detail::make_result<T>(Shape{side, side}, std::move(out), "splat_points", {&raster_points},
                                [k, for_each_tap](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  const T* pts = self.inputs[0]->data.data();
                                  for (std::size_t p = 0; p < k; ++p) {
                                    for_each_tap(pts, p, [&](std::size_t cell, T, T dwx, T dwy) {
                                      g[2 * p] += self.grad[cell] * dwx;
                                      g[2 * p + 1] += self.grad[cell] * dwy;
                                    });
                                  }
                                });
}

/// The same accumulation via one translated copy of a centred one-hot basis
/// per point, sampled bilinearly and summed.
template <class T>
Tensor<T> warp_basis_points(const Tensor<T>& raster_points, std::size_t side) {
  if (side % 2 == 0) throw ParameterError("basis-warp rasterization needs an odd raster side");
  Tensor<T> basis = Tensor<T>::zeros(Shape{side, side});
  const std::size_t c = (side - 1) / 2;
  basis.data()[c * side + c] = T(1);
  return sum_leading(grid_sample_bilinear(basis, translation_flows(raster_points, side)));
}

/// Affine image-plane -> raster coordinates for [...,2] points, as [K,2].
template <class T>
Tensor<T> to_raster_coordinates(const Tensor<T>& points2d, const RasterMap& map) {
  if (points2d.rank() < 1 || points2d.shape().back() != 2) {
    throw DimensionError("soft_rasterize expects [...,2] points, got " + shape_str(points2d.shape()));
  }
  const std::size_t k = points2d.numel() / 2;
  auto flat = reshape(points2d, Shape{k, 2});
  auto scaled = scale(flat, T(map.scale));
  if (map.offset == 0.0) return scaled;
  return add(scaled, Tensor<T>::full(Shape{k, 2}, T(map.offset)));
}

/// Soft silhouette of projected points [...,2]: map into raster space,
/// accumulate bilinear splats and apply max(tanh(2x), 0). Returns [R,R].
template <class T>
Tensor<T> soft_rasterize(const Tensor<T>& points2d, const LossConfig& cfg) {
  auto raster = to_raster_coordinates(points2d, cfg.raster_map);
  auto mass = cfg.route == RasterRoute::splat ? splat_points(raster, cfg.raster_side)
                                              : warp_basis_points(raster, cfg.raster_side);
  return soft_threshold(mass);
}

/// (1/F) sum_f ||tau(pi(S_f)) - tau(pi(S_f^GT))||_F^2; gradients flow
/// through `pred` only.
template <class T>
Tensor<T> loss_contour(const Tensor<T>& pred, const Tensor<T>& gt, const CameraIntrinsics& cam,
                       const LossConfig& cfg) {
  detail::check_surface_batch(pred.shape(), "loss_contour");
  detail::require_same_shape(pred, gt, "loss_contour");
  const auto target = gt.detach();
  const std::size_t frames = pred.dim(0);
  Tensor<T> total;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto ours = soft_rasterize(project(select(pred, f), cam), cfg);
    Tensor<T> theirs;
    {
      NoGradGuard no_grad;
      theirs = soft_rasterize(project(select(target, f), cam), cfg);
    }
    auto term = frobenius_norm_sq(sub(ours, theirs));
    total = f == 0 ? term : add(total, term);
  }
  return scale(total, T(1) / T(frames));
}

template <class T>
struct LossBreakdown {
  Tensor<T> total;
  double e3d = 0;   // weighted contributions
  double iso = 0;
  double contour = 0;
};

/// w3d E_3D + wiso E_iso + wcont E_cont; disabled terms contribute exactly 0.
template <class T>
LossBreakdown<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const CameraIntrinsics& cam,
                            const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown<T> out;
  out.total = Tensor<T>::scalar(T(0));
  if (cfg.use_3d && cfg.w3d > 0) {
    auto term = scale(loss_3d(pred, gt), T(cfg.w3d));
    out.e3d = double(term.item());
    out.total = add(out.total, term);
  }
  if (cfg.use_iso && cfg.wiso > 0) {
    auto term = scale(loss_iso(pred, cfg), T(cfg.wiso));
    out.iso = double(term.item());
    out.total = add(out.total, term);
  }
  if (cfg.use_contour && cfg.wcont > 0) {
    auto term = scale(loss_contour(pred, gt, cam, cfg), T(cfg.wcont));
    out.contour = double(term.item());
    out.total = add(out.total, term);
  }
  return out;
}

}  // namespace hdmnet
