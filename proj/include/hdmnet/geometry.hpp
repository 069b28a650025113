#pragma once

// Surfaces, camera projection, Procrustes alignment and the normalised 3D
// reconstruction error.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdmnet/tensor.hpp"

namespace hdmnet {

struct DegenerateDepthError : std::domain_error {
  using std::domain_error::domain_error;
};

struct DegeneracyError : std::domain_error {
  using std::domain_error::domain_error;
};

/// F frames of G×G×3 vertex grids, frame-major then row-major.
class SurfaceSequence {
 public:
  SurfaceSequence() = default;
  SurfaceSequence(std::size_t frames, std::size_t grid_side, std::vector<double> vertices)
      : frames_(frames), grid_side_(grid_side), vertices_(std::move(vertices)) {
    if (vertices_.size() != frames_ * grid_side_ * grid_side_ * 3) {
      throw DimensionError("SurfaceSequence: " + std::to_string(frames_) + " frames of " +
                           std::to_string(grid_side_) + "x" + std::to_string(grid_side_) +
                           "x3 need " + std::to_string(frames_ * grid_side_ * grid_side_ * 3) +
                           " values, got " + std::to_string(vertices_.size()));
    }
  }

  static SurfaceSequence zeros(std::size_t frames, std::size_t grid_side) {
    return {frames, grid_side, std::vector<double>(frames * grid_side * grid_side * 3, 0.0)};
  }

  std::size_t frames() const { return frames_; }
  std::size_t grid_side() const { return grid_side_; }
  std::size_t frame_size() const { return grid_side_ * grid_side_ * 3; }

  std::span<const double> vertices() const { return vertices_; }
  std::span<double> vertices() { return vertices_; }
  std::span<const double> frame(std::size_t f) const {
    return std::span<const double>(vertices_).subspan(f * frame_size(), frame_size());
  }
  std::span<double> frame(std::size_t f) {
    return std::span<double>(vertices_).subspan(f * frame_size(), frame_size());
  }
  double& at(std::size_t f, std::size_t i, std::size_t j, std::size_t c) {
    return vertices_[((f * grid_side_ + i) * grid_side_ + j) * 3 + c];
  }
  double at(std::size_t f, std::size_t i, std::size_t j, std::size_t c) const {
    return vertices_[((f * grid_side_ + i) * grid_side_ + j) * 3 + c];
  }

  void append(std::span<const double> frame_values) {
    if (frame_values.size() != frame_size()) throw DimensionError("SurfaceSequence::append: frame size mismatch");
    vertices_.insert(vertices_.end(), frame_values.begin(), frame_values.end());
    ++frames_;
  }

  /// Throws unless F >= 1, G >= 2 and all coordinates are finite.
  void validate() const {
    if (frames_ < 1 || grid_side_ < 2) {
      throw ParameterError("SurfaceSequence needs F >= 1 and G >= 2");
    }
    for (double v : vertices_) {
      if (!std::isfinite(v)) throw ParameterError("SurfaceSequence holds a non-finite coordinate");
    }
  }

  template <class T>
  Tensor<T> to_tensor() const {
    return Tensor<T>(Shape{frames_, grid_side_, grid_side_, 3},
                     std::vector<T>(vertices_.begin(), vertices_.end()));
  }

  template <class T>
  static SurfaceSequence from_tensor(const Tensor<T>& t) {
    if (t.rank() != 4 || t.dim(1) != t.dim(2) || t.dim(3) != 3) {
      throw DimensionError("SurfaceSequence::from_tensor expects [F,G,G,3], got " + shape_str(t.shape()));
    }
    return {t.dim(0), t.dim(1), std::vector<double>(t.data().begin(), t.data().end())};
  }

 private:
  std::size_t frames_ = 0;
  std::size_t grid_side_ = 0;
  std::vector<double> vertices_;
};

enum class ProjectionMode { perspective, orthographic };

struct CameraIntrinsics {
  double fx = 280.0;
  double fy = 497.7;
  double cx = 128.0;
  double cy = 128.0;
  ProjectionMode mode = ProjectionMode::perspective;
  double ortho_scale = 1.0;  // pixels per unit, orthographic only

  /// Intrinsics of the reference 256×256 renders.
  static CameraIntrinsics reference() { return {}; }

  /// Same camera for an image rescaled by `s`.
  CameraIntrinsics scaled(double s) const {
    CameraIntrinsics c = *this;
    c.fx *= s;
    c.fy *= s;
    c.cx *= s;
    c.cy *= s;
    c.ortho_scale *= s;
    return c;
  }

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw ParameterError("camera focal lengths must be positive");
    if (!(ortho_scale > 0)) throw ParameterError("orthographic scale must be positive");
  }
};

namespace detail {
inline void check_points3(const Shape& s, const char* op) {
  if (s.empty() || s.back() != 3) {
    throw DimensionError(std::string(op) + " expects [...,3] points, got " + shape_str(s));
  }
}
inline Shape with_last(Shape s, std::size_t last) {
  s.back() = last;
  return s;
}
}  // namespace detail

/// (u,v) = (fx px/pz + cx, fy py/pz + cy) for [...,3] -> [...,2].
template <class T>
Tensor<T> project_perspective(const Tensor<T>& points, const CameraIntrinsics& cam) {
  detail::check_points3(points.shape(), "project_perspective");
  const std::size_t n = points.numel() / 3;
  const T fx = T(cam.fx), fy = T(cam.fy), cx = T(cam.cx), cy = T(cam.cy);
  std::vector<T> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const T px = points[3 * i], py = points[3 * i + 1], pz = points[3 * i + 2];
    if (!(pz > T(0))) {
      throw DegenerateDepthError("project_perspective: point " + std::to_string(i) +
                                 " has non-positive depth " + std::to_string(double(pz)));
    }
    out[2 * i] = fx * px / pz + cx;
    out[2 * i + 1] = fy * py / pz + cy;
  }
  return detail::make_result<T>(detail::with_last(points.shape(), 2), std::move(out),
                                "project_perspective", {&points}, [n, fx, fy](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  const T* p = self.inputs[0]->data.data();
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const T px = p[3 * i], py = p[3 * i + 1], pz = p[3 * i + 2];
                                    const T gu = self.grad[2 * i], gv = self.grad[2 * i + 1];
                                    g[3 * i] += gu * fx / pz;
                                    g[3 * i + 1] += gv * fy / pz;
                                    g[3 * i + 2] -= (gu * fx * px + gv * fy * py) / (pz * pz);
                                  }
                                });
}

/// (u,v) = (s px + cx, s py + cy), independent of depth.
template <class T>
Tensor<T> project_orthographic(const Tensor<T>& points, const CameraIntrinsics& cam) {
  detail::check_points3(points.shape(), "project_orthographic");
  const std::size_t n = points.numel() / 3;
  const T s = T(cam.ortho_scale), cx = T(cam.cx), cy = T(cam.cy);
  std::vector<T> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = s * points[3 * i] + cx;
    out[2 * i + 1] = s * points[3 * i + 1] + cy;
  }
  return detail::make_result<T>(detail::with_last(points.shape(), 2), std::move(out),
                                "project_orthographic", {&points}, [n, s](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  for (std::size_t i = 0; i < n; ++i) {
                                    g[3 * i] += s * self.grad[2 * i];
                                    g[3 * i + 1] += s * self.grad[2 * i + 1];
                                  }
                                });
}

template <class T>
Tensor<T> project(const Tensor<T>& points, const CameraIntrinsics& cam) {
  return cam.mode == ProjectionMode::perspective ? project_perspective(points, cam)
                                                 : project_orthographic(points, cam);
}

/// x -> scale * rotation * x + translation
struct RigidAlignment {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }
};

struct ProcrustesResult {
  RigidAlignment alignment;
  std::vector<double> aligned;  // pred mapped onto gt, same layout as the input
};

/// Least-squares rotation + translation (+ scale) taking `pred` onto `gt`;
/// both are flat xyz arrays of equal length. Reflections are excluded.
inline ProcrustesResult procrustes_align(std::span<const double> pred, std::span<const double> gt,
                                         bool allow_scale = false) {
  if (pred.size() != gt.size() || pred.size() % 3 != 0 || pred.empty()) {
    throw DimensionError("procrustes_align: point arrays of " + std::to_string(pred.size()) +
                         " and " + std::to_string(gt.size()) + " values");
  }
  const auto n = static_cast<Eigen::Index>(pred.size() / 3);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(gt[i])) {
      throw ParameterError("procrustes_align: non-finite coordinate");
    }
  }
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> p(pred.data(), 3, n);
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> q(gt.data(), 3, n);
  const Eigen::Vector3d pc = p.rowwise().mean();
  const Eigen::Vector3d qc = q.rowwise().mean();
  const Eigen::Matrix3Xd p0 = p.colwise() - pc;
  const Eigen::Matrix3Xd q0 = q.colwise() - qc;
  if (q0.squaredNorm() <= 1e-24 * q.squaredNorm()) throw DegeneracyError("procrustes_align: ground-truth points are all identical");

  const Eigen::Matrix3d cov = p0 * q0.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1;

  ProcrustesResult result;
  auto& a = result.alignment;
  a.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  const double spread = p0.squaredNorm();
  if (allow_scale && spread > 0) {
    a.scale = (svd.singularValues().asDiagonal() * d).trace() / spread;
  }
  a.translation = qc - a.scale * a.rotation * pc;

  result.aligned.resize(pred.size());
  Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>> out(result.aligned.data(), 3, n);
  out = (a.scale * a.rotation * p).colwise() + a.translation;
  return result;
}

struct E3dResult {
  double e3d = 0;
  double sigma = 0;  // population standard deviation of per_frame
  std::vector<double> per_frame;
};

/// Population mean and standard deviation.
inline std::pair<double, double> mean_and_sigma(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / double(values.size()))};
}

/// ||gt_f - pred_f|| / ||gt_f|| for one frame, optionally after Procrustes.
inline double e3d_frame(std::span<const double> pred, std::span<const double> gt, bool align,
                        bool allow_scale = false) {
  double gt_norm = 0;
  for (double v : gt) gt_norm += v * v;
  gt_norm = std::sqrt(gt_norm);
  if (gt_norm == 0.0) throw DegeneracyError("e3d: ground-truth frame has zero norm");
  std::vector<double> aligned;
  if (align) {
    aligned = procrustes_align(pred, gt, allow_scale).aligned;
    pred = aligned;
  }
  double err = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) err += (gt[i] - pred[i]) * (gt[i] - pred[i]);
  return std::sqrt(err) / gt_norm;
}

inline E3dResult e3d_metric(const SurfaceSequence& pred, const SurfaceSequence& gt, bool align,
                            bool allow_scale = false) {
  if (pred.frames() != gt.frames() || pred.grid_side() != gt.grid_side()) {
    throw DimensionError("e3d_metric: prediction and ground truth shapes differ");
  }
  E3dResult r;
  r.per_frame.reserve(gt.frames());
  for (std::size_t f = 0; f < gt.frames(); ++f) {
    r.per_frame.push_back(e3d_frame(pred.frame(f), gt.frame(f), align, allow_scale));
  }
  std::tie(r.e3d, r.sigma) = mean_and_sigma(r.per_frame);
  return r;
}

/// Mean over interior vertices of |4 v(i,j) - v(i-1,j) - v(i+1,j) - v(i,j-1) - v(i,j+1)|.
inline double mean_laplacian_magnitude(std::span<const double> surface, std::size_t grid_side) {
  if (grid_side < 3) throw ParameterError("mean_laplacian_magnitude needs G >= 3");
  if (surface.size() != grid_side * grid_side * 3) {
    throw DimensionError("mean_laplacian_magnitude: surface size does not match G");
  }
  const std::size_t g = grid_side;
  auto v = [&](std::size_t i, std::size_t j, std::size_t c) { return surface[(i * g + j) * 3 + c]; };
  double total = 0;
  for (std::size_t i = 1; i + 1 < g; ++i)
    for (std::size_t j = 1; j + 1 < g; ++j) {
      double sq = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double l = 4 * v(i, j, c) - v(i - 1, j, c) - v(i + 1, j, c) - v(i, j - 1, c) - v(i, j + 1, c);
        sq += l * l;
      }
      total += std::sqrt(sq);
    }
  return total / double((g - 2) * (g - 2));
}

}  // namespace hdmnet
