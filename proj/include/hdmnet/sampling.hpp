#pragma once

#include <cmath>

#include "hdmnet/tensor.hpp"

namespace hdmnet {

/// Samples `source` [H,W] at the real-valued coordinates stored in `flow`
/// [...,Ho,Wo,2] with bilinear interpolation. flow(...,0) is the column (x)
/// and flow(...,1) the row (y) in source pixel units. Taps that fall
/// outside the source read 0. Output shape is flow's shape without the
/// trailing 2.
template <class T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& source, const Tensor<T>& flow) {
  if (source.rank() != 2) {
    throw DimensionError("grid_sample_bilinear: source must be [H,W], got " +
                         shape_str(source.shape()));
  }
  if (flow.rank() < 3 || flow.shape().back() != 2) {
    throw DimensionError("grid_sample_bilinear: flow must be [...,H,W,2], got " +
                         shape_str(flow.shape()));
  }
  const auto h = static_cast<std::ptrdiff_t>(source.dim(0));
  const auto w = static_cast<std::ptrdiff_t>(source.dim(1));
  const std::size_t count = flow.numel() / 2;
  Shape out_shape(flow.shape().begin(), flow.shape().end() - 1);

  auto fetch = [h, w](const T* src, std::ptrdiff_t y, std::ptrdiff_t x) {
    return (y < 0 || y >= h || x < 0 || x >= w) ? T(0) : src[y * w + x];
  };

  const T* src = source.data().data();
  const T* fl = flow.data().data();
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const T x = fl[2 * i], y = fl[2 * i + 1];
    const T fx = std::floor(x), fy = std::floor(y);
    const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
    const T ax = x - fx, ay = y - fy;
    out[i] = (1 - ay) * ((1 - ax) * fetch(src, y0, x0) + ax * fetch(src, y0, x0 + 1)) +
             ay * ((1 - ax) * fetch(src, y0 + 1, x0) + ax * fetch(src, y0 + 1, x0 + 1));
  }

  return detail::make_result<T>(
      std::move(out_shape), std::move(out), "grid_sample_bilinear", {&source, &flow},
      [h, w, count, fetch](Node<T>& self) {
        const T* src = self.inputs[0]->data.data();
        const T* fl = self.inputs[1]->data.data();
        T* gs = self.input_grad(0);
        T* gf = self.input_grad(1);
        auto put = [&](std::ptrdiff_t y, std::ptrdiff_t x, T v) {
          if (y >= 0 && y < h && x >= 0 && x < w) gs[y * w + x] += v;
        };
        for (std::size_t i = 0; i < count; ++i) {
          const T go = self.grad[i];
          if (go == T(0)) continue;
          const T x = fl[2 * i], y = fl[2 * i + 1];
          const T fx = std::floor(x), fy = std::floor(y);
          const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
          const T ax = x - fx, ay = y - fy;
          if (gs) {
            put(y0, x0, go * (1 - ay) * (1 - ax));
            put(y0, x0 + 1, go * (1 - ay) * ax);
            put(y0 + 1, x0, go * ay * (1 - ax));
            put(y0 + 1, x0 + 1, go * ay * ax);
          }
          if (gf) {
            const T v00 = fetch(src, y0, x0), v01 = fetch(src, y0, x0 + 1);
            const T v10 = fetch(src, y0 + 1, x0), v11 = fetch(src, y0 + 1, x0 + 1);
            gf[2 * i] += go * ((1 - ay) * (v01 - v00) + ay * (v11 - v10));
            gf[2 * i + 1] += go * ((1 - ax) * (v10 - v00) + ax * (v11 - v01));
          }
        }
      });
}

/// Sampled Gaussian exp(-(x^2+y^2)/(2 sigma^2)) on a ksize×ksize stencil,
/// normalised to unit sum. Row-major.
inline std::vector<double> gaussian_kernel(double sigma, std::size_t ksize) {
  if (ksize % 2 == 0) throw ParameterError("gaussian kernel size must be odd, got " + std::to_string(ksize));
  if (!(sigma > 0)) throw ParameterError("gaussian sigma must be positive");
  const auto r = static_cast<std::ptrdiff_t>(ksize / 2);
  std::vector<double> k;
  k.reserve(ksize * ksize);
  double total = 0;
  for (std::ptrdiff_t a = -r; a <= r; ++a)
    for (std::ptrdiff_t b = -r; b <= r; ++b) {
      const double v = std::exp(-double(a * a + b * b) / (2 * sigma * sigma));
      k.push_back(v);
      total += v;
    }
  for (double& v : k) v /= total;
  return k;
}

/// Channel-wise Gaussian smoothing of a vertex grid [G,G,C] or a batch
/// [N,G,G,C], with replicate padding at the border.
template <class T>
Tensor<T> gaussian_blur2d(const Tensor<T>& x, double sigma, std::size_t ksize) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("gaussian_blur2d expects [G,G,C] or [N,G,G,C], got " + shape_str(x.shape()));
  }
  const auto kd = gaussian_kernel(sigma, ksize);
  const std::vector<T> kernel(kd.begin(), kd.end());
  const std::size_t off = x.rank() - 3;
  const std::size_t frames = off ? x.dim(0) : 1;
  const std::size_t rows = x.dim(off), cols = x.dim(off + 1), ch = x.dim(off + 2);
  const auto r = static_cast<std::ptrdiff_t>(ksize / 2);

  // Visits (output index, input index, weight) for every stencil tap.
  auto for_each_tap = [=](auto&& visit) {
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t base = f * rows * cols * ch;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          std::size_t kidx = 0;
          for (std::ptrdiff_t a = -r; a <= r; ++a) {
            const auto si = static_cast<std::size_t>(
                std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + a, 0,
                                           static_cast<std::ptrdiff_t>(rows) - 1));
            for (std::ptrdiff_t b = -r; b <= r; ++b, ++kidx) {
              const auto sj = static_cast<std::size_t>(
                  std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(j) + b, 0,
                                             static_cast<std::ptrdiff_t>(cols) - 1));
              const std::size_t o = base + (i * cols + j) * ch;
              const std::size_t s = base + (si * cols + sj) * ch;
              for (std::size_t c = 0; c < ch; ++c) visit(o + c, s + c, kernel[kidx]);
            }
          }
        }
    }
  };

  // out = x + sum_k w_k (x_k - x): equal to sum_k w_k x_k since the weights
  // sum to one, and exact on constant fields.
  std::vector<T> out(x.values());
  const T* src = x.data().data();
  for_each_tap([&](std::size_t o, std::size_t s, T wgt) { out[o] += wgt * (src[s] - src[o]); });

  return detail::make_result<T>(x.shape(), std::move(out), "gaussian_blur2d", {&x},
                                [for_each_tap](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  const T* go = self.grad.data();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += go[i];
                                  for_each_tap([&](std::size_t o, std::size_t s, T wgt) {
                                    g[s] += wgt * go[o];
                                    g[o] -= wgt * go[o];
                                  });
                                });
}

/// Per-point flow fields that translate a centred basis image onto each
/// point: for points [K,2] (x,y) returns [K,side,side,2] with
/// flow(k,i,j) = (j - x_k + c, i - y_k + c), c = (side-1)/2.
template <class T>
Tensor<T> translation_flows(const Tensor<T>& points, std::size_t side) {
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw DimensionError("translation_flows expects [K,2] points, got " + shape_str(points.shape()));
  }
  const std::size_t k = points.dim(0);
  const T c = T(side - 1) / 2;
  std::vector<T> out(k * side * side * 2);
  for (std::size_t p = 0; p < k; ++p) {
    const T px = points[2 * p], py = points[2 * p + 1];
    T* d = out.data() + p * side * side * 2;
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        d[2 * (i * side + j)] = T(j) - px + c;
        d[2 * (i * side + j) + 1] = T(i) - py + c;
      }
  }
  return detail::make_result<T>(Shape{k, side, side, 2}, std::move(out), "translation_flows",
                                {&points}, [k, side](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  for (std::size_t p = 0; p < k; ++p) {
                                    const T* d = self.grad.data() + p * side * side * 2;
                                    T gx = 0, gy = 0;
                                    for (std::size_t q = 0; q < side * side; ++q) {
                                      gx += d[2 * q];
                                      gy += d[2 * q + 1];
                                    }
                                    g[2 * p] -= gx;
                                    g[2 * p + 1] -= gy;
                                  }
                                });
}

/// Sums [K,...] over the leading dimension.
template <class T>
Tensor<T> sum_leading(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("sum_leading on a scalar");
  Shape inner(a.shape().begin() + 1, a.shape().end());
  const std::size_t stride = shape_numel(inner);
  std::vector<T> out(stride, T(0));
  for (std::size_t i = 0; i < a.numel(); ++i) out[i % stride] += a[i];
  return detail::make_result<T>(std::move(inner), std::move(out), "sum_leading", {&a},
                                [stride](Node<T>& self) {
                                  T* g = self.input_grad(0);
                                  if (!g) return;
                                  const std::size_t n = self.inputs[0]->data.size();
                                  for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i % stride];
                                });
}

}  // namespace hdmnet
