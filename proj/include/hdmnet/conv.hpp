#pragma once

// Convolution layers on [N,C,H,W] tensors. Both directions go through
// im2col/col2im and a dense matrix product, which keeps transposed_conv2d
// the exact adjoint of conv2d.

#include <Eigen/Core>

#include "hdmnet/parallel.hpp"
#include "hdmnet/tensor.hpp"

namespace hdmnet {

namespace detail {

/// Geometry of a strided, zero-padded correlation from an image of
/// c×h×w onto an oh×ow output grid.
struct ConvGeometry {
  std::size_t c, h, w, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return oh * ow; }
  std::size_t image() const { return c * h * w; }
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((ch * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = img + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

/// Scatter-adds columns back onto the image (adjoint of im2col).
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((ch * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = img + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// out[K, positions] = W[K, patch] * im2col(img)
template <class T>
void correlate(const T* img, const T* kernel, std::size_t k, const ConvGeometry& g, T* out) {
  std::vector<T> cols(g.patch() * g.positions());
  im2col(img, g, cols.data());
  Eigen::Map<const RowMat<T>> wm(kernel, static_cast<Eigen::Index>(k),
                                 static_cast<Eigen::Index>(g.patch()));
  Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(g.patch()),
                                 static_cast<Eigen::Index>(g.positions()));
  Eigen::Map<RowMat<T>> om(out, static_cast<Eigen::Index>(k),
                           static_cast<Eigen::Index>(g.positions()));
  om.noalias() = wm * cm;
}

/// img += col2im(W^T * grad_out)
template <class T>
void correlate_adjoint(const T* grad_out, const T* kernel, std::size_t k, const ConvGeometry& g,
                       T* img) {
  std::vector<T> cols(g.patch() * g.positions());
  Eigen::Map<const RowMat<T>> wm(kernel, static_cast<Eigen::Index>(k),
                                 static_cast<Eigen::Index>(g.patch()));
  Eigen::Map<const RowMat<T>> gm(grad_out, static_cast<Eigen::Index>(k),
                                 static_cast<Eigen::Index>(g.positions()));
  Eigen::Map<RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(g.patch()),
                           static_cast<Eigen::Index>(g.positions()));
  cm.noalias() = wm.transpose() * gm;
  col2im(cols.data(), g, img);
}

/// dW[K, patch] = grad_out[K, positions] * im2col(img)^T
template <class T>
void correlate_kernel_grad(const T* img, const T* grad_out, std::size_t k, const ConvGeometry& g,
                           T* dkernel) {
  std::vector<T> cols(g.patch() * g.positions());
  im2col(img, g, cols.data());
  Eigen::Map<const RowMat<T>> gm(grad_out, static_cast<Eigen::Index>(k),
                                 static_cast<Eigen::Index>(g.positions()));
  Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(g.patch()),
                                 static_cast<Eigen::Index>(g.positions()));
  Eigen::Map<RowMat<T>> dm(dkernel, static_cast<Eigen::Index>(k),
                           static_cast<Eigen::Index>(g.patch()));
  dm.noalias() = gm * cm.transpose();
}

template <class T>
void check_conv_operands(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                         const char* op) {
  if (input.rank() != 4) {
    throw DimensionError(std::string(op) + ": input must be [N,C,H,W], got " +
                         shape_str(input.shape()));
  }
  if (kernel.rank() != 4) {
    throw DimensionError(std::string(op) + ": kernel must be rank 4, got " +
                         shape_str(kernel.shape()));
  }
  if (stride == 0) throw ParameterError(std::string(op) + ": stride must be positive");
}

/// Sums per-sample kernel gradients in index order.
template <class T>
void reduce_kernel_grads(const std::vector<std::vector<T>>& parts, T* dst) {
  for (const auto& part : parts)
    for (std::size_t i = 0; i < part.size(); ++i) dst[i] += part[i];
}

}  // namespace detail

/// Cross-correlation of [N,C,H,W] with [K,C,kh,kw] (odd kernel sizes).
/// Output size must be integral unless `floor_output` is set, in which case
/// trailing input rows/columns that do not fill a full stride are dropped.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride = 1,
                 std::size_t padding = 0, bool floor_output = false) {
  detail::check_conv_operands(input, kernel, stride, "conv2d");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t k = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)) + " input channels, input " +
                         shape_str(input.shape()) + " has " + std::to_string(c));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw DimensionError("conv2d: kernel spatial size must be odd, got " + shape_str(kernel.shape()));
  }
  const std::size_t span_h = h + 2 * padding, span_w = w + 2 * padding;
  if (span_h < kh || span_w < kw ||
      (!floor_output && ((span_h - kh) % stride != 0 || (span_w - kw) % stride != 0))) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + " with kernel " +
                         shape_str(kernel.shape()) + ", stride " + std::to_string(stride) +
                         ", padding " + std::to_string(padding) +
                         " does not give an integral output size");
  }
  const detail::ConvGeometry g{c, h, w, kh, kw, stride, padding,
                               (span_h - kh) / stride + 1, (span_w - kw) / stride + 1};
  std::vector<T> out(n * k * g.positions());
  const T* x = input.data().data();
  const T* wk = kernel.data().data();
  parallel_for(n, [&](std::size_t b) {
    detail::correlate(x + b * g.image(), wk, k, g, out.data() + b * k * g.positions());
  });
  return detail::make_result<T>(
      Shape{n, k, g.oh, g.ow}, std::move(out), "conv2d", {&input, &kernel},
      [g, n, k](Node<T>& self) {
        const T* x = self.inputs[0]->data.data();
        const T* wk = self.inputs[1]->data.data();
        const T* go = self.grad.data();
        const std::size_t out_stride = k * g.positions();
        if (T* gx = self.input_grad(0)) {
          parallel_for(n, [&](std::size_t b) {
            detail::correlate_adjoint(go + b * out_stride, wk, k, g, gx + b * g.image());
          });
        }
        if (T* gw = self.input_grad(1)) {
          std::vector<std::vector<T>> parts(n, std::vector<T>(k * g.patch()));
          parallel_for(n, [&](std::size_t b) {
            detail::correlate_kernel_grad(x + b * g.image(), go + b * out_stride, k, g,
                                          parts[b].data());
          });
          detail::reduce_kernel_grads(parts, gw);
        }
      });
}

/// Adjoint of conv2d with the same kernel: [N,K,H,W] -> [N,C,H',W'] with
/// H' = (H-1)*stride - 2*padding + kh. Kernel is [K,C,kh,kw], any size.
template <class T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                            std::size_t stride = 1, std::size_t padding = 0) {
  detail::check_conv_operands(input, kernel, stride, "transposed_conv2d");
  const std::size_t n = input.dim(0), k = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t c = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != k) {
    throw DimensionError("transposed_conv2d: kernel " + shape_str(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(0)) + " input channels, input " +
                         shape_str(input.shape()) + " has " + std::to_string(k));
  }
  if (h == 0 || w == 0) throw DimensionError("transposed_conv2d: empty input " + shape_str(input.shape()));
  const std::size_t full_h = (h - 1) * stride + kh, full_w = (w - 1) * stride + kw;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw DimensionError("transposed_conv2d: padding " + std::to_string(padding) +
                         " too large for input " + shape_str(input.shape()));
  }
  const detail::ConvGeometry g{c, full_h - 2 * padding, full_w - 2 * padding, kh, kw, stride,
                               padding, h, w};
  std::vector<T> out(n * g.image(), T(0));
  const T* y = input.data().data();
  const T* wk = kernel.data().data();
  parallel_for(n, [&](std::size_t b) {
    detail::correlate_adjoint(y + b * k * g.positions(), wk, k, g, out.data() + b * g.image());
  });
  return detail::make_result<T>(
      Shape{n, c, g.h, g.w}, std::move(out), "transposed_conv2d", {&input, &kernel},
      [g, n, k](Node<T>& self) {
        const T* y = self.inputs[0]->data.data();
        const T* wk = self.inputs[1]->data.data();
        const T* go = self.grad.data();
        const std::size_t in_stride = k * g.positions();
        if (T* gy = self.input_grad(0)) {
          parallel_for(n, [&](std::size_t b) {
            std::vector<T> tmp(in_stride);
            detail::correlate(go + b * g.image(), wk, k, g, tmp.data());
            for (std::size_t i = 0; i < in_stride; ++i) gy[b * in_stride + i] += tmp[i];
          });
        }
        if (T* gw = self.input_grad(1)) {
          std::vector<std::vector<T>> parts(n, std::vector<T>(k * g.patch()));
          parallel_for(n, [&](std::size_t b) {
            detail::correlate_kernel_grad(go + b * g.image(), y + b * in_stride, k, g,
                                          parts[b].data());
          });
          detail::reduce_kernel_grads(parts, gw);
        }
      });
}

/// Adds a per-channel bias [C] to [N,C,H,W].
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 4 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_channel_bias: " + shape_str(x.shape()) + " with bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.values());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* p = out.data() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += bias[ch];
    }
  return detail::make_result<T>(x.shape(), std::move(out), "add_channel_bias", {&x, &bias},
                                [n, c, hw](Node<T>& self) {
                                  if (T* g = self.input_grad(0)) {
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      g[i] += self.grad[i];
                                  }
                                  if (T* g = self.input_grad(1)) {
                                    for (std::size_t b = 0; b < n; ++b)
                                      for (std::size_t ch = 0; ch < c; ++ch) {
                                        const T* p = self.grad.data() + (b * c + ch) * hw;
                                        T acc = 0;
                                        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
                                        g[ch] += acc;
                                      }
                                  }
                                });
}

/// Bilinear resampling of [N,C,H,W] to [N,C,out_h,out_w] with corner
/// alignment, so every output is a convex combination of inputs.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw DimensionError("bilinear_resize expects [N,C,H,W], got " + shape_str(x.shape()));
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: empty output size");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);

  struct Tap {
    std::size_t i0, i1;
    T w1;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    for (std::size_t o = 0; o < out; ++o) {
      const T pos = out == 1 ? T(0) : T(o) * T(in - 1) / T(out - 1);
      auto i0 = static_cast<std::size_t>(std::floor(pos));
      if (i0 >= in - 1) i0 = in - 1;
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, pos - T(i0)};
    }
    return t;
  };
  auto ty = taps(h, out_h);
  auto tx = taps(w, out_w);

  std::vector<T> out(planes * out_h * out_w);
  const T* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src + p * h * w;
    T* d = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const T top = s[a.i0 * w + b.i0] * (1 - b.w1) + s[a.i0 * w + b.i1] * b.w1;
        const T bot = s[a.i1 * w + b.i0] * (1 - b.w1) + s[a.i1 * w + b.i1] * b.w1;
        d[oy * out_w + ox] = top * (1 - a.w1) + bot * a.w1;
      }
    }
  }
  return detail::make_result<T>(
      Shape{x.dim(0), x.dim(1), out_h, out_w}, std::move(out), "bilinear_resize", {&x},
      [ty = std::move(ty), tx = std::move(tx), planes, h, w, out_h, out_w](Node<T>& self) {
        T* g = self.input_grad(0);
        if (!g) return;
        for (std::size_t p = 0; p < planes; ++p) {
          T* s = g + p * h * w;
          const T* d = self.grad.data() + p * out_h * out_w;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const auto& b = tx[ox];
              const T go = d[oy * out_w + ox];
              s[a.i0 * w + b.i0] += go * (1 - a.w1) * (1 - b.w1);
              s[a.i0 * w + b.i1] += go * (1 - a.w1) * b.w1;
              s[a.i1 * w + b.i0] += go * a.w1 * (1 - b.w1);
              s[a.i1 * w + b.i1] += go * a.w1 * b.w1;
            }
          }
        }
      });
}

}  // namespace hdmnet
