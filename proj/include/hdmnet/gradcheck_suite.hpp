#pragma once

// Named finite-difference suites, one per differentiable op and loss, each
// run over many random instances.

#include <chrono>
#include <optional>
#include <random>

#include "hdmnet/conv.hpp"
#include "hdmnet/gradcheck.hpp"
#include "hdmnet/io.hpp"
#include "hdmnet/losses.hpp"

namespace hdmnet {

struct GradcheckCase {
  ScalarFn fn;
  std::vector<Tensor<double>> inputs;
};

/// Builds one random instance, or nothing when the draw lands too close to
/// a kink of a piecewise-linear op (the caller redraws).
using CaseBuilder = std::function<std::optional<GradcheckCase>(std::mt19937_64&)>;

struct SuiteOp {
  std::string name;
  CaseBuilder build;
};

struct SuiteResult {
  std::string op;
  std::size_t trials = 0;
  std::size_t rejected = 0;
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  double seconds = 0;
  bool passed = false;
};

namespace gc {

inline Tensor<double> uniform(std::mt19937_64& rng, Shape shape, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<double> weights_for(std::mt19937_64& rng, const Shape& s) { return uniform(rng, s).values(); }

/// Reduces a tensor-valued op to a scalar with fixed random weights.
inline GradcheckCase reduced(std::mt19937_64& rng, std::function<Tensor<double>(const std::vector<Tensor<double>>&)> op,
                             std::vector<Tensor<double>> inputs) {
  const auto shape = op(inputs).shape();
  auto w = weights_for(rng, shape);
  return {[op, w](const std::vector<Tensor<double>>& in) { return weighted_sum(op(in), w); }, std::move(inputs)};
}

inline bool clear_of_integers(std::span<const double> v, double margin = 1e-3) {
  for (double x : v) {
    const double f = x - std::floor(x);
    if (f < margin || f > 1 - margin) return false;
  }
  return true;
}

inline bool clear_of_zero(std::span<const double> v, double margin = 1e-3) {
  for (double x : v)
    if (std::abs(x) < margin) return false;
  return true;
}

inline Tensor<double> surfaces(std::mt19937_64& rng, std::size_t frames, std::size_t g) {
  auto s = uniform(rng, {frames, g, g, 3}, -0.8, 0.8);
  for (std::size_t i = 2; i < s.numel(); i += 3) s.data()[i] = 2.0 + std::abs(s[i]);
  return s;
}

inline CameraIntrinsics small_camera() { return {20, 20, 4.5, 4.5, ProjectionMode::perspective, 1.0}; }

inline LossConfig unit_raster(std::size_t side, RasterRoute route) {
  LossConfig cfg;
  cfg.raster_side = side;
  cfg.raster_map = {1.0, 0.0};
  cfg.route = route;
  return cfg;
}

}  // namespace gc

/// Every registered suite, in a fixed order.
inline std::vector<SuiteOp> gradcheck_registry() {
  using In = std::vector<Tensor<double>>;
  using gc::pick;
  using gc::uniform;
  std::vector<SuiteOp> ops;
  auto add_op = [&](std::string name, CaseBuilder b) { ops.push_back({std::move(name), std::move(b)}); };

  auto rand_shape = [](std::mt19937_64& rng) { return Shape{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 3)}; };

  add_op("add", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto s = rand_shape(rng);
    return gc::reduced(rng, [](const In& in) { return add(in[0], in[1]); }, {uniform(rng, s), uniform(rng, s)});
  });
  add_op("sub", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto s = rand_shape(rng);
    return gc::reduced(rng, [](const In& in) { return sub(in[0], in[1]); }, {uniform(rng, s), uniform(rng, s)});
  });
  add_op("mul", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto s = rand_shape(rng);
    return gc::reduced(rng, [](const In& in) { return mul(in[0], in[1]); }, {uniform(rng, s), uniform(rng, s)});
  });
  add_op("scale", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const double f = uniform(rng, {1}, -3, 3)[0];
    return gc::reduced(rng, [f](const In& in) { return scale(in[0], f); }, {uniform(rng, rand_shape(rng))});
  });
  add_op("sum", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    return GradcheckCase{[](const In& in) { return scale(sum(in[0]), 0.7); }, {uniform(rng, rand_shape(rng))}};
  });
  add_op("reshape", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto s = rand_shape(rng);
    return gc::reduced(rng, [s](const In& in) { return reshape(in[0], Shape{shape_numel(s)}); }, {uniform(rng, s)});
  });
  add_op("select", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto s = rand_shape(rng);
    const auto k = pick(rng, 0, s[0] - 1);
    return gc::reduced(rng, [k](const In& in) { return select(in[0], k); }, {uniform(rng, s)});
  });
  add_op("add_broadcast_leading", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto s = rand_shape(rng);
    return gc::reduced(rng, [](const In& in) { return add_broadcast_leading(in[0], in[1]); },
                       {uniform(rng, s), uniform(rng, Shape(s.begin() + 1, s.end()))});
  });
  add_op("nchw_to_nhwc", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
    return gc::reduced(rng, [](const In& in) { return nchw_to_nhwc(in[0]); }, {uniform(rng, s)});
  });
  add_op("relu", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    auto x = uniform(rng, rand_shape(rng));
    if (!gc::clear_of_zero(x.data())) return std::nullopt;
    return gc::reduced(rng, [](const In& in) { return relu(in[0]); }, {x});
  });
  add_op("tanh", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    return gc::reduced(rng, [](const In& in) { return tanh(in[0]); }, {uniform(rng, rand_shape(rng), -2, 2)});
  });
  add_op("soft_threshold", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    auto x = uniform(rng, rand_shape(rng), -1.5, 1.5);
    if (!gc::clear_of_zero(x.data())) return std::nullopt;
    return gc::reduced(rng, [](const In& in) { return soft_threshold(in[0]); }, {x});
  });
  add_op("frobenius_norm_sq", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    return GradcheckCase{[](const In& in) { return frobenius_norm_sq(in[0]); }, {uniform(rng, rand_shape(rng))}};
  });
  add_op("frobenius_norm", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    return GradcheckCase{[](const In& in) { return frobenius_norm(in[0]); }, {uniform(rng, rand_shape(rng))}};
  });
  add_op("conv2d", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const std::size_t k = 2 * pick(rng, 0, 1) + 1, stride = pick(rng, 1, 2), pad = pick(rng, 0, k / 2);
    const std::size_t h = pick(rng, std::max<std::size_t>(k, 2), 6), w = pick(rng, std::max<std::size_t>(k, 2), 6);
    const bool floor_out = (h + 2 * pad - k) % stride || (w + 2 * pad - k) % stride;
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), h, w}, ks{pick(rng, 1, 3), xs[1], k, k};
    return gc::reduced(rng, [=](const In& in) { return conv2d(in[0], in[1], stride, pad, floor_out); },
                       {uniform(rng, xs), uniform(rng, ks)});
  });
  add_op("transposed_conv2d", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const std::size_t k = pick(rng, 1, 4), stride = pick(rng, 1, 2), pad = pick(rng, 0, (k - 1) / 2);
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, ks{xs[1], pick(rng, 1, 3), k, k};
    if ((xs[2] - 1) * stride + k <= 2 * pad || (xs[3] - 1) * stride + k <= 2 * pad) return std::nullopt;
    return gc::reduced(rng, [=](const In& in) { return transposed_conv2d(in[0], in[1], stride, pad); },
                       {uniform(rng, xs), uniform(rng, ks)});
  });
  add_op("add_channel_bias", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
    return gc::reduced(rng, [](const In& in) { return add_channel_bias(in[0], in[1]); },
                       {uniform(rng, xs), uniform(rng, {xs[1]})});
  });
  add_op("bilinear_resize", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 5), pick(rng, 2, 5)};
    const std::size_t oh = pick(rng, 2, 7), ow = pick(rng, 2, 7);
    return gc::reduced(rng, [=](const In& in) { return bilinear_resize(in[0], oh, ow); }, {uniform(rng, xs)});
  });
  add_op("grid_sample_bilinear", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const std::size_t h = pick(rng, 2, 5), w = pick(rng, 2, 5);
    auto flow = uniform(rng, {pick(rng, 1, 4), pick(rng, 1, 4), 2}, -1.0, double(std::max(h, w)));
    if (!gc::clear_of_integers(flow.data())) return std::nullopt;
    return gc::reduced(rng, [](const In& in) { return grid_sample_bilinear(in[0], in[1]); }, {uniform(rng, {h, w}), flow});
  });
  add_op("gaussian_blur2d", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const std::size_t g = pick(rng, 2, 6), ksize = 2 * pick(rng, 0, 3) + 1;
    const double sigma = uniform(rng, {1}, 0.5, 2.0)[0];
    return gc::reduced(rng, [=](const In& in) { return gaussian_blur2d(in[0], sigma, ksize); },
                       {uniform(rng, {pick(rng, 1, 2), g, g, 3})});
  });
  add_op("translation_flows", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const std::size_t side = pick(rng, 1, 4);
    return gc::reduced(rng, [=](const In& in) { return translation_flows(in[0], side); }, {uniform(rng, {pick(rng, 1, 4), 2}, -3, 3)});
  });
  add_op("sum_leading", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    return gc::reduced(rng, [](const In& in) { return sum_leading(in[0]); }, {uniform(rng, rand_shape(rng))});
  });
  add_op("project", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    auto cam = gc::small_camera();
    if (pick(rng, 0, 1)) cam.mode = ProjectionMode::orthographic;
    return gc::reduced(rng, [=](const In& in) { return project(in[0], cam); }, {gc::surfaces(rng, pick(rng, 1, 2), pick(rng, 1, 3))});
  });
  for (auto route : {RasterRoute::splat, RasterRoute::basis_warp}) {
    const std::string name = route == RasterRoute::splat ? "soft_rasterize" : "soft_rasterize_basis_warp";
    add_op(name, [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
      const auto cfg = gc::unit_raster(9, route);
      auto pts = uniform(rng, {pick(rng, 1, 25), 2}, 0.0, 8.0);
      if (!gc::clear_of_integers(pts.data())) return std::nullopt;
      return gc::reduced(rng, [=](const In& in) { return soft_rasterize(in[0], cfg); }, {pts});
    });
  }
  add_op("loss_3d", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const std::size_t f = pick(rng, 1, 3), g = pick(rng, 2, 5);
    const auto gt = uniform(rng, {f, g, g, 3});
    return GradcheckCase{[gt](const In& in) { return loss_3d(in[0], gt); }, {uniform(rng, {f, g, g, 3})}};
  });
  add_op("loss_iso", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    LossConfig cfg;
    cfg.sigma_gauss = uniform(rng, {1}, 0.5, 1.5)[0];
    cfg.ksize = 2 * pick(rng, 1, 2) + 1;
    const std::size_t g = pick(rng, 3, 6);
    return GradcheckCase{[cfg](const In& in) { return loss_iso(in[0], cfg); }, {uniform(rng, {pick(rng, 1, 3), g, g, 3})}};
  });
  add_op("loss_contour", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto cam = gc::small_camera();
    const auto cfg = gc::unit_raster(9, pick(rng, 0, 1) ? RasterRoute::splat : RasterRoute::basis_warp);
    const std::size_t f = pick(rng, 1, 2), g = pick(rng, 2, 4);
    auto pred = gc::surfaces(rng, f, g);
    const auto gt = gc::surfaces(rng, f, g);
    if (!gc::clear_of_integers(project(pred, cam).data())) return std::nullopt;
    return GradcheckCase{[=](const In& in) { return loss_contour(in[0], gt, cam, cfg); }, {pred}};
  });
  add_op("total_loss", [=](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
    const auto cam = gc::small_camera();
    auto cfg = gc::unit_raster(9, RasterRoute::splat);
    cfg.wiso = uniform(rng, {1}, 0.1, 2.0)[0];
    cfg.wcont = uniform(rng, {1}, 0.1, 2.0)[0];
    const std::size_t f = pick(rng, 1, 2), g = pick(rng, 3, 4);
    auto pred = gc::surfaces(rng, f, g);
    const auto gt = gc::surfaces(rng, f, g);
    if (!gc::clear_of_integers(project(pred, cam).data())) return std::nullopt;
    return GradcheckCase{[=](const In& in) { return total_loss(in[0], gt, cam, cfg).total; }, {pred}};
  });
  return ops;
}

inline std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& op : gradcheck_registry()) names.push_back(op.name);
  return names;
}

/// Runs `trials` accepted instances of one op.
inline SuiteResult run_gradcheck_op(const SuiteOp& op, std::size_t trials, std::uint64_t seed, double tolerance = 1e-4) {
  std::mt19937_64 rng(seed ^ fnv1a64({reinterpret_cast<const std::uint8_t*>(op.name.data()), op.name.size()}));
  SuiteResult r{op.name};
  const auto t0 = std::chrono::steady_clock::now();
  while (r.trials < trials) {
    auto c = op.build(rng);
    if (!c) {
      if (++r.rejected > 100 * trials + 1000) throw std::runtime_error("gradcheck " + op.name + ": cannot draw a smooth instance");
      continue;
    }
    const auto g = gradcheck(c->fn, c->inputs);
    r.max_rel_error = std::max(r.max_rel_error, g.max_rel_error);
    r.coordinates += g.coordinates;
    ++r.trials;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.passed = r.max_rel_error < tolerance;
  return r;
}

}  // namespace hdmnet
