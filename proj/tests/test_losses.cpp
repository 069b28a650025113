#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "hdmnet/gradcheck.hpp"
#include "hdmnet/losses.hpp"
#include "test_util.hpp"

namespace hdmnet {
namespace {

using testing::random_tensor;
using T = Tensor<double>;

// Tent-function accumulation per cell, then max(tanh(2m), 0).
std::vector<double> brute_force_raster(const std::vector<double>& raster_xy, std::size_t side, bool threshold = true) {
  std::vector<double> out(side * side, 0.0);
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      double m = 0;
      for (std::size_t p = 0; p + 1 < raster_xy.size(); p += 2) {
        m += std::max(0.0, 1 - std::abs(raster_xy[p] - double(j))) *
             std::max(0.0, 1 - std::abs(raster_xy[p + 1] - double(i)));
      }
      out[i * side + j] = threshold ? std::max(std::tanh(2 * m), 0.0) : m;
    }
  return out;
}

LossConfig unit_raster(std::size_t side, RasterRoute route = RasterRoute::splat) {
  LossConfig cfg;
  cfg.raster_side = side;
  cfg.raster_map = {1.0, 0.0};
  cfg.route = route;
  return cfg;
}

// Keeps fractional parts clear of the bilinear kinks at integer coordinates.
bool clear_of_kinks(std::span<const double> xy, double margin = 1e-3) {
  return std::all_of(xy.begin(), xy.end(), [margin](double v) {
    const double f = v - std::floor(v);
    return f > margin && f < 1 - margin;
  });
}

TEST(Loss3d, ZeroAtEquality) {
  std::mt19937_64 rng(1);
  auto s = random_tensor(rng, {2, 4, 4, 3});
  EXPECT_EQ(loss_3d(s, s).item(), 0.0);
}

TEST(Loss3d, SingleUnitResidual) {
  auto gt = T::zeros(Shape{1, 3, 3, 3});
  auto pred = T::zeros(Shape{1, 3, 3, 3});
  pred.data()[(1 * 3 + 2) * 3 + 0] = 1.0;
  EXPECT_EQ(loss_3d(pred, gt).item(), 1.0);
}

TEST(Loss3d, GradientIsScaledResidual) {
  std::mt19937_64 rng(2);
  auto gt = random_tensor(rng, {3, 4, 4, 3});
  auto pred = random_tensor(rng, {3, 4, 4, 3});
  auto p = T(pred.shape(), pred.values(), true);
  backward(loss_3d(p, gt));
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.grad()[i], 2 * (pred[i] - gt[i]) / 3, 1e-15);
  auto r = gradcheck([&](const std::vector<T>& in) { return loss_3d(in[0], gt); }, {pred});
  EXPECT_LT(r.max_rel_error, 1e-7);
  EXPECT_THROW(loss_3d(pred, T::zeros(Shape{3, 5, 5, 3})), DimensionError);
}

TEST(LossIso, ConstantSurfaceIsZero) {
  EXPECT_EQ(loss_iso(T::full(Shape{2, 5, 5, 3}, 0.4), LossConfig{}).item(), 0.0);
}

TEST(LossIso, ImpulseMatchesDirectConvolution) {
  const std::size_t g = 7;
  const double d = 0.25;
  std::vector<double> v;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      v.push_back(0.1 * double(j));
      v.push_back(0.1 * double(i));
      v.push_back((i == 3 && j == 3) ? 2.0 + d : 2.0);
    }
  // Replicate-padded 5x5 Gaussian, sigma 1, evaluated directly.
  double k[5][5], total = 0;
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b) total += k[a + 2][b + 2] = std::exp(-(a * a + b * b) / 2.0);
  double sq = 0;
  for (int i = 0; i < int(g); ++i)
    for (int j = 0; j < int(g); ++j)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int a = -2; a <= 2; ++a)
          for (int b = -2; b <= 2; ++b) {
            const int si = std::clamp(i + a, 0, int(g) - 1), sj = std::clamp(j + b, 0, int(g) - 1);
            acc += k[a + 2][b + 2] / total * v[(si * g + sj) * 3 + c];
          }
        sq += std::pow(acc - v[(i * g + j) * 3 + c], 2);
      }
  const double expected = std::sqrt(sq);
  EXPECT_NEAR(loss_iso(T(Shape{1, g, g, 3}, v), LossConfig{}).item(), expected, 1e-12);
}

TEST(LossIso, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_tensor(rng, {2, 5, 5, 3});
    auto r = gradcheck([](const std::vector<T>& in) { return loss_iso(in[0], LossConfig{}); }, {s});
    worst = std::max(worst, r.max_rel_error);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(SoftRasterize, PointOnCellCentre) {
  for (auto route : {RasterRoute::splat, RasterRoute::basis_warp}) {
    auto out = soft_rasterize(T(Shape{1, 2}, {3.0, 5.0}), unit_raster(9, route));
    for (std::size_t i = 0; i < 81; ++i) {
      if (i == 5 * 9 + 3) {
        EXPECT_NEAR(out[i], 0.964028, 1e-6);
      } else {
        EXPECT_EQ(out[i], 0.0);
      }
    }
  }
}

TEST(SoftRasterize, PointBetweenFourCells) {
  auto out = soft_rasterize(T(Shape{1, 2}, {3.5, 5.5}), unit_raster(9));
  EXPECT_NEAR(std::tanh(0.5), 0.462117, 1e-6);
  for (std::size_t i : {5 * 9 + 3, 5 * 9 + 4, 6 * 9 + 3, 6 * 9 + 4}) EXPECT_NEAR(out[i], 0.462117, 1e-6);
  double others = 0;
  for (double v : out.data()) others += v;
  EXPECT_NEAR(others, 4 * std::tanh(0.5), 1e-12);
}

TEST(SoftRasterize, MatchesBruteForceOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> count(1, 25);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = count(rng);
    auto pts = testing::uniform(rng, 2 * k, -1.5, 9.5);
    auto expected = brute_force_raster(pts, 9);
    for (auto route : {RasterRoute::splat, RasterRoute::basis_warp}) {
      auto out = soft_rasterize(T(Shape{k, 2}, pts), unit_raster(9, route));
      for (std::size_t i = 0; i < 81; ++i) ASSERT_NEAR(out[i], expected[i], 1e-10) << "trial " << trial;
    }
  }
}

TEST(SoftRasterize, ThresholdProperties) {
  double prev = -1;
  for (double x = -3; x <= 5; x += 0.01) {
    const double t = soft_threshold(T::scalar(x)).item();
    EXPECT_GE(t, prev);
    EXPECT_LT(t, 1.0);
    if (x <= 0) EXPECT_EQ(t, 0.0);
    if (x >= 1) EXPECT_GT(t, 0.96);
    prev = t;
  }
}

TEST(SoftRasterize, PermutationInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto pts = testing::uniform(rng, 2 * 12, 0, 8);
    auto a = soft_rasterize(T(Shape{12, 2}, pts), unit_raster(9));
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> shuffled;
    for (auto p : perm) {
      shuffled.push_back(pts[2 * p]);
      shuffled.push_back(pts[2 * p + 1]);
    }
    auto b = soft_rasterize(T(Shape{12, 2}, shuffled), unit_raster(9));
    for (std::size_t i = 0; i < 81; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
  }
}

TEST(SoftRasterize, MassEqualsInBoundsPointCount) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = testing::uniform(rng, 2 * 20, -3, 12);
    std::size_t inside = 0;
    for (std::size_t p = 0; p < 20; ++p)
      inside += (pts[2 * p] >= 0 && pts[2 * p] <= 8 && pts[2 * p + 1] >= 0 && pts[2 * p + 1] <= 8);
    // Drop straddlers so the count is exact.
    std::vector<double> kept;
    for (std::size_t p = 0; p < 20; ++p) {
      const bool in = pts[2 * p] >= 0 && pts[2 * p] <= 8 && pts[2 * p + 1] >= 0 && pts[2 * p + 1] <= 8;
      const bool far = pts[2 * p] < -1 || pts[2 * p] > 9 || pts[2 * p + 1] < -1 || pts[2 * p + 1] > 9;
      if (in || far) {
        kept.push_back(pts[2 * p]);
        kept.push_back(pts[2 * p + 1]);
      }
    }
    auto mass = splat_points(T(Shape{kept.size() / 2, 2}, kept), 9);
    double total = 0;
    for (double v : mass.data()) total += v;
    EXPECT_NEAR(total, double(inside), 1e-9);
  }
}

TEST(SoftRasterize, RasterMapIsApplied) {
  LossConfig cfg = unit_raster(9);
  cfg.raster_map = {0.5, 1.0};
  auto out = soft_rasterize(T(Shape{1, 2}, {4.0, 6.0}), cfg);  // -> cell (3, 4)
  EXPECT_NEAR(out[4 * 9 + 3], std::tanh(2.0), 1e-12);
}

struct ContourCase {
  CameraIntrinsics cam{20, 20, 4.5, 4.5, ProjectionMode::perspective, 1.0};
  LossConfig cfg = unit_raster(9);
};

T random_surfaces(std::mt19937_64& rng, std::size_t frames, std::size_t g) {
  auto s = random_tensor(rng, {frames, g, g, 3}, -0.8, 0.8);
  for (std::size_t i = 2; i < s.numel(); i += 3) s.data()[i] = 2.0 + std::abs(s[i]);
  return s;
}

TEST(LossContour, ZeroAtEqualityAndSymmetric) {
  std::mt19937_64 rng(7);
  ContourCase c;
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_surfaces(rng, 2, 4);
    auto b = random_surfaces(rng, 2, 4);
    EXPECT_EQ(loss_contour(a, a, c.cam, c.cfg).item(), 0.0);
    EXPECT_NEAR(loss_contour(a, b, c.cam, c.cfg).item(), loss_contour(b, a, c.cam, c.cfg).item(), 1e-12);
  }
}

TEST(LossContour, DisjointRastersAddUp) {
  std::mt19937_64 rng(8);
  ContourCase c;
  c.cfg.raster_side = 21;
  c.cam.cx = c.cam.cy = 5.0;
  auto gt = random_surfaces(rng, 1, 3);
  for (std::size_t i = 2; i < gt.numel(); i += 3) gt.data()[i] = 4.0;  // fronto-parallel
  auto pred = gt.detach();
  for (std::size_t i = 0; i < pred.numel(); i += 3) pred.data()[i] += 2.0;  // 10 raster cells right
  auto project_xy = [&](const T& s) {
    std::vector<double> xy;
    for (std::size_t i = 0; i < s.numel(); i += 3) {
      xy.push_back(c.cam.fx * s[i] / s[i + 2] + c.cam.cx);
      xy.push_back(c.cam.fy * s[i + 1] / s[i + 2] + c.cam.cy);
    }
    return xy;
  };
  auto ra = brute_force_raster(project_xy(pred), 21);
  auto rb = brute_force_raster(project_xy(gt), 21);
  double expected = 0, overlap = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    expected += ra[i] * ra[i] + rb[i] * rb[i];
    overlap += ra[i] * rb[i];
  }
  ASSERT_EQ(overlap, 0.0);
  EXPECT_NEAR(loss_contour(pred, gt, c.cam, c.cfg).item(), expected, 1e-8);
}

TEST(LossContour, GradientFlowsOnlyThroughPrediction) {
  std::mt19937_64 rng(9);
  ContourCase c;
  auto pred = random_surfaces(rng, 1, 4).set_requires_grad(true);
  auto gt = random_surfaces(rng, 1, 4).set_requires_grad(true);
  backward(loss_contour(pred, gt, c.cam, c.cfg));
  for (double g : gt.grad()) EXPECT_EQ(g, 0.0);
}

TEST(LossContour, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  ContourCase c;
  double worst = 0;
  int trials = 0;
  while (trials < 100) {
    auto pred = random_surfaces(rng, 2, 4);
    auto gt = random_surfaces(rng, 2, 4);
    auto uv = project(pred, c.cam);
    if (!clear_of_kinks(uv.data())) continue;
    ++trials;
    auto r = gradcheck([&](const std::vector<T>& in) { return loss_contour(in[0], gt, c.cam, c.cfg); }, {pred});
    worst = std::max(worst, r.max_rel_error);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LossContour, SameValueForEitherRoute) {
  std::mt19937_64 rng(11);
  ContourCase c;
  auto a = random_surfaces(rng, 2, 4);
  auto b = random_surfaces(rng, 2, 4);
  auto warp = c.cfg;
  warp.route = RasterRoute::basis_warp;
  EXPECT_NEAR(loss_contour(a, b, c.cam, c.cfg).item(), loss_contour(a, b, c.cam, warp).item(), 1e-10);
}

TEST(TotalLoss, EqualityLeavesOnlySmoothingResidual) {
  std::mt19937_64 rng(12);
  ContourCase c;
  auto gt = random_surfaces(rng, 2, 4);
  auto out = total_loss(gt, gt, c.cam, c.cfg);
  EXPECT_EQ(out.total.item(), loss_iso(gt, c.cfg).item());
  EXPECT_EQ(out.e3d, 0.0);
  EXPECT_EQ(out.contour, 0.0);
}

TEST(TotalLoss, WeightsSelectTerms) {
  std::mt19937_64 rng(13);
  ContourCase c;
  auto pred = random_surfaces(rng, 2, 4);
  auto gt = random_surfaces(rng, 2, 4);
  auto only3d = c.cfg;
  only3d.wiso = only3d.wcont = 0;
  EXPECT_EQ(total_loss(pred, gt, c.cam, only3d).total.item(), loss_3d(pred, gt).item());

  auto flags = c.cfg;
  flags.use_iso = flags.use_contour = false;
  EXPECT_EQ(total_loss(pred, gt, c.cam, flags).total.item(), loss_3d(pred, gt).item());

  auto all = total_loss(pred, gt, c.cam, c.cfg);
  const double recomputed = loss_3d(pred, gt).item() + loss_iso(pred, c.cfg).item() +
                            loss_contour(pred, gt, c.cam, c.cfg).item();
  EXPECT_NEAR(all.total.item(), recomputed, 1e-12);
  EXPECT_NEAR(all.e3d + all.iso + all.contour, recomputed, 1e-12);
}

TEST(TotalLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  ContourCase c;
  int trials = 0;
  double worst = 0;
  while (trials < 100) {
    auto pred = random_surfaces(rng, 2, 4);
    auto gt = random_surfaces(rng, 2, 4);
    if (!clear_of_kinks(project(pred, c.cam).data())) continue;
    ++trials;
    auto r = gradcheck([&](const std::vector<T>& in) { return total_loss(in[0], gt, c.cam, c.cfg).total; }, {pred});
    worst = std::max(worst, r.max_rel_error);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TotalLoss, IsometryTermRewardsAttenuatedZigzag) {
  const std::size_t g = 9;
  std::vector<double> smooth, zig;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      const double x = 0.1 * double(j) - 0.4, y = 0.1 * double(i) - 0.4;
      smooth.insert(smooth.end(), {x, y, 2.0 + 0.3 * x * x});
      zig.insert(zig.end(), {0.0, 0.0, ((i + j) % 2 ? 0.05 : -0.05)});
    }
  auto gt = T(Shape{1, g, g, 3}, smooth);
  auto with = [&](double amount) {
    std::vector<double> v(smooth);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += amount * zig[i];
    return T(Shape{1, g, g, 3}, v);
  };
  LossConfig cfg;
  cfg.fit_raster_to_image(256);
  const auto cam = CameraIntrinsics::reference();
  for (auto weights : {std::array<double, 3>{0, 1, 0}, std::array<double, 3>{1, 1, 1}}) {
    cfg.w3d = weights[0];
    cfg.wiso = weights[1];
    cfg.wcont = weights[2];
    double prev = total_loss(with(1.0), gt, cam, cfg).total.item();
    for (double a : {0.75, 0.5, 0.25}) {
      const double cur = total_loss(with(a), gt, cam, cfg).total.item();
      EXPECT_LT(cur, prev);
      prev = cur;
    }
  }
}

}  // namespace
}  // namespace hdmnet
