#include <gtest/gtest.h>

#include "hdmnet/conv.hpp"
#include "hdmnet/gradcheck.hpp"
#include "test_util.hpp"

namespace hdmnet {
namespace {

using testing::dot;
using testing::random_tensor;
using T = Tensor<double>;

TEST(Conv2d, OnesGiveSumOfNine) {
  auto out = conv2d(T::full(Shape{1, 1, 3, 3}, 1.0), T::full(Shape{1, 1, 3, 3}, 1.0), 1, 0);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out.item(), 9.0);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(1);
  auto x = random_tensor(rng, {2, 1, 6, 5});
  auto k = T::zeros(Shape{1, 1, 3, 3});
  k.data()[4] = 1.0;
  auto y = conv2d(x, k, 1, 1);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, ShapeErrorsAreDescriptive) {
  auto x = T::zeros(Shape{1, 3, 8, 8});
  EXPECT_THROW(conv2d(x, T::zeros(Shape{4, 2, 3, 3})), DimensionError);
  EXPECT_THROW(conv2d(x, T::zeros(Shape{4, 3, 2, 2})), DimensionError);
  EXPECT_THROW(conv2d(x, T::zeros(Shape{4, 3, 3, 3}), 2, 0), DimensionError);  // (8-3)/2 not integral
  EXPECT_THROW(conv2d(T::zeros(Shape{3, 8, 8}), T::zeros(Shape{4, 3, 3, 3})), DimensionError);
  try {
    conv2d(x, T::zeros(Shape{4, 2, 3, 3}));
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("input channels"), std::string::npos);
  }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(rng, {2, 3, 8, 8});
  auto k = random_tensor(rng, {4, 3, 3, 3});
  auto w = testing::uniform(rng, 2 * 4 * 8 * 8);
  auto r = gradcheck([&](const std::vector<T>& in) { return weighted_sum(conv2d(in[0], in[1], 1, 1), w); },
                     {x, k});
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.coordinates, 2u * 3 * 8 * 8 + 4 * 3 * 3 * 3);
}

TEST(Conv2d, StridedGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  auto x = random_tensor(rng, {2, 2, 9, 9});
  auto k = random_tensor(rng, {3, 2, 3, 3});
  auto w = testing::uniform(rng, 2 * 3 * 5 * 5);
  auto r = gradcheck([&](const std::vector<T>& in) { return weighted_sum(conv2d(in[0], in[1], 2, 1), w); },
                     {x, k});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Conv2d, ReluOfConvBackward) {
  std::mt19937_64 rng(4);
  auto x = random_tensor(rng, {1, 2, 6, 6});
  auto k = random_tensor(rng, {3, 2, 3, 3});
  auto r = gradcheck([](const std::vector<T>& in) { return frobenius_norm_sq(relu(conv2d(in[0], in[1], 1, 1))); },
                     {x, k});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(TransposedConv2d, IsAdjointOfConv2d) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, 1000);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + pick(rng) % 2, c = 1 + pick(rng) % 3, k = 1 + pick(rng) % 3;
    const std::size_t kh = 1 + 2 * (pick(rng) % 3), kw = 1 + 2 * (pick(rng) % 3);
    const std::size_t stride = 1 + pick(rng) % 3;
    const std::size_t pad = pick(rng) % (std::min(kh, kw) / 2 + 1);
    const std::size_t h = 2 + pick(rng) % 5, w = 2 + pick(rng) % 5;
    auto kernel = random_tensor(rng, {k, c, kh, kw});
    auto y = random_tensor(rng, {n, k, h, w});
    auto ty = transposed_conv2d(y, kernel, stride, pad);
    auto x = random_tensor(rng, ty.shape());
    auto cx = conv2d(x, kernel, stride, pad);
    ASSERT_EQ(cx.shape(), y.shape());
    EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10) << "trial " << trial;
  }
}

TEST(TransposedConv2d, Stride2UpsamplingScattersWithoutOverlap) {
  T x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = transposed_conv2d(x, T::full(Shape{1, 1, 2, 2}, 1.0), 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  const std::vector<double> expected{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[i], expected[i]);
}

TEST(TransposedConv2d, OutputSizeFormula) {
  auto y = transposed_conv2d(T::zeros(Shape{1, 2, 7, 5}), T::zeros(Shape{2, 3, 4, 4}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 14, 10}));
  EXPECT_THROW(transposed_conv2d(T::zeros(Shape{1, 2, 7, 5}), T::zeros(Shape{3, 3, 4, 4})), DimensionError);
}

TEST(TransposedConv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  auto y = random_tensor(rng, {2, 3, 4, 4});
  auto k = random_tensor(rng, {3, 2, 4, 4});
  auto out_shape = transposed_conv2d(y, k, 2, 1).shape();
  auto w = testing::uniform(rng, shape_numel(out_shape));
  auto r = gradcheck(
      [&](const std::vector<T>& in) { return weighted_sum(transposed_conv2d(in[0], in[1], 2, 1), w); }, {y, k});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(ChannelBias, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto x = random_tensor(rng, {2, 3, 2, 2});
  auto b = random_tensor(rng, {3});
  auto r = gradcheck([](const std::vector<T>& in) { return frobenius_norm_sq(add_channel_bias(in[0], in[1])); },
                     {x, b});
  EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(BilinearResize, PreservesConstantsAndCorners) {
  auto c = bilinear_resize(T::full(Shape{1, 2, 8, 8}, 0.75), 5, 5);
  for (double v : c.data()) EXPECT_DOUBLE_EQ(v, 0.75);
  std::mt19937_64 rng(8);
  auto x = random_tensor(rng, {1, 1, 8, 6});
  auto y = bilinear_resize(x, 5, 4);
  EXPECT_EQ(y[0], x[0]);
  EXPECT_EQ(y[19], x[47]);
}

TEST(BilinearResize, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  auto x = random_tensor(rng, {2, 2, 8, 8});
  auto w = testing::uniform(rng, 2 * 2 * 5 * 5);
  auto r = gradcheck([&](const std::vector<T>& in) { return weighted_sum(bilinear_resize(in[0], 5, 5), w); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(Conv2d, FloatPathAgreesWithDouble) {
  std::mt19937_64 rng(10);
  auto x = random_tensor(rng, {1, 3, 8, 8});
  auto k = random_tensor(rng, {2, 3, 3, 3});
  auto yd = conv2d(x, k, 1, 1);
  auto yf = conv2d(x.cast<float>(), k.cast<float>(), 1, 1);
  for (std::size_t i = 0; i < yd.numel(); ++i) EXPECT_NEAR(yd[i], yf[i], 1e-5);
}

}  // namespace
}  // namespace hdmnet
