#include <gtest/gtest.h>

#include <set>

#include "hdmnet/gradcheck_suite.hpp"

using namespace hdmnet;

class GradcheckSuite : public ::testing::TestWithParam<std::string> {};

TEST_P(GradcheckSuite, HundredTrialsBelowTolerance) {
  for (const auto& op : gradcheck_registry()) {
    if (op.name != GetParam()) continue;
    const auto r = run_gradcheck_op(op, 100, 2024);
    EXPECT_EQ(r.trials, 100u);
    EXPECT_GT(r.coordinates, 100u);
    EXPECT_LT(r.max_rel_error, 1e-4) << op.name;
    return;
  }
  FAIL() << "op not registered: " << GetParam();
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradcheckSuite, ::testing::ValuesIn(gradcheck_op_names()),
                         [](const auto& info) { return info.param; });

TEST(GradcheckRegistry, CoversEveryOpAndLoss) {
  const auto names = gradcheck_op_names();
  const std::set<std::string> have(names.begin(), names.end());
  EXPECT_EQ(have.size(), names.size());
  for (const char* required : {"add", "sub", "mul", "scale", "sum", "reshape", "select", "add_broadcast_leading",
                               "nchw_to_nhwc", "relu", "tanh", "soft_threshold", "frobenius_norm_sq", "frobenius_norm",
                               "conv2d", "transposed_conv2d", "add_channel_bias", "bilinear_resize",
                               "grid_sample_bilinear", "gaussian_blur2d", "translation_flows", "sum_leading", "project",
                               "soft_rasterize", "loss_3d", "loss_iso", "loss_contour"}) {
    EXPECT_TRUE(have.count(required)) << required;
  }
}

TEST(GradcheckRegistry, DetectsAWrongGradient) {
  // d/dx of x*x reported as x: the check must fail.
  SuiteOp broken{"broken", [](std::mt19937_64& rng) -> std::optional<GradcheckCase> {
                   auto x = gc::uniform(rng, {4}, 0.5, 1.5);
                   return GradcheckCase{[](const std::vector<Tensor<double>>& in) {
                                          return scale(add(frobenius_norm_sq(in[0]), frobenius_norm_sq(in[0].detach())), 0.5);
                                        },
                                        {x}};
                 }};
  const auto r = run_gradcheck_op(broken, 5, 1);
  EXPECT_FALSE(r.passed);
}

TEST(GradcheckRegistry, DeterministicForSeed) {
  const auto ops = gradcheck_registry();
  const auto a = run_gradcheck_op(ops.front(), 10, 3);
  const auto b = run_gradcheck_op(ops.front(), 10, 3);
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
  EXPECT_EQ(a.coordinates, b.coordinates);
}
