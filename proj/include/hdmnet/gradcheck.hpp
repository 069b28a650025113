#pragma once

// Finite-difference checks of autodiff gradients.

#include <functional>
#include <string>
#include <vector>

#include "hdmnet/tensor.hpp"

namespace hdmnet {

struct GradcheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::size_t compared = 0;
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

struct GradcheckOptions {
  double step = 1e-5;
  double denominator_floor = 1e-6;  // below it the error is effectively absolute
  bool fourth_order = true;         // 5-point stencil instead of 3-point
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares backward() of `fn` at `inputs` against central differences of
/// fourth order (or second, on request) in
/// every input coordinate. Error per coordinate is
/// |a - n| / max(|a| + |n|, floor).
inline GradcheckResult gradcheck(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                                 const GradcheckOptions& opts = {}) {
  std::vector<Tensor<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.emplace_back(in.shape(), in.values(), true);
  backward(fn(leaves));

  std::vector<Tensor<double>> probe;
  probe.reserve(inputs.size());
  for (const auto& in : inputs) probe.emplace_back(in.shape(), in.values(), false);

  GradcheckResult result;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    auto values = probe[t].data();
    const auto analytic = leaves[t].grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return fn(probe).item();
      };
      const double h = opts.step;
      const double numeric = opts.fourth_order
                                 ? (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
                                 : (at(h) - at(-h)) / (2 * h);
      values[i] = saved;
      ++result.coordinates;
      const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric), opts.denominator_floor);
      if (std::abs(analytic[i]) + std::abs(numeric) > opts.denominator_floor) ++result.compared;
      result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return result;
}

/// Random linear functional sum(weights * y) used to reduce a tensor-valued
/// op to a scalar for checking.
inline Tensor<double> weighted_sum(const Tensor<double>& y, const std::vector<double>& weights) {
  return sum(mul(y, Tensor<double>(y.shape(), weights)));
}

}  // namespace hdmnet
