#pragma once

#include <random>
#include <vector>

#include "hdmnet/tensor.hpp"

namespace hdmnet::testing {

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1, double hi = 1) {
  const auto n = shape_numel(shape);
  return Tensor<double>(std::move(shape), uniform(rng, n, lo, hi));
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace hdmnet::testing
