#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <random>
#include <vector>

#include "inkl/gradcheck.hpp"
#include "inkl/tensor.hpp"

namespace inkl::testing {

template <typename T = double>
ad::Tensor<T> random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(static_cast<std::size_t>(ad::shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return ad::Tensor<T>::from(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename Make>
ad::GradCheckReport check_away_from_kinks(const ad::GradCheckOptions& opt, Make make, int attempts = 40) {
  return ad::grad_check_resampled(opt, make, attempts);
}

}  // namespace inkl::testing
