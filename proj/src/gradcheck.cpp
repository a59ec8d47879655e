#include "inkl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace inkl::ad {

namespace {

void require_finite(std::span<const double> v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError("non-finite value in " + what + " at element " + std::to_string(i));
    }
  }
}

std::vector<std::int64_t> pick_elements(std::int64_t n, int max_elements, std::mt19937_64& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (max_elements > 0 && n > max_elements) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(max_elements));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::vector<Tensor<double>> inputs, const GradCheckOptions& options) {
  GradCheckReport report;
  for (auto& x : inputs) {
    x.zero_grad();
    x.set_requires_grad(true);
  }

  double f0 = 0;
  {
    KinkMonitor monitor;
    Tensor<double> loss = loss_fn();
    f0 = loss.item();
    if (!std::isfinite(f0)) throw NumericError("non-finite loss value " + std::to_string(f0));
    loss.backward();
    report.kink_margin = monitor.min_margin();
  }
  if (report.kink_margin < options.kink_margin_factor * options.h) {
    report.passed = false;
    report.message = "evaluation point is " + std::to_string(report.kink_margin) +
                     " from a non-smooth switch; need more than " +
                     std::to_string(options.kink_margin_factor * options.h);
    return report;
  }

  // Round-off of a central difference is about eps |f| / h. Below the floor
  // that noise alone would exceed tol, so tiny gradients are judged against
  // the floor instead of their own size.
  const double floor = options.noise_multiple * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(f0)) / (options.h * options.tol);
  std::mt19937_64 rng(options.sample_seed);
  NoGradGuard no_grad;
  for (auto& x : inputs) {
    const std::string label = x.name().empty() ? std::string("<unnamed>") : x.name();
    const std::vector<double> analytic = x.grad();
    require_finite(analytic, "gradient of " + label);
    require_finite(x.values(), "values of " + label);
    auto values = x.values_mut();
    for (std::int64_t i : pick_elements(x.numel(), options.max_elements_per_tensor, rng)) {
      const double orig = values[i];
      auto at = [&](double offset) {
        values[i] = orig + offset;
        const double f = loss_fn().item();
        values[i] = orig;
        if (!std::isfinite(f)) {
          throw NumericError("non-finite loss while perturbing " + label + "[" + std::to_string(i) + "]");
        }
        return f;
      };
      const double h = options.h;
      const double numeric = (at(h) - at(-h)) / (2.0 * h);
      if (options.max_unstable_fraction >= 0) {
        const double half = (at(h / 2) - at(-h / 2)) / h;
        if (std::abs(half - numeric) > 0.5 * options.tol * std::max({std::abs(half), std::abs(numeric), 2 * floor})) {
          ++report.unstable;
          continue;
        }
      }
      const double a = options.analytic_scale * analytic[static_cast<std::size_t>(i)];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = rel;
        report.worst_tensor = label;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
    x.zero_grad();
  }
  report.passed = report.max_rel_error <= options.tol;
  const std::int64_t total = report.checked + report.unstable;
  if (options.max_unstable_fraction >= 0 &&
      static_cast<double>(report.unstable) > options.max_unstable_fraction * static_cast<double>(total)) {
    report.passed = false;
    report.message = std::to_string(report.unstable) + " of " + std::to_string(total) +
                     " elements have step-size dependent differences";
    return report;
  }
  if (!report.passed) {
    report.message = "max relative error " + std::to_string(report.max_rel_error) + " at " +
                     report.worst_tensor + "[" + std::to_string(report.worst_index) + "]";
  }
  return report;
}

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           Tensor<double> x, double h, double tol) {
  GradCheckOptions options;
  options.h = h;
  options.tol = tol;
  return grad_check([&] { return f(x); }, {x}, options);
}

}  // namespace inkl::ad
