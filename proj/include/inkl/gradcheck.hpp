#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "inkl/tensor.hpp"

namespace inkl::ad {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-6;
  /// Elements checked per tensor; larger tensors are subsampled
  /// deterministically. Non-positive means every element.
  int max_elements_per_tensor = 0;
  std::uint64_t sample_seed = 7;
  /// Gradients smaller than this multiple of (central-difference round-off
  /// eps * max(1,|f|) / h) / tol are compared against that floor instead.
  double noise_multiple = 10.0;
  /// Refuse points closer than `kink_margin_factor * h` to a non-smooth
  /// switch (max-pool argmax, nearest-neighbour pairing, clamp).
  double kink_margin_factor = 10.0;
  /// Test hook: multiplies the analytic gradient before comparison. A value
  /// other than 1 must make the check fail (negative control).
  double analytic_scale = 1.0;
  /// When >= 0, every element is also differenced with step h/2. Elements
  /// whose two estimates disagree by more than tol/2 sit where the loss is not
  /// smooth at scale h (a pairing or neighbour switch triggered through a
  /// long chain); they are skipped and counted, and the check fails if they
  /// exceed this fraction of the elements.
  double max_unstable_fraction = -1.0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::int64_t checked = 0;
  std::int64_t unstable = 0;
  double kink_margin = 0.0;
  std::string message;
};

/// Compares reverse-mode gradients of `loss_fn` (a scalar function of the
/// current values of `inputs`) with central differences. The relative error
/// of element i is |a - n| / max(|a|, |n|, floor) with floor as above.
/// Throws NumericError if the loss or a gradient is not finite.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::vector<Tensor<double>> inputs, const GradCheckOptions& options);

/// Single-input convenience form: f maps x to a scalar.
GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           Tensor<double> x, double h, double tol);

/// Draws evaluation points from `make(attempt)` (returning a loss function
/// and its inputs) until one is far enough from every non-smooth switch, and
/// returns that point's check. A gradient mismatch is returned as is.
template <typename Make>
GradCheckReport grad_check_resampled(const GradCheckOptions& options, Make make, int attempts = 40) {
  GradCheckReport last;
  for (int i = 0; i < attempts; ++i) {
    auto [fn, inputs] = make(static_cast<std::uint64_t>(i));
    last = grad_check(fn, inputs, options);
    if (last.checked > 0 || last.kink_margin >= options.kink_margin_factor * options.h) return last;
  }
  return last;
}

}  // namespace inkl::ad
