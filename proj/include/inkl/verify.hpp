#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inkl/nn.hpp"

namespace inkl::verify {

struct Outcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

bool all_passed(const std::vector<Outcome>& v);

/// Finite-difference checks of every differentiable primitive, nn module and
/// loss at relative tolerance 1e-5 (double). `analytic_scale` != 1 tampers
/// with the analytic side and must make checks fail.
std::vector<Outcome> gradcheck_unit(double analytic_scale = 1.0);
/// Weighted total loss of the tiny model on a 32-point instance, a sample of
/// elements from every parameter tensor, relative tolerance 1e-4.
std::vector<Outcome> gradcheck_toy(double analytic_scale = 1.0);
/// As the toy check but over every parameter element.
std::vector<Outcome> gradcheck_full_tiny(double analytic_scale = 1.0);

/// Per-channel, per-step loop over a full selective scan including its input
/// projections. Independent of the vectorized library path.
std::vector<double> sequential_scan_oracle(const nn::SelectiveScan<double>& scan, const ad::Tensor<double>& u);

/// `cases` random scans (L <= 32, d <= 16, n <= 8) against the oracle at
/// 1e-6, and a perturbation test of causality.
std::vector<Outcome> scan_oracle_suite(int cases = 100, std::uint64_t seed = 0);

struct BenchRow {
  std::string arm;
  int len = 0;
  int dim = 0;
  std::uint64_t flops = 0;
  double min_ms = 0;
  double median_ms = 0;
};

/// One global aggregation block (bi-mamba, uni-mamba or attention) on a
/// random [len, dim] sequence, `reps` timed forward passes. Throws
/// ArgumentError on an unknown arm.
BenchRow bench_arm(const std::string& arm, int len, int dim, int reps, std::uint64_t seed = 0);
const std::vector<std::string>& bench_arms();

}  // namespace inkl::verify
