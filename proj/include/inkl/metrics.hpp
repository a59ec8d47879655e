#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "inkl/geometry.hpp"

namespace inkl::metrics {

/// Oriented box: centered at t, axes the columns of R, full extents s.
struct IouOptions {
  int samples = 100000;
  double sweep_step_deg = 10.0;
  std::uint64_t seed = 0;
};

/// Exact IoU of two boxes whose rotations are both the identity.
/// Throws ArgumentError otherwise.
double iou3d_axis_aligned(const geo::SimTransform& a, const geo::SimTransform& b);

/// Monte-Carlo IoU with a seed derived from the (unordered) pair. Samples are
/// drawn inside the smaller box and tested against the other one; the box
/// volumes are exact, so only the intersection is estimated.
double iou3d_monte_carlo(const geo::SimTransform& a, const geo::SimTransform& b, const IouOptions& opt = {});

/// IoU of predicted and ground-truth boxes. With `symmetric`, the predicted
/// box is swept about its own y axis and the best IoU is kept.
double iou3d(const geo::SimTransform& pred, const geo::SimTransform& gt, bool symmetric, const IouOptions& opt = {});

struct PoseError {
  double rot_deg = 0.0;
  double trans_cm = 0.0;
};

/// Geodesic rotation error and translation error. With `symmetric` the
/// rotation error is the angle between the two y axes, the minimum over
/// rotations of the prediction about its y axis.
PoseError pose_errors(const geo::SimTransform& pred, const geo::SimTransform& gt, bool symmetric);

struct EvalRow {
  std::string category;
  double iou = 0.0;
  double rot_deg = 0.0;
  double trans_cm = 0.0;
  std::vector<double> nocs_kpt_errors;
};

/// Metric names in report order.
const std::vector<std::string>& metric_names();

struct EvalReport {
  std::vector<EvalRow> rows;
  /// metric -> percentage, per category.
  std::map<std::string, std::map<std::string, double>> per_category;
  /// Mean of the per-category percentages.
  std::map<std::string, double> mean;
  /// Percentage over all instances.
  std::map<std::string, double> overall;
};

/// Percentages of IoU_25/50/75 (IoU > threshold) and n°m cm (both errors
/// strictly below). Throws ArgumentError on empty input.
EvalReport aggregate(std::vector<EvalRow> rows);

/// Per-keypoint NOCS error mapped linearly from green (0) to red (>= 0.2),
/// channels rounded half up.
std::vector<std::array<std::uint8_t, 3>> nocs_error_colors(const geo::Points& pred, const geo::Points& gt);
std::array<std::uint8_t, 3> error_color(double err);

/// One JSON object per instance, then one summary object.
void write_report_jsonl(const EvalReport& report, const std::filesystem::path& path);
/// ASCII PLY with per-vertex uchar colors.
void write_colored_ply(const geo::Points& points, const std::vector<std::array<std::uint8_t, 3>>& colors,
                       const std::filesystem::path& path);

}  // namespace inkl::metrics
