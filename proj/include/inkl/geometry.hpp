#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace inkl::geo {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Observed points in meters (camera frame) with optional per-point
/// appearance channels.
struct PointCloud {
  Points points;
  Matrix appearance;

  int size() const { return static_cast<int>(points.rows()); }
  bool has_appearance() const { return appearance.rows() > 0; }
  /// Throws InputError if empty, non-finite or the appearance rows mismatch.
  void validate() const;
};

/// Rotation, translation and per-axis size. A point with canonical (NOCS)
/// coordinates c sits at x = |s| R c + t.
struct SimTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Ones();

  double scale() const { return s.norm(); }
  /// Throws ArgumentError unless R is a proper rotation within `tol` and s > 0.
  void validate(double tol = 1e-6) const;
};

/// Greedy farthest point sampling. The first index is seed % N; each next
/// index maximizes the distance to the chosen set, ties to the lowest index.
std::vector<int> farthest_point_sampling(const Points& p, int n, std::uint64_t seed);

/// Row-major [Q, k] indices of the k nearest base points of every query,
/// ascending by distance, ties by index.
std::vector<int> knn(const Points& query, const Points& base, int k);

/// Squared-distance symmetric Chamfer: mean_a min_b + mean_b min_a.
double chamfer(const Points& a, const Points& b);

/// y = (x - t) R / |s|, rows as row vectors.
Points to_nocs(const Points& x, const SimTransform& gt);
/// Inverse of to_nocs: x = |s| y R^T + t.
Points from_nocs(const Points& y, const SimTransform& gt);

struct SimilarityFit {
  double c = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

/// Least-squares similarity with dst_i ~ c R src_i + t (column vectors).
/// det(R) = +1 is enforced. Throws RankError when centered src has rank < 2.
SimilarityFit umeyama_fit(const Points& src, const Points& dst);

/// Rotation about a uniformly random axis by an angle uniform in
/// [0, max_deg] degrees.
Mat3 random_rotation(double max_deg, std::mt19937_64& rng);

/// Rotation uniformly distributed over SO(3).
Mat3 uniform_rotation(std::mt19937_64& rng);

Mat3 rotation_about(const Vec3& axis, double radians);

/// Geodesic angle between two rotations, in degrees.
double rotation_angle_deg(const Mat3& a, const Mat3& b);

/// Indices of the points that are vertices of the convex hull, ascending.
/// Throws ArgumentError for fewer than 4 points or a flat input.
std::vector<int> convex_hull_vertices(const Points& p);

/// Points visible from `camera` by the spherical-flip test: flip every point
/// about a sphere of radius max|p - camera| * 10^gamma and keep those that
/// land on the hull of the flipped set plus the camera.
std::vector<int> hidden_point_removal(const Points& p, const Vec3& camera, double gamma);

}  // namespace inkl::geo
