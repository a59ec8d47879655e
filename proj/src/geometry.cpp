#include "inkl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/SVD>

#include "inkl/errors.hpp"

namespace inkl::geo {

void PointCloud::validate() const {
  if (points.rows() < 1) throw InputError("point cloud is empty");
  if (!points.allFinite()) throw InputError("point cloud has non-finite coordinates");
  if (has_appearance() && appearance.rows() != points.rows()) {
    throw InputError("appearance has " + std::to_string(appearance.rows()) + " rows, cloud has " +
                     std::to_string(points.rows()));
  }
}

void SimTransform::validate(double tol) const {
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= tol) || !(std::abs(R.determinant() - 1.0) <= tol)) {
    throw ArgumentError("rotation is not orthonormal with det +1");
  }
  if (!(s.minCoeff() > 0.0) || !t.allFinite()) throw ArgumentError("size must be positive");
}

std::vector<int> farthest_point_sampling(const Points& p, int n, std::uint64_t seed) {
  const int N = static_cast<int>(p.rows());
  if (n < 1 || n > N) {
    throw ArgumentError("fps: cannot pick " + std::to_string(n) + " of " + std::to_string(N) + " points");
  }
  std::vector<int> out;
  out.reserve(n);
  std::vector<double> dist(N, std::numeric_limits<double>::infinity());
  int cur = static_cast<int>(seed % static_cast<std::uint64_t>(N));
  for (int i = 0; i < n; ++i) {
    out.push_back(cur);
    dist[cur] = -1.0;
    int best = -1;
    double best_d = -1.0;
    for (int j = 0; j < N; ++j) {
      if (dist[j] < 0) continue;
      const double d = (p.row(j) - p.row(cur)).squaredNorm();
      if (d < dist[j]) dist[j] = d;
      if (dist[j] > best_d) {
        best_d = dist[j];
        best = j;
      }
    }
    cur = best;
  }
  return out;
}

std::vector<int> knn(const Points& query, const Points& base, int k) {
  const int Q = static_cast<int>(query.rows()), N = static_cast<int>(base.rows());
  if (k < 1 || k > N) {
    throw ArgumentError("knn: k = " + std::to_string(k) + " with " + std::to_string(N) + " base points");
  }
  std::vector<int> out(static_cast<std::size_t>(Q) * k);
  std::vector<std::pair<double, int>> cand(N);
  for (int q = 0; q < Q; ++q) {
    for (int j = 0; j < N; ++j) cand[j] = {(base.row(j) - query.row(q)).squaredNorm(), j};
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(q) * k + i] = cand[i].second;
  }
  return out;
}

namespace {

double one_sided(const Points& a, const Points& b) {
  double total = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    total += best;
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace

double chamfer(const Points& a, const Points& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ArgumentError("chamfer of an empty cloud");
  return one_sided(a, b) + one_sided(b, a);
}

Points to_nocs(const Points& x, const SimTransform& gt) {
  return ((x.rowwise() - gt.t.transpose()) * gt.R) / gt.scale();
}

Points from_nocs(const Points& y, const SimTransform& gt) {
  return ((y * gt.R.transpose()) * gt.scale()).rowwise() + gt.t.transpose();
}

SimilarityFit umeyama_fit(const Points& src, const Points& dst) {
  const Eigen::Index n = src.rows();
  if (n < 3 || dst.rows() != n) throw ArgumentError("umeyama: need at least 3 corresponding points");
  const Eigen::RowVector3d ms = src.colwise().mean(), md = dst.colwise().mean();
  const Points xs = src.rowwise() - ms;
  const Points xd = dst.rowwise() - md;
  const double var_s = xs.squaredNorm() / static_cast<double>(n);
  Eigen::JacobiSVD<Mat3> src_svd(Mat3(xs.transpose() * xs), Eigen::ComputeFullU);
  const auto sv = src_svd.singularValues();
  if (var_s <= 0 || sv(1) <= 1e-12 * sv(0)) throw RankError("umeyama: source points are degenerate");

  const Mat3 cov = xd.transpose() * xs / static_cast<double>(n);
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;
  SimilarityFit fit;
  fit.R = svd.matrixU() * S * svd.matrixV().transpose();
  fit.c = (svd.singularValues().asDiagonal() * S).trace() / var_s;
  fit.t = md.transpose() - fit.c * fit.R * ms.transpose();
  return fit;
}

Mat3 rotation_about(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

Mat3 random_rotation(double max_deg, std::mt19937_64& rng) {
  if (max_deg < 0 || max_deg > 180) throw ArgumentError("random_rotation: max_deg outside [0, 180]");
  std::normal_distribution<double> g;
  Vec3 axis;
  do {
    axis = Vec3(g(rng), g(rng), g(rng));
  } while (axis.norm() < 1e-12);
  std::uniform_real_distribution<double> u(0.0, max_deg);
  const double angle = max_deg == 0 ? 0.0 : u(rng);
  return rotation_about(axis, angle * std::numbers::pi / 180.0);
}

Mat3 uniform_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng));
  } while (q.norm() < 1e-12);
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

double rotation_angle_deg(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace inkl::geo
