#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include "inkl/errors.hpp"
#include "inkl/geometry.hpp"

namespace inkl::geo {

namespace {

struct Face {
  std::array<int, 3> v;
  Vec3 normal;
  double offset;
  bool alive;
};

class Hull {
 public:
  Hull(const Points& p, double eps) : p_(p), eps_(eps) {}

  void add_face(int a, int b, int c) {
    const Vec3 pa = p_.row(a), pb = p_.row(b), pc = p_.row(c);
    Vec3 n = (pb - pa).cross(pc - pa);
    const double len = n.norm();
    if (len > 0) n /= len;
    const int id = static_cast<int>(faces_.size());
    faces_.push_back({{a, b, c}, n, n.dot(pa), true});
    edges_[key(a, b)] = id;
    edges_[key(b, c)] = id;
    edges_[key(c, a)] = id;
  }

  void insert(int i) {
    const Vec3 x = p_.row(i);
    visible_.clear();
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (faces_[f].alive && faces_[f].normal.dot(x) - faces_[f].offset > eps_) visible_.push_back(static_cast<int>(f));
    }
    if (visible_.empty()) return;
    for (int f : visible_) faces_[f].alive = false;
    horizon_.clear();
    for (int f : visible_) {
      const auto& v = faces_[f].v;
      for (int e = 0; e < 3; ++e) {
        const int a = v[e], b = v[(e + 1) % 3];
        const auto twin = edges_.find(key(b, a));
        if (twin != edges_.end() && faces_[twin->second].alive) horizon_.push_back({a, b});
      }
    }
    for (int f : visible_) {
      const auto& v = faces_[f].v;
      for (int e = 0; e < 3; ++e) {
        const auto it = edges_.find(key(v[e], v[(e + 1) % 3]));
        if (it != edges_.end() && it->second == f) edges_.erase(it);
      }
    }
    for (const auto& [a, b] : horizon_) add_face(a, b, i);
  }

  std::vector<int> vertices() const {
    std::vector<int> out;
    for (const auto& f : faces_)
      if (f.alive) out.insert(out.end(), f.v.begin(), f.v.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  static std::uint64_t key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  const Points& p_;
  double eps_;
  std::vector<Face> faces_;
  std::unordered_map<std::uint64_t, int> edges_;
  std::vector<int> visible_;
  std::vector<std::pair<int, int>> horizon_;
};

}  // namespace

std::vector<int> convex_hull_vertices(const Points& p) {
  const int n = static_cast<int>(p.rows());
  if (n < 4) throw ArgumentError("convex hull needs at least 4 points");
  const double extent = (p.colwise().maxCoeff() - p.colwise().minCoeff()).maxCoeff();
  const double eps = 1e-10 * std::max(extent, 1e-300);

  // Initial tetrahedron from extreme points.
  int i0 = 0;
  for (int i = 1; i < n; ++i)
    if (p(i, 0) < p(i0, 0)) i0 = i;
  int i1 = i0;
  double best = -1;
  for (int i = 0; i < n; ++i) {
    const double d = (p.row(i) - p.row(i0)).squaredNorm();
    if (d > best) best = d, i1 = i;
  }
  const Vec3 a = p.row(i0), dir = (Vec3(p.row(i1)) - a).normalized();
  int i2 = i0;
  best = -1;
  for (int i = 0; i < n; ++i) {
    const Vec3 w = Vec3(p.row(i)) - a;
    const double d = (w - w.dot(dir) * dir).norm();
    if (d > best) best = d, i2 = i;
  }
  const Vec3 plane_n = (Vec3(p.row(i1)) - a).cross(Vec3(p.row(i2)) - a).normalized();
  int i3 = i0;
  best = -1;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs((Vec3(p.row(i)) - a).dot(plane_n));
    if (d > best) best = d, i3 = i;
  }
  if (!(best > eps) || !plane_n.allFinite()) throw ArgumentError("convex hull of a flat point set");

  Hull hull(p, eps);
  if ((Vec3(p.row(i3)) - a).dot(plane_n) > 0) std::swap(i1, i2);
  // Orientation: (i0,i1,i2) now faces away from i3.
  hull.add_face(i0, i1, i2);
  hull.add_face(i0, i3, i1);
  hull.add_face(i1, i3, i2);
  hull.add_face(i2, i3, i0);
  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    hull.insert(i);
  }
  return hull.vertices();
}

std::vector<int> hidden_point_removal(const Points& p, const Vec3& camera, double gamma) {
  const int n = static_cast<int>(p.rows());
  Points flipped(n + 1, 3);
  double max_norm = 0;
  for (int i = 0; i < n; ++i) max_norm = std::max(max_norm, (Vec3(p.row(i)) - camera).norm());
  const double radius = max_norm * std::pow(10.0, gamma);
  for (int i = 0; i < n; ++i) {
    const Vec3 d = Vec3(p.row(i)) - camera;
    const double len = d.norm();
    const Vec3 f = len > 0 ? Vec3(d * (2.0 * radius / len - 1.0)) : Vec3::Zero();
    flipped.row(i) = f.transpose();
  }
  flipped.row(n).setZero();
  std::vector<int> out;
  for (int v : convex_hull_vertices(flipped))
    if (v < n) out.push_back(v);
  return out;
}

}  // namespace inkl::geo
