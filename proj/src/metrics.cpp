#include "inkl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "inkl/errors.hpp"

namespace inkl::metrics {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_box(const geo::SimTransform& b) {
  std::uint64_t h = 0x51ED27u;
  auto feed = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix(h ^ bits);
  };
  for (int i = 0; i < 9; ++i) feed(b.R.data()[i]);
  for (int i = 0; i < 3; ++i) feed(b.t[i]);
  for (int i = 0; i < 3; ++i) feed(b.s[i]);
  return h;
}

double volume(const geo::SimTransform& b) { return b.s.prod(); }

bool inside(const geo::SimTransform& box, const geo::Vec3& x) {
  const geo::Vec3 local = box.R.transpose() * (x - box.t);
  // Slack absorbs the round trip of points sampled on the other box's faces.
  const geo::Vec3 half = 0.5 * box.s * (1.0 + 1e-12);
  return (local.array().abs() <= half.array()).all();
}

// Fraction of `samples` uniform points of box `from` that fall inside `to`.
// `unit` holds fixed [-0.5, 0.5)^3 draws so that a sweep reuses them.
double covered_fraction(const geo::SimTransform& from, const geo::SimTransform& to, const geo::Points& unit) {
  std::int64_t hits = 0;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const geo::Vec3 x = from.R * unit.row(i).transpose().cwiseProduct(from.s) + from.t;
    hits += inside(to, x);
  }
  return static_cast<double>(hits) / static_cast<double>(unit.rows());
}

geo::Points unit_samples(int n, std::uint64_t seed) {
  if (n <= 0) throw ArgumentError("IoU needs a positive sample count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  geo::Points p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = u(rng);
  return p;
}

double iou_from_intersection(double inter, double va, double vb) {
  const double uni = va + vb - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

// Sample in the smaller box; ties by hash so that (a, b) and (b, a) agree.
bool a_first(const geo::SimTransform& a, const geo::SimTransform& b) {
  const double va = volume(a), vb = volume(b);
  if (va != vb) return va < vb;
  return hash_box(a) <= hash_box(b);
}

std::uint64_t pair_seed(const geo::SimTransform& a, const geo::SimTransform& b, std::uint64_t seed) {
  const std::uint64_t ha = hash_box(a), hb = hash_box(b);
  return mix(std::min(ha, hb) ^ mix(std::max(ha, hb)) ^ mix(seed));
}

bool is_identity(const geo::Mat3& R) { return (R - geo::Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0; }

}  // namespace

double iou3d_axis_aligned(const geo::SimTransform& a, const geo::SimTransform& b) {
  if (!is_identity(a.R) || !is_identity(b.R)) throw ArgumentError("iou3d_axis_aligned needs identity rotations");
  double inter = 1.0;
  for (int j = 0; j < 3; ++j) {
    const double lo = std::max(a.t[j] - 0.5 * a.s[j], b.t[j] - 0.5 * b.s[j]);
    const double hi = std::min(a.t[j] + 0.5 * a.s[j], b.t[j] + 0.5 * b.s[j]);
    inter *= std::max(0.0, hi - lo);
  }
  return iou_from_intersection(inter, volume(a), volume(b));
}

double iou3d_monte_carlo(const geo::SimTransform& a, const geo::SimTransform& b, const IouOptions& opt) {
  const geo::Points unit = unit_samples(opt.samples, pair_seed(a, b, opt.seed));
  const bool af = a_first(a, b);
  const auto& from = af ? a : b;
  const auto& to = af ? b : a;
  return iou_from_intersection(covered_fraction(from, to, unit) * volume(from), volume(a), volume(b));
}

double iou3d(const geo::SimTransform& pred, const geo::SimTransform& gt, bool symmetric, const IouOptions& opt) {
  if (!symmetric) return iou3d_monte_carlo(pred, gt, opt);
  if (!(opt.sweep_step_deg > 0.0)) throw ArgumentError("IoU sweep step must be positive");
  const int steps = std::max(1, static_cast<int>(std::lround(360.0 / opt.sweep_step_deg)));
  // One draw for the whole sweep: the swept box keeps its volume, so the
  // sampled box and the samples stay the same.
  const geo::Points unit = unit_samples(opt.samples, pair_seed(pred, gt, opt.seed));
  const bool pred_first = a_first(pred, gt);
  double best = 0.0;
  for (int k = 0; k < steps; ++k) {
    geo::SimTransform p = pred;
    p.R = pred.R * geo::rotation_about(geo::Vec3::UnitY(), k * opt.sweep_step_deg * std::numbers::pi / 180.0);
    const double frac = pred_first ? covered_fraction(p, gt, unit) : covered_fraction(gt, p, unit);
    best = std::max(best, iou_from_intersection(frac * (pred_first ? volume(p) : volume(gt)), volume(p), volume(gt)));
  }
  return best;
}

PoseError pose_errors(const geo::SimTransform& pred, const geo::SimTransform& gt, bool symmetric) {
  PoseError e;
  e.trans_cm = 100.0 * (pred.t - gt.t).norm();
  if (symmetric) {
    const double c = std::clamp(pred.R.col(1).dot(gt.R.col(1)), -1.0, 1.0);
    e.rot_deg = std::acos(c) * 180.0 / std::numbers::pi;
  } else {
    e.rot_deg = geo::rotation_angle_deg(pred.R, gt.R);
  }
  return e;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"IoU25", "IoU50", "IoU75", "5deg2cm", "5deg5cm", "10deg2cm", "10deg5cm"};
  return names;
}

namespace {

std::map<std::string, double> percentages(const std::vector<const EvalRow*>& rows) {
  struct Pass {
    const char* name;
    double iou, deg, cm;  // negative = unused
  };
  static const Pass tests[] = {{"IoU25", 0.25, -1, -1},  {"IoU50", 0.50, -1, -1}, {"IoU75", 0.75, -1, -1},
                               {"5deg2cm", -1, 5, 2},    {"5deg5cm", -1, 5, 5},   {"10deg2cm", -1, 10, 2},
                               {"10deg5cm", -1, 10, 5}};
  std::map<std::string, double> out;
  for (const auto& t : tests) {
    std::size_t n = 0;
    for (const EvalRow* r : rows) {
      const bool ok = t.iou >= 0 ? r->iou > t.iou : (r->rot_deg < t.deg && r->trans_cm < t.cm);
      n += ok;
    }
    out[t.name] = 100.0 * static_cast<double>(n) / static_cast<double>(rows.size());
  }
  double err = 0;
  std::size_t cnt = 0;
  for (const EvalRow* r : rows)
    for (double v : r->nocs_kpt_errors) err += v, ++cnt;
  if (cnt > 0) out["nocs_kpt_error"] = err / static_cast<double>(cnt);
  return out;
}

}  // namespace

EvalReport aggregate(std::vector<EvalRow> rows) {
  if (rows.empty()) throw ArgumentError("aggregate needs at least one evaluated instance");
  EvalReport rep;
  rep.rows = std::move(rows);
  std::map<std::string, std::vector<const EvalRow*>> by_cat;
  std::vector<const EvalRow*> all;
  for (const auto& r : rep.rows) {
    by_cat[r.category].push_back(&r);
    all.push_back(&r);
  }
  for (const auto& [cat, rs] : by_cat) rep.per_category[cat] = percentages(rs);
  for (const auto& [cat, m] : rep.per_category)
    for (const auto& [name, v] : m) rep.mean[name] += v / static_cast<double>(rep.per_category.size());
  rep.overall = percentages(all);
  return rep;
}

std::array<std::uint8_t, 3> error_color(double err) {
  const double t = std::isnan(err) ? 1.0 : std::clamp(err / 0.2, 0.0, 1.0);
  const auto ch = [](double v) { return static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5)); };
  return {ch(t), ch(1.0 - t), 0};
}

std::vector<std::array<std::uint8_t, 3>> nocs_error_colors(const geo::Points& pred, const geo::Points& gt) {
  if (pred.rows() != gt.rows()) throw DimensionError("nocs_error_colors row counts differ");
  std::vector<std::array<std::uint8_t, 3>> out;
  out.reserve(static_cast<std::size_t>(pred.rows()));
  for (Eigen::Index i = 0; i < pred.rows(); ++i) out.push_back(error_color((pred.row(i) - gt.row(i)).norm()));
  return out;
}

void write_report_jsonl(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  for (const auto& r : report.rows) {
    nlohmann::json j{{"category", r.category}, {"iou", r.iou}, {"rot_deg", r.rot_deg}, {"trans_cm", r.trans_cm}};
    if (!r.nocs_kpt_errors.empty()) j["nocs_kpt_errors"] = r.nocs_kpt_errors;
    f << j.dump() << '\n';
  }
  nlohmann::json summary{{"summary", {{"instances", report.rows.size()},
                                      {"overall", report.overall},
                                      {"mean_over_categories", report.mean},
                                      {"per_category", report.per_category}}}};
  f << summary.dump() << '\n';
  if (!f) throw IoError("write failed for " + path.string());
}

void write_colored_ply(const geo::Points& points, const std::vector<std::array<std::uint8_t, 3>>& colors,
                       const std::filesystem::path& path) {
  if (static_cast<std::size_t>(points.rows()) != colors.size()) throw DimensionError("PLY points and colors differ");
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "ply\nformat ascii 1.0\nelement vertex " << points.rows()
    << "\nproperty float x\nproperty float y\nproperty float z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto& c = colors[static_cast<std::size_t>(i)];
    f << points(i, 0) << ' ' << points(i, 1) << ' ' << points(i, 2) << ' ' << int(c[0]) << ' ' << int(c[1]) << ' '
      << int(c[2]) << '\n';
  }
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace inkl::metrics
