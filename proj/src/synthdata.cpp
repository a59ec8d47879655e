#include "inkl/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "inkl/binary_io.hpp"
#include "inkl/errors.hpp"

namespace inkl::data {

using geo::Mat3;
using geo::Vec3;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::array<int, kCategoryCount> kParts = {3, 2, 2, 3, 2, 2};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void add_box(std::vector<Primitive>& out, int part, const Vec3& half, const Mat3& rot, const Vec3& offset) {
  const Vec3 ex(half.x(), 0, 0), ey(0, half.y(), 0), ez(0, 0, half.z());
  const std::array<std::array<Vec3, 3>, 6> faces = {{{ex, ey, ez}, {-ex, ez, ey}, {ey, ez, ex},
                                                    {-ey, ex, ez}, {ez, ex, ey}, {-ez, ey, ex}}};
  for (const auto& f : faces) {
    Primitive p = rect(part, f[0], f[1], f[2]);
    p.rotation = rot;
    p.offset = offset;
    out.push_back(std::move(p));
  }
}

Primitive placed(Primitive p, const Mat3& rot, const Vec3& offset) {
  p.rotation = rot;
  p.offset = offset;
  return p;
}

// --- deterministic color table --------------------------------------------

Vec3 hsv(double h, double s, double v) {
  const double c = v * s, hp = h * 6.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  Vec3 rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Vec3::Constant(v - c);
}

int part_offset(Category c) {
  int off = 0;
  for (int i = 0; i < static_cast<int>(c); ++i) off += kParts[i];
  return off;
}

int total_parts() {
  int n = 0;
  for (int k : kParts) n += k;
  return n;
}

float f32(double v) { return static_cast<float>(v); }

template <typename M>
void round_to_f32(M& m) {
  m = m.template cast<float>().template cast<double>();
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr char kMagic[4] = {'I', 'N', 'K', 'D'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

const std::string& category_name(Category c) {
  static const std::array<std::string, kCategoryCount> names = {"bottle", "bowl", "can", "mug", "laptop", "camera"};
  return names.at(static_cast<std::size_t>(c));
}

Category parse_category(const std::string& name) {
  for (Category c : all_categories())
    if (category_name(c) == name) return c;
  throw ArgumentError("unknown category '" + name + "'");
}

std::vector<Category> all_categories() {
  return {Category::Bottle, Category::Bowl, Category::Can, Category::Mug, Category::Laptop, Category::Camera};
}

bool is_symmetric(Category c) {
  return c == Category::Bottle || c == Category::Bowl || c == Category::Can || c == Category::Mug;
}

int part_count(Category c) { return kParts.at(static_cast<std::size_t>(c)); }

Vec3 part_color(Category c, int part) {
  if (part < 0 || part >= part_count(c)) throw ArgumentError("part index out of range");
  return hsv((part_offset(c) + part + 0.5) / total_parts(), 0.8, 0.9);
}

int decode_part(Category c, const Vec3& color) {
  for (int k = 0; k < part_count(c); ++k)
    if ((part_color(c, k) - color).norm() < 1e-3) return k;
  return -1;
}

Primitive frustum(int part, double r0, double r1, double y0, double y1) {
  Primitive p;
  p.part = part;
  const double h = y1 - y0;
  p.area = kPi * (r0 + r1) * std::hypot(r1 - r0, h);
  p.sample = [=](std::mt19937_64& rng, Vec3& x, Vec3& n) {
    const double u = uniform(rng, 0, 1);
    // Density along the axis is proportional to the radius.
    const double f = std::abs(r1 - r0) < 1e-12 ? u : (std::sqrt(r0 * r0 + u * (r1 * r1 - r0 * r0)) - r0) / (r1 - r0);
    const double r = r0 + (r1 - r0) * f, th = uniform(rng, 0, 2 * kPi);
    x = Vec3(r * std::cos(th), y0 + h * f, r * std::sin(th));
    n = Vec3(std::cos(th) * h, -(r1 - r0), std::sin(th) * h).normalized();
    if (h < 0) n = -n;
  };
  return p;
}

Primitive disk(int part, double r, double y, double facing) {
  Primitive p;
  p.part = part;
  p.area = kPi * r * r;
  p.sample = [=](std::mt19937_64& rng, Vec3& x, Vec3& n) {
    const double rho = r * std::sqrt(uniform(rng, 0, 1)), th = uniform(rng, 0, 2 * kPi);
    x = Vec3(rho * std::cos(th), y, rho * std::sin(th));
    n = Vec3(0, facing, 0);
  };
  return p;
}

Primitive sphere_zone(int part, double r, double y0, double y1, double facing) {
  Primitive p;
  p.part = part;
  p.area = 2 * kPi * r * (y1 - y0);
  p.sample = [=](std::mt19937_64& rng, Vec3& x, Vec3& n) {
    const double y = uniform(rng, y0, y1), rho = std::sqrt(std::max(0.0, r * r - y * y));
    const double th = uniform(rng, 0, 2 * kPi);
    x = Vec3(rho * std::cos(th), y, rho * std::sin(th));
    n = facing * x / r;
  };
  return p;
}

Primitive torus_arc(int part, double big, double r, double cx, double cy, double a0, double a1) {
  Primitive p;
  p.part = part;
  p.area = (a1 - a0) * big * 2 * kPi * r;
  p.sample = [=](std::mt19937_64& rng, Vec3& x, Vec3& n) {
    double th;
    do {
      th = uniform(rng, 0, 2 * kPi);
    } while (uniform(rng, 0, big + r) > big + r * std::cos(th));
    const double phi = uniform(rng, a0, a1);
    const Vec3 radial(std::cos(phi), std::sin(phi), 0);
    n = std::cos(th) * radial + std::sin(th) * Vec3(0, 0, 1);
    x = Vec3(cx, cy, 0) + big * radial + r * n;
  };
  return p;
}

Primitive rect(int part, const Vec3& center, const Vec3& u, const Vec3& v) {
  Primitive p;
  p.part = part;
  p.area = 4 * u.norm() * v.norm();
  const Vec3 normal = u.cross(v).normalized();
  p.sample = [=](std::mt19937_64& rng, Vec3& x, Vec3& n) {
    x = center + uniform(rng, -1, 1) * u + uniform(rng, -1, 1) * v;
    n = normal;
  };
  return p;
}

std::vector<Primitive> build_shape(Category c, std::mt19937_64& rng) {
  std::vector<Primitive> s;
  switch (c) {
    case Category::Bottle: {
      const double hb = uniform(rng, 1.6, 2.4), sh = uniform(rng, 0.3, 0.5);
      const double rn = uniform(rng, 0.3, 0.45), nh = uniform(rng, 0.4, 0.7);
      s.push_back(frustum(0, 1.0, 1.0, 0, hb));
      s.push_back(disk(0, 1.0, 0, -1));
      s.push_back(frustum(1, 1.0, rn, hb, hb + sh));
      s.push_back(frustum(2, rn, rn, hb + sh, hb + sh + nh));
      s.push_back(disk(2, rn, hb + sh + nh, 1));
      break;
    }
    case Category::Bowl: {
      const double depth = uniform(rng, 0.45, 0.75), inner = uniform(rng, 0.9, 0.95);
      const double top = -1.0 + depth;
      s.push_back(sphere_zone(0, 1.0, -1.0, top, 1));
      s.push_back(sphere_zone(1, inner, -inner, std::min(top, inner), -1));
      break;
    }
    case Category::Can: {
      const double h = uniform(rng, 1.5, 2.8);
      s.push_back(frustum(0, 1.0, 1.0, 0, h));
      s.push_back(disk(1, 1.0, 0, -1));
      s.push_back(disk(1, 1.0, h, 1));
      break;
    }
    case Category::Mug: {
      const double h = uniform(rng, 1.6, 2.4), rtop = uniform(rng, 1.0, 1.15);
      const double big = uniform(rng, 0.3, 0.4) * h, tube = uniform(rng, 0.08, 0.11) * h;
      const double rmid = 0.5 * (1.0 + rtop);
      s.push_back(frustum(0, 1.0, rtop, 0, h));
      s.push_back(disk(1, 1.0, 0, -1));
      s.push_back(torus_arc(2, big, tube, rmid, h / 2, -kPi / 2, kPi / 2));
      break;
    }
    case Category::Laptop: {
      const double w = uniform(rng, 1.2, 1.6), d = uniform(rng, 0.8, 1.0), tb = 0.05, ts = 0.035;
      const double hs = d * uniform(rng, 0.85, 1.0);
      const double open = uniform(rng, 60.0, 120.0) * kPi / 180.0;
      add_box(s, 0, Vec3(w / 2, tb / 2, d / 2), Mat3::Identity(), Vec3(0, tb / 2, 0));
      // Screen stands at 90 degrees when open == pi/2 and leans back beyond.
      const Mat3 tilt = geo::rotation_about(Vec3::UnitX(), -(open - kPi / 2));
      const Vec3 hinge(0, tb, -d / 2);
      add_box(s, 1, Vec3(w / 2, hs / 2, ts / 2), tilt, hinge + tilt * Vec3(0, hs / 2, ts / 2));
      break;
    }
    case Category::Camera: {
      const Vec3 half(uniform(rng, 0.5, 0.7), uniform(rng, 0.35, 0.45), uniform(rng, 0.2, 0.3));
      const double lr = uniform(rng, 0.15, 0.25), ll = uniform(rng, 0.2, 0.4);
      add_box(s, 0, half, Mat3::Identity(), Vec3::Zero());
      const Mat3 to_z = geo::rotation_about(Vec3::UnitX(), kPi / 2);
      const Vec3 lens_at(uniform(rng, -0.2, 0.2) * half.x(), 0, half.z());
      s.push_back(placed(frustum(1, lr, lr, 0, ll), to_z, lens_at));
      s.push_back(placed(disk(1, lr, ll, 1), to_z, lens_at));
      break;
    }
  }
  return s;
}

SurfaceSamples sample_surface(const std::vector<Primitive>& shape, int n, std::mt19937_64& rng) {
  std::vector<double> areas;
  for (const auto& p : shape) areas.push_back(p.area);
  std::discrete_distribution<int> pick(areas.begin(), areas.end());
  SurfaceSamples out;
  out.points.resize(n, 3);
  out.normals.resize(n, 3);
  out.primitive.resize(n);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    Vec3 x, nrm;
    shape[k].sample(rng, x, nrm);
    out.points.row(i) = (shape[k].rotation * x + shape[k].offset).transpose();
    out.normals.row(i) = (shape[k].rotation * nrm).transpose();
    out.primitive[i] = k;
  }
  return out;
}

InstanceSample generate_instance(Category c, std::mt19937_64& rng, std::uint64_t instance_id,
                                 const GeneratorConfig& cfg) {
  const auto shape = build_shape(c, rng);
  const auto surf = sample_surface(shape, cfg.oversample, rng);

  // Canonical frame: bounding box centered at the origin, diagonal 1.
  const Eigen::RowVector3d lo = surf.points.colwise().minCoeff(), hi = surf.points.colwise().maxCoeff();
  const Eigen::RowVector3d extent = hi - lo;
  geo::Points canon = (surf.points.rowwise() - 0.5 * (lo + hi)) / extent.norm();

  // Overall scale keeps every axis within [0.05, 0.4] m where possible.
  const double k_max = 0.4 / extent.maxCoeff();
  const double k_lo = std::min(k_max, std::max(0.05 / extent.minCoeff(), 0.15 / extent.maxCoeff()));
  geo::SimTransform gt;
  gt.s = (extent * uniform(rng, k_lo, k_max)).transpose();
  gt.R = geo::uniform_rotation(rng);
  gt.t = Vec3(uniform(rng, -0.25, 0.25), uniform(rng, -0.25, 0.25), 1.15 + uniform(rng, -0.25, 0.25));

  // The camera sits at the origin; a random offset direction varies the
  // viewing distance inside the configured range.
  const geo::Points posed = geo::from_nocs(canon, gt);
  Vec3 view = -gt.t.normalized();
  const double dist = uniform(rng, cfg.camera_distance_min, cfg.camera_distance_max);
  const Vec3 camera = gt.t + dist * view;
  std::vector<int> visible = geo::hidden_point_removal(posed, camera, cfg.hpr_gamma);
  if (visible.empty()) visible.push_back(0);

  std::vector<int> chosen;
  std::shuffle(visible.begin(), visible.end(), rng);
  if (static_cast<int>(visible.size()) >= cfg.points) {
    chosen.assign(visible.begin(), visible.begin() + cfg.points);
  } else {
    chosen = visible;
    std::uniform_int_distribution<std::size_t> any(0, visible.size() - 1);
    while (static_cast<int>(chosen.size()) < cfg.points) chosen.push_back(visible[any(rng)]);
  }

  InstanceSample out;
  out.category = c;
  out.instance_id = instance_id;
  round_to_f32(gt.R);
  round_to_f32(gt.t);
  round_to_f32(gt.s);
  out.gt = gt;
  out.canonical.resize(cfg.points, 3);
  out.cloud.appearance.resize(cfg.points, kAppearanceChannels);
  out.part.resize(cfg.points);
  for (int i = 0; i < cfg.points; ++i) {
    const int j = chosen[i];
    out.canonical.row(i) = canon.row(j);
    const int part = shape[surf.primitive[j]].part;
    out.part[i] = static_cast<std::uint8_t>(part);
    out.cloud.appearance.block<1, 3>(i, 0) = (gt.R * Vec3(surf.normals.row(j))).transpose();
    out.cloud.appearance.block<1, 3>(i, 3) = part_color(c, part).transpose();
  }
  round_to_f32(out.canonical);
  round_to_f32(out.cloud.appearance);
  out.cloud.points = geo::from_nocs(out.canonical, out.gt);
  round_to_f32(out.cloud.points);
  return out;
}

std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t instance_id) {
  return std::mt19937_64(splitmix(splitmix(seed) ^ (instance_id * 0xD1B54A32D192ED03ull)));
}

std::vector<InstanceSample> generate_dataset(int count, std::uint64_t seed, const std::vector<Category>& categories,
                                             const GeneratorConfig& cfg) {
  if (categories.empty()) throw ArgumentError("no categories to generate");
  if (count < 1) throw ArgumentError("dataset count must be positive");
  std::vector<InstanceSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    auto rng = instance_rng(seed, static_cast<std::uint64_t>(i));
    out.push_back(generate_instance(categories[i % categories.size()], rng, static_cast<std::uint64_t>(i), cfg));
  }
  return out;
}

InstanceSample apply_augmentation(const InstanceSample& s, const Mat3& dR, const Vec3& dt, double factor) {
  InstanceSample out = s;
  const Eigen::RowVector3d t = s.gt.t.transpose();
  out.cloud.points = ((factor * (s.cloud.points.rowwise() - t)) * dR.transpose()).rowwise() + (t + dt.transpose());
  out.gt.R = dR * s.gt.R;
  out.gt.t = s.gt.t + dt;
  out.gt.s = factor * s.gt.s;
  if (s.cloud.has_appearance()) {
    out.cloud.appearance.leftCols(3) = s.cloud.appearance.leftCols(3) * dR.transpose();
  }
  return out;
}

InstanceSample augment(const InstanceSample& s, std::mt19937_64& rng, const AugmentConfig& cfg) {
  const Mat3 dR = geo::random_rotation(cfg.max_rotation_deg, rng);
  const Vec3 dt(uniform(rng, -cfg.max_shift, cfg.max_shift), uniform(rng, -cfg.max_shift, cfg.max_shift),
                uniform(rng, -cfg.max_shift, cfg.max_shift));
  const double f = uniform(rng, cfg.min_scale, cfg.max_scale);
  return apply_augmentation(s, dR, dt, f);
}

std::vector<std::uint8_t> encode_dataset(const std::vector<InstanceSample>& samples) {
  if (samples.empty()) throw ArgumentError("cannot write an empty dataset");
  io::ByteWriter w;
  w.put_raw(kMagic, 4);
  w.put_u16(kVersion);
  w.put_u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.cloud.size() != kCloudSize || s.canonical.rows() != kCloudSize ||
        s.cloud.appearance.rows() != kCloudSize || s.cloud.appearance.cols() != kAppearanceChannels) {
      throw ArgumentError("dataset samples must hold exactly " + std::to_string(kCloudSize) + " points");
    }
    w.put_u8(static_cast<std::uint8_t>(s.category));
    w.put_u64(s.instance_id);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) w.put_f32(f32(s.gt.R(r, c)));
    for (int i = 0; i < 3; ++i) w.put_f32(f32(s.gt.t(i)));
    for (int i = 0; i < 3; ++i) w.put_f32(f32(s.gt.s(i)));
    for (Eigen::Index i = 0; i < s.cloud.points.size(); ++i) w.put_f32(f32(s.cloud.points.data()[i]));
    for (Eigen::Index i = 0; i < s.cloud.appearance.size(); ++i) w.put_f32(f32(s.cloud.appearance.data()[i]));
    for (Eigen::Index i = 0; i < s.canonical.size(); ++i) w.put_f32(f32(s.canonical.data()[i]));
  }
  w.put_crc();
  return w.bytes();
}

std::vector<InstanceSample> decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) r.fail("bad magic, expected \"INKD\"");
  r.check_trailing_crc();
  r.get_bytes(4);
  const auto version = r.get_u16();
  if (version != kVersion) r.fail("unsupported dataset version " + std::to_string(version));
  const auto count = r.get_u32();
  std::vector<InstanceSample> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    InstanceSample s;
    const auto cat = r.get_u8();
    if (cat >= kCategoryCount) r.fail("unknown category code " + std::to_string(cat));
    s.category = static_cast<Category>(cat);
    s.instance_id = r.get_u64();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.gt.R(i, j) = r.get_f32();
    for (int i = 0; i < 3; ++i) s.gt.t(i) = r.get_f32();
    for (int i = 0; i < 3; ++i) s.gt.s(i) = r.get_f32();
    s.cloud.points.resize(kCloudSize, 3);
    for (Eigen::Index i = 0; i < s.cloud.points.size(); ++i) s.cloud.points.data()[i] = r.get_f32();
    s.cloud.appearance.resize(kCloudSize, kAppearanceChannels);
    for (Eigen::Index i = 0; i < s.cloud.appearance.size(); ++i) s.cloud.appearance.data()[i] = r.get_f32();
    s.canonical.resize(kCloudSize, 3);
    for (Eigen::Index i = 0; i < s.canonical.size(); ++i) s.canonical.data()[i] = r.get_f32();
    s.part.resize(kCloudSize);
    for (int i = 0; i < kCloudSize; ++i) {
      const int p = decode_part(s.category, Vec3(s.cloud.appearance.block<1, 3>(i, 3).transpose()));
      s.part[i] = static_cast<std::uint8_t>(std::max(p, 0));
    }
    out.push_back(std::move(s));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after " + std::to_string(count) + " samples");
  return out;
}

void write_dataset(const std::vector<InstanceSample>& samples, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(samples));
}

std::vector<InstanceSample> read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

void write_manifest(const std::filesystem::path& path, std::uint64_t seed, const std::vector<InstanceSample>& samples,
                    const std::vector<Category>& categories) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  std::string names;
  for (std::size_t i = 0; i < categories.size(); ++i) names += (i ? "," : "") + category_name(categories[i]);
  f << "seed=" << seed << "\n";
  f << "count=" << samples.size() << "\n";
  f << "categories=" << names << "\n";
  std::map<std::string, int> mix;
  for (const auto& s : samples) ++mix[category_name(s.category)];
  for (const auto& [name, n] : mix) f << "mix." << name << "=" << n << "\n";
  if (!f) throw IoError("cannot write " + path.string());
}

}  // namespace inkl::data
