#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "inkl/geometry.hpp"

namespace inkl::data {

enum class Category : std::uint8_t { Bottle = 0, Bowl = 1, Can = 2, Mug = 3, Laptop = 4, Camera = 5 };

inline constexpr int kCategoryCount = 6;
inline constexpr int kCloudSize = 1024;
inline constexpr int kAppearanceChannels = 6;

const std::string& category_name(Category c);
/// Throws ArgumentError for unknown names.
Category parse_category(const std::string& name);
std::vector<Category> all_categories();
/// Bottle, bowl, can and mug are rotationally symmetric about canonical y.
bool is_symmetric(Category c);
int part_count(Category c);
/// RGB code in [0,1] of a part; distinct across all categories.
geo::Vec3 part_color(Category c, int part);
/// Nearest part code; returns -1 if nothing is within 1e-3.
int decode_part(Category c, const geo::Vec3& color);

/// One surface patch of a canonical shape. `sample` draws a point and its
/// outward normal uniformly by area in the patch's local frame, which is
/// then placed by (rotation, offset).
struct Primitive {
  int part = 0;
  double area = 0;
  geo::Mat3 rotation = geo::Mat3::Identity();
  geo::Vec3 offset = geo::Vec3::Zero();
  std::function<void(std::mt19937_64&, geo::Vec3&, geo::Vec3&)> sample;
};

/// Surface patches in their local frame (axis y). Facing -1 flips normals.
Primitive frustum(int part, double r0, double r1, double y0, double y1);
Primitive disk(int part, double r, double y, double facing);
/// Zone of a sphere of radius r between heights y0 < y1.
Primitive sphere_zone(int part, double r, double y0, double y1, double facing);
/// Tube of radius r around an arc of radius big in the xy-plane centered at
/// (cx, cy), spanning angles [a0, a1].
Primitive torus_arc(int part, double big, double r, double cx, double cy, double a0, double a1);
/// Parallelogram center + a u + b v, a, b in [-1, 1].
Primitive rect(int part, const geo::Vec3& center, const geo::Vec3& u, const geo::Vec3& v);

/// Random shape of a category in an unnormalized frame with y up.
std::vector<Primitive> build_shape(Category c, std::mt19937_64& rng);

struct SurfaceSamples {
  geo::Points points;
  geo::Points normals;
  std::vector<int> primitive;
};

/// n area-uniform samples over all primitives.
SurfaceSamples sample_surface(const std::vector<Primitive>& shape, int n, std::mt19937_64& rng);

struct GeneratorConfig {
  int points = kCloudSize;
  int oversample = 6144;
  double hpr_gamma = 2.0;
  double camera_distance_min = 0.8;
  double camera_distance_max = 1.5;
};

struct InstanceSample {
  geo::PointCloud cloud;
  geo::SimTransform gt;
  Category category = Category::Bottle;
  geo::Points canonical;
  std::uint64_t instance_id = 0;
  /// Part label per point; recoverable from the color channels.
  std::vector<std::uint8_t> part;
};

/// Builds, poses and partially occludes one instance. All values are rounded
/// to 32-bit floats so that a file round trip is exact.
InstanceSample generate_instance(Category c, std::mt19937_64& rng, std::uint64_t instance_id = 0,
                                 const GeneratorConfig& cfg = {});

/// Independent stream for (global seed, instance id).
std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t instance_id);

/// Instance i gets category categories[i % size] and instance_id i.
std::vector<InstanceSample> generate_dataset(int count, std::uint64_t seed,
                                             const std::vector<Category>& categories,
                                             const GeneratorConfig& cfg = {});

struct AugmentConfig {
  double max_rotation_deg = 20.0;
  double max_shift = 0.02;
  double min_scale = 0.8;
  double max_scale = 1.2;
};

/// x' = f dR (x - t) + t + dt with R' = dR R, t' = t + dt, s' = f s; normals
/// are rotated by dR. Canonical coordinates are unchanged.
InstanceSample apply_augmentation(const InstanceSample& s, const geo::Mat3& dR, const geo::Vec3& dt,
                                  double factor);
InstanceSample augment(const InstanceSample& s, std::mt19937_64& rng, const AugmentConfig& cfg = {});

void write_dataset(const std::vector<InstanceSample>& samples, const std::filesystem::path& path);
std::vector<InstanceSample> read_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const std::vector<InstanceSample>& samples);
std::vector<InstanceSample> decode_dataset(std::span<const std::uint8_t> bytes);

/// key=value sidecar: seed, count, categories, and per-category counts.
void write_manifest(const std::filesystem::path& path, std::uint64_t seed,
                    const std::vector<InstanceSample>& samples, const std::vector<Category>& categories);

}  // namespace inkl::data
