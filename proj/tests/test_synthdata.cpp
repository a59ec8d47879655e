#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "inkl/binary_io.hpp"
#include "inkl/errors.hpp"
#include "inkl/synthdata.hpp"

using namespace inkl;
using data::Category;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "inkl_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool same_sample(const data::InstanceSample& a, const data::InstanceSample& b) {
  return a.category == b.category && a.instance_id == b.instance_id && a.gt.R == b.gt.R && a.gt.t == b.gt.t &&
         a.gt.s == b.gt.s && a.cloud.points == b.cloud.points && a.cloud.appearance == b.cloud.appearance &&
         a.canonical == b.canonical && a.part == b.part;
}

}  // namespace

TEST_CASE("category table") {
  CHECK(data::is_symmetric(Category::Bottle));
  CHECK(data::is_symmetric(Category::Bowl));
  CHECK(data::is_symmetric(Category::Can));
  CHECK(data::is_symmetric(Category::Mug));
  CHECK_FALSE(data::is_symmetric(Category::Laptop));
  CHECK_FALSE(data::is_symmetric(Category::Camera));
  for (auto c : data::all_categories()) CHECK(data::parse_category(data::category_name(c)) == c);
  CHECK_THROWS_AS(data::parse_category("teapot"), ArgumentError);
  // Part colors are pairwise distinct across categories.
  std::vector<geo::Vec3> colors;
  for (auto c : data::all_categories())
    for (int k = 0; k < data::part_count(c); ++k) colors.push_back(data::part_color(c, k));
  for (std::size_t i = 0; i < colors.size(); ++i)
    for (std::size_t j = i + 1; j < colors.size(); ++j) CHECK((colors[i] - colors[j]).norm() > 0.05);
}

TEST_CASE("generated samples satisfy the sample invariants and label consistency") {
  for (auto c : data::all_categories()) {
    for (int i = 0; i < 10; ++i) {
      auto rng = data::instance_rng(3, i);
      auto s = data::generate_instance(c, rng, i);
      REQUIRE(s.cloud.size() == data::kCloudSize);
      CHECK_NOTHROW(s.cloud.validate());
      CHECK_NOTHROW(s.gt.validate(1e-6));
      CHECK(s.gt.s.minCoeff() >= 0.05 - 1e-6);
      CHECK(s.gt.s.maxCoeff() <= 0.4 + 1e-6);
      CHECK((geo::to_nocs(s.cloud.points, s.gt) - s.canonical).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(s.canonical.cwiseAbs().maxCoeff() <= 1.0);
      for (int k = 0; k < s.cloud.size(); ++k) {
        CHECK(s.cloud.appearance.block<1, 3>(k, 0).norm() == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(data::decode_part(c, geo::Vec3(s.cloud.appearance.block<1, 3>(k, 3).transpose())) == s.part[k]);
      }
      auto fit = geo::umeyama_fit(s.canonical, s.cloud.points);
      CHECK((fit.R - s.gt.R).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((fit.t - s.gt.t).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(std::abs(fit.c - s.gt.scale()) < 1e-5);
    }
  }
}

TEST_CASE("generation is deterministic per seed and instance") {
  auto a = data::generate_dataset(6, 11, data::all_categories());
  auto b = data::generate_dataset(6, 11, data::all_categories());
  for (int i = 0; i < 6; ++i) CHECK(same_sample(a[i], b[i]));
  auto c = data::generate_dataset(6, 12, data::all_categories());
  CHECK_FALSE(same_sample(a[0], c[0]));
  for (int i = 0; i < 6; ++i) CHECK(a[i].category == data::all_categories()[i]);
}

TEST_CASE("mug handles") {
  const int handle = data::part_count(Category::Mug) - 1;
  double total_visible = 0;
  for (int i = 0; i < 100; ++i) {
    auto shape_rng = data::instance_rng(5, i);
    auto shape = data::build_shape(Category::Mug, shape_rng);
    auto surf = data::sample_surface(shape, data::kCloudSize, shape_rng);
    int on_handle = 0;
    for (int k : surf.primitive) on_handle += shape[k].part == handle;
    CHECK(on_handle >= 30);

    auto rng = data::instance_rng(5, i);
    auto s = data::generate_instance(Category::Mug, rng, i);
    for (auto p : s.part) total_visible += p == handle;
  }
  // Occlusion hides the whole handle when it is behind the body, so the
  // observed count is checked on average.
  CHECK(total_visible / 100 >= 30);
}

TEST_CASE("surface sampling is proportional to area") {
  for (auto c : data::all_categories()) {
    std::mt19937_64 rng(21);
    auto shape = data::build_shape(c, rng);
    double total_area = 0;
    for (const auto& p : shape) total_area += p.area;
    std::vector<double> counts(shape.size(), 0.0);
    const int rounds = 1000, n = 1024;
    for (int r = 0; r < rounds; ++r) {
      auto s = data::sample_surface(shape, n, rng);
      for (int k : s.primitive) counts[k] += 1;
    }
    for (std::size_t k = 0; k < shape.size(); ++k) {
      const double expected = shape[k].area / total_area;
      CHECK(std::abs(counts[k] / (double(rounds) * n) - expected) <= 0.1 * expected);
    }
  }
}

TEST_CASE("within-primitive sampling is area-uniform (closed-form area splits)") {
  std::mt19937_64 rng(22);
  const int n = 200000;
  auto fraction = [&](const data::Primitive& p, auto pred) {
    int hit = 0;
    for (int i = 0; i < n; ++i) {
      geo::Vec3 x, nrm;
      p.sample(rng, x, nrm);
      hit += pred(x, nrm);
    }
    return double(hit) / n;
  };
  constexpr double pi = std::numbers::pi;

  // Frustum r0=1 -> r1=0.2 over height 1: the lower half of the axis holds
  // (3 r0 + r1) / (4 (r0 + r1)) of the lateral area.
  auto fr = data::frustum(0, 1.0, 0.2, 0.0, 1.0);
  CHECK(fr.area == doctest::Approx(pi * 1.2 * std::hypot(0.8, 1.0)));
  CHECK(fraction(fr, [](auto& x, auto&) { return x.y() < 0.5; }) ==
        doctest::Approx(3.2 / 4.8).epsilon(0.01));

  // Disk: inner radius r/2 holds a quarter of the area.
  auto dk = data::disk(0, 2.0, 0.0, 1);
  CHECK(fraction(dk, [](auto& x, auto&) { return std::hypot(x.x(), x.z()) < 1.0; }) ==
        doctest::Approx(0.25).epsilon(0.02));

  // Sphere zone: area is linear in height.
  auto zone = data::sphere_zone(0, 1.0, -1.0, 0.0, 1);
  CHECK(zone.area == doctest::Approx(2 * pi));
  CHECK(fraction(zone, [](auto& x, auto&) { return x.y() < -0.75; }) == doctest::Approx(0.25).epsilon(0.02));

  // Torus arc: the outer half of the tube carries (pi R + 2 r) / (2 pi R).
  const double big = 0.5, tube = 0.2;
  auto tor = data::torus_arc(0, big, tube, 0.0, 0.0, -pi / 2, pi / 2);
  CHECK(tor.area == doctest::Approx(pi * big * 2 * pi * tube));
  CHECK(fraction(tor, [](auto& x, auto& nrm) { return nrm.head(2).dot(x.head(2)) > 0; }) ==
        doctest::Approx((pi * big + 2 * tube) / (2 * pi * big)).epsilon(0.01));

  // Sampled normals are unit and outward for the frustum.
  geo::Vec3 x, nrm;
  fr.sample(rng, x, nrm);
  CHECK(nrm.norm() == doctest::Approx(1.0));
  CHECK(nrm.x() * x.x() + nrm.z() * x.z() > 0);
}

TEST_CASE("augmentation") {
  auto s = data::generate_dataset(3, 31, data::all_categories());
  auto same = data::apply_augmentation(s[0], geo::Mat3::Identity(), geo::Vec3::Zero(), 1.0);
  CHECK(same_sample(same, s[0]));

  std::mt19937_64 rng(32);
  data::AugmentConfig cfg;
  for (int i = 0; i < 1000; ++i) {
    const auto& base = s[i % 3];
    auto a = data::augment(base, rng, cfg);
    const double f = a.gt.scale() / base.gt.scale();
    CHECK(f >= 0.8 - 1e-12);
    CHECK(f <= 1.2 + 1e-12);
    CHECK((a.gt.t - base.gt.t).cwiseAbs().maxCoeff() <= 0.02 + 1e-12);
    CHECK(geo::rotation_angle_deg(a.gt.R, base.gt.R) <= 20.0 + 1e-6);
    CHECK((a.gt.s / f - base.gt.s).cwiseAbs().maxCoeff() < 1e-12);
    if (i < 30) {
      CHECK((geo::to_nocs(a.cloud.points, a.gt) - a.canonical).cwiseAbs().maxCoeff() < 1e-5);
      CHECK_NOTHROW(a.gt.validate(1e-6));
    }
  }
}

TEST_CASE("dataset file round trip and corruption") {
  auto samples = data::generate_dataset(10, 41, data::all_categories());
  auto path = temp_path("roundtrip.inkd");
  data::write_dataset(samples, path);
  auto back = data::read_dataset(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) CHECK(same_sample(samples[i], back[i]));

  auto bytes = io::read_file(path);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "INKD");
  auto truncated = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 1000);
  CHECK_THROWS_AS(data::decode_dataset(truncated), FormatError);
  auto flipped = bytes;
  flipped[flipped.size() - 2] ^= 0xFF;
  CHECK_THROWS_WITH_AS(data::decode_dataset(flipped), doctest::Contains("checksum"), FormatError);
  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_WITH_AS(data::decode_dataset(bad), doctest::Contains("offset"), FormatError);
  CHECK_THROWS_AS(data::write_dataset({}, path), ArgumentError);
  CHECK_THROWS_AS(data::read_dataset(temp_path("does_not_exist.inkd")), IoError);
}

TEST_CASE("manifest") {
  auto cats = std::vector<Category>{Category::Mug, Category::Can};
  auto samples = data::generate_dataset(5, 51, cats);
  auto path = temp_path("m.manifest");
  data::write_manifest(path, 51, samples, cats);
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == "seed=51\ncount=5\ncategories=mug,can\nmix.can=2\nmix.mug=3\n");
}
