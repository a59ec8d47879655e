#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "inkl/errors.hpp"
#include "inkl/gradcheck.hpp"
#include "inkl/model.hpp"
#include "test_util.hpp"

using namespace inkl;
using model::ModelConfig;
using TD = ad::Tensor<double>;

namespace {

data::InstanceSample sample_with(int points, data::Category c, std::uint64_t seed, std::uint64_t id = 0) {
  auto rng = data::instance_rng(seed, id);
  data::GeneratorConfig g;
  g.points = points;
  return data::generate_instance(c, rng, id, g);
}

geo::Mat3 mat_of(const TD& t) {
  geo::Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t.at(i, j);
  return m;
}

void check_rotation(const geo::Mat3& R) {
  CHECK((R.transpose() * R - geo::Mat3::Identity()).norm() < 1e-5);
  CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-5));
}

TD scalar(double v) { return TD::from({1}, {v}); }

model::LossTerms<double> terms_of(double sep, double surf, double sim, double map, double pose) {
  return {scalar(sep), scalar(surf), scalar(sim), scalar(map), scalar(pose)};
}

}  // namespace

TEST_CASE("predict_nocs: shape, determinism and keypoint permutation") {
  nn::ParamRegistry<float> reg(1);
  model::PoseHead<float> head(reg, ModelConfig{});
  std::mt19937_64 rng(2);
  const auto f = testing::random_tensor<float>({96, 256}, rng, -1, 1, false);
  const auto n = head.predict_nocs(f);
  CHECK(n.shape() == ad::Shape{96, 3});
  CHECK(testing::max_abs_diff(n.values(), head.predict_nocs(f).values()) == 0.0);

  std::vector<int> perm(96);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto np = head.predict_nocs(ad::gather_rows(f, perm));
  CHECK(testing::max_abs_diff(np.values(), ad::gather_rows(n, perm).values()) < 1e-5);
}

TEST_CASE("map loss examples") {
  const auto a = TD::from({2, 3}, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6});
  CHECK(model::map_loss(a, a).item() == 0.0);
  CHECK(model::map_loss(TD::from({1, 3}, {0.5, 0, 0}), TD::from({1, 3}, {0, 0, 0})).item() == doctest::Approx(0.125));
  CHECK(model::map_loss(TD::from({1, 3}, {2, 0, 0}), TD::from({1, 3}, {0, 0, 0})).item() == doctest::Approx(1.5));
  // Per-keypoint mean: a second, exact keypoint halves the loss.
  CHECK(model::map_loss(TD::from({2, 3}, {2, 0, 0, 0, 0, 0}), TD::from({2, 3}, {0, 0, 0, 0, 0, 0})).item() ==
        doctest::Approx(0.75));
  CHECK_THROWS_AS(model::map_loss(TD::from({1, 3}, {0, 0, 0}), TD::from({3}, {0, 0, 0})), DimensionError);
}

TEST_CASE("nocs targets match the geometry transform") {
  std::mt19937_64 rng(3);
  geo::SimTransform gt;
  gt.R = geo::random_rotation(180.0, rng);
  gt.t = geo::Vec3(0.1, -0.2, 0.7);
  gt.s = geo::Vec3(0.1, 0.2, 0.15);
  const geo::Vec3 centroid(0.12, -0.18, 0.69);
  const auto c = testing::random_tensor({5, 3}, rng, -0.1, 0.1);
  geo::Points cam(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) cam(i, j) = c.at(i, j) + centroid[j];
  const geo::Points want = geo::to_nocs(cam, gt);
  const auto got = model::nocs_targets(c, centroid, gt);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) CHECK(got.at(i, j) == doctest::Approx(want(i, j)).epsilon(1e-12));
}

TEST_CASE("rotation from 6d") {
  check_rotation(mat_of(model::rotation_from_6d(TD::from({1, 6}, {1, 0, 0, 0, 1, 0}))));
  CHECK((mat_of(model::rotation_from_6d(TD::from({1, 6}, {1, 0, 0, 0, 1, 0}))) - geo::Mat3::Identity()).norm() < 1e-15);
  CHECK((mat_of(model::rotation_from_6d(TD::from({1, 6}, {0, 0, 0, 0, 1, 0}))) - geo::Mat3::Identity()).norm() == 0.0);
  CHECK((mat_of(model::rotation_from_6d(TD::from({1, 6}, {1e-9, 0, 0, 0, 1, 0}))) - geo::Mat3::Identity()).norm() == 0.0);
  // Parallel and zero second vectors fall back to a perpendicular axis.
  for (const auto& v : {std::vector<double>{1, 0, 0, 2, 0, 0}, std::vector<double>{0.3, -0.4, 1.2, 0, 0, 0},
                        std::vector<double>{1, 1, 1, -3, -3, -3}, std::vector<double>{1, 2, 3, 1, 2, 3 + 1e-12}}) {
    const geo::Mat3 R = mat_of(model::rotation_from_6d(TD::from({1, 6}, v)));
    check_rotation(R);
    CHECK((R.col(0) - geo::Vec3(v[0], v[1], v[2]).normalized()).norm() < 1e-12);
  }
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const double scale = std::pow(10.0, -6.0 + 12.0 * (i % 20) / 19.0);
    const auto r = testing::random_tensor({1, 6}, rng, -scale, scale, false);
    check_rotation(mat_of(model::rotation_from_6d(r)));
  }
  // The Gram-Schmidt map is differentiable away from the guards.
  auto r = TD::from({1, 6}, {0.3, -0.7, 0.2, 0.5, 0.4, -0.9}, true);
  const auto report = ad::grad_check([](const TD& x) { return ad::sum(ad::mul(model::rotation_from_6d(x),
                                                                             TD::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}))); },
                                     r, 1e-6, 1e-6);
  CHECK_MESSAGE(report.passed, report.message);
}

TEST_CASE("pose loss examples") {
  geo::SimTransform gt;
  gt.t = geo::Vec3(0.1, 0.2, 0.8);
  gt.s = geo::Vec3(0.1, 0.1, 0.2);
  auto estimate = [](const geo::Mat3& R, const geo::Vec3& t, const geo::Vec3& s) {
    model::PoseEstimate<double> p;
    p.R = TD::from({3, 3}, {R(0, 0), R(0, 1), R(0, 2), R(1, 0), R(1, 1), R(1, 2), R(2, 0), R(2, 1), R(2, 2)});
    p.t = TD::from({1, 3}, {t.x(), t.y(), t.z()});
    p.s = TD::from({1, 3}, {s.x(), s.y(), s.z()});
    return p;
  };
  CHECK(model::pose_loss(estimate(gt.R, gt.t, gt.s), gt).item() == 0.0);
  CHECK(model::pose_loss(estimate(gt.R, gt.t + geo::Vec3(0.01, 0, 0), gt.s), gt).item() == doctest::Approx(0.01));
  const geo::Mat3 rz = geo::Vec3(-1, -1, 1).asDiagonal();
  CHECK(model::pose_loss(estimate(rz, gt.t, gt.s), gt).item() == doctest::Approx(std::sqrt(8.0)));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto e = estimate(geo::random_rotation(180.0, rng), gt.t + geo::Vec3::Random() * 0.1, gt.s);
    CHECK(model::pose_loss(e, gt).item() > 0.0);
  }
}

TEST_CASE("total loss") {
  const model::LossWeights w;
  CHECK(model::total_loss(terms_of(0, 0, 0, 0, 0), w).item() == 0.0);
  CHECK(model::total_loss(terms_of(1, 1, 1, 1, 1), w).item() == doctest::Approx(37.3));
  model::LossWeights w1 = w;
  w1.sep = 1.0;
  const auto t = terms_of(0.7, 0.2, 0.3, 0.4, 0.5);
  CHECK(model::total_loss(t, w).item() - model::total_loss(t, w1).item() == doctest::Approx(9.0 * 0.7));
  try {
    model::total_loss(terms_of(1, 1, std::nan(""), 1, 1), w);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("L_sim") != std::string::npos);
  }
  CHECK_THROWS_AS(model::total_loss(terms_of(1, 1, 1, 1, INFINITY), w), NumericError);
  auto missing = terms_of(1, 1, 1, 1, 1);
  missing.map = TD{};
  CHECK_THROWS_AS(model::total_loss(missing, w), ArgumentError);
}

TEST_CASE("pose head init and translation equivariance") {
  const auto s = sample_with(1024, data::Category::Laptop, 6);
  ModelConfig c;
  c.zero_pos_embed = true;
  nn::ParamRegistry<float> reg(7);
  model::PoseModel<float> m(reg, c);
  const auto a = m.predict(s.cloud);
  check_rotation(a.pose.transform().R);
  CHECK(a.pose.nocs.shape() == ad::Shape{96, 3});
  for (int j = 0; j < 3; ++j) CHECK(a.pose.s[j] > 0.0f);

  geo::PointCloud moved = s.cloud;
  const geo::Vec3 shift(0.25, -0.1, 0.4);
  moved.points.rowwise() += shift.transpose();
  const auto b = m.predict(moved);
  const auto ta = a.pose.transform(), tb = b.pose.transform();
  CHECK((tb.t - ta.t - shift).norm() < 1e-5);
  CHECK((tb.R - ta.R).norm() < 1e-5);
  CHECK((tb.s - ta.s).norm() < 1e-6);

  // The raw-coordinate embedding breaks this on purpose in the default model.
  nn::ParamRegistry<float> reg2(7);
  model::PoseModel<float> d(reg2, ModelConfig{});
  const auto da = d.predict(s.cloud).pose.transform(), db = d.predict(moved).pose.transform();
  CHECK((db.t - da.t - shift).norm() > 1e-6);
}

TEST_CASE("forward result wiring") {
  const auto s = sample_with(64, data::Category::Bowl, 8, 5);
  ModelConfig c = ModelConfig::tiny();
  c.points = 64;
  nn::ParamRegistry<double> reg(9);
  model::PoseModel<double> m(reg, c);
  const auto f = m.forward(s, {});
  const auto& w = model::LossWeights{};
  const double expect = w.sep * f.terms.sep.item() + w.surf * f.terms.surf.item() + w.sim * f.terms.sim.item() +
                        w.map * f.terms.map.item() + w.pose * f.terms.pose.item();
  CHECK(f.total.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(f.terms.map.item() == doctest::Approx(model::map_loss(f.pose.nocs, f.nocs_gt).item()));
  CHECK(f.terms.pose.item() == doctest::Approx(model::pose_loss(f.pose, s.gt).item()));

  model::LossOptions off;
  off.disable_sep = off.disable_surf = true;
  const auto g = m.forward(s, off);
  CHECK(g.terms.sep.item() == 0.0);
  CHECK(g.terms.surf.item() == 0.0);
  CHECK(g.terms.sim.item() == f.terms.sim.item());

  model::LossOptions ag;
  ag.agpose_losses = true;
  const auto h = m.forward(s, ag);
  CHECK(h.terms.surf.item() ==
        doctest::Approx(model::object_chamfer_loss(h.kpts.centered, h.enc.centered).item()));
  CHECK(h.terms.sep.item() == doctest::Approx(model::diversity_loss(h.kpts.centered).item()));
}

TEST_CASE("total loss gradient over every parameter (32-point toy)") {
  ad::GradCheckOptions opt;
  opt.tol = 1e-4;
  opt.h = 1e-6;
  // Keypoints start bunched near the centroid, so switches sit close.
  opt.kink_margin_factor = 2.0;
  opt.max_elements_per_tensor = 6;
  std::vector<std::shared_ptr<void>> keep;
  std::size_t tensors = 0;
  const auto r = testing::check_away_from_kinks(opt, [&](std::uint64_t seed) {
    const auto s = sample_with(32, data::Category::Camera, 30 + seed, seed);
    auto reg = std::make_shared<nn::ParamRegistry<double>>(30 + seed);
    auto m = std::make_shared<model::PoseModel<double>>(*reg, ModelConfig::tiny());
    keep.push_back(reg);
    keep.push_back(m);
    std::vector<TD> params;
    for (const auto& [name, t] : reg->entries()) params.push_back(t);
    tensors = params.size();
    return std::pair{std::function<TD()>([=] { return m->forward(s, {}).total; }), params};
  });
  CHECK_MESSAGE(r.passed, r.message);
  CHECK(tensors > 50);
  CHECK(r.checked > static_cast<std::int64_t>(tensors));
}
