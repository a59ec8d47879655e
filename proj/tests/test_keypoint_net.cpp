#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <functional>
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

// Zero every parameter whose name starts with one of the prefixes.
template <typename T>
void zero_params(nn::ParamRegistry<T>& reg, std::initializer_list<std::string> prefixes) {
  for (auto [name, t] : reg.entries()) {
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) std::fill(t.values_mut().begin(), t.values_mut().end(), T(0));
  }
}

template <typename T>
ad::Tensor<T> rows_tensor(std::vector<std::array<double, 3>> rows) {
  std::vector<T> v;
  for (auto& r : rows)
    for (double x : r) v.push_back(static_cast<T>(x));
  return ad::Tensor<T>::from({static_cast<int>(rows.size()), 3}, v);
}

geo::PointCloud permuted(const geo::PointCloud& c, const std::vector<int>& perm) {
  geo::PointCloud out;
  out.points.resize(c.size(), 3);
  out.appearance.resize(c.size(), c.appearance.cols());
  for (int i = 0; i < c.size(); ++i) {
    out.points.row(i) = c.points.row(perm[i]);
    out.appearance.row(i) = c.appearance.row(perm[i]);
  }
  return out;
}

ModelConfig small_config() {
  ModelConfig c = ModelConfig::tiny();
  c.points = 64;
  return c;
}

}  // namespace

TEST_CASE("encoder: shapes, centering and input errors") {
  const auto s = sample_with(1024, data::Category::Mug, 3);
  nn::ParamRegistry<float> reg(1);
  model::KeypointNet<float> net(reg, ModelConfig{});
  const auto enc = net.encode(s.cloud);
  CHECK(enc.fused.shape() == ad::Shape{1024, 256});
  CHECK(enc.pos_embed.shape() == ad::Shape{1024, 64});
  CHECK(enc.sem_feats.shape() == ad::Shape{1024, 128});
  CHECK(enc.geo_feats.shape() == ad::Shape{1024, 128});
  const geo::Vec3 mean = s.cloud.points.colwise().mean();
  CHECK((enc.centroid - mean).norm() < 1e-12);

  // Translation reaches the fused features only through the raw-coordinate embedding.
  geo::PointCloud moved = s.cloud;
  moved.points.rowwise() += geo::Vec3(0.3, -0.2, 0.5).transpose();
  const auto enc2 = net.encode(moved);
  CHECK(testing::max_abs_diff(enc.geo_feats.values(), enc2.geo_feats.values()) < 1e-5);
  CHECK(testing::max_abs_diff(enc.sem_feats.values(), enc2.sem_feats.values()) == 0.0);
  CHECK(testing::max_abs_diff(enc.pos_embed.values(), enc2.pos_embed.values()) > 1e-3);

  const auto again = net.encode(s.cloud);
  CHECK(testing::max_abs_diff(enc.fused.values(), again.fused.values()) == 0.0);

  geo::PointCloud bare;
  bare.points = s.cloud.points;
  CHECK_THROWS_AS(net.encode(bare), InputError);
}

TEST_CASE("keypoint detector: convex combinations and permutation equivariance") {
  const auto s = sample_with(64, data::Category::Camera, 5);
  nn::ParamRegistry<double> reg(2);
  model::KeypointNet<double> net(reg, small_config());
  const auto enc = net.encode(s.cloud);
  const auto k = net.detect_keypoints(enc);
  const int K = k.assign.dim(0), N = k.assign.dim(1);
  CHECK(K == 8);
  CHECK(N == 64);
  const geo::Vec3 lo = s.cloud.points.colwise().minCoeff(), hi = s.cloud.points.colwise().maxCoeff();
  for (int i = 0; i < K; ++i) {
    double row = 0;
    for (int j = 0; j < N; ++j) {
      CHECK(k.assign.at(i, j) >= 0.0);
      row += k.assign.at(i, j);
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-5));
    for (int c = 0; c < 3; ++c) {
      double direct = 0;
      for (int j = 0; j < N; ++j) direct += k.assign.at(i, j) * s.cloud.points(j, c);
      CHECK(k.coords.at(i, c) == doctest::Approx(direct).epsilon(1e-12));
      CHECK(k.coords.at(i, c) >= lo[c]);
      CHECK(k.coords.at(i, c) <= hi[c]);
      CHECK(k.centered.at(i, c) == doctest::Approx(direct - enc.centroid[c]).epsilon(1e-9));
    }
  }

  std::vector<int> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(9);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto enc_p = net.encode(permuted(s.cloud, perm));
  const auto kp = net.detect_keypoints(enc_p);
  double worst_assign = 0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < N; ++j) worst_assign = std::max(worst_assign, std::abs(kp.assign.at(i, j) - k.assign.at(i, perm[j])));
  CHECK(worst_assign < 1e-5);
  CHECK(testing::max_abs_diff(kp.coords.values(), k.coords.values()) < 1e-5);
}

TEST_CASE("surface loss examples") {
  // Unit ring of four references, every keypoint at the ring's center.
  const auto ring = rows_tensor<double>({{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}});
  const auto center = rows_tensor<double>({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  CHECK(model::surface_loss(center, ring).item() == doctest::Approx(2.0));
  CHECK(model::surface_loss(center, ring).item() > 0.1);

  // Keypoints on the references, padded with duplicates.
  const auto on = rows_tensor<double>({{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}, {1, 0, 0}, {0, 1, 0}});
  CHECK(model::surface_loss(on, ring).item() == 0.0);

  // Keypoints a subset of a line of references: only the reference side
  // contributes, (0 + 1 + 1 + 0) / 4.
  const auto line = rows_tensor<double>({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}});
  const auto ends = rows_tensor<double>({{0, 0, 0}, {3, 0, 0}});
  CHECK(model::surface_loss(ends, line).item() == doctest::Approx(0.5));

  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    auto a = testing::random_tensor({7, 3}, rng);
    auto b = testing::random_tensor({5, 3}, rng);
    CHECK(model::surface_loss(a, b).item() >= 0.0);
  }
}

TEST_CASE("separation loss examples") {
  const auto square = rows_tensor<double>({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  CHECK(model::separation_loss(square, 2).item() == 1.0);
  const auto same = rows_tensor<double>({{0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}});
  CHECK(model::separation_loss(same, 2).item() == doctest::Approx(1e6));
  const auto doubled = rows_tensor<double>({{0, 0, 0}, {2, 0, 0}, {0, 2, 0}, {2, 2, 0}});
  CHECK(model::separation_loss(doubled, 2).item() == doctest::Approx(0.5));
  const auto clustered = rows_tensor<double>({{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}, {0.1, 0.1, 0}});
  CHECK(model::separation_loss(clustered, 2).item() > model::separation_loss(square, 2).item());
  CHECK_THROWS_AS(model::separation_loss(rows_tensor<double>({{0, 0, 0}, {1, 0, 0}}), 2), ArgumentError);

  std::mt19937_64 rng(8);
  auto p = testing::random_tensor({10, 3}, rng);
  ad::GradCheckOptions opt;
  opt.tol = 1e-5;
  const auto r = ad::grad_check([&] { return model::separation_loss(p, 2); }, {p}, opt);
  CHECK_MESSAGE(r.passed, r.message);
}

TEST_CASE("comparator losses") {
  const auto square = rows_tensor<double>({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  // Pairwise distances: four of 1 and two of sqrt(2).
  CHECK(model::diversity_loss(square).item() == doctest::Approx(6.0 / (4.0 + 2.0 * std::sqrt(2.0))));
  const auto cloud = rows_tensor<double>({{0, 0, 0}, {1, 0, 0}});
  const auto k = rows_tensor<double>({{0, 0, 0}, {0.5, 0, 0}});
  CHECK(model::object_chamfer_loss(k, cloud).item() == doctest::Approx(0.125));
}

TEST_CASE("fsf") {
  const auto x = ad::Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto y = model::fsf(x);
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) == std::vector<double>{3, 2, 1, 6, 5, 4});
  std::mt19937_64 rng(1);
  const auto r = testing::random_tensor({9, 7}, rng);
  CHECK(testing::max_abs_diff(model::fsf(model::fsf(r)).values(), r.values()) == 0.0);
  const std::vector<int> perm{4, 0, 8, 1, 7, 2, 6, 3, 5};
  CHECK(testing::max_abs_diff(model::fsf(ad::gather_rows(r, perm)).values(),
                              ad::gather_rows(model::fsf(r), perm).values()) == 0.0);
}

TEST_CASE("lkfa: shapes, init contract and degenerate groups") {
  const auto s = sample_with(1024, data::Category::Bowl, 11);
  nn::ParamRegistry<float> reg(3);
  model::KeypointNet<float> net(reg, ModelConfig{});
  for (const auto& st : net.stages) {
    CHECK(st.alpha.numel() == 2 * 256 + 3);
    CHECK(std::all_of(st.alpha.values().begin(), st.alpha.values().end(), [](float v) { return v == 1.0f; }));
    CHECK(std::all_of(st.beta.values().begin(), st.beta.values().end(), [](float v) { return v == 0.0f; }));
  }
  CHECK(net.stages.size() == 12);
  const auto enc = net.encode(s.cloud);
  const auto k = net.detect_keypoints(enc);
  const auto nbr = net.local_neighbours(k, enc, 4);
  CHECK(nbr.size() == 96u * 4u);
  const auto local = net.lkfa_forward(0, k, k.feats, enc, nbr);
  CHECK(local.shape() == ad::Shape{96, 256});
  CHECK_THROWS_AS(net.local_neighbours(k, enc, 1025), ArgumentError);

  // K = 1 with the neighbour on the keypoint: the group is one feature row
  // plus zero offsets, normalized by (std + eps) and finite.
  nn::ParamRegistry<double> reg2(4);
  ModelConfig c = small_config();
  c.local_k = 1;
  model::KeypointNet<double> small(reg2, c);
  const auto s2 = sample_with(64, data::Category::Can, 2);
  auto enc2 = small.encode(s2.cloud);
  auto k2 = small.detect_keypoints(enc2);
  // Place keypoint 0 exactly on point 5.
  std::vector<double> pc(k2.centered.values().begin(), k2.centered.values().end());
  for (int j = 0; j < 3; ++j) pc[static_cast<std::size_t>(j)] = enc2.centered_points(5, j);
  k2.centered = ad::Tensor<double>::from({8, 3}, pc);
  const auto nb1 = small.local_neighbours(k2, enc2, 1);
  CHECK(nb1[0] == 5);
  const auto out = small.lkfa_forward(0, k2, k2.feats, enc2, nb1);
  CHECK(std::all_of(out.values().begin(), out.values().end(), [](double v) { return std::isfinite(v); }));
  // A constant group (all entries equal) normalizes to exactly zero.
  const auto flat = ad::group_norm(ad::Tensor<double>::full({1, 7}, 0.0), 1, 1e-5);
  CHECK(std::all_of(flat.values().begin(), flat.values().end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("gkfa: residual path and arm wiring") {
  std::mt19937_64 rng(21);
  const auto x = testing::random_tensor({8, 16}, rng, -1, 1, false);
  struct Arm {
    const char* name;
    bool uni, attention, psf, reflip;
  };
  const Arm arms[] = {{"bi-fsf", false, false, false, false},
                      {"uni", true, false, false, false},
                      {"psf", false, false, true, false},
                      {"reflip", false, false, false, true},
                      {"attention", false, true, false, false}};
  std::int64_t bi_count = 0, uni_count = 0, psf_count = 0, scan_size = 0;
  for (const auto& arm : arms) {
    CAPTURE(arm.name);
    nn::ParamRegistry<double> reg(5);
    ModelConfig c = small_config();
    c.uni_mamba = arm.uni;
    c.attention_gkfa = arm.attention;
    c.psf_instead_of_fsf = arm.psf;
    c.reflip_backward = arm.reflip;
    model::KeypointNet<double> net(reg, c);
    if (std::string(arm.name) == "bi-fsf") {
      bi_count = reg.element_count();
      scan_size = reg.element_count("stage0.gkfa.scan_b");
    }
    if (std::string(arm.name) == "uni") uni_count = reg.element_count();
    if (std::string(arm.name) == "psf") psf_count = reg.element_count();
    CHECK(testing::max_abs_diff(net.gkfa_forward(0, x).values(), x.values()) > 1e-3);
    // Zero projections and skip (or the attention output projection).
    for (auto [name, t] : reg.entries()) {
      const bool scan = name.rfind("stage0.gkfa.scan", 0) == 0 && name.find("a_log") == std::string::npos;
      const bool attn_out = name.rfind("stage0.gkfa.attn.o", 0) == 0;
      if (scan || attn_out) std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
    }
    CHECK(testing::max_abs_diff(net.gkfa_forward(0, x).values(), x.values()) == 0.0);
  }
  CHECK(scan_size > 0);
  CHECK(bi_count - uni_count == scan_size * 2);  // stages = 2, one scan each
  CHECK(psf_count == bi_count);

  // One keypoint: fsf and psf arms differ only in how the backward input is built.
  nn::ParamRegistry<double> reg(6);
  ModelConfig c = small_config();
  c.psf_instead_of_fsf = true;
  model::KeypointNet<double> net(reg, c);
  const auto one = testing::random_tensor({1, 16}, rng, -1, 1, false);
  const auto& st = net.stages[0];
  const auto h = st.scan_norm(one);
  const auto expect = ad::add(ad::add(one, st.scan_fwd(h)), st.scan_bwd(h));
  CHECK(testing::max_abs_diff(net.gkfa_forward(0, one).values(), expect.values()) < 1e-12);
  // With the backward scan silenced the bidirectional block equals the
  // unidirectional one.
  zero_params(reg, {"stage0.gkfa.scan_b.dt", "stage0.gkfa.scan_b.b_proj", "stage0.gkfa.scan_b.c_proj",
                    "stage0.gkfa.scan_b.skip"});
  CHECK(testing::max_abs_diff(net.gkfa_forward(0, one).values(), ad::add(one, st.scan_fwd(h)).values()) < 1e-12);
}

TEST_CASE("reconstruction") {
  const auto s = sample_with(1024, data::Category::Laptop, 4);
  nn::ParamRegistry<float> reg(7);
  model::KeypointNet<float> net(reg, ModelConfig{});
  const auto enc = net.encode(s.cloud);
  const auto k = net.detect_keypoints(enc);
  auto rec = net.reconstruct(0, k.feats, k.centered, enc.centered);
  CHECK(rec.points.shape() == ad::Shape{960, 3});
  zero_params(reg, {"stage0.rec.1"});
  rec = net.reconstruct(0, k.feats, k.centered, enc.centered);
  for (int i = 0; i < 960; ++i)
    for (int c = 0; c < 3; ++c) CHECK(rec.points.at(i, c) == k.centered.at(i / 10, c));
  CHECK(rec.l_sim.item() == doctest::Approx(ad::chamfer(enc.centered, k.centered).item()).epsilon(1e-5));

  // L_sim gradient with respect to the offsets.
  nn::ParamRegistry<double> r2(8);
  model::KeypointNet<double> small(r2, small_config());
  const auto s2 = sample_with(64, data::Category::Mug, 6);
  const auto e2 = small.encode(s2.cloud);
  const auto k2 = small.detect_keypoints(e2);
  const auto base = ad::repeat_rows(k2.centered.detach(), 2);
  ad::GradCheckOptions opt;
  opt.tol = 1e-4;
  const auto r = testing::check_away_from_kinks(opt, [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto offsets = testing::random_tensor({16, 3}, rng, -0.05, 0.05);
    return std::pair{std::function<TD()>([=] { return ad::chamfer(e2.centered, ad::add(base, offsets)); }),
                     std::vector<TD>{offsets}};
  });
  CHECK_MESSAGE(r.passed, r.message);
  CHECK(r.checked == 48);
}

TEST_CASE("stack: single stage, residual identity and FLOP scaling") {
  const auto s = sample_with(64, data::Category::Bottle, 12);
  {
    nn::ParamRegistry<double> reg(9);
    ModelConfig c = small_config();
    c.stages = 1;
    model::KeypointNet<double> net(reg, c);
    const auto enc = net.encode(s.cloud);
    const auto k = net.detect_keypoints(enc);
    const auto out = net.stack_forward(enc, k);
    const auto nbr = net.local_neighbours(k, enc, c.local_k);
    const auto one = net.gkfa_forward(0, net.lkfa_forward(0, k, k.feats, enc, nbr));
    CHECK(testing::max_abs_diff(out.feats.values(), one.values()) < 1e-12);
    CHECK(out.l_sim.item() == doctest::Approx(net.reconstruct(0, one, k.centered, enc.centered).l_sim.item()).epsilon(1e-12));
  }
  {
    nn::ParamRegistry<double> reg(10);
    model::KeypointNet<double> net(reg, small_config());
    std::vector<std::string> zero;
    for (int st = 0; st < 2; ++st) {
      const std::string p = "stage" + std::to_string(st);
      for (const char* part : {".lkfa.pos", ".lkfa.post", ".gkfa.scan_a.dt", ".gkfa.scan_a.b_proj",
                               ".gkfa.scan_a.c_proj", ".gkfa.scan_a.skip", ".gkfa.scan_b.dt",
                               ".gkfa.scan_b.b_proj", ".gkfa.scan_b.c_proj", ".gkfa.scan_b.skip"})
        zero.push_back(p + part);
    }
    for (auto [name, t] : reg.entries())
      for (const auto& p : zero)
        if (name.rfind(p, 0) == 0) std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
    const auto enc = net.encode(s.cloud);
    const auto k = net.detect_keypoints(enc);
    const auto out = net.stack_forward(enc, k);
    CHECK(testing::max_abs_diff(out.feats.values(), k.feats.values()) == 0.0);
  }
  // Default widths, S versus 2S.
  const auto big = sample_with(1024, data::Category::Bottle, 12);
  std::uint64_t flops[2];
  for (int i = 0; i < 2; ++i) {
    nn::ParamRegistry<float> reg(11);
    ModelConfig c;
    c.stages = i == 0 ? 3 : 6;
    model::KeypointNet<float> net(reg, c);
    const auto enc = net.encode(big.cloud);
    const auto k = net.detect_keypoints(enc);
    ad::NoGradGuard ng;
    ad::reset_flop_count();
    net.stack_forward(enc, k);
    flops[i] = ad::flop_count();
  }
  CHECK(flops[0] > 0);
  CHECK(static_cast<double>(flops[1]) / static_cast<double>(flops[0]) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("end-to-end forward: permutation equivariance and finite non-negative losses") {
  const auto s = sample_with(64, data::Category::Camera, 13, 77);
  nn::ParamRegistry<double> reg(12);
  model::PoseModel<double> m(reg, small_config());
  const auto a = m.forward(s, {});
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(2);
  std::shuffle(perm.begin(), perm.end(), rng);
  data::InstanceSample ps = s;
  ps.cloud = permuted(s.cloud, perm);
  const auto b = m.forward(ps, {});
  CHECK(testing::max_abs_diff(a.kpts.coords.values(), b.kpts.coords.values()) < 1e-5);
  for (auto [x, y] : {std::pair{a.terms.sep, b.terms.sep}, {a.terms.surf, b.terms.surf}, {a.terms.sim, b.terms.sim},
                      {a.terms.map, b.terms.map}, {a.terms.pose, b.terms.pose}, {a.total, b.total}}) {
    CHECK(x.item() == doctest::Approx(y.item()).epsilon(1e-5));
  }

  // Default model on generated data: every term finite and >= 0.
  nn::ParamRegistry<float> r2(13);
  model::PoseModel<float> full(r2, ModelConfig{});
  for (const auto& inst : data::generate_dataset(6, 4, data::all_categories())) {
    const auto f = full.forward(inst, {});
    for (const auto& t : {f.terms.sep, f.terms.surf, f.terms.sim, f.terms.map, f.terms.pose}) {
      CHECK(std::isfinite(t.item()));
      CHECK(t.item() >= 0.0f);
    }
    // Keypoint invariants still hold after the stages.
    CHECK(f.kpts.assign.shape() == ad::Shape{96, 1024});
  }
}

TEST_CASE("gradient of keypoint losses with respect to the query bank (32-point toy)") {
  ad::GradCheckOptions opt;
  opt.tol = 1e-4;
  opt.h = 1e-6;
  // Keypoints start bunched near the centroid, so switches sit close; the
  // loss is ~3e3 and smaller steps drown in round-off.
  opt.kink_margin_factor = 2.0;
  std::vector<std::shared_ptr<nn::ParamRegistry<double>>> keep;
  const auto r = testing::check_away_from_kinks(opt, [&](std::uint64_t seed) {
    const auto s = sample_with(32, data::Category::Mug, 14 + seed, seed);
    auto reg = std::make_shared<nn::ParamRegistry<double>>(14 + seed);
    auto net = std::make_shared<model::KeypointNet<double>>(*reg, ModelConfig::tiny());
    keep.push_back(reg);
    geo::Points centered = s.cloud.points.rowwise() - s.cloud.points.colwise().mean();
    const geo::Points ref_pts = model::fps_reference(centered, 12, s.instance_id);
    std::vector<double> rv;
    for (int i = 0; i < 12; ++i)
      for (int c = 0; c < 3; ++c) rv.push_back(ref_pts(i, c));
    const auto ref = TD::from({12, 3}, rv);
    auto loss = [=] {
      const auto enc = net->encode(s.cloud);
      const auto k = net->detect_keypoints(enc);
      const auto st = net->stack_forward(enc, k);
      return ad::add(ad::add(model::surface_loss(k.centered, ref), model::separation_loss(k.centered, 2)), st.l_sim);
    };
    return std::pair{std::function<TD()>(loss), std::vector<TD>{net->query_bank, net->query_pos}};
  });
  CHECK_MESSAGE(r.passed, r.message);
  CHECK(r.checked == 2 * 8 * 16);
}

TEST_CASE("fps reference seed ignores storage order") {
  const auto s = sample_with(64, data::Category::Can, 15);
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  const auto a = model::fps_reference(s.cloud.points, 12, 42);
  const auto b = model::fps_reference(permuted(s.cloud, perm).points, 12, 42);
  CHECK((a - b).norm() == 0.0);
  const auto c = model::fps_reference(s.cloud.points, 12, 43);
  CHECK(c.rows() == 12);
}

TEST_CASE("model config validation") {
  ModelConfig c;
  c.n_rec = 950;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.d = 250;
  c.heads = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.uni_mamba = c.attention_gkfa = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(ModelConfig{}.validate());
}
