// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all
// selected criteria pass.
//   acceptance [--only 1,2,...] [--out DIR] [--overfit-steps N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inkl/errors.hpp"
#include "inkl/geometry.hpp"
#include "inkl/metrics.hpp"
#include "inkl/model.hpp"
#include "inkl/trainer.hpp"
#include "inkl/verify.hpp"

using namespace inkl;
using geo::Points;
using TD = ad::Tensor<double>;

namespace {

struct Result {
  bool passed = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Points random_points(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Points p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = u(rng);
  return p;
}

TD rows(const std::vector<std::array<double, 3>>& r) {
  std::vector<double> v;
  for (const auto& x : r) v.insert(v.end(), x.begin(), x.end());
  return TD::from({static_cast<int>(r.size()), 3}, v);
}

TD points_tensor(const Points& p) {
  std::vector<double> v;
  for (int i = 0; i < p.rows(); ++i)
    for (int c = 0; c < 3; ++c) v.push_back(p(i, c));
  return TD::from({static_cast<int>(p.rows()), 3}, v);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add_outcomes(Result& r, const std::vector<verify::Outcome>& v) {
  int ok = 0;
  for (const auto& o : v) {
    if (o.passed) {
      ++ok;
    } else {
      r.check(false, o.name + " (" + o.detail + ")");
    }
  }
  r.note(std::to_string(ok) + "/" + std::to_string(v.size()) + " checks");
}

// 1. gradient fidelity
Result gradients() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  add_outcomes(r, verify::gradcheck_unit());
  const auto toy = verify::gradcheck_toy();
  add_outcomes(r, toy);
  r.note(toy.front().detail);
  const double s = seconds_since(t0);
  r.check(s < 120, "runtime under 2 min");
  r.note(fmt(s) + " s");
  return r;
}

// 2. scan oracle and causality
Result scan() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const auto v = verify::scan_oracle_suite(100, 2024);
  add_outcomes(r, v);
  r.note(v.front().detail);
  const double s = seconds_since(t0);
  r.check(s < 60, "runtime under 1 min");
  return r;
}

double brute_chamfer(const Points& a, const Points& b) {
  auto one = [](const Points& x, const Points& y) {
    double acc = 0;
    for (int i = 0; i < x.rows(); ++i) {
      double best = INFINITY;
      for (int j = 0; j < y.rows(); ++j) best = std::min(best, (x.row(i) - y.row(j)).squaredNorm());
      acc += best;
    }
    return acc / x.rows();
  };
  return one(a, b) + one(b, a);
}

// 3. geometry oracles
Result geometry() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> size(1, 64);
  int instances = 0;
  bool chamfer_ok = true, knn_ok = true, fps_ok = true;
  for (int trial = 0; trial < 200; ++trial, ++instances) {
    const int N = size(rng), M = size(rng);
    const Points a = random_points(N, rng);
    // Rounded coordinates force exact distance ties.
    const Points b = (random_points(M, rng) * 2).array().round().matrix();
    const double c = geo::chamfer(a, b), ref = brute_chamfer(a, b);
    chamfer_ok = chamfer_ok && std::abs(c - ref) <= 1e-12 * std::max(1.0, ref);

    const int k = std::uniform_int_distribution<int>(1, M)(rng);
    const auto got = geo::knn(a, b, k);
    for (int q = 0; q < N; ++q) {
      std::vector<std::pair<double, int>> all;
      for (int j = 0; j < M; ++j) all.push_back({(b.row(j) - a.row(q)).squaredNorm(), j});
      std::sort(all.begin(), all.end());
      for (int i = 0; i < k; ++i) knn_ok = knn_ok && got[static_cast<std::size_t>(q * k + i)] == all[i].second;
    }

    const int n = std::uniform_int_distribution<int>(1, N)(rng);
    const std::uint64_t seed = rng();
    const auto idx = geo::farthest_point_sampling(a, n, seed);
    // Brute force greedy selection with the same tie rule.
    std::vector<int> expect{static_cast<int>(seed % static_cast<std::uint64_t>(N))};
    while (static_cast<int>(expect.size()) < n) {
      int best = -1;
      double best_d = -1;
      for (int j = 0; j < N; ++j) {
        if (std::find(expect.begin(), expect.end(), j) != expect.end()) continue;
        double d = INFINITY;
        for (int e : expect) d = std::min(d, (a.row(j) - a.row(e)).squaredNorm());
        if (d > best_d) best_d = d, best = j;
      }
      expect.push_back(best);
    }
    fps_ok = fps_ok && idx == expect;
  }
  r.check(chamfer_ok, "chamfer equals brute force");
  r.check(knn_ok, "knn equals full sort");
  r.check(fps_ok, "fps equals brute-force greedy selection");
  r.note(std::to_string(instances) + " random instances, N <= 64");

  double worst_fit = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Points src = random_points(std::uniform_int_distribution<int>(3, 64)(rng), rng);
    const double c = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
    const geo::Mat3 R = geo::uniform_rotation(rng);
    const geo::Vec3 t(std::uniform_real_distribution<double>(-1, 1)(rng), 0.3, -0.2);
    const Points dst = (c * src * R.transpose()).rowwise() + t.transpose();
    const auto fit = geo::umeyama_fit(src, dst);
    worst_fit = std::max({worst_fit, std::abs(fit.c - c), (fit.R - R).cwiseAbs().maxCoeff(),
                          (fit.t - t).cwiseAbs().maxCoeff()});
  }
  r.check(worst_fit < 1e-9, "umeyama recovers transforms to 1e-9");
  r.note("umeyama worst " + fmt(worst_fit));

  std::uniform_real_distribution<double> ext(0.05, 0.4), off(-0.2, 0.2);
  double worst_iou = 0;
  for (int i = 0; i < 20; ++i) {
    geo::SimTransform a, b;
    a.t = geo::Vec3(off(rng), off(rng), off(rng));
    a.s = geo::Vec3(ext(rng), ext(rng), ext(rng));
    b.t = a.t + geo::Vec3(off(rng), off(rng), off(rng)) * 0.5;
    b.s = geo::Vec3(ext(rng), ext(rng), ext(rng));
    worst_iou = std::max(worst_iou, std::abs(metrics::iou3d_monte_carlo(a, b) - metrics::iou3d_axis_aligned(a, b)));
  }
  r.check(worst_iou < 0.01, "Monte-Carlo IoU within 0.01 of the exact volume");
  r.note("IoU worst " + fmt(worst_iou));
  r.check(seconds_since(t0) < 120, "runtime under 2 min");
  return r;
}

// 4. loss semantics
Result losses() {
  Result r;
  const auto square = rows({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  const auto clustered = rows({{0, 0, 0}, {0.05, 0, 0}, {0, 0.05, 0}, {0.05, 0.05, 0.01}});
  const double sq = model::separation_loss(square, 2).item();
  const double cl = model::separation_loss(clustered, 2).item();
  r.check(sq == 1.0, "square corners give L_sep exactly 1");
  r.check(cl > sq, "clustered L_sep above spread L_sep");
  r.note("L_sep square " + fmt(sq) + ", clustered " + fmt(cl));

  // Keypoints placed on the FPS reference points of a generated cloud.
  auto rng = data::instance_rng(4, 0);
  data::GeneratorConfig g;
  g.points = 256;
  const auto s = data::generate_instance(data::Category::Mug, rng, 0, g);
  const Points centered = s.cloud.points.rowwise() - s.cloud.points.colwise().mean();
  const auto ref = points_tensor(model::fps_reference(centered, 24, s.instance_id));
  const double on = model::surface_loss(ref, ref).item();
  r.check(on == 0.0, "L_surf zero with keypoints on the reference points");

  std::vector<std::array<double, 3>> ring, center;
  for (int i = 0; i < 16; ++i) {
    const double a = 2 * M_PI * i / 16;
    ring.push_back({std::cos(a), std::sin(a), 0});
    center.push_back({0, 0, 0});
  }
  const double collapsed = model::surface_loss(rows(center), rows(ring)).item();
  r.check(collapsed > 0.1, "L_surf above 0.1 when keypoints collapse to the ring centroid");
  r.note("L_surf on refs " + fmt(on) + ", collapsed " + fmt(collapsed));
  return r;
}

// 5. FSF/PSF mechanics
Result arms() {
  Result r;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(9 * 7);
  for (auto& x : v) x = u(rng);
  const TD x = TD::from({9, 7}, v);
  const TD back = model::fsf(model::fsf(x));
  r.check(std::equal(back.values().begin(), back.values().end(), x.values().begin()), "fsf is an involution");

  std::vector<double> w(8 * 16);
  for (auto& e : w) e = u(rng);
  const TD feats = TD::from({8, 16}, w);
  struct Arm {
    const char* name;
    bool uni, attention, psf;
  };
  std::int64_t bi = 0, uni = 0, psf = 0, attn = 0, scan_b = 0;
  for (const Arm& arm : {Arm{"bi-fsf", false, false, false}, Arm{"uni", true, false, false},
                         Arm{"psf", false, false, true}, Arm{"attention", false, true, false}}) {
    model::ModelConfig c = model::ModelConfig::tiny();
    c.uni_mamba = arm.uni;
    c.attention_gkfa = arm.attention;
    c.psf_instead_of_fsf = arm.psf;
    nn::ParamRegistry<double> reg(6);
    model::KeypointNet<double> net(reg, c);
    const std::string name = arm.name;
    if (name == "bi-fsf") bi = reg.element_count(), scan_b = reg.element_count("stage0.gkfa.scan_b");
    if (name == "uni") uni = reg.element_count();
    if (name == "psf") psf = reg.element_count();
    if (name == "attention") attn = reg.element_count();
    for (auto [pname, t] : reg.entries()) {
      const bool scan = pname.find(".gkfa.scan") != std::string::npos && pname.find("a_log") == std::string::npos;
      const bool attn_out = pname.find(".gkfa.attn.o") != std::string::npos;
      if (scan || attn_out) std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
    }
    bool identity = true;
    for (int st = 0; st < c.stages; ++st) {
      const TD y = net.gkfa_forward(st, feats);
      identity = identity && std::equal(y.values().begin(), y.values().end(), feats.values().begin());
    }
    r.check(identity, std::string("zeroed scans give identity GKFA for arm ") + arm.name);
  }
  const int stages = model::ModelConfig::tiny().stages;
  r.check(psf == bi, "psf flag keeps the parameter count");
  r.check(scan_b > 0 && bi - uni == stages * scan_b, "uni flag removes exactly one scan per stage");
  r.note("params bi " + std::to_string(bi) + ", uni " + std::to_string(uni) + ", psf " + std::to_string(psf) +
         ", attention " + std::to_string(attn));
  return r;
}

// 6. equation constants
Result constants() {
  Result r;
  const train::TrainConfig c;
  const auto& m = c.model;
  r.check(m.points == 1024 && m.kpts == 96 && m.local_k == 4 && m.stages == 12 && m.n_rec == 960 &&
              m.n_fps == 120 && m.sep_m == 2 && m.d == 256,
          "model defaults N, N_kpt, K, S, N_rec, N_fps, M, d");
  r.check(c.weights.sep == 10.0 && c.weights.surf == 10.0 && c.weights.sim == 15.0 && c.weights.map == 2.0 &&
              c.weights.pose == 0.3,
          "loss weights (10, 10, 15, 2, 0.3)");
  r.check(c.lr_min == 2e-5 && c.lr_max == 5e-4, "lr bounds (2e-5, 5e-4)");
  const std::string dump = train::dump_config(c);
  for (const char* line : {"model.points=1024\n", "model.kpts=96\n", "model.local_k=4\n", "model.stages=12\n",
                           "model.n_rec=960\n", "model.n_fps=120\n", "model.sep_m=2\n", "model.d=256\n",
                           "loss.w_sep=10\n", "loss.w_surf=10\n", "loss.w_sim=15\n", "loss.w_map=2\n",
                           "loss.w_pose=0.3\n", "train.lr_min=2e-05\n", "train.lr_max=5e-04\n"}) {
    r.check(dump.find(line) != std::string::npos, std::string("dump contains ") + line);
  }
  const auto back = train::parse_config(dump);
  r.check(train::dump_config(back) == dump, "dump parses back to the same config");
  return r;
}

// 7. overfit run
Result overfit(const std::filesystem::path& out, int steps) {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  train::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_steps = steps;
  cfg.precision = 32;
  // Memorization of the training instances: evaluation is on the same,
  // unaugmented samples.
  cfg.augment = false;
  cfg.seed = 7;
  const auto data = data::generate_dataset(8, 7, data::all_categories());
  train::Trainer<float> trainer(cfg, data);
  trainer.on_step = [&](const train::StepLog& l) {
    if (l.step % 250 == 0 || l.step == 1)
      std::printf("    step %d total %.4g (sep %.3g surf %.3g sim %.3g map %.3g pose %.3g) %.0f s\n", l.step,
                  l.total, l.sep, l.surf, l.sim, l.map, l.pose, seconds_since(t0));
    std::fflush(stdout);
  };
  const auto res = trainer.run(out);
  r.check(!res.aborted, "training finished (" + res.message + ")");
  if (res.aborted || res.log.size() < static_cast<std::size_t>(std::min(steps, 100))) return r;
  const auto rep = train::evaluate(trainer.model(), data);
  const double t10 = rep.overall.at("10deg5cm"), t5 = rep.overall.at("5deg5cm");
  r.check(t10 == 100.0, "100% at 10deg5cm");
  r.check(t5 >= 75.0, ">= 75% at 5deg5cm");
  const double at100 = res.log[static_cast<std::size_t>(std::min(steps, 100)) - 1].total;
  const double last = res.log.back().total;
  r.check(last < 0.2 * at100, "final total loss below 20% of step 100");
  std::ostringstream os;
  os << "10deg5cm " << t10 << ", 5deg5cm " << t5 << ", IoU50 " << rep.overall.at("IoU50") << ", loss step 100 "
     << at100 << " -> step " << res.log.back().step << " " << last;
  r.note(os.str());
  for (const auto& row : rep.rows) r.note(row.category + ": rot " + fmt(row.rot_deg) + " deg, trans " + fmt(row.trans_cm) + " cm");
  const double mins = seconds_since(t0) / 60;
  r.note(fmt(mins) + " min (desktop target 30 min)");
  return r;
}

// 8. metric protocol
Result metric_protocol() {
  Result r;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> theta(0, 2 * M_PI), u(0, 1);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    geo::SimTransform gt, pred;
    gt.R = geo::uniform_rotation(rng);
    pred.R = geo::uniform_rotation(rng);
    const double base = metrics::pose_errors(pred, gt, true).rot_deg;
    for (int k = 0; k < 50; ++k) {
      auto p = pred;
      p.R = pred.R * geo::rotation_about(geo::Vec3::UnitY(), theta(rng));
      worst = std::max(worst, std::abs(metrics::pose_errors(p, gt, true).rot_deg - base));
    }
  }
  r.check(worst < 0.05, "symmetric rotation error invariant to rotations about the symmetry axis");
  r.note("axis invariance worst " + fmt(worst) + " deg");

  bool monotone = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<metrics::EvalRow> rowsv;
    const int n = 1 + static_cast<int>(u(rng) * 40);
    for (int i = 0; i < n; ++i)
      rowsv.push_back({data::category_name(static_cast<data::Category>(i % 6)), u(rng), 20 * u(rng), 8 * u(rng), {}});
    const auto rep = metrics::aggregate(rowsv);
    for (const auto* m : {&rep.overall, &rep.mean}) {
      monotone = monotone && m->at("IoU25") >= m->at("IoU50") && m->at("IoU50") >= m->at("IoU75") &&
                 m->at("10deg5cm") >= m->at("5deg5cm") && m->at("5deg5cm") >= m->at("5deg2cm") &&
                 m->at("10deg5cm") >= m->at("10deg2cm") && m->at("10deg2cm") >= m->at("5deg2cm");
    }
  }
  r.check(monotone, "aggregates monotone across nested thresholds");
  using C = std::array<std::uint8_t, 3>;
  r.check(metrics::error_color(0.0) == C{0, 255, 0}, "error 0 maps to (0,255,0)");
  r.check(metrics::error_color(0.2) == C{255, 0, 0}, "error 0.2 maps to (255,0,0)");
  return r;
}

// 9. efficiency trend
Result efficiency() {
  Result r;
  const int lens[] = {64, 256, 1024};
  std::map<std::string, std::vector<double>> flops;
  std::printf("    %-10s %6s %14s %10s %10s\n", "arm", "L", "FLOPs", "min ms", "median ms");
  for (const auto& arm : verify::bench_arms()) {
    for (int L : lens) {
      const auto row = verify::bench_arm(arm, L, 256, 3);
      flops[arm].push_back(static_cast<double>(row.flops));
      std::printf("    %-10s %6d %14llu %10.2f %10.2f\n", arm.c_str(), L, static_cast<unsigned long long>(row.flops),
                  row.min_ms, row.median_ms);
    }
  }
  for (int i = 0; i + 1 < 3; ++i) {
    const double growth = lens[i + 1] / static_cast<double>(lens[i]);
    const double att = flops["attention"][i + 1] / flops["attention"][i];
    const double bi = flops["bi-mamba"][i + 1] / flops["bi-mamba"][i];
    const double uni = flops["uni-mamba"][i + 1] / flops["uni-mamba"][i];
    r.check(att > bi && att > uni, "attention FLOP ratio above scan ratios");
    r.check(att > growth, "attention grows superlinearly");
    r.check(std::abs(bi - growth) < 0.05 * growth && std::abs(uni - growth) < 0.05 * growth,
            "scan FLOPs grow linearly");
    r.note("x" + fmt(growth) + " length: attention x" + fmt(att) + ", bi x" + fmt(bi) + ", uni x" + fmt(uni));
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only;
  std::string out = (std::filesystem::temp_directory_path() / "inkl_acceptance").string();
  int overfit_steps = 5000;
  app.add_option("--only", only, "comma separated criterion numbers");
  app.add_option("--out", out, "directory for the overfit run");
  app.add_option("--overfit-steps", overfit_steps, "steps of the overfit run")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) selected.insert(std::stoi(tok));
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"gradient fidelity", gradients},
      {"scan correctness", scan},
      {"geometry oracles", geometry},
      {"loss semantics", losses},
      {"FSF/PSF mechanics", arms},
      {"equation constants", constants},
      {"overfit smoke", [&] { return overfit(out, overfit_steps); }},
      {"metric protocol", metric_protocol},
      {"efficiency trend", efficiency},
  };
  bool all = true;
  for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) {
    if (!selected.count(i)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = criteria[static_cast<std::size_t>(i - 1)].second();
    } catch (const std::exception& e) {
      r.passed = false;
      r.note(std::string("error: ") + e.what());
    }
    all = all && r.passed;
    std::printf("criterion %d %s: %s (%.1f s)\n", i, r.passed ? "PASS" : "FAIL",
                criteria[static_cast<std::size_t>(i - 1)].first.c_str(), seconds_since(t0));
    for (const auto& n : r.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
