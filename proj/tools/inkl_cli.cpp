// Command line entry point. Exit codes: 0 ok, 1 failed check, 2 usage or IO error.

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inkl/errors.hpp"
#include "inkl/metrics.hpp"
#include "inkl/synthdata.hpp"
#include "inkl/trainer.hpp"
#include "inkl/verify.hpp"

namespace fs = std::filesystem;
using namespace inkl;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kUsage = 2;

// Raised for bad input that is not one of the library's error types.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_flags(const CLI::App& sub) {
  std::printf("[%s] resolved flags\n", sub.get_name().c_str());
  std::istringstream in(sub.config_to_str(true, false));
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '[') std::printf("  %s\n", line.c_str());
}

std::vector<data::InstanceSample> load_data(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("data file '" + path + "' does not exist");
  return data::read_dataset(path);
}

std::vector<data::Category> parse_categories(const std::string& list) {
  if (list.empty() || list == "all") return data::all_categories();
  std::vector<data::Category> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) out.push_back(data::parse_category(tok));
  if (out.empty()) throw UsageError("no categories in '" + list + "'");
  return out;
}

// Names as printed in result tables.
std::string display_name(const std::string& m) {
  const auto pos = m.find("deg");
  return pos == std::string::npos ? m : m.substr(0, pos) + "°" + m.substr(pos + 3);
}

void print_report(const metrics::EvalReport& rep) {
  std::printf("%-10s", "category");
  for (const auto& m : metrics::metric_names()) {
    const std::string d = display_name(m);
    // The degree sign is two bytes but one column.
    std::printf(" %*s", d == m ? 8 : 9, d.c_str());
  }
  std::printf("\n");
  auto line = [](const std::string& name, const std::map<std::string, double>& vals) {
    std::printf("%-10s", name.c_str());
    for (const auto& m : metrics::metric_names()) std::printf(" %8.1f", vals.at(m));
    std::printf("\n");
  };
  for (const auto& [cat, vals] : rep.per_category) line(cat, vals);
  line("mean", rep.mean);
  line("overall", rep.overall);
}

int gen_data(const std::string& out, int count, std::uint64_t seed, const std::string& cats) {
  const auto categories = parse_categories(cats);
  const auto samples = data::generate_dataset(count, seed, categories);
  data::write_dataset(samples, out);
  const std::string manifest = out + ".manifest";
  data::write_manifest(manifest, seed, samples, categories);
  const auto back = data::read_dataset(out);
  if (data::encode_dataset(back) != data::encode_dataset(samples)) {
    std::fprintf(stderr, "round trip of '%s' does not reproduce the samples\n", out.c_str());
    return kCheckFailed;
  }
  std::printf("wrote %d samples to %s (manifest %s), round trip verified\n", count, out.c_str(), manifest.c_str());
  return kOk;
}

template <typename T>
int run_training(const train::TrainConfig& cfg, std::vector<data::InstanceSample> data, const std::string& out,
                 const std::string& resume) {
  train::Trainer<T> trainer(cfg, std::move(data));
  if (!resume.empty()) {
    trainer.resume(resume);
    std::printf("resumed at step %d\n", trainer.step());
  }
  trainer.on_step = [](const train::StepLog& l) {
    if (l.step % 50 == 0 || l.step == 1) {
      std::printf("step %5d lr %.3g total %.5g sep %.4g surf %.4g sim %.4g map %.4g pose %.4g\n", l.step, l.lr,
                  l.total, l.sep, l.surf, l.sim, l.map, l.pose);
      std::fflush(stdout);
    }
  };
  const auto res = trainer.run(out);
  if (res.aborted) {
    std::fprintf(stderr, "training stopped: %s (last checkpoint %s)\n", res.message.c_str(),
                 res.last_checkpoint.string().c_str());
    return kCheckFailed;
  }
  std::printf("finished at step %d, checkpoint %s\n", res.steps_completed, res.last_checkpoint.string().c_str());
  return kOk;
}

int train_cmd(const std::string& data_path, const std::string& config, const std::string& out,
              const std::string& resume) {
  train::TrainConfig cfg = config.empty() ? train::TrainConfig{} : train::load_config(config);
  if (const char* env = std::getenv("INKL_SEED")) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0') throw UsageError(std::string("INKL_SEED is not an integer: ") + env);
    cfg.seed = v;
  }
  cfg.validate();
  auto data = load_data(data_path);
  std::printf("resolved config\n%s", train::dump_config(cfg).c_str());
  fs::create_directories(out);
  return cfg.precision == 64 ? run_training<double>(cfg, std::move(data), out, resume)
                             : run_training<float>(cfg, std::move(data), out, resume);
}

int eval_cmd(const std::string& data_path, const std::string& ckpt, const std::string& out,
             const std::string& config) {
  const auto data = load_data(data_path);
  train::TrainConfig cfg;
  const train::TrainConfig* override_cfg = nullptr;
  if (!config.empty()) {
    cfg = train::load_config(config);
    override_cfg = &cfg;
  }
  const auto rep = train::evaluate_checkpoint(ckpt, data, override_cfg);
  metrics::write_report_jsonl(rep, out);
  print_report(rep);
  std::printf("report written to %s\n", out.c_str());
  return kOk;
}

int gradcheck_cmd(const std::string& scale, bool tamper) {
  const double s = tamper ? 1.01 : 1.0;
  std::vector<verify::Outcome> v;
  if (scale == "unit") {
    v = verify::gradcheck_unit(s);
  } else if (scale == "toy") {
    v = verify::gradcheck_toy(s);
  } else {
    v = verify::gradcheck_full_tiny(s);
  }
  int failed = 0;
  for (const auto& o : v) {
    std::printf("%s  %s: %s\n", o.passed ? "ok  " : "FAIL", o.name.c_str(), o.detail.c_str());
    failed += !o.passed;
  }
  std::printf("%zu checks, %d failed\n", v.size(), failed);
  return verify::all_passed(v) ? kOk : kCheckFailed;
}

int bench_cmd(const std::vector<std::string>& arms, const std::vector<int>& lens, int dim, int reps) {
  std::printf("%-10s %6s %6s %14s %10s %10s %10s\n", "arm", "L", "dim", "FLOPs", "FLOP x", "min ms", "median ms");
  for (const auto& arm : arms) {
    double prev = 0;
    for (int L : lens) {
      const auto r = verify::bench_arm(arm, L, dim, reps);
      const double f = static_cast<double>(r.flops);
      std::printf("%-10s %6d %6d %14llu %10s %10.3f %10.3f\n", arm.c_str(), L, dim,
                  static_cast<unsigned long long>(r.flops), prev > 0 ? std::to_string(f / prev).substr(0, 6).c_str() : "-",
                  r.min_ms, r.median_ms);
      prev = f;
    }
  }
  return kOk;
}

int plot_cmd(const std::string& data_path, const std::string& ckpt, int instance, const std::string& out) {
  const auto data = load_data(data_path);
  if (instance < 0 || instance >= static_cast<int>(data.size()))
    throw UsageError("instance " + std::to_string(instance) + " out of range [0, " + std::to_string(data.size()) + ")");
  const auto& s = data[static_cast<std::size_t>(instance)];
  const auto p = train::predict_checkpoint(ckpt, s);
  auto colors = metrics::nocs_error_colors(p.kpt_nocs_pred, p.kpt_nocs_gt);
  const geo::Points cloud = geo::to_nocs(s.cloud.points, s.gt);
  geo::Points all(p.kpt_nocs_pred.rows() + cloud.rows(), 3);
  all << p.kpt_nocs_pred, cloud;
  colors.resize(static_cast<std::size_t>(all.rows()), {128, 128, 128});
  metrics::write_colored_ply(all, colors, out);
  double worst = 0;
  for (int i = 0; i < p.kpt_nocs_pred.rows(); ++i)
    worst = std::max(worst, (p.kpt_nocs_pred.row(i) - p.kpt_nocs_gt.row(i)).norm());
  std::printf("wrote %ld keypoints and %ld cloud points (%s) to %s; max keypoint NOCS error %.4f\n",
              static_cast<long>(p.kpt_nocs_pred.rows()), static_cast<long>(cloud.rows()),
              data::category_name(s.category).c_str(), out.c_str(), worst);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keypoint-based category-level pose estimation toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset and its manifest");
  std::string gen_out, gen_cats = "all";
  int gen_count = 100;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "dataset file")->required();
  gen->add_option("--count", gen_count, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--categories", gen_cats, "comma separated categories or 'all'");

  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_config, tr_out, tr_resume;
  tr->add_option("--data", tr_data, "dataset file")->required();
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_data, ev_ckpt, ev_out, ev_config;
  ev->add_option("--data", ev_data, "dataset file")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  ev->add_option("--out", ev_out, "report file (JSON lines)")->required();
  ev->add_option("--config", ev_config, "config overriding the stored one");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  std::string gc_scale = "unit";
  bool gc_tamper = false;
  gc->add_option("--scale", gc_scale, "unit, toy or full-tiny")->check(CLI::IsMember({"unit", "toy", "full-tiny"}));
  gc->add_flag("--tamper", gc_tamper, "scale analytic gradients by 1.01 (must fail)");

  auto* bn = app.add_subcommand("bench", "FLOPs and wall time of the global aggregation arms");
  std::vector<std::string> bn_arms{"bi-mamba", "uni-mamba", "attention"};
  std::vector<int> bn_lens{64, 256, 1024};
  int bn_dim = 256, bn_reps = 3;
  bn->add_option("--arm", bn_arms, "arms to run")->check(CLI::IsMember({"bi-mamba", "uni-mamba", "attention"}));
  bn->add_option("--len", bn_lens, "sequence lengths")->check(CLI::PositiveNumber);
  bn->add_option("--dim", bn_dim, "feature width")->check(CLI::PositiveNumber);
  bn->add_option("--reps", bn_reps, "timed repetitions")->check(CLI::PositiveNumber);

  auto* pk = app.add_subcommand("plot-keypoints", "PLY of NOCS keypoints colored by error");
  std::string pk_data, pk_ckpt, pk_out;
  int pk_instance = 0;
  pk->add_option("--data", pk_data, "dataset file")->required();
  pk->add_option("--ckpt", pk_ckpt, "checkpoint")->required();
  pk->add_option("--instance", pk_instance, "sample index");
  pk->add_option("--out", pk_out, "PLY file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) print_flags(*sub);
    if (gen->parsed()) return gen_data(gen_out, gen_count, gen_seed, gen_cats);
    if (tr->parsed()) return train_cmd(tr_data, tr_config, tr_out, tr_resume);
    if (ev->parsed()) return eval_cmd(ev_data, ev_ckpt, ev_out, ev_config);
    if (gc->parsed()) return gradcheck_cmd(gc_scale, gc_tamper);
    if (bn->parsed()) return bench_cmd(bn_arms, bn_lens, bn_dim, bn_reps);
    if (pk->parsed()) return plot_cmd(pk_data, pk_ckpt, pk_instance, pk_out);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
