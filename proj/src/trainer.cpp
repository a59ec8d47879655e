#include "inkl/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "inkl/checkpoint.hpp"
#include "inkl/errors.hpp"

namespace inkl::train {

namespace {

// ---- config table --------------------------------------------------------

struct Key {
  std::string name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& text) {
  V v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError("'" + text + "' is not a valid number");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("'" + text + "' is not a boolean (true/false)");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename F>
Key int_key(std::string name, F field) {
  return {name, [field](TrainConfig& c, const std::string& s) { field(c) = parse_number<int>(s); },
          [field](const TrainConfig& c) { return std::to_string(field(const_cast<TrainConfig&>(c))); }};
}
template <typename F>
Key u64_key(std::string name, F field) {
  return {name, [field](TrainConfig& c, const std::string& s) { field(c) = parse_number<std::uint64_t>(s); },
          [field](const TrainConfig& c) { return std::to_string(field(const_cast<TrainConfig&>(c))); }};
}
template <typename F>
Key real_key(std::string name, F field) {
  return {name, [field](TrainConfig& c, const std::string& s) { field(c) = parse_number<double>(s); },
          [field](const TrainConfig& c) { return fmt(field(const_cast<TrainConfig&>(c))); }};
}
template <typename F>
Key bool_key(std::string name, F field) {
  return {name, [field](TrainConfig& c, const std::string& s) { field(c) = parse_bool(s); },
          [field](const TrainConfig& c) { return std::string(field(const_cast<TrainConfig&>(c)) ? "true" : "false"); }};
}

#define FIELD(expr) [](TrainConfig& c) -> auto& { return expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      int_key("train.batch_size", FIELD(c.batch_size)),
      real_key("train.lr_min", FIELD(c.lr_min)),
      real_key("train.lr_max", FIELD(c.lr_max)),
      int_key("train.cycle_len", FIELD(c.cycle_len)),
      int_key("train.max_steps", FIELD(c.max_steps)),
      u64_key("train.seed", FIELD(c.seed)),
      real_key("train.clip_norm", FIELD(c.clip_norm)),
      int_key("train.checkpoint_every", FIELD(c.checkpoint_every)),
      bool_key("train.augment", FIELD(c.augment)),
      int_key("train.precision", FIELD(c.precision)),
      int_key("train.workers", FIELD(c.workers)),
      real_key("aug.max_rotation_deg", FIELD(c.aug.max_rotation_deg)),
      real_key("aug.max_shift", FIELD(c.aug.max_shift)),
      real_key("aug.min_scale", FIELD(c.aug.min_scale)),
      real_key("aug.max_scale", FIELD(c.aug.max_scale)),
      real_key("loss.w_sep", FIELD(c.weights.sep)),
      real_key("loss.w_surf", FIELD(c.weights.surf)),
      real_key("loss.w_sim", FIELD(c.weights.sim)),
      real_key("loss.w_map", FIELD(c.weights.map)),
      real_key("loss.w_pose", FIELD(c.weights.pose)),
      bool_key("loss.disable_surf", FIELD(c.disable_surf)),
      bool_key("loss.disable_sep", FIELD(c.disable_sep)),
      bool_key("loss.agpose_losses", FIELD(c.agpose_losses)),
      int_key("model.points", FIELD(c.model.points)),
      int_key("model.d", FIELD(c.model.d)),
      int_key("model.d_sem", FIELD(c.model.d_sem)),
      int_key("model.d_geo", FIELD(c.model.d_geo)),
      int_key("model.d_pos", FIELD(c.model.d_pos)),
      int_key("model.appearance", FIELD(c.model.appearance)),
      int_key("model.kpts", FIELD(c.model.kpts)),
      int_key("model.local_k", FIELD(c.model.local_k)),
      int_key("model.stages", FIELD(c.model.stages)),
      int_key("model.n_rec", FIELD(c.model.n_rec)),
      int_key("model.n_fps", FIELD(c.model.n_fps)),
      int_key("model.sep_m", FIELD(c.model.sep_m)),
      int_key("model.heads", FIELD(c.model.heads)),
      int_key("model.iakd_rounds", FIELD(c.model.iakd_rounds)),
      int_key("model.ffn_mult", FIELD(c.model.ffn_mult)),
      int_key("model.ssm_state", FIELD(c.model.ssm_state)),
      int_key("model.encoder_k", FIELD(c.model.encoder_k)),
      int_key("model.rec_hidden", FIELD(c.model.rec_hidden)),
      int_key("model.nocs_hidden", FIELD(c.model.nocs_hidden)),
      int_key("model.pose_hidden", FIELD(c.model.pose_hidden)),
      real_key("model.cosine_scale", FIELD(c.model.cosine_scale)),
      real_key("model.phi", FIELD(c.model.phi)),
      real_key("model.group_eps", FIELD(c.model.group_eps)),
      real_key("model.sep_eps", FIELD(c.model.sep_eps)),
      bool_key("model.uni_mamba", FIELD(c.model.uni_mamba)),
      bool_key("model.attention_gkfa", FIELD(c.model.attention_gkfa)),
      bool_key("model.psf_instead_of_fsf", FIELD(c.model.psf_instead_of_fsf)),
      bool_key("model.reflip_backward", FIELD(c.model.reflip_backward)),
      bool_key("model.zero_pos_embed", FIELD(c.model.zero_pos_embed)),
  };
  return k;
}

#undef FIELD

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

template <typename T>
std::vector<T> flat_grad(const ad::Tensor<T>& t) {
  std::vector<T> g = t.grad();
  if (g.empty()) g.assign(static_cast<std::size_t>(t.numel()), T(0));
  return g;
}

void write_atomic(const std::filesystem::path& path, const std::vector<io::Blob>& blobs) {
  auto tmp = path;
  tmp += ".tmp";
  io::write_checkpoint(tmp, blobs);
  std::filesystem::rename(tmp, path);
}

}  // namespace

// ---- config --------------------------------------------------------------

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(batch_size > 0, "train.batch_size must be positive");
  require(lr_min > 0 && lr_min < lr_max, "train.lr_min must be positive and below train.lr_max");
  require(cycle_len > 0, "train.cycle_len must be positive");
  require(max_steps >= 0, "train.max_steps must be non-negative");
  require(clip_norm >= 0, "train.clip_norm must be non-negative");
  require(checkpoint_every > 0, "train.checkpoint_every must be positive");
  require(precision == 32 || precision == 64, "train.precision must be 32 or 64");
  require(workers >= 0, "train.workers must be non-negative");
  for (double w : {weights.sep, weights.surf, weights.sim, weights.map, weights.pose})
    require(w >= 0 && std::isfinite(w), "loss weights must be finite and non-negative");
  require(aug.max_rotation_deg >= 0 && aug.max_shift >= 0 && aug.min_scale > 0 && aug.min_scale <= aug.max_scale,
          "augmentation ranges are inconsistent");
  model.validate();
}

model::LossOptions TrainConfig::loss_options() const {
  model::LossOptions o;
  o.weights = weights;
  o.disable_surf = disable_surf;
  o.disable_sep = disable_sep;
  o.agpose_losses = agpose_losses;
  return o;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto& ks = keys();
    const auto it = std::find_if(ks.begin(), ks.end(), [&](const Key& k) { return k.name == key; });
    if (it == ks.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->set(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += k.name + "=" + k.get(cfg) + "\n";
  return out;
}

double cyclical_lr(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw ArgumentError("cyclical_lr needs a non-negative step");
  const std::int64_t period = 2 * static_cast<std::int64_t>(cfg.cycle_len);
  const std::int64_t pos = step % period;
  const double frac = static_cast<double>(pos <= cfg.cycle_len ? pos : period - pos) / cfg.cycle_len;
  return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * frac;
}

// ---- Adam ----------------------------------------------------------------

template <typename T>
void adam_step(nn::ParamRegistry<T>& params, const std::vector<std::vector<T>>& grads, double lr, AdamState& state,
               const AdamOptions& opt) {
  const auto& entries = params.entries();
  if (grads.size() != entries.size()) {
    throw DimensionError("adam_step got " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(entries.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : entries) {
      state.m.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
      state.v.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto n = static_cast<std::size_t>(entries[i].second.numel());
    if (grads[i].size() != n || state.m[i].size() != n) {
      throw DimensionError("adam_step: gradient for '" + entries[i].first + "' has " +
                           std::to_string(grads[i].size()) + " values, parameter has " + std::to_string(n));
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto param = entries[i].second;
    auto p = param.values_mut();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * gj;
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * gj * gj;
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) - lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
  }
}

// ---- trainer -------------------------------------------------------------

template <typename T>
struct Trainer<T>::Worker {
  std::unique_ptr<nn::ParamRegistry<T>> reg;
  std::unique_ptr<model::PoseModel<T>> model;
};

template <typename T>
Trainer<T>::Trainer(const TrainConfig& cfg, std::vector<data::InstanceSample> dataset)
    : cfg_(cfg), data_(std::move(dataset)), sampler_(mix(cfg.seed ^ 0x5A4D504Cull)) {
  cfg_.validate();
  if (data_.empty()) throw ArgumentError("training needs at least one sample");
  for (const auto& s : data_) {
    if (s.cloud.size() != cfg_.model.points) {
      throw ConfigError("model.points=" + std::to_string(cfg_.model.points) + " but a sample has " +
                        std::to_string(s.cloud.size()) + " points");
    }
  }
  reg_ = std::make_unique<nn::ParamRegistry<T>>(cfg_.seed);
  model_ = std::make_unique<model::PoseModel<T>>(*reg_, cfg_.model);
  int w = cfg_.workers;
  if (w == 0) w = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  w = std::min(w, cfg_.batch_size);
  // Worker 0 runs on the master parameters; the others on shadow copies.
  for (int i = 1; i < w; ++i) {
    auto wk = std::make_unique<Worker>();
    wk->reg = std::make_unique<nn::ParamRegistry<T>>(cfg_.seed);
    wk->model = std::make_unique<model::PoseModel<T>>(*wk->reg, cfg_.model);
    workers_.push_back(std::move(wk));
  }
}

template <typename T>
Trainer<T>::~Trainer() = default;

template <typename T>
StepLog Trainer<T>::train_step() {
  const int B = cfg_.batch_size;
  const int N = static_cast<int>(data_.size());
  std::vector<int> idx(static_cast<std::size_t>(B));
  if (B <= N) {
    std::vector<int> pool(static_cast<std::size_t>(N));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < B; ++i) {
      std::uniform_int_distribution<int> pick(i, N - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(sampler_))]);
      idx[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
    }
  } else {
    std::uniform_int_distribution<int> pick(0, N - 1);
    for (auto& i : idx) i = pick(sampler_);
  }

  const auto opts = cfg_.loss_options();
  std::vector<std::vector<std::vector<T>>> slot_grads(static_cast<std::size_t>(B));
  std::vector<std::array<double, 6>> slot_terms(static_cast<std::size_t>(B));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(B));
  const int W = 1 + static_cast<int>(workers_.size());

  auto run_slots = [&](int w) {
    nn::ParamRegistry<T>& reg = w == 0 ? *reg_ : *workers_[static_cast<std::size_t>(w - 1)]->reg;
    const model::PoseModel<T>& m = w == 0 ? *model_ : *workers_[static_cast<std::size_t>(w - 1)]->model;
    for (int b = w; b < B; b += W) {
      try {
        const auto& base = data_[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])];
        std::mt19937_64 rng(mix(mix(cfg_.seed) ^ mix(static_cast<std::uint64_t>(step_) * 0x100000001B3ull + b)));
        const data::InstanceSample s = cfg_.augment ? data::augment(base, rng, cfg_.aug) : base;
        reg.zero_grad();
        const auto f = m.forward(s, opts);
        f.total.backward();
        auto& g = slot_grads[static_cast<std::size_t>(b)];
        for (const auto& [name, t] : reg.entries()) g.push_back(flat_grad(t));
        slot_terms[static_cast<std::size_t>(b)] = {f.terms.sep.item(), f.terms.surf.item(), f.terms.sim.item(),
                                                  f.terms.map.item(),  f.terms.pose.item(), f.total.item()};
      } catch (...) {
        errors[static_cast<std::size_t>(b)] = std::current_exception();
      }
    }
  };

  if (W == 1) {
    run_slots(0);
  } else {
    for (auto& wk : workers_) {
      const auto& src = reg_->entries();
      const auto& dst = wk->reg->entries();
      for (std::size_t i = 0; i < src.size(); ++i) {
        auto d = dst[i].second;
        std::ranges::copy(src[i].second.values(), d.values_mut().begin());
      }
    }
    std::vector<std::thread> threads;
    for (int w = 1; w < W; ++w) threads.emplace_back(run_slots, w);
    run_slots(0);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (step_ == inject_nan_at_step) throw NumericError("loss term L_sep is not finite (nan, injected)");

  // Batch mean, reduced in slot order so the worker count cannot matter.
  auto grads = std::move(slot_grads[0]);
  for (int b = 1; b < B; ++b)
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& dst = grads[i];
      const auto& src = slot_grads[static_cast<std::size_t>(b)][i];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  double sq = 0;
  for (auto& g : grads)
    for (auto& v : g) {
      v /= static_cast<T>(B);
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite at step " + std::to_string(step_));
  if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) {
    const T f = static_cast<T>(cfg_.clip_norm / norm);
    for (auto& g : grads)
      for (auto& v : g) v *= f;
  }

  StepLog log;
  log.lr = cyclical_lr(step_, cfg_);
  log.grad_norm = norm;
  for (const auto& t : slot_terms) {
    log.sep += t[0] / B;
    log.surf += t[1] / B;
    log.sim += t[2] / B;
    log.map += t[3] / B;
    log.pose += t[4] / B;
    log.total += t[5] / B;
  }
  adam_step(*reg_, grads, log.lr, adam_);
  ++step_;
  log.step = step_;
  return log;
}

template <typename T>
TrainResult Trainer<T>::run(const std::filesystem::path& out_dir, int until_step) {
  const int until = until_step < 0 ? cfg_.max_steps : std::min(until_step, cfg_.max_steps);
  std::filesystem::create_directories(out_dir);
  std::ofstream log_file(out_dir / "metrics.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
  if (!log_file) throw IoError("cannot write " + (out_dir / "metrics.jsonl").string());
  TrainResult res;
  const auto ckpt = out_dir / "latest.ckpt";
  if (std::filesystem::exists(ckpt)) res.last_checkpoint = ckpt;
  while (step_ < until) {
    StepLog log;
    try {
      log = train_step();
    } catch (const NumericError& e) {
      res.aborted = true;
      res.message = "step " + std::to_string(step_ + 1) + ": " + e.what();
      break;
    }
    nlohmann::json j{{"step", log.step}, {"lr", log.lr},     {"L_sep", log.sep},   {"L_surf", log.surf},
                     {"L_sim", log.sim}, {"L_map", log.map}, {"L_pose", log.pose}, {"total", log.total},
                     {"grad_norm", log.grad_norm}};
    log_file << j.dump() << '\n';
    log_file.flush();
    res.log.push_back(log);
    if (on_step) on_step(log);
    if (step_ % cfg_.checkpoint_every == 0 || step_ == until) {
      save_checkpoint(ckpt);
      res.last_checkpoint = ckpt;
    }
  }
  res.steps_completed = step_;
  return res;
}

template <typename T>
void Trainer<T>::save_checkpoint(const std::filesystem::path& path) const {
  auto blobs = io::registry_blobs(*reg_);
  blobs.push_back(io::text_blob("meta.config", dump_config(cfg_)));
  blobs.push_back(io::u64_blob("meta.step", static_cast<std::uint64_t>(step_)));
  std::ostringstream rng;
  rng << sampler_;
  blobs.push_back(io::text_blob("meta.sampler", rng.str()));
  blobs.push_back(io::u64_blob("adam.t", static_cast<std::uint64_t>(adam_.t)));
  for (std::size_t i = 0; i < adam_.m.size(); ++i) {
    blobs.push_back(io::vector_blob("adam.m." + std::to_string(i), adam_.m[i]));
    blobs.push_back(io::vector_blob("adam.v." + std::to_string(i), adam_.v[i]));
  }
  write_atomic(path, blobs);
}

template <typename T>
void Trainer<T>::resume(const std::filesystem::path& checkpoint) {
  const auto blobs = io::read_checkpoint(checkpoint);
  io::load_registry(*reg_, blobs);
  auto need = [&](const std::string& name) -> const io::Blob& {
    const io::Blob* b = io::find_blob(blobs, name);
    if (!b) throw FormatError("checkpoint '" + checkpoint.string() + "' lacks '" + name + "'");
    return *b;
  };
  step_ = static_cast<int>(io::blob_u64(need("meta.step")));
  std::istringstream rng(io::blob_text(need("meta.sampler")));
  rng >> sampler_;
  if (!rng) throw FormatError("checkpoint sampler state is unreadable");
  adam_ = AdamState{};
  adam_.t = static_cast<std::int64_t>(io::blob_u64(need("adam.t")));
  if (adam_.t > 0) {
    for (std::size_t i = 0; i < reg_->entries().size(); ++i) {
      const ad::Shape shape{static_cast<int>(reg_->entries()[i].second.numel())};
      adam_.m.push_back(io::blob_values<double>(need("adam.m." + std::to_string(i)), shape));
      adam_.v.push_back(io::blob_values<double>(need("adam.v." + std::to_string(i)), shape));
    }
  }
}

// ---- evaluation ----------------------------------------------------------

template <typename T>
metrics::EvalReport evaluate(const model::PoseModel<T>& m, const std::vector<data::InstanceSample>& dataset,
                             const metrics::IouOptions& iou) {
  std::vector<metrics::EvalRow> rows;
  ad::NoGradGuard no_grad;
  for (const auto& s : dataset) {
    const auto f = m.predict(s.cloud);
    const geo::SimTransform pred = f.pose.transform();
    const bool sym = data::is_symmetric(s.category);
    metrics::EvalRow r;
    r.category = data::category_name(s.category);
    r.iou = metrics::iou3d(pred, s.gt, sym, iou);
    const auto pe = metrics::pose_errors(pred, s.gt, sym);
    r.rot_deg = pe.rot_deg;
    r.trans_cm = pe.trans_cm;
    const auto gt_nocs = model::nocs_targets(f.kpts.centered, f.enc.centroid, s.gt);
    for (int i = 0; i < gt_nocs.dim(0); ++i) {
      double e = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(f.pose.nocs.at(i, c) - gt_nocs.at(i, c));
        e += d * d;
      }
      r.nocs_kpt_errors.push_back(std::sqrt(e));
    }
    rows.push_back(std::move(r));
  }
  return metrics::aggregate(std::move(rows));
}

TrainConfig checkpoint_config(const std::filesystem::path& checkpoint) {
  const auto blobs = io::read_checkpoint(checkpoint);
  const io::Blob* b = io::find_blob(blobs, "meta.config");
  if (!b) throw FormatError("checkpoint '" + checkpoint.string() + "' has no stored config");
  return parse_config(io::blob_text(*b));
}

namespace {

template <typename T>
metrics::EvalReport evaluate_blobs(const std::vector<io::Blob>& blobs, const TrainConfig& cfg,
                                   const std::vector<data::InstanceSample>& dataset, const metrics::IouOptions& iou) {
  nn::ParamRegistry<T> reg(cfg.seed);
  model::PoseModel<T> m(reg, cfg.model);
  io::load_registry(reg, blobs);
  return evaluate(m, dataset, iou);
}

template <typename T>
InstancePrediction predict_blobs(const std::vector<io::Blob>& blobs, const TrainConfig& cfg,
                                 const data::InstanceSample& s) {
  nn::ParamRegistry<T> reg(cfg.seed);
  model::PoseModel<T> m(reg, cfg.model);
  io::load_registry(reg, blobs);
  ad::NoGradGuard no_grad;
  const auto f = m.predict(s.cloud);
  const auto gt = model::nocs_targets(f.kpts.centered, f.enc.centroid, s.gt);
  InstancePrediction out;
  out.pose = f.pose.transform();
  out.kpt_nocs_pred.resize(gt.dim(0), 3);
  out.kpt_nocs_gt.resize(gt.dim(0), 3);
  for (int i = 0; i < gt.dim(0); ++i) {
    for (int c = 0; c < 3; ++c) {
      out.kpt_nocs_pred(i, c) = static_cast<double>(f.pose.nocs.at(i, c));
      out.kpt_nocs_gt(i, c) = static_cast<double>(gt.at(i, c));
    }
  }
  return out;
}

TrainConfig resolve_config(const std::vector<io::Blob>& blobs, const std::filesystem::path& checkpoint,
                           const TrainConfig* cfg, const std::vector<data::InstanceSample>& dataset) {
  TrainConfig c;
  if (cfg) {
    c = *cfg;
  } else {
    const io::Blob* b = io::find_blob(blobs, "meta.config");
    if (!b) throw FormatError("checkpoint '" + checkpoint.string() + "' has no stored config");
    c = parse_config(io::blob_text(*b));
  }
  c.model.validate();
  for (const auto& s : dataset) {
    if (s.cloud.size() != c.model.points) {
      throw ConfigError("model.points=" + std::to_string(c.model.points) + " but a sample has " +
                        std::to_string(s.cloud.size()) + " points");
    }
  }
  return c;
}

}  // namespace

InstancePrediction predict_checkpoint(const std::filesystem::path& checkpoint, const data::InstanceSample& sample,
                                      const TrainConfig* cfg) {
  const auto blobs = io::read_checkpoint(checkpoint);
  const TrainConfig c = resolve_config(blobs, checkpoint, cfg, {sample});
  return c.precision == 64 ? predict_blobs<double>(blobs, c, sample) : predict_blobs<float>(blobs, c, sample);
}

metrics::EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::vector<data::InstanceSample>& dataset, const TrainConfig* cfg,
                                        const metrics::IouOptions& iou) {
  const auto blobs = io::read_checkpoint(checkpoint);
  const TrainConfig c = resolve_config(blobs, checkpoint, cfg, dataset);
  return c.precision == 64 ? evaluate_blobs<double>(blobs, c, dataset, iou)
                           : evaluate_blobs<float>(blobs, c, dataset, iou);
}

template void adam_step(nn::ParamRegistry<float>&, const std::vector<std::vector<float>>&, double, AdamState&,
                        const AdamOptions&);
template void adam_step(nn::ParamRegistry<double>&, const std::vector<std::vector<double>>&, double, AdamState&,
                        const AdamOptions&);
template class Trainer<float>;
template class Trainer<double>;
template metrics::EvalReport evaluate(const model::PoseModel<float>&, const std::vector<data::InstanceSample>&,
                                      const metrics::IouOptions&);
template metrics::EvalReport evaluate(const model::PoseModel<double>&, const std::vector<data::InstanceSample>&,
                                      const metrics::IouOptions&);

}  // namespace inkl::train
