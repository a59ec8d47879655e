#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "inkl/metrics.hpp"
#include "inkl/model.hpp"
#include "inkl/synthdata.hpp"

namespace inkl::train {

struct TrainConfig {
  int batch_size = 8;
  double lr_min = 2e-5;
  double lr_max = 5e-4;
  /// Steps per half-cycle of the triangular schedule.
  int cycle_len = 500;
  int max_steps = 5000;
  std::uint64_t seed = 0;
  model::LossWeights weights;
  model::ModelConfig model;
  bool disable_surf = false;
  bool disable_sep = false;
  bool agpose_losses = false;
  /// Global gradient norm limit; 0 disables clipping.
  double clip_norm = 10.0;
  int checkpoint_every = 500;
  bool augment = true;
  data::AugmentConfig aug;
  /// 32 or 64. The 64-bit mode is the determinism reference.
  int precision = 32;
  /// Threads computing batch slots; 0 picks min(batch, hardware threads).
  /// Results do not depend on this value.
  int workers = 0;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  model::LossOptions loss_options() const;
};

/// key=value lines with dotted sections (train.lr_max=5e-4); '#' starts a
/// comment. Unknown keys and bad values throw ConfigError with the line
/// number. Keys not mentioned keep their value from `base`.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
/// Every key, one per line, in a form parse_config reads back.
std::string dump_config(const TrainConfig& cfg);

/// Triangular schedule: lr_min at step 0, lr_max at cycle_len, back to
/// lr_min at 2 cycle_len.
double cyclical_lr(std::int64_t step, const TrainConfig& cfg);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments are kept in double whatever the parameter precision.
struct AdamState {
  std::int64_t t = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update; grads[i] belongs to the i-th registry
/// entry. Throws DimensionError naming the parameter on a size mismatch.
template <typename T>
void adam_step(nn::ParamRegistry<T>& params, const std::vector<std::vector<T>>& grads, double lr, AdamState& state,
               const AdamOptions& opt = {});

struct StepLog {
  int step = 0;
  double lr = 0;
  double sep = 0, surf = 0, sim = 0, map = 0, pose = 0, total = 0;
  double grad_norm = 0;
};

struct TrainResult {
  int steps_completed = 0;
  bool aborted = false;
  std::string message;
  std::vector<StepLog> log;
  std::filesystem::path last_checkpoint;
};

template <typename T>
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<data::InstanceSample> dataset);
  ~Trainer();

  /// Restores parameters, optimizer moments, step and sampler state.
  /// Throws ConfigError if the checkpoint's model does not fit the config.
  void resume(const std::filesystem::path& checkpoint);
  /// Trains until `until_step` (default max_steps). Writes metrics.jsonl
  /// and checkpoints into out_dir. A non-finite loss or gradient stops the
  /// run before the optimizer step; earlier checkpoints stay untouched.
  TrainResult run(const std::filesystem::path& out_dir, int until_step = -1);
  void save_checkpoint(const std::filesystem::path& path) const;

  int step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  nn::ParamRegistry<T>& registry() { return *reg_; }
  const model::PoseModel<T>& model() const { return *model_; }

  /// Called after every step.
  std::function<void(const StepLog&)> on_step;
  /// Test hook: the loss of this step is replaced by NaN.
  int inject_nan_at_step = -1;

 private:
  struct Worker;
  StepLog train_step();

  TrainConfig cfg_;
  std::vector<data::InstanceSample> data_;
  std::unique_ptr<nn::ParamRegistry<T>> reg_;
  std::unique_ptr<model::PoseModel<T>> model_;
  AdamState adam_;
  std::mt19937_64 sampler_;
  int step_ = 0;
  std::vector<std::unique_ptr<Worker>> workers_;
};

/// Inference on every sample (no augmentation) and the metric report.
template <typename T>
metrics::EvalReport evaluate(const model::PoseModel<T>& m, const std::vector<data::InstanceSample>& dataset,
                             const metrics::IouOptions& iou = {});

/// Config stored in a checkpoint.
TrainConfig checkpoint_config(const std::filesystem::path& checkpoint);
/// Loads a checkpoint into a model built from `cfg` (the checkpoint's own
/// config when null) and evaluates it. Throws ConfigError on a size mismatch.
metrics::EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::vector<data::InstanceSample>& dataset,
                                        const TrainConfig* cfg = nullptr, const metrics::IouOptions& iou = {});

struct InstancePrediction {
  geo::SimTransform pose;
  geo::Points kpt_nocs_pred;  // predicted NOCS coordinates of the keypoints
  geo::Points kpt_nocs_gt;    // ground-truth NOCS of the same keypoints
};

/// Inference of a stored model on one sample.
InstancePrediction predict_checkpoint(const std::filesystem::path& checkpoint, const data::InstanceSample& sample,
                                      const TrainConfig* cfg = nullptr);

}  // namespace inkl::train
