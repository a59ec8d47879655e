#pragma once

#include <cstdint>
#include <vector>

#include "inkl/geometry.hpp"
#include "inkl/nn.hpp"

namespace inkl::model {

using ad::Tensor;

struct ModelConfig {
  int points = 1024;
  int d = 256;
  int d_sem = 128;
  int d_geo = 128;
  int d_pos = 64;
  int appearance = 6;
  int kpts = 96;
  int local_k = 4;
  int stages = 12;
  int n_rec = 960;
  int n_fps = 120;
  int sep_m = 2;
  int heads = 4;
  int iakd_rounds = 2;
  int ffn_mult = 2;
  int ssm_state = 16;
  int encoder_k = 8;
  int rec_hidden = 128;
  int nocs_hidden = 128;
  int pose_hidden = 256;
  /// Multiplies the cosine logits of the assignment softmax.
  double cosine_scale = 1.0;
  double phi = 1e-8;
  double group_eps = 1e-5;
  double sep_eps = 1e-6;
  bool uni_mamba = false;
  bool attention_gkfa = false;
  /// Backward branch reads the keypoint sequence in reverse row order.
  bool psf_instead_of_fsf = false;
  bool reflip_backward = false;
  /// Test configuration: the raw-coordinate embedding is forced to zero.
  bool zero_pos_embed = false;

  int rec_repeats() const { return n_rec / kpts; }
  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  /// Small sizes for finite-difference checks on a 32-point cloud.
  static ModelConfig tiny();
};

template <typename T>
struct EncoderOutput {
  Tensor<T> fused;      // [N, d]
  Tensor<T> pos_embed;  // [N, d_pos]
  Tensor<T> geo_feats;  // [N, d_geo]
  Tensor<T> sem_feats;  // [N, d_sem]
  Tensor<T> raw;        // [N, 3] constant input coordinates
  Tensor<T> centered;   // [N, 3] raw minus centroid
  geo::Points centered_points;
  geo::Vec3 centroid = geo::Vec3::Zero();
};

template <typename T>
struct KeypointSet {
  Tensor<T> coords;    // [K, 3] camera frame
  Tensor<T> centered;  // [K, 3] coords minus the cloud centroid
  Tensor<T> feats;     // [K, d]
  Tensor<T> assign;    // [K, N]
};

template <typename T>
struct Reconstruction {
  Tensor<T> points;  // [n_rec, 3] in the centered frame
  Tensor<T> l_sim;
};

template <typename T>
struct StackOutput {
  Tensor<T> feats;
  Tensor<T> l_sim;  // mean over stages
  std::vector<Tensor<T>> stage_l_sim;
};

template <typename T>
struct StageParams {
  nn::Mlp<T> pos;
  nn::LayerNorm<T> center_norm;
  Tensor<T> alpha;
  Tensor<T> beta;
  nn::Linear<T> post;
  nn::LayerNorm<T> scan_norm;
  nn::SelectiveScan<T> scan_fwd;
  nn::SelectiveScan<T> scan_bwd;
  nn::MultiHeadAttention<T> attention;
  nn::LayerNorm<T> rec_norm;
  nn::Mlp<T> rec;
};

template <typename T>
struct IakdRound {
  nn::LayerNorm<T> norm_self, norm_cross, norm_ffn;
  nn::MultiHeadAttention<T> self_attn;
  nn::Mlp<T> ffn;
};

/// Channel order reversed inside every row.
template <typename T>
Tensor<T> fsf(const Tensor<T>& x);

/// chamfer(ref, kpts), both directions averaged.
template <typename T>
Tensor<T> surface_loss(const Tensor<T>& kpts, const Tensor<T>& ref);

/// 1 / max(mean distance of every keypoint to its m nearest others, eps).
template <typename T>
Tensor<T> separation_loss(const Tensor<T>& kpts, int m, double eps = 1e-6);

/// Comparator losses: one-sided keypoint-to-cloud Chamfer and the reciprocal
/// of the mean pairwise keypoint distance.
template <typename T>
Tensor<T> object_chamfer_loss(const Tensor<T>& kpts, const Tensor<T>& cloud);
template <typename T>
Tensor<T> diversity_loss(const Tensor<T>& kpts, double eps = 1e-6);

/// Index of the FPS start point, chosen from the instance id through the
/// lexicographic order of the points so that it does not depend on storage
/// order.
std::uint64_t fps_reference_seed(const geo::Points& p, std::uint64_t instance_id);
/// FPS reference points (rows of p).
geo::Points fps_reference(const geo::Points& p, int n, std::uint64_t instance_id);

template <typename T>
class KeypointNet {
 public:
  KeypointNet(nn::ParamRegistry<T>& reg, const ModelConfig& cfg);

  EncoderOutput<T> encode(const geo::PointCloud& cloud) const;
  KeypointSet<T> detect_keypoints(const EncoderOutput<T>& enc) const;
  /// Row-major [kpts, local_k] cloud neighbours of every keypoint.
  std::vector<int> local_neighbours(const KeypointSet<T>& k, const EncoderOutput<T>& enc, int count) const;
  Tensor<T> lkfa_forward(int stage, const KeypointSet<T>& k, const Tensor<T>& feats,
                         const EncoderOutput<T>& enc, const std::vector<int>& nbr) const;
  Tensor<T> gkfa_forward(int stage, const Tensor<T>& local) const;
  Reconstruction<T> reconstruct(int stage, const Tensor<T>& global, const Tensor<T>& centered_kpts,
                                const Tensor<T>& centered_cloud) const;
  StackOutput<T> stack_forward(const EncoderOutput<T>& enc, const KeypointSet<T>& k) const;

  const ModelConfig& config() const { return cfg_; }

  nn::Mlp<T> sem_mlp, geo_mlp, pos_mlp;
  nn::Linear<T> fuse;
  Tensor<T> query_bank;  // [kpts, d], zero at init
  Tensor<T> query_pos;   // [kpts, d]
  nn::LayerNorm<T> memory_norm, query_norm;
  nn::MultiHeadAttention<T> cross_attn;
  std::vector<IakdRound<T>> rounds;
  std::vector<StageParams<T>> stages;

 private:
  ModelConfig cfg_;
};

}  // namespace inkl::model
