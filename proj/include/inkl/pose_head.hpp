#pragma once

#include <string>

#include "inkl/geometry.hpp"
#include "inkl/keypoint_net.hpp"
#include "inkl/nn.hpp"

namespace inkl::model {

template <typename T>
struct PoseEstimate {
  Tensor<T> R;     // [3, 3]
  Tensor<T> t;     // [1, 3] metres
  Tensor<T> s;     // [1, 3] metres
  Tensor<T> nocs;  // [kpts, 3]
  Tensor<T> rot6;  // raw rotation head output [1, 6]

  /// Plain values of the estimate.
  geo::SimTransform transform() const;
};

/// Columns e1, e2, e1 x e2 from the two 3-vectors of a [1, 6] tensor.
/// A first vector shorter than 1e-8 yields the identity; a second vector
/// (nearly) parallel to the first is replaced by a fixed perpendicular one.
template <typename T>
Tensor<T> rotation_from_6d(const Tensor<T>& rot6);

/// Mean over keypoints of the per-coordinate smooth-L1 sum.
template <typename T>
Tensor<T> map_loss(const Tensor<T>& pred, const Tensor<T>& gt);

/// to_nocs of keypoints given in the centered frame: ((x + centroid - t) R) / |s|.
template <typename T>
Tensor<T> nocs_targets(const Tensor<T>& centered_kpts, const geo::Vec3& centroid, const geo::SimTransform& gt);

/// |R - R_gt|_F + |t - t_gt| + |s - s_gt|.
template <typename T>
Tensor<T> pose_loss(const PoseEstimate<T>& pred, const geo::SimTransform& gt);

struct LossWeights {
  double sep = 10.0;
  double surf = 10.0;
  double sim = 15.0;
  double map = 2.0;
  double pose = 0.3;
};

template <typename T>
struct LossTerms {
  Tensor<T> sep, surf, sim, map, pose;
};

/// Weighted sum. Throws NumericError naming the first non-finite term.
template <typename T>
Tensor<T> total_loss(const LossTerms<T>& terms, const LossWeights& w);

template <typename T>
class PoseHead {
 public:
  PoseHead(nn::ParamRegistry<T>& reg, const ModelConfig& cfg);

  /// Self-attention over keypoint features, then a per-keypoint MLP to 3D.
  Tensor<T> predict_nocs(const Tensor<T>& feats) const;
  PoseEstimate<T> regress_pose(const Tensor<T>& centered_kpts, const Tensor<T>& nocs, const Tensor<T>& feats,
                               const geo::Vec3& centroid) const;

  nn::LayerNorm<T> nocs_norm;
  nn::MultiHeadAttention<T> nocs_attn;
  nn::Mlp<T> nocs_mlp;
  nn::LayerNorm<T> feat_norm;
  nn::Mlp<T> point_mlp;
  nn::Mlp<T> rot_head, trans_head, size_head;
};

}  // namespace inkl::model
