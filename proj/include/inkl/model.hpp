#pragma once

#include <cstdint>

#include "inkl/keypoint_net.hpp"
#include "inkl/pose_head.hpp"
#include "inkl/synthdata.hpp"

namespace inkl::model {

struct LossOptions {
  LossWeights weights;
  bool disable_surf = false;
  bool disable_sep = false;
  /// Replace L_surf / L_sep by the comparator pair (object Chamfer, diversity).
  bool agpose_losses = false;
};

template <typename T>
struct ForwardResult {
  EncoderOutput<T> enc;
  KeypointSet<T> kpts;
  StackOutput<T> stack;
  PoseEstimate<T> pose;
  Tensor<T> nocs_gt;
  LossTerms<T> terms;
  Tensor<T> total;
};

/// Encoder, detector, stacked aggregators and pose head on one registry.
template <typename T>
class PoseModel {
 public:
  PoseModel(nn::ParamRegistry<T>& reg, const ModelConfig& cfg);

  /// Inference path (no loss terms).
  ForwardResult<T> predict(const geo::PointCloud& cloud) const;
  /// Full forward with every loss term and the weighted total.
  ForwardResult<T> forward(const data::InstanceSample& s, const LossOptions& opt) const;

  const ModelConfig& config() const { return net.config(); }

  KeypointNet<T> net;
  PoseHead<T> head;
};

}  // namespace inkl::model
