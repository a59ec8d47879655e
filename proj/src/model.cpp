#include "inkl/model.hpp"

namespace inkl::model {

namespace {

template <typename T>
Tensor<T> points_tensor(const geo::Points& p) {
  std::vector<T> v(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (int j = 0; j < 3; ++j) v[static_cast<std::size_t>(3 * i + j)] = static_cast<T>(p(i, j));
  return Tensor<T>::from({static_cast<int>(p.rows()), 3}, std::move(v));
}

}  // namespace

template <typename T>
PoseModel<T>::PoseModel(nn::ParamRegistry<T>& reg, const ModelConfig& cfg) : net(reg, cfg), head(reg, cfg) {}

template <typename T>
ForwardResult<T> PoseModel<T>::predict(const geo::PointCloud& cloud) const {
  ForwardResult<T> r;
  r.enc = net.encode(cloud);
  r.kpts = net.detect_keypoints(r.enc);
  r.stack = net.stack_forward(r.enc, r.kpts);
  const Tensor<T> nocs = head.predict_nocs(r.stack.feats);
  r.pose = head.regress_pose(r.kpts.centered, nocs, r.stack.feats, r.enc.centroid);
  return r;
}

template <typename T>
ForwardResult<T> PoseModel<T>::forward(const data::InstanceSample& s, const LossOptions& opt) const {
  ForwardResult<T> r = predict(s.cloud);
  const Tensor<T>& k = r.kpts.centered;
  auto& terms = r.terms;
  if (opt.agpose_losses) {
    terms.surf = object_chamfer_loss(k, r.enc.centered);
    terms.sep = diversity_loss(k, config().sep_eps);
  } else {
    const geo::Points ref = fps_reference(r.enc.centered_points, config().n_fps, s.instance_id);
    terms.surf = surface_loss(k, points_tensor<T>(ref));
    terms.sep = separation_loss(k, config().sep_m, config().sep_eps);
  }
  if (opt.disable_surf) terms.surf = Tensor<T>::scalar(T(0));
  if (opt.disable_sep) terms.sep = Tensor<T>::scalar(T(0));
  terms.sim = r.stack.l_sim;
  r.nocs_gt = nocs_targets(k, r.enc.centroid, s.gt);
  terms.map = map_loss(r.pose.nocs, r.nocs_gt);
  terms.pose = pose_loss(r.pose, s.gt);
  r.total = total_loss(terms, opt.weights);
  return r;
}

template class PoseModel<float>;
template class PoseModel<double>;

}  // namespace inkl::model
