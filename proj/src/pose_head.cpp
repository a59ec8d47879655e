#include "inkl/pose_head.hpp"

#include <cmath>

#include "inkl/errors.hpp"

namespace inkl::model {

namespace {

template <typename T>
Tensor<T> row3(const geo::Vec3& v) {
  return Tensor<T>::from({1, 3}, {static_cast<T>(v.x()), static_cast<T>(v.y()), static_cast<T>(v.z())});
}

template <typename T>
Tensor<T> mat3(const geo::Mat3& m) {
  std::vector<T> v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[static_cast<std::size_t>(3 * i + j)] = static_cast<T>(m(i, j));
  return Tensor<T>::from({3, 3}, std::move(v));
}

template <typename T>
geo::Vec3 vec_of(const Tensor<T>& t) {
  return {static_cast<double>(t[0]), static_cast<double>(t[1]), static_cast<double>(t[2])};
}

constexpr double kRotEps = 1e-8;

}  // namespace

template <typename T>
geo::SimTransform PoseEstimate<T>::transform() const {
  geo::SimTransform out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.R(i, j) = static_cast<double>(R.at(i, j));
  out.t = vec_of(t);
  out.s = vec_of(s);
  return out;
}

template <typename T>
Tensor<T> rotation_from_6d(const Tensor<T>& rot6) {
  if (rot6.numel() != 6) throw DimensionError("rotation_from_6d needs 6 values, got " + ad::shape_str(rot6.shape()));
  const Tensor<T> r = ad::reshape(rot6, {1, 6});
  const geo::Vec3 av = vec_of(ad::slice_cols(r.detach(), 0, 3));
  if (!(av.norm() >= kRotEps)) return mat3<T>(geo::Mat3::Identity());
  const Tensor<T> a = ad::slice_cols(r, 0, 3);
  const Tensor<T> e1 = ad::mul_scalar(a, ad::reciprocal(ad::row_norm(a)));
  Tensor<T> b = ad::slice_cols(r, 3, 3);
  Tensor<T> perp = ad::sub(b, ad::mul_scalar(e1, ad::sum(ad::mul(e1, b))));
  if (!(vec_of(perp).norm() >= kRotEps * std::max(1.0, vec_of(b).norm()))) {
    // Any axis away from e1 will do; take the least aligned one.
    const geo::Vec3 u = av.normalized();
    int axis = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(u[i]) < std::abs(u[axis])) axis = i;
    b = row3<T>(geo::Vec3::Unit(axis));
    perp = ad::sub(b, ad::mul_scalar(e1, ad::sum(ad::mul(e1, b))));
  }
  const Tensor<T> e2 = ad::mul_scalar(perp, ad::reciprocal(ad::row_norm(perp)));
  const Tensor<T> e3 = ad::cross3(e1, e2);
  return ad::transpose(ad::concat_rows<T>({e1, e2, e3}));
}

template <typename T>
Tensor<T> map_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("map_loss shapes " + ad::shape_str(pred.shape()) + " vs " + ad::shape_str(gt.shape()));
  }
  return ad::scale(ad::sum(ad::smooth_l1(ad::sub(pred, gt))), T(1) / static_cast<T>(pred.dim(0)));
}

template <typename T>
Tensor<T> nocs_targets(const Tensor<T>& centered_kpts, const geo::Vec3& centroid, const geo::SimTransform& gt) {
  const Tensor<T> shifted = ad::add_rowvec(centered_kpts, ad::reshape(row3<T>(centroid - gt.t), {3}));
  return ad::scale(ad::matmul(shifted, mat3<T>(gt.R)), static_cast<T>(1.0 / gt.scale()));
}

template <typename T>
Tensor<T> pose_loss(const PoseEstimate<T>& pred, const geo::SimTransform& gt) {
  const Tensor<T> r = ad::norm(ad::sub(pred.R, mat3<T>(gt.R)));
  const Tensor<T> t = ad::norm(ad::sub(ad::reshape(pred.t, {1, 3}), row3<T>(gt.t)));
  const Tensor<T> s = ad::norm(ad::sub(ad::reshape(pred.s, {1, 3}), row3<T>(gt.s)));
  return ad::add(ad::add(r, t), s);
}

template <typename T>
Tensor<T> total_loss(const LossTerms<T>& terms, const LossWeights& w) {
  const std::pair<const char*, const Tensor<T>*> named[] = {
      {"L_sep", &terms.sep}, {"L_surf", &terms.surf}, {"L_sim", &terms.sim}, {"L_map", &terms.map}, {"L_pose", &terms.pose}};
  for (const auto& [name, t] : named) {
    if (!t->defined()) throw ArgumentError(std::string("loss term ") + name + " is missing");
    if (!std::isfinite(static_cast<double>(t->item()))) {
      throw NumericError(std::string("loss term ") + name + " is not finite (" + std::to_string(t->item()) + ")");
    }
  }
  Tensor<T> out = ad::scale(terms.sep, static_cast<T>(w.sep));
  out = ad::add(out, ad::scale(terms.surf, static_cast<T>(w.surf)));
  out = ad::add(out, ad::scale(terms.sim, static_cast<T>(w.sim)));
  out = ad::add(out, ad::scale(terms.map, static_cast<T>(w.map)));
  return ad::add(out, ad::scale(terms.pose, static_cast<T>(w.pose)));
}

template <typename T>
PoseHead<T>::PoseHead(nn::ParamRegistry<T>& reg, const ModelConfig& cfg) {
  const int d = cfg.d;
  nocs_norm = nn::LayerNorm<T>(reg, "head.nocs_norm", d);
  nocs_attn = nn::MultiHeadAttention<T>(reg, "head.nocs_attn", d, cfg.heads);
  nocs_mlp = nn::Mlp<T>(reg, "head.nocs_mlp", {d, cfg.nocs_hidden, 3});
  const int h = cfg.pose_hidden;
  feat_norm = nn::LayerNorm<T>(reg, "head.feat_norm", d);
  point_mlp = nn::Mlp<T>(reg, "head.point_mlp", {6 + d, h, h}, true);
  rot_head = nn::Mlp<T>(reg, "head.rot", {2 * h, h, 6});
  trans_head = nn::Mlp<T>(reg, "head.trans", {2 * h, h, 3});
  size_head = nn::Mlp<T>(reg, "head.size", {2 * h, h, 3});
  // Start from the identity rotation, zero residual translation and a
  // 0.15 m box (softplus(-1.82) = 0.150); small output weights.
  auto& rl = rot_head.layers.back();
  for (auto& v : rl.weight.values_mut()) v *= T(0.1);
  const T ident[6] = {1, 0, 0, 0, 1, 0};
  for (int i = 0; i < 6; ++i) rl.bias.values_mut()[static_cast<std::size_t>(i)] = ident[i];
  for (auto* head : {&trans_head, &size_head}) {
    for (auto& v : head->layers.back().weight.values_mut()) v *= T(0.1);
    for (auto& v : head->layers.back().bias.values_mut()) v = T(0);
  }
  for (auto& v : size_head.layers.back().bias.values_mut()) v = T(-1.82);
}

template <typename T>
Tensor<T> PoseHead<T>::predict_nocs(const Tensor<T>& feats) const {
  const Tensor<T> h = nocs_norm(feats);
  return nocs_mlp(ad::add(h, nocs_attn(h, h, h)));
}

template <typename T>
PoseEstimate<T> PoseHead<T>::regress_pose(const Tensor<T>& centered_kpts, const Tensor<T>& nocs,
                                          const Tensor<T>& feats, const geo::Vec3& centroid) const {
  const Tensor<T> per_point = point_mlp(ad::concat_cols<T>({centered_kpts, nocs, feat_norm(feats)}));
  const Tensor<T> pooled = ad::concat_cols<T>({ad::mean_rows(per_point), ad::max_rows(per_point)});
  PoseEstimate<T> p;
  p.nocs = nocs;
  p.rot6 = rot_head(pooled);
  p.R = rotation_from_6d(p.rot6);
  p.t = ad::add(trans_head(pooled), row3<T>(centroid));
  p.s = ad::softplus(size_head(pooled));
  return p;
}

#define INKL_INSTANTIATE(T)                                                                       \
  template struct PoseEstimate<T>;                                                                \
  template Tensor<T> rotation_from_6d(const Tensor<T>&);                                          \
  template Tensor<T> map_loss(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> nocs_targets(const Tensor<T>&, const geo::Vec3&, const geo::SimTransform&);  \
  template Tensor<T> pose_loss(const PoseEstimate<T>&, const geo::SimTransform&);                 \
  template Tensor<T> total_loss(const LossTerms<T>&, const LossWeights&);                         \
  template class PoseHead<T>;

INKL_INSTANTIATE(float)
INKL_INSTANTIATE(double)

}  // namespace inkl::model
