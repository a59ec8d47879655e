#include "inkl/keypoint_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "inkl/errors.hpp"

namespace inkl::model {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
Tensor<T> constant(const geo::Matrix& m) {
  std::vector<T> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<T>(m(i, j));
  return Tensor<T>::from({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(v));
}

template <typename T>
geo::Points to_points(const Tensor<T>& t) {
  geo::Points p(t.dim(0), 3);
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = static_cast<double>(t.at(i, j));
  return p;
}

void need(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("model config: " + what);
}

}  // namespace

void ModelConfig::validate() const {
  need(points > 0 && d > 0 && d_sem > 0 && d_geo > 0 && d_pos > 0 && appearance > 0, "sizes must be positive");
  need(kpts > sep_m && sep_m >= 1, "kpts must exceed sep_m >= 1");
  need(local_k >= 1, "local_k must be >= 1");
  need(stages >= 1, "stages must be >= 1");
  need(n_rec >= kpts && n_rec % kpts == 0, "n_rec must be a positive multiple of kpts");
  need(n_fps >= 1, "n_fps must be >= 1");
  need(heads >= 1 && d % heads == 0, "d must be divisible by heads");
  need(iakd_rounds >= 0 && ffn_mult >= 1 && ssm_state >= 1 && encoder_k >= 1, "detector/scan sizes");
  need(rec_hidden > 0 && nocs_hidden > 0 && pose_hidden > 0, "head widths must be positive");
  need(std::isfinite(cosine_scale) && cosine_scale > 0, "cosine_scale must be positive");
  need(!(uni_mamba && attention_gkfa), "uni_mamba and attention_gkfa are exclusive");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.points = 32;
  c.d = 16;
  c.d_sem = 8;
  c.d_geo = 8;
  c.d_pos = 8;
  c.kpts = 8;
  c.local_k = 4;
  c.stages = 2;
  c.n_rec = 16;
  c.n_fps = 12;
  c.heads = 2;
  c.iakd_rounds = 2;
  c.ssm_state = 4;
  c.encoder_k = 4;
  c.rec_hidden = 8;
  c.nocs_hidden = 8;
  c.pose_hidden = 16;
  return c;
}

template <typename T>
Tensor<T> fsf(const Tensor<T>& x) {
  return ad::reverse_cols(x);
}

template <typename T>
Tensor<T> surface_loss(const Tensor<T>& kpts, const Tensor<T>& ref) {
  return ad::chamfer(ref, kpts);
}

template <typename T>
Tensor<T> separation_loss(const Tensor<T>& kpts, int m, double eps) {
  const int n = kpts.dim(0);
  if (kpts.rank() != 2 || kpts.dim(1) != 3) throw DimensionError("separation_loss needs [K,3] keypoints");
  if (m < 1 || n <= m) throw ArgumentError("separation_loss needs more than m keypoints");
  std::vector<int> self_idx, other_idx;
  self_idx.reserve(static_cast<std::size_t>(n) * m);
  other_idx.reserve(static_cast<std::size_t>(n) * m);
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    int w = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (int c = 0; c < 3; ++c) {
        const double diff = static_cast<double>(kpts.at(i, c)) - static_cast<double>(kpts.at(j, c));
        s += diff * diff;
      }
      dist[static_cast<std::size_t>(w++)] = {std::sqrt(s), j};
    }
    std::sort(dist.begin(), dist.end());
    for (int k = 0; k < m; ++k) {
      self_idx.push_back(i);
      other_idx.push_back(dist[static_cast<std::size_t>(k)].second);
    }
    // Swapping the m-th and (m+1)-th neighbour changes the gradient.
    if (ad::kink_monitor_active() && m < n - 1) {
      ad::report_kink_margin(0.5 * (dist[static_cast<std::size_t>(m)].first - dist[static_cast<std::size_t>(m - 1)].first));
    }
  }
  const Tensor<T> diff = ad::sub(ad::gather_rows(kpts, self_idx), ad::gather_rows(kpts, other_idx));
  const Tensor<T> spread = ad::mean(ad::row_norm(diff));
  return ad::reciprocal(ad::clamp_min(spread, static_cast<T>(eps)));
}

template <typename T>
Tensor<T> object_chamfer_loss(const Tensor<T>& kpts, const Tensor<T>& cloud) {
  return ad::chamfer_one_sided(kpts, cloud);
}

template <typename T>
Tensor<T> diversity_loss(const Tensor<T>& kpts, double eps) {
  const int n = kpts.dim(0);
  if (n < 2) throw ArgumentError("diversity_loss needs at least two keypoints");
  std::vector<int> a, b;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      a.push_back(i);
      b.push_back(j);
    }
  const Tensor<T> d = ad::row_norm(ad::sub(ad::gather_rows(kpts, a), ad::gather_rows(kpts, b)));
  return ad::reciprocal(ad::clamp_min(ad::mean(d), static_cast<T>(eps)));
}

std::uint64_t fps_reference_seed(const geo::Points& p, std::uint64_t instance_id) {
  const int n = static_cast<int>(p.rows());
  if (n == 0) throw ArgumentError("fps reference of an empty cloud");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < 3; ++c)
      if (p(a, c) != p(b, c)) return p(a, c) < p(b, c);
    return a < b;
  });
  return static_cast<std::uint64_t>(order[splitmix64(instance_id) % static_cast<std::uint64_t>(n)]);
}

geo::Points fps_reference(const geo::Points& p, int n, std::uint64_t instance_id) {
  const auto idx = geo::farthest_point_sampling(p, n, fps_reference_seed(p, instance_id));
  geo::Points out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = p.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

template <typename T>
KeypointNet<T>::KeypointNet(nn::ParamRegistry<T>& reg, const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d;
  sem_mlp = nn::Mlp<T>(reg, "enc.sem", {cfg_.appearance, 64, cfg_.d_sem}, true);
  geo_mlp = nn::Mlp<T>(reg, "enc.geo", {9, 64, cfg_.d_geo}, true);
  pos_mlp = nn::Mlp<T>(reg, "enc.pos", {3, 64, cfg_.d_pos});
  fuse = nn::Linear<T>(reg, "enc.fuse", cfg_.d_sem + cfg_.d_geo + cfg_.d_pos, d);

  query_bank = reg.full("iakd.query", {cfg_.kpts, d}, T(0));
  query_pos = reg.uniform("iakd.query_pos", {cfg_.kpts, d}, 1.0);
  memory_norm = nn::LayerNorm<T>(reg, "iakd.memory_norm", d);
  cross_attn = nn::MultiHeadAttention<T>(reg, "iakd.cross", d, cfg_.heads);
  for (int r = 0; r < cfg_.iakd_rounds; ++r) {
    const std::string p = "iakd.round" + std::to_string(r);
    IakdRound<T> round;
    round.norm_self = nn::LayerNorm<T>(reg, p + ".norm_self", d);
    round.norm_cross = nn::LayerNorm<T>(reg, p + ".norm_cross", d);
    round.norm_ffn = nn::LayerNorm<T>(reg, p + ".norm_ffn", d);
    round.self_attn = nn::MultiHeadAttention<T>(reg, p + ".self", d, cfg_.heads);
    round.ffn = nn::Mlp<T>(reg, p + ".ffn", {d, cfg_.ffn_mult * d, d});
    rounds.push_back(std::move(round));
  }
  query_norm = nn::LayerNorm<T>(reg, "iakd.query_norm", d);

  const int m3 = 3 * cfg_.rec_repeats();
  for (int s = 0; s < cfg_.stages; ++s) {
    const std::string p = "stage" + std::to_string(s);
    StageParams<T> st;
    st.pos = nn::Mlp<T>(reg, p + ".lkfa.pos", {3, 64, d});
    st.center_norm = nn::LayerNorm<T>(reg, p + ".lkfa.center_norm", d);
    st.alpha = reg.full(p + ".lkfa.alpha", {2 * d + 3}, T(1));
    st.beta = reg.full(p + ".lkfa.beta", {2 * d + 3}, T(0));
    st.post = nn::Linear<T>(reg, p + ".lkfa.post", 2 * d + 3, d);
    st.scan_norm = nn::LayerNorm<T>(reg, p + ".gkfa.norm", d);
    if (cfg_.attention_gkfa) {
      st.attention = nn::MultiHeadAttention<T>(reg, p + ".gkfa.attn", d, cfg_.heads);
    } else {
      st.scan_fwd = nn::SelectiveScan<T>(reg, p + ".gkfa.scan_a", d, cfg_.ssm_state);
      if (!cfg_.uni_mamba) st.scan_bwd = nn::SelectiveScan<T>(reg, p + ".gkfa.scan_b", d, cfg_.ssm_state);
    }
    st.rec_norm = nn::LayerNorm<T>(reg, p + ".rec.norm", d);
    st.rec = nn::Mlp<T>(reg, p + ".rec", {d, cfg_.rec_hidden, m3});
    // Offsets start near zero (a few millimetres) instead of O(1) metres.
    for (auto& v : st.rec.layers.back().weight.values_mut()) v *= T(0.01);
    for (auto& v : st.rec.layers.back().bias.values_mut()) v *= T(0.01);
    stages.push_back(std::move(st));
  }
}

template <typename T>
EncoderOutput<T> KeypointNet<T>::encode(const geo::PointCloud& cloud) const {
  cloud.validate();
  if (!cloud.has_appearance()) throw InputError("encoder needs appearance channels");
  if (cloud.appearance.cols() != cfg_.appearance) {
    throw InputError("encoder expects " + std::to_string(cfg_.appearance) + " appearance channels, got " +
                     std::to_string(cloud.appearance.cols()));
  }
  const int n = cloud.size();
  const int k = std::min(cfg_.encoder_k, n);
  EncoderOutput<T> out;
  out.centroid = cloud.points.colwise().mean().transpose();
  out.centered_points = cloud.points.rowwise() - out.centroid.transpose();

  // Centered coordinates plus mean and max offsets to the k nearest points
  // (self included).
  const auto nb = geo::knn(out.centered_points, out.centered_points, k);
  geo::Matrix g(n, 9);
  for (int i = 0; i < n; ++i) {
    const geo::Vec3 c = out.centered_points.row(i).transpose();
    geo::Vec3 sum = geo::Vec3::Zero();
    geo::Vec3 mx = geo::Vec3::Constant(-std::numeric_limits<double>::infinity());
    for (int j = 0; j < k; ++j) {
      const geo::Vec3 off = out.centered_points.row(nb[static_cast<std::size_t>(i * k + j)]).transpose() - c;
      sum += off;
      mx = mx.cwiseMax(off);
    }
    g.row(i) << c.transpose(), (sum / k).transpose(), mx.transpose();
  }

  out.raw = constant<T>(geo::Matrix(cloud.points));
  out.centered = constant<T>(geo::Matrix(out.centered_points));
  out.sem_feats = sem_mlp(constant<T>(cloud.appearance));
  out.geo_feats = geo_mlp(constant<T>(g));
  out.pos_embed = cfg_.zero_pos_embed ? Tensor<T>::zeros({n, cfg_.d_pos}) : pos_mlp(out.raw);
  out.fused = ad::gelu(fuse(ad::concat_cols<T>({out.sem_feats, out.geo_feats, out.pos_embed})));
  return out;
}

template <typename T>
KeypointSet<T> KeypointNet<T>::detect_keypoints(const EncoderOutput<T>& enc) const {
  const Tensor<T>& f = enc.fused;
  const auto memory = memory_norm(f);
  const auto kv = cross_attn.project_memory(memory, memory);
  Tensor<T> q = query_bank;
  for (const auto& r : rounds) {
    Tensor<T> h = r.norm_self(q);
    Tensor<T> hp = ad::add(h, query_pos);
    q = ad::add(q, r.self_attn(hp, hp, h));
    q = ad::add(q, cross_attn.attend(ad::add(r.norm_cross(q), query_pos), kv));
    q = ad::add(q, r.ffn(r.norm_ffn(q)));
  }
  // The content part starts at zero for every query; the positional part
  // is what tells them apart.
  q = query_norm(ad::add(q, query_pos));

  // Cosine similarity rows, softmax over points.
  const Tensor<T> dots = ad::matmul_nt(q, f);
  const Tensor<T> norms = ad::matmul_nt(ad::row_norm(q), ad::row_norm(f));
  Tensor<T> logits = ad::div(dots, ad::add_scalar(norms, static_cast<T>(cfg_.phi)));
  if (cfg_.cosine_scale != 1.0) logits = ad::scale(logits, static_cast<T>(cfg_.cosine_scale));
  KeypointSet<T> k;
  k.assign = ad::softmax(logits, 1);
  k.coords = ad::matmul(k.assign, enc.raw);
  k.centered = ad::matmul(k.assign, enc.centered);
  k.feats = ad::matmul(k.assign, f);
  return k;
}

template <typename T>
std::vector<int> KeypointNet<T>::local_neighbours(const KeypointSet<T>& k, const EncoderOutput<T>& enc,
                                                  int count) const {
  const int n = static_cast<int>(enc.centered_points.rows());
  if (count > n) {
    throw ArgumentError("LKFA neighbourhood K=" + std::to_string(count) + " exceeds cloud size " + std::to_string(n));
  }
  const geo::Points kp = to_points(k.centered);
  auto idx = geo::knn(kp, enc.centered_points, count);
  if (ad::kink_monitor_active() && count < n) {
    // Neighbour sets switch where the K-th and (K+1)-th distances meet.
    const auto wider = geo::knn(kp, enc.centered_points, count + 1);
    for (int i = 0; i < kp.rows(); ++i) {
      const auto at = [&](int j) {
        return (enc.centered_points.row(wider[static_cast<std::size_t>(i * (count + 1) + j)]) - kp.row(i)).norm();
      };
      ad::report_kink_margin(0.5 * (at(count) - at(count - 1)));
    }
  }
  return idx;
}

template <typename T>
Tensor<T> KeypointNet<T>::lkfa_forward(int stage, const KeypointSet<T>& k, const Tensor<T>& feats,
                                       const EncoderOutput<T>& enc, const std::vector<int>& nbr) const {
  const StageParams<T>& st = stages.at(static_cast<std::size_t>(stage));
  const int K = static_cast<int>(nbr.size()) / k.centered.dim(0);
  const Tensor<T> f = ad::add(feats, st.pos(k.centered));
  const Tensor<T> rel = ad::sub(ad::gather_rows(enc.centered, nbr), ad::repeat_rows(k.centered, K));
  const Tensor<T> group =
      ad::group_norm(ad::concat_cols<T>({ad::gather_rows(enc.fused, nbr), rel}), K, static_cast<T>(cfg_.group_eps));
  const Tensor<T> center = ad::repeat_rows(st.center_norm(f), K);
  const Tensor<T> affine = ad::add_rowvec(ad::mul_rowvec(ad::concat_cols<T>({group, center}), st.alpha), st.beta);
  return ad::add(f, st.post(ad::group_max(affine, K)));
}

template <typename T>
Tensor<T> KeypointNet<T>::gkfa_forward(int stage, const Tensor<T>& local) const {
  const StageParams<T>& st = stages.at(static_cast<std::size_t>(stage));
  const Tensor<T> x = st.scan_norm(local);
  if (cfg_.attention_gkfa) return ad::add(local, st.attention(x, x, x));
  Tensor<T> out = ad::add(local, st.scan_fwd(x));
  if (cfg_.uni_mamba) return out;
  const bool rows = cfg_.psf_instead_of_fsf;
  Tensor<T> back = st.scan_bwd(rows ? ad::reverse_rows(x) : fsf(x));
  if (cfg_.reflip_backward) back = rows ? ad::reverse_rows(back) : fsf(back);
  return ad::add(out, back);
}

template <typename T>
Reconstruction<T> KeypointNet<T>::reconstruct(int stage, const Tensor<T>& global, const Tensor<T>& centered_kpts,
                                              const Tensor<T>& centered_cloud) const {
  const StageParams<T>& st = stages.at(static_cast<std::size_t>(stage));
  const int m = cfg_.rec_repeats();
  // One 3m-wide output per keypoint: the same as an MLP over the m repeated
  // feature rows with a separate final projection per copy.
  const Tensor<T> offsets = ad::reshape(st.rec(st.rec_norm(global)), {global.dim(0) * m, 3});
  Reconstruction<T> r;
  r.points = ad::add(ad::repeat_rows(centered_kpts, m), offsets);
  r.l_sim = ad::chamfer(centered_cloud, r.points);
  return r;
}

template <typename T>
StackOutput<T> KeypointNet<T>::stack_forward(const EncoderOutput<T>& enc, const KeypointSet<T>& k) const {
  const auto nbr = local_neighbours(k, enc, cfg_.local_k);
  StackOutput<T> out;
  Tensor<T> feats = k.feats;
  for (int s = 0; s < cfg_.stages; ++s) {
    feats = gkfa_forward(s, lkfa_forward(s, k, feats, enc, nbr));
    out.stage_l_sim.push_back(reconstruct(s, feats, k.centered, enc.centered).l_sim);
  }
  Tensor<T> total = out.stage_l_sim.front();
  for (std::size_t s = 1; s < out.stage_l_sim.size(); ++s) total = ad::add(total, out.stage_l_sim[s]);
  out.l_sim = ad::scale(total, T(1) / static_cast<T>(cfg_.stages));
  out.feats = feats;
  return out;
}

#define INKL_INSTANTIATE(T)                                                                   \
  template Tensor<T> fsf(const Tensor<T>&);                                                   \
  template Tensor<T> surface_loss(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> separation_loss(const Tensor<T>&, int, double);                         \
  template Tensor<T> object_chamfer_loss(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> diversity_loss(const Tensor<T>&, double);                               \
  template class KeypointNet<T>;

INKL_INSTANTIATE(float)
INKL_INSTANTIATE(double)

}  // namespace inkl::model
