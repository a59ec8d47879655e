#include "inkl/nn.hpp"

#include <cmath>

namespace inkl::nn {

template <typename T>
Tensor<T> ParamRegistry<T>::add(const std::string& name, Tensor<T> t) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  t.set_name(name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParamRegistry<T>::uniform(const std::string& name, Shape shape, double bound) {
  const auto n = static_cast<std::size_t>(ad::shape_numel(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(n);
  for (auto& v : values) v = static_cast<T>(dist(rng_));
  return add(name, Tensor<T>::from(std::move(shape), std::move(values)));
}

template <typename T>
Tensor<T> ParamRegistry<T>::full(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>::full(std::move(shape), value));
}

template <typename T>
Tensor<T> ParamRegistry<T>::from_values(const std::string& name, Shape shape,
                                        std::vector<T> values) {
  return add(name, Tensor<T>::from(std::move(shape), std::move(values)));
}

template <typename T>
Tensor<T> ParamRegistry<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
std::int64_t ParamRegistry<T>::element_count() const {
  return element_count("");
}

template <typename T>
std::int64_t ParamRegistry<T>::element_count(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries_)
    if (name.compare(0, prefix.size(), prefix) == 0) n += t.numel();
  return n;
}

template <typename T>
void ParamRegistry<T>::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
Linear<T>::Linear(ParamRegistry<T>& reg, const std::string& name, int din, int dout, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(din));
  weight = reg.uniform(name + ".w", {din, dout}, bound);
  if (bias) this->bias = reg.uniform(name + ".b", {dout}, bound);
}

template <typename T>
Mlp<T>::Mlp(ParamRegistry<T>& reg, const std::string& name, const std::vector<int>& widths,
            bool final_activation)
    : final_activation(final_activation) {
  if (widths.size() < 2) throw ConfigError("MLP '" + name + "' needs at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(reg, name + "." + std::to_string(i), widths[i], widths[i + 1]);
  }
}

template <typename T>
Tensor<T> Mlp<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size() || final_activation) h = ad::gelu(h);
  }
  return h;
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamRegistry<T>& reg, const std::string& name, int dim) {
  gain = reg.full(name + ".gain", {dim}, T(1));
  shift = reg.full(name + ".shift", {dim}, T(0));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamRegistry<T>& reg, const std::string& name, int dim,
                                          int heads)
    : dim(dim), heads(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("attention '" + name + "': dim " + std::to_string(dim) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  q_proj = Linear<T>(reg, name + ".q", dim, dim);
  k_proj = Linear<T>(reg, name + ".k", dim, dim);
  v_proj = Linear<T>(reg, name + ".v", dim, dim);
  out_proj = Linear<T>(reg, name + ".o", dim, dim);
}

template <typename T>
typename MultiHeadAttention<T>::KeyValue MultiHeadAttention<T>::project_memory(
    const Tensor<T>& k_in, const Tensor<T>& v_in) const {
  return {k_proj(k_in), v_proj(v_in)};
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::attend(const Tensor<T>& q_in, const KeyValue& kv,
                                        std::vector<Tensor<T>>* weights_out) const {
  const Tensor<T> q = q_proj(q_in);
  const int head_dim = dim / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<Tensor<T>> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor<T> qh = heads == 1 ? q : ad::slice_cols(q, h * head_dim, head_dim);
    Tensor<T> kh = heads == 1 ? kv.keys : ad::slice_cols(kv.keys, h * head_dim, head_dim);
    Tensor<T> vh = heads == 1 ? kv.values : ad::slice_cols(kv.values, h * head_dim, head_dim);
    Tensor<T> w = ad::softmax(ad::scale(ad::matmul_nt(qh, kh), scale), 1);
    if (weights_out) weights_out->push_back(w);
    outputs.push_back(ad::matmul(w, vh));
  }
  Tensor<T> joined = heads == 1 ? outputs.front() : ad::concat_cols(outputs);
  return out_proj(joined);
}

template <typename T>
SelectiveScan<T>::SelectiveScan(ParamRegistry<T>& reg, const std::string& name, int dim, int state)
    : dim(dim), state(state) {
  std::vector<T> init(static_cast<std::size_t>(dim) * state);
  for (int c = 0; c < dim; ++c)
    for (int s = 0; s < state; ++s) init[static_cast<std::size_t>(c) * state + s] = std::log(T(s + 1));
  a_log = reg.from_values(name + ".a_log", {dim, state}, std::move(init));
  dt_proj = Linear<T>(reg, name + ".dt", dim, dim);
  // softplus(-2) ~ 0.127: slow initial dynamics.
  for (auto& v : dt_proj.bias.values_mut()) v = T(-2);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  b_proj = reg.uniform(name + ".b_proj", {dim, state}, bound);
  c_proj = reg.uniform(name + ".c_proj", {dim, state}, bound);
  skip = reg.full(name + ".skip", {dim}, T(1));
}

template <typename T>
Tensor<T> SelectiveScan<T>::operator()(const Tensor<T>& u) const {
  if (u.rank() != 2 || u.dim(0) < 1) {
    throw ArgumentError("selective scan needs a non-empty [L, d] sequence");
  }
  const Tensor<T> delta = ad::softplus(dt_proj(u));
  const Tensor<T> b = ad::matmul(u, b_proj);
  const Tensor<T> c = ad::matmul(u, c_proj);
  const Tensor<T> a = ad::neg(ad::exp(a_log));
  return ad::selective_scan_core(u, delta, a, b, c, skip);
}

template class ParamRegistry<float>;
template class ParamRegistry<double>;
template class Linear<float>;
template class Linear<double>;
template class Mlp<float>;
template class Mlp<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class SelectiveScan<float>;
template class SelectiveScan<double>;

}  // namespace inkl::nn
