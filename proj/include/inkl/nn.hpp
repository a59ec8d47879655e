#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "inkl/ops.hpp"

namespace inkl::nn {

using ad::Shape;
using ad::Tensor;

/// Named, insertion-ordered set of learnable tensors.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  /// Uniform(-bound, +bound) entries, drawn from the registry stream.
  Tensor<T> uniform(const std::string& name, Shape shape, double bound);
  Tensor<T> full(const std::string& name, Shape shape, T value);
  Tensor<T> from_values(const std::string& name, Shape shape, std::vector<T> values);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T> get(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::int64_t element_count() const;
  /// Number of scalar parameters whose name starts with `prefix`.
  std::int64_t element_count(const std::string& prefix) const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  Tensor<T> add(const std::string& name, Tensor<T> t);

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// y = x w + b with uniform(+-1/sqrt(fan_in)) init.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, int din, int dout, bool bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }

  Tensor<T> weight;
  Tensor<T> bias;
};

/// Stack of Linear layers with GELU between them (and after the last one
/// when `final_activation`).
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamRegistry<T>& reg, const std::string& name, const std::vector<int>& widths,
      bool final_activation = false);
  Tensor<T> operator()(const Tensor<T>& x) const;

  std::vector<Linear<T>> layers;
  bool final_activation = false;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamRegistry<T>& reg, const std::string& name, int dim);
  Tensor<T> operator()(const Tensor<T>& x) const { return ad::layer_norm(x, gain, shift); }

  Tensor<T> gain;
  Tensor<T> shift;
};

/// Scaled dot-product attention over `heads` column blocks, with input
/// projections for q/k/v and an output projection.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamRegistry<T>& reg, const std::string& name, int dim, int heads);

  struct KeyValue {
    Tensor<T> keys;
    Tensor<T> values;
  };
  /// Projected keys/values; reusable across several queries of one memory.
  KeyValue project_memory(const Tensor<T>& k_in, const Tensor<T>& v_in) const;

  Tensor<T> operator()(const Tensor<T>& q_in, const Tensor<T>& k_in, const Tensor<T>& v_in) const {
    return attend(q_in, project_memory(k_in, v_in));
  }
  /// `weights_out`, if given, receives each head's [Lq, Lk] attention matrix.
  Tensor<T> attend(const Tensor<T>& q_in, const KeyValue& kv,
                   std::vector<Tensor<T>>* weights_out = nullptr) const;

  int dim = 0;
  int heads = 1;
  Linear<T> q_proj, k_proj, v_proj, out_proj;
};

/// Selective state-space scan with input-dependent step size and B/C:
///   delta = softplus(u W_dt + b_dt), B = u W_B, C = u W_C, A = -exp(A_log)
template <typename T>
class SelectiveScan {
 public:
  SelectiveScan() = default;
  SelectiveScan(ParamRegistry<T>& reg, const std::string& name, int dim, int state);
  Tensor<T> operator()(const Tensor<T>& u) const;

  int dim = 0;
  int state = 0;
  Tensor<T> a_log;  // [d, n]
  Linear<T> dt_proj;
  Tensor<T> b_proj;  // [d, n]
  Tensor<T> c_proj;  // [d, n]
  Tensor<T> skip;    // [d]
};

}  // namespace inkl::nn
