#pragma once

#include <vector>

#include "inkl/tensor.hpp"

// Differentiable primitives. Everything the model needs and nothing more;
// 2D tensors are [rows, cols] in row-major order.
namespace inkl::ad {

// --- linear algebra -------------------------------------------------------

/// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a * b^T: [m,k] x [n,k] -> [m,n]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// y = x w + b over the trailing axis of x; `b` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// --- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

/// x + v with v broadcast over every row (v has x's trailing extent).
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v);
/// x * v with v broadcast over every row.
template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v);
/// x * s where s holds a single element.
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T>
Tensor<T> neg(const Tensor<T>& x);
template <typename T>
Tensor<T> exp(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x);
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);
/// tanh-approximated GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
/// max(x, lo); gradient is zero where the clamp is active.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo);
/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
template <typename T>
Tensor<T> smooth_l1(const Tensor<T>& x);

// --- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Column means of [r,c] -> [1,c].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x);
/// Column maxima of [r,c] -> [1,c]; gradient routes to the first argmax.
template <typename T>
Tensor<T> max_rows(const Tensor<T>& x);
/// Per-row Euclidean norm of [r,c] -> [r,1]. Zero rows get zero gradient.
template <typename T>
Tensor<T> row_norm(const Tensor<T>& x);
/// Euclidean (Frobenius) norm of all entries -> [1].
template <typename T>
Tensor<T> norm(const Tensor<T>& x);

/// Softmax along `axis` (max-subtracted).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Row-wise layer normalization with learnable gain/shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     T eps = T(1e-5));

/// x is [G*K, C] viewed as G groups of K rows. Each group is shifted by its
/// mean and divided by (std + eps), statistics over all K*C entries.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int group_size, T eps);

/// [G*K, C] -> [G, C], max over the K rows of each group (first argmax wins).
template <typename T>
Tensor<T> group_max(const Tensor<T>& x, int group_size);

// --- structure ------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int count);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int start, int count);
/// Rows x[idx[i]]; backward scatters (accumulates) into x.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& idx);
/// Each row repeated `times` consecutively: row i -> rows i*times .. i*times+times-1.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& x, int times);
/// Channel order reversed inside every row.
template <typename T>
Tensor<T> reverse_cols(const Tensor<T>& x);
/// Row order reversed.
template <typename T>
Tensor<T> reverse_rows(const Tensor<T>& x);
/// Row-wise cross product of two [r,3] tensors.
template <typename T>
Tensor<T> cross3(const Tensor<T>& a, const Tensor<T>& b);

// --- point-set losses -----------------------------------------------------

/// Symmetric Chamfer distance with squared Euclidean terms:
/// mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2. Pairings are treated as
/// constants in the backward pass.
template <typename T>
Tensor<T> chamfer(const Tensor<T>& a, const Tensor<T>& b);

/// mean_a min_b |a-b|^2 only.
template <typename T>
Tensor<T> chamfer_one_sided(const Tensor<T>& a, const Tensor<T>& b);

// --- selective scan -------------------------------------------------------

/// Core recurrence of the selective state-space scan. Shapes:
/// u, delta [L,d]; a [d,n] (already negative); b, c [L,n]; skip [d].
///   h_t = exp(delta_t * a) h_{t-1} + (delta_t * b_t) u_t
///   y_t = c_t . h_t + skip * u_t
template <typename T>
Tensor<T> selective_scan_core(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a,
                              const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& skip);

}  // namespace inkl::ad
