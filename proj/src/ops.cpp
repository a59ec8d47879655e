#include "inkl/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace inkl::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
void require_rank2(const Tensor<T>& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2D tensor, got " + shape_str(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

int rows_of(const Shape& s) {
  int r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

template <typename T>
ConstMap<T> as_matrix(const std::vector<T>& v, int rows, int cols) {
  return ConstMap<T>(v.data(), rows, cols);
}

template <typename T>
MutMap<T> as_matrix(std::span<T> v, int rows, int cols) {
  return MutMap<T>(v.data(), rows, cols);
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D df) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  auto* xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, df](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * df(xn->value[i], self.value[i]);
    }
  });
}

template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
template <typename T>
using ArrMap = Eigen::Map<Arr<T>>;
template <typename T>
using CArrMap = Eigen::Map<const Arr<T>>;

// Same with Eigen array kernels: f(x, y) writes y; df(x, y, g, gx) adds into gx.
template <typename T, typename F, typename D>
Tensor<T> unary_vec(const Tensor<T>& x, F f, D df) {
  const auto n = static_cast<Eigen::Index>(x.numel());
  std::vector<T> out(static_cast<std::size_t>(n));
  ArrMap<T> y(out.data(), n);
  f(CArrMap<T>(x.values().data(), n), y);
  auto* xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, df, n](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    ArrMap<T> g(gx.data(), n);
    df(CArrMap<T>(xn->value.data(), n), CArrMap<T>(self.value.data(), n), CArrMap<T>(self.grad.data(), n), g);
  });
}

}  // namespace

// --- linear algebra -------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MutMap<T>(out.data(), m, n).noalias() =
      as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, k, n);
  add_flops(static_cast<std::uint64_t>(m) * k * n);
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](Node<T>& self) {
    auto g = as_matrix(self.grad, m, n);
    if (auto ga = grad_of(an); !ga.empty()) {
      as_matrix(ga, m, k).noalias() += g * as_matrix(bn->value, k, n).transpose();
    }
    if (auto gb = grad_of(bn); !gb.empty()) {
      as_matrix(gb, k, n).noalias() += as_matrix(an->value, m, k).transpose() * g;
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MutMap<T>(out.data(), m, n).noalias() =
      as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, n, k).transpose();
  add_flops(static_cast<std::uint64_t>(m) * k * n);
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](Node<T>& self) {
    auto g = as_matrix(self.grad, m, n);
    if (auto ga = grad_of(an); !ga.empty()) {
      as_matrix(ga, m, k).noalias() += g * as_matrix(bn->value, n, k);
    }
    if (auto gb = grad_of(bn); !gb.empty()) {
      as_matrix(gb, n, k).noalias() += g.transpose() * as_matrix(an->value, m, k);
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.values().size());
  MutMap<T>(out.data(), n, m) = as_matrix(a.node()->value, m, n).transpose();
  auto* an = a.node();
  return make_result<T>({n, m}, std::move(out), {&a}, [an, m, n](Node<T>& self) {
    if (auto ga = grad_of(an); !ga.empty()) {
      as_matrix(ga, m, n) += as_matrix(self.grad, n, m).transpose();
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not fit weight " +
                         shape_str(w.shape()));
  }
  const int din = w.dim(0), dout = w.dim(1);
  if (b.defined() && b.numel() != dout) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not fit weight " +
                         shape_str(w.shape()));
  }
  const int rows = rows_of(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  std::vector<T> out(static_cast<std::size_t>(rows) * dout);
  auto y = MutMap<T>(out.data(), rows, dout);
  y.noalias() = as_matrix(x.node()->value, rows, din) * as_matrix(w.node()->value, din, dout);
  if (b.defined()) {
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.values().data(), dout);
  }
  add_flops(static_cast<std::uint64_t>(rows) * din * dout);
  auto* xn = x.node();
  auto* wn = w.node();
  auto* bn = b.defined() ? b.node() : nullptr;
  auto backward = [xn, wn, bn, rows, din, dout](Node<T>& self) {
    auto g = as_matrix(self.grad, rows, dout);
    if (auto gx = grad_of(xn); !gx.empty()) {
      as_matrix(gx, rows, din).noalias() += g * as_matrix(wn->value, din, dout).transpose();
    }
    if (auto gw = grad_of(wn); !gw.empty()) {
      as_matrix(gw, din, dout).noalias() += as_matrix(xn->value, rows, din).transpose() * g;
    }
    if (auto gb = grad_of(bn); !gb.empty()) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data(), dout) += g.colwise().sum();
    }
  };
  if (b.defined()) return make_result<T>(std::move(out_shape), std::move(out), {&x, &w, &b}, backward);
  return make_result<T>(std::move(out_shape), std::move(out), {&x, &w}, backward);
}

// --- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<T>& self) {
    if (auto ga = grad_of(an); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gb = grad_of(bn); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<T>& self) {
    if (auto ga = grad_of(an); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gb = grad_of(bn); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<T>& self) {
    if (auto ga = grad_of(an); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bn->value[i];
    if (auto gb = grad_of(bn); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * an->value[i];
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "div");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<T>& self) {
    if (auto ga = grad_of(an); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] / bn->value[i];
    if (auto gb = grad_of(bn); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i)
        gb[i] -= self.grad[i] * self.value[i] / bn->value[i];
  });
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  const int cols = x.dim(-1);
  if (v.numel() != cols) {
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
  const int rows = static_cast<int>(x.numel() / cols);
  std::vector<T> out(x.values().begin(), x.values().end());
  const auto& vv = v.values();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] += vv[c];
  auto* xn = x.node();
  auto* vn = v.node();
  return make_result<T>(x.shape(), std::move(out), {&x, &v}, [xn, vn, rows, cols](Node<T>& self) {
    if (auto gx = grad_of(xn); !gx.empty())
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    if (auto gv = grad_of(vn); !gv.empty())
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gv[c] += self.grad[static_cast<std::size_t>(r) * cols + c];
  });
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  const int cols = x.dim(-1);
  if (v.numel() != cols) {
    throw DimensionError("mul_rowvec: vector " + shape_str(v.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
  const int rows = static_cast<int>(x.numel() / cols);
  std::vector<T> out(x.values().begin(), x.values().end());
  const auto& vv = v.values();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] *= vv[c];
  auto* xn = x.node();
  auto* vn = v.node();
  return make_result<T>(x.shape(), std::move(out), {&x, &v}, [xn, vn, rows, cols](Node<T>& self) {
    if (auto gx = grad_of(xn); !gx.empty())
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const auto i = static_cast<std::size_t>(r) * cols + c;
          gx[i] += self.grad[i] * vn->value[c];
        }
    if (auto gv = grad_of(vn); !gv.empty())
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const auto i = static_cast<std::size_t>(r) * cols + c;
          gv[c] += self.grad[i] * xn->value[i];
        }
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) {
    throw DimensionError("mul_scalar: factor has shape " + shape_str(s.shape()));
  }
  const T f = s.item();
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= f;
  auto* xn = x.node();
  auto* sn = s.node();
  return make_result<T>(x.shape(), std::move(out), {&x, &s}, [xn, sn](Node<T>& self) {
    const T f = sn->value[0];
    if (auto gx = grad_of(xn); !gx.empty())
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * f;
    if (auto gs = grad_of(sn); !gs.empty()) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn->value[i];
      gs[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return unary<T>(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary<T>(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale<T>(x, T(-1));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_vec<T>(
      x, [](const auto& v, auto& y) { y = v.exp(); },
      [](const auto&, const auto& y, const auto& g, auto& gx) { gx += g * y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x) {
  return unary<T>(x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  // log(1 + e^v) = max(v, 0) + log(1 + e^-|v|)
  return unary_vec<T>(
      x, [](const auto& v, auto& y) { y = v.max(T(0)) + ((-v.abs()).exp() + T(1)).log(); },
      [](const auto& v, const auto&, const auto& g, auto& gx) { gx += g / ((-v).exp() + T(1)); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  // k = sqrt(2/pi), c = 0.044715
  return unary_vec<T>(
      x,
      [](const auto& v, auto& y) {
        y = T(0.5) * v * ((T(0.7978845608028654) * (v + T(0.044715) * v.cube())).tanh() + T(1));
      },
      [](const auto& v, const auto&, const auto& g, auto& gx) {
        const T k = T(0.7978845608028654), c = T(0.044715);
        const Arr<T> t = (k * (v + c * v.cube())).tanh();
        gx += g * (T(0.5) * (t + T(1)) + T(0.5) * k * v * (T(1) - t.square()) * (T(3) * c * v.square() + T(1)));
      });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
  if (kink_monitor_active()) {
    for (T v : x.values()) report_kink_margin(std::abs(static_cast<double>(v - lo)));
  }
  return unary<T>(
      x, [lo](T v) { return v < lo ? lo : v; }, [lo](T v, T) { return v < lo ? T(0) : T(1); });
}

template <typename T>
Tensor<T> smooth_l1(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::abs(v) < T(1) ? T(0.5) * v * v : std::abs(v) - T(0.5); },
      [](T v, T) {
        if (std::abs(v) < T(1)) return v;
        return v > T(0) ? T(1) : T(-1);
      });
}

// --- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto& xv = x.values();
  const T total = std::accumulate(xv.begin(), xv.end(), T(0));
  auto* xn = x.node();
  return make_result<T>({1}, {total}, {&x}, [xn](Node<T>& self) {
    if (auto gx = grad_of(xn); !gx.empty())
      for (auto& g : gx) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale<T>(sum<T>(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  require_rank2(x, "mean_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(cols), T(0));
  const auto& xv = x.values();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[c] += xv[static_cast<std::size_t>(r) * cols + c];
  for (auto& v : out) v /= static_cast<T>(rows);
  auto* xn = x.node();
  return make_result<T>({1, cols}, std::move(out), {&x}, [xn, rows, cols](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    const T inv = T(1) / static_cast<T>(rows);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) gx[static_cast<std::size_t>(r) * cols + c] += self.grad[c] * inv;
  });
}

namespace {

// Max over `group` consecutive rows for each column; returns argmax rows and
// reports the smallest positive gap to the runner-up. Exact ties are values
// replicated from one source (broadcast features) and move together.
template <typename T>
void grouped_argmax(const std::vector<T>& xv, int groups, int group, int cols, std::vector<T>& out,
                    std::vector<int>& arg) {
  out.assign(static_cast<std::size_t>(groups) * cols, T(0));
  arg.assign(out.size(), 0);
  const bool monitor = kink_monitor_active();
  for (int g = 0; g < groups; ++g) {
    for (int c = 0; c < cols; ++c) {
      int best = g * group;
      T best_v = xv[static_cast<std::size_t>(best) * cols + c];
      for (int k = 1; k < group; ++k) {
        const int r = g * group + k;
        const T v = xv[static_cast<std::size_t>(r) * cols + c];
        if (v > best_v) {
          best_v = v;
          best = r;
        }
      }
      out[static_cast<std::size_t>(g) * cols + c] = best_v;
      arg[static_cast<std::size_t>(g) * cols + c] = best;
      if (monitor) {
        for (int k = 0; k < group; ++k) {
          const int r = g * group + k;
          const T gap = best_v - xv[static_cast<std::size_t>(r) * cols + c];
          if (r != best && gap > T(0)) report_kink_margin(static_cast<double>(gap));
        }
      }
    }
  }
}

template <typename T>
Tensor<T> grouped_max(const Tensor<T>& x, int groups, int group, Shape out_shape) {
  const int cols = x.dim(-1);
  std::vector<T> out;
  std::vector<int> arg;
  grouped_argmax(x.node()->value, groups, group, cols, out, arg);
  auto* xn = x.node();
  auto argp = std::make_shared<std::vector<int>>(std::move(arg));
  return make_result<T>(std::move(out_shape), std::move(out), {&x}, [xn, argp, cols](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const auto c = i % static_cast<std::size_t>(cols);
      gx[static_cast<std::size_t>((*argp)[i]) * cols + c] += self.grad[i];
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> max_rows(const Tensor<T>& x) {
  require_rank2(x, "max_rows");
  return grouped_max<T>(x, 1, x.dim(0), {1, x.dim(1)});
}

template <typename T>
Tensor<T> group_max(const Tensor<T>& x, int group_size) {
  require_rank2(x, "group_max");
  if (group_size < 1 || x.dim(0) % group_size != 0) {
    throw DimensionError("group_max: " + std::to_string(x.dim(0)) + " rows not divisible into groups of " +
                         std::to_string(group_size));
  }
  const int groups = x.dim(0) / group_size;
  return grouped_max<T>(x, groups, group_size, {groups, x.dim(1)});
}

template <typename T>
Tensor<T> row_norm(const Tensor<T>& x) {
  require_rank2(x, "row_norm");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(rows));
  const auto& xv = x.values();
  for (int r = 0; r < rows; ++r) {
    T acc = 0;
    for (int c = 0; c < cols; ++c) acc += xv[static_cast<std::size_t>(r) * cols + c] * xv[static_cast<std::size_t>(r) * cols + c];
    out[r] = std::sqrt(acc);
  }
  auto* xn = x.node();
  return make_result<T>({rows, 1}, std::move(out), {&x}, [xn, rows, cols](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    for (int r = 0; r < rows; ++r) {
      if (self.value[r] == T(0)) continue;
      const T f = self.grad[r] / self.value[r];
      for (int c = 0; c < cols; ++c) {
        const auto i = static_cast<std::size_t>(r) * cols + c;
        gx[i] += f * xn->value[i];
      }
    }
  });
}

template <typename T>
Tensor<T> norm(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.values()) acc += v * v;
  const T n = std::sqrt(acc);
  auto* xn = x.node();
  return make_result<T>({1}, {n}, {&x}, [xn](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty() || self.value[0] == T(0)) return;
    const T f = self.grad[0] / self.value[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += f * xn->value[i];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int r = x.rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.shape()[i];
  for (int i = a + 1; i < r; ++i) inner *= x.shape()[i];
  const int n = x.shape()[a];
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  if (inner == 1) {
    // Contiguous rows: vectorized exp.
    Eigen::Map<const RowMat<T>> xm(xv.data(), outer, n);
    Eigen::Map<RowMat<T>> ym(out.data(), outer, n);
    for (std::int64_t o = 0; o < outer; ++o) {
      ym.row(o) = (xm.row(o).array() - xm.row(o).maxCoeff()).exp().matrix();
      ym.row(o) /= ym.row(o).sum();
    }
    auto* xn = x.node();
    return make_result<T>(x.shape(), std::move(out), {&x}, [xn, outer, n](Node<T>& self) {
      auto gx = grad_of(xn);
      if (gx.empty()) return;
      Eigen::Map<const RowMat<T>> y(self.value.data(), outer, n);
      Eigen::Map<const RowMat<T>> g(self.grad.data(), outer, n);
      Eigen::Map<RowMat<T>> gm(gx.data(), outer, n);
      for (std::int64_t o = 0; o < outer; ++o) {
        const T dot = y.row(o).dot(g.row(o));
        gm.row(o).array() += y.row(o).array() * (g.row(o).array() - dot);
      }
    });
  }
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = 0;
      for (int j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (int j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  auto* xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, outer, inner, n](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * n * inner + in;
        T dot = 0;
        for (int j = 0; j < n; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
        for (int j = 0; j < n; ++j) {
          const auto i = base + j * inner;
          gx[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, T eps) {
  const int cols = x.dim(-1);
  if (gain.numel() != cols || shift.numel() != cols) {
    throw DimensionError("layer_norm: gain/shift " + shape_str(gain.shape()) + " do not fit " +
                         shape_str(x.shape()));
  }
  const int rows = static_cast<int>(x.numel() / cols);
  using RowVec = Eigen::Array<T, 1, Eigen::Dynamic>;
  const Eigen::Map<const RowVec> gv(gain.values().data(), cols);
  const Eigen::Map<const RowVec> sv(shift.values().data(), cols);
  auto xhat = std::make_shared<std::vector<T>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  std::vector<T> out(x.values().size());
  Eigen::Map<const RowMat<T>> xm(x.values().data(), rows, cols);
  Eigen::Map<RowMat<T>> hm(xhat->data(), rows, cols);
  Eigen::Map<RowMat<T>> ym(out.data(), rows, cols);
  for (int r = 0; r < rows; ++r) {
    const T mu = xm.row(r).mean();
    hm.row(r).array() = xm.row(r).array() - mu;
    const T var = hm.row(r).squaredNorm() / static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    hm.row(r) *= inv;
    ym.row(r).array() = hm.row(r).array() * gv + sv;
  }
  auto* xn = x.node();
  auto* gn = gain.node();
  auto* sn = shift.node();
  return make_result<T>(
      x.shape(), std::move(out), {&x, &gain, &shift},
      [xn, gn, sn, xhat, inv_std, rows, cols](Node<T>& self) {
        auto gx = grad_of(xn);
        auto gg = grad_of(gn);
        auto gs = grad_of(sn);
        Eigen::Map<const RowMat<T>> g(self.grad.data(), rows, cols);
        Eigen::Map<const RowMat<T>> h(xhat->data(), rows, cols);
        if (!gg.empty()) Eigen::Map<RowVec>(gg.data(), cols) += (g.array() * h.array()).colwise().sum();
        if (!gs.empty()) Eigen::Map<RowVec>(gs.data(), cols) += g.array().colwise().sum();
        if (gx.empty()) return;
        const Eigen::Map<const RowVec> gv(gn->value.data(), cols);
        Eigen::Map<RowMat<T>> gxm(gx.data(), rows, cols);
        RowVec gh(cols);
        for (int r = 0; r < rows; ++r) {
          gh = g.row(r).array() * gv;
          const T mean_gh = gh.mean();
          const T mean_ghx = (gh * h.row(r).array()).mean();
          gxm.row(r).array() += (*inv_std)[r] * (gh - mean_gh - h.row(r).array() * mean_ghx);
        }
      });
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int group_size, T eps) {
  require_rank2(x, "group_norm");
  if (group_size < 1 || x.dim(0) % group_size != 0) {
    throw DimensionError("group_norm: " + std::to_string(x.dim(0)) +
                         " rows not divisible into groups of " + std::to_string(group_size));
  }
  const int cols = x.dim(1);
  const int groups = x.dim(0) / group_size;
  const std::size_t n = static_cast<std::size_t>(group_size) * cols;
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  auto stats = std::make_shared<std::vector<T>>(static_cast<std::size_t>(groups) * 2);  // mean, std
  for (int g = 0; g < groups; ++g) {
    const std::size_t base = g * n;
    T mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += xv[base + i];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
    const T sd = std::sqrt(var / static_cast<T>(n));
    (*stats)[2 * g] = mu;
    (*stats)[2 * g + 1] = sd;
    const T denom = sd + eps;
    for (std::size_t i = 0; i < n; ++i) out[base + i] = (xv[base + i] - mu) / denom;
  }
  auto* xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, stats, groups, n, eps](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    for (int g = 0; g < groups; ++g) {
      const std::size_t base = g * n;
      const T mu = (*stats)[2 * g];
      const T sd = (*stats)[2 * g + 1];
      const T s = sd + eps;
      T gmean = 0, gdot = 0;
      for (std::size_t i = 0; i < n; ++i) {
        gmean += self.grad[base + i];
        gdot += self.grad[base + i] * (xn->value[base + i] - mu);
      }
      gmean /= static_cast<T>(n);
      const T coef = sd > T(0) ? gdot / (s * s * static_cast<T>(n) * sd) : T(0);
      for (std::size_t i = 0; i < n; ++i) {
        gx[base + i] += (self.grad[base + i] - gmean) / s - coef * (xn->value[base + i] - mu);
      }
    }
  });
}

// --- structure ------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  auto* xn = x.node();
  return make_result<T>(std::move(shape), std::move(out), {&x}, [xn](Node<T>& self) {
    if (auto gx = grad_of(xn); !gx.empty())
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int rows = parts[0].dim(0);
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row counts differ, " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(static_cast<std::size_t>(rows) * total);
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].values();
    const int w = widths[k];
    for (int r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r) * w, w,
                  out.begin() + static_cast<std::ptrdiff_t>(r) * total + offset);
    offset += w;
  }
  std::vector<Node<T>*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result<T>({rows, total}, std::move(out), parts,
                        [nodes, widths, rows, total](Node<T>& self) {
                          int offset = 0;
                          for (std::size_t k = 0; k < nodes.size(); ++k) {
                            const int w = widths[k];
                            if (auto g = grad_of(nodes[k]); !g.empty()) {
                              for (int r = 0; r < rows; ++r)
                                for (int c = 0; c < w; ++c)
                                  g[static_cast<std::size_t>(r) * w + c] +=
                                      self.grad[static_cast<std::size_t>(r) * total + offset + c];
                            }
                            offset += w;
                          }
                        });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const int cols = parts[0].dim(1);
  int rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != cols) {
      throw DimensionError("concat_rows: column counts differ, " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  std::vector<Node<T>*> nodes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    nodes.push_back(p.node());
  }
  return make_result<T>({rows, cols}, std::move(out), parts, [nodes](Node<T>& self) {
    std::size_t offset = 0;
    for (auto* n : nodes) {
      const std::size_t len = n->value.size();
      if (auto g = grad_of(n); !g.empty())
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      offset += len;
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int count) {
  require_rank2(x, "slice_cols");
  const int rows = x.dim(0), cols = x.dim(1);
  if (start < 0 || count < 1 || start + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") outside " + shape_str(x.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(rows) * count);
  const auto& xv = x.values();
  for (int r = 0; r < rows; ++r)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r) * cols + start, count,
                out.begin() + static_cast<std::ptrdiff_t>(r) * count);
  auto* xn = x.node();
  return make_result<T>({rows, count}, std::move(out), {&x},
                        [xn, rows, cols, start, count](Node<T>& self) {
                          auto gx = grad_of(xn);
                          if (gx.empty()) return;
                          for (int r = 0; r < rows; ++r)
                            for (int c = 0; c < count; ++c)
                              gx[static_cast<std::size_t>(r) * cols + start + c] +=
                                  self.grad[static_cast<std::size_t>(r) * count + c];
                        });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int start, int count) {
  require_rank2(x, "slice_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  if (start < 0 || count < 1 || start + count > rows) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") outside " + shape_str(x.shape()));
  }
  const auto first = x.values().begin() + static_cast<std::ptrdiff_t>(start) * cols;
  std::vector<T> out(first, first + static_cast<std::ptrdiff_t>(count) * cols);
  auto* xn = x.node();
  return make_result<T>({count, cols}, std::move(out), {&x}, [xn, start, cols](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    const std::size_t offset = static_cast<std::size_t>(start) * cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[offset + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& idx) {
  require_rank2(x, "gather_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  if (idx.empty()) throw DimensionError("gather_rows: empty index list");
  std::vector<T> out(idx.size() * static_cast<std::size_t>(cols));
  const auto& xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[i]) + " outside " +
                           shape_str(x.shape()));
    }
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(idx[i]) * cols, cols,
                out.begin() + static_cast<std::ptrdiff_t>(i) * cols);
  }
  auto* xn = x.node();
  auto idxp = std::make_shared<std::vector<int>>(idx);
  return make_result<T>({static_cast<int>(idx.size()), cols}, std::move(out), {&x},
                        [xn, idxp, cols](Node<T>& self) {
                          auto gx = grad_of(xn);
                          if (gx.empty()) return;
                          for (std::size_t i = 0; i < idxp->size(); ++i) {
                            const std::size_t dst = static_cast<std::size_t>((*idxp)[i]) * cols;
                            const std::size_t src = i * cols;
                            for (int c = 0; c < cols; ++c) gx[dst + c] += self.grad[src + c];
                          }
                        });
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& x, int times) {
  require_rank2(x, "repeat_rows");
  if (times < 1) throw DimensionError("repeat_rows: times must be positive");
  const int rows = x.dim(0);
  std::vector<int> idx(static_cast<std::size_t>(rows) * times);
  for (int r = 0; r < rows; ++r)
    for (int k = 0; k < times; ++k) idx[static_cast<std::size_t>(r) * times + k] = r;
  return gather_rows<T>(x, idx);
}

template <typename T>
Tensor<T> reverse_cols(const Tensor<T>& x) {
  const int cols = x.dim(-1);
  const int rows = static_cast<int>(x.numel() / cols);
  std::vector<T> out(x.values().size());
  const auto& xv = x.values();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] = xv[static_cast<std::size_t>(r) * cols + (cols - 1 - c)];
  auto* xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {&x}, [xn, rows, cols](Node<T>& self) {
    auto gx = grad_of(xn);
    if (gx.empty()) return;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        gx[static_cast<std::size_t>(r) * cols + (cols - 1 - c)] += self.grad[static_cast<std::size_t>(r) * cols + c];
  });
}

template <typename T>
Tensor<T> reverse_rows(const Tensor<T>& x) {
  require_rank2(x, "reverse_rows");
  std::vector<int> idx(static_cast<std::size_t>(x.dim(0)));
  for (int r = 0; r < x.dim(0); ++r) idx[r] = x.dim(0) - 1 - r;
  return gather_rows<T>(x, idx);
}

template <typename T>
Tensor<T> cross3(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "cross3");
  if (a.dim(-1) != 3) throw DimensionError("cross3: expected [r,3], got " + shape_str(a.shape()));
  const int rows = static_cast<int>(a.numel() / 3);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto cr = [](const T* p, const T* q, T* o) {
    o[0] = p[1] * q[2] - p[2] * q[1];
    o[1] = p[2] * q[0] - p[0] * q[2];
    o[2] = p[0] * q[1] - p[1] * q[0];
  };
  std::vector<T> out(av.size());
  for (int r = 0; r < rows; ++r) cr(&av[3 * r], &bv[3 * r], &out[3 * r]);
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [an, bn, rows, cr](Node<T>& self) {
    auto ga = grad_of(an);
    auto gb = grad_of(bn);
    T tmp[3];
    for (int r = 0; r < rows; ++r) {
      const T* g = &self.grad[3 * r];
      if (!ga.empty()) {  // d/da (a x b).g = b x g
        cr(&bn->value[3 * r], g, tmp);
        for (int i = 0; i < 3; ++i) ga[3 * r + i] += tmp[i];
      }
      if (!gb.empty()) {  // d/db (a x b).g = g x a
        cr(g, &an->value[3 * r], tmp);
        for (int i = 0; i < 3; ++i) gb[3 * r + i] += tmp[i];
      }
    }
  });
}

// --- point-set losses -----------------------------------------------------

namespace {

template <typename T>
void require_cloud(const Tensor<T>& x, const char* op) {
  if (x.rank() != 2 || x.dim(1) != 3) {
    throw DimensionError(std::string(op) + ": expected [n,3] points, got " + shape_str(x.shape()));
  }
}

// For every row of `from`, nearest row of `to` (ties -> lowest index) and its
// squared distance. Reports the pairing margin when a kink monitor is active.
template <typename T>
void nearest(const std::vector<T>& from, int nf, const std::vector<T>& to, int nt,
             std::vector<int>& arg, std::vector<T>& dist) {
  using A = Eigen::Array<T, Eigen::Dynamic, 1>;
  A tx(nt), ty(nt), tz(nt), row(nt);
  for (int j = 0; j < nt; ++j) {
    tx[j] = to[3 * j];
    ty[j] = to[3 * j + 1];
    tz[j] = to[3 * j + 2];
  }
  arg.resize(nf);
  dist.resize(nf);
  const bool monitor = kink_monitor_active();
  for (int i = 0; i < nf; ++i) {
    const T px = from[3 * i], py = from[3 * i + 1], pz = from[3 * i + 2];
    row = (tx - px).square() + (ty - py).square() + (tz - pz).square();
    const T best_d = row.minCoeff();
    int best = 0;
    while (row[best] != best_d) ++best;
    arg[i] = best;
    dist[i] = best_d;
    if (monitor && nt > 1) {
      T second = std::numeric_limits<T>::infinity();
      for (int j = 0; j < nt; ++j)
        if (j != best) second = std::min(second, row[j]);
      // A coordinate shift of h moves a squared distance by about 2|d|h.
      const double gap = static_cast<double>(second - best_d);
      const double scale = 2.0 * (std::sqrt(static_cast<double>(best_d)) +
                                  std::sqrt(static_cast<double>(second))) + 1e-300;
      report_kink_margin(gap / scale);
    }
  }
  add_flops(static_cast<std::uint64_t>(nf) * nt * 3);
}

template <typename T>
void accumulate_pair_grads(std::span<T> gfrom, std::span<T> gto, const std::vector<T>& from,
                           const std::vector<T>& to, const std::vector<int>& arg, T factor) {
  for (std::size_t i = 0; i < arg.size(); ++i) {
    const int j = arg[i];
    for (int c = 0; c < 3; ++c) {
      const T d = T(2) * factor * (from[3 * i + c] - to[3 * j + c]);
      if (!gfrom.empty()) gfrom[3 * i + c] += d;
      if (!gto.empty()) gto[3 * j + c] -= d;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> chamfer(const Tensor<T>& a, const Tensor<T>& b) {
  require_cloud(a, "chamfer");
  require_cloud(b, "chamfer");
  const int na = a.dim(0), nb = b.dim(0);
  auto ab = std::make_shared<std::vector<int>>();
  auto ba = std::make_shared<std::vector<int>>();
  std::vector<T> dab, dba;
  nearest(a.node()->value, na, b.node()->value, nb, *ab, dab);
  nearest(b.node()->value, nb, a.node()->value, na, *ba, dba);
  T left = 0, right = 0;
  for (T d : dab) left += d;
  for (T d : dba) right += d;
  const T value = left / static_cast<T>(na) + right / static_cast<T>(nb);
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>({1}, {value}, {&a, &b}, [an, bn, ab, ba, na, nb](Node<T>& self) {
    const T g = self.grad[0];
    auto ga = grad_of(an);
    auto gb = grad_of(bn);
    accumulate_pair_grads<T>(ga, gb, an->value, bn->value, *ab, g / static_cast<T>(na));
    accumulate_pair_grads<T>(gb, ga, bn->value, an->value, *ba, g / static_cast<T>(nb));
  });
}

template <typename T>
Tensor<T> chamfer_one_sided(const Tensor<T>& a, const Tensor<T>& b) {
  require_cloud(a, "chamfer_one_sided");
  require_cloud(b, "chamfer_one_sided");
  const int na = a.dim(0), nb = b.dim(0);
  auto ab = std::make_shared<std::vector<int>>();
  std::vector<T> dab;
  nearest(a.node()->value, na, b.node()->value, nb, *ab, dab);
  T left = 0;
  for (T d : dab) left += d;
  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>({1}, {left / static_cast<T>(na)}, {&a, &b}, [an, bn, ab, na](Node<T>& self) {
    accumulate_pair_grads<T>(grad_of(an), grad_of(bn), an->value, bn->value, *ab,
                             self.grad[0] / static_cast<T>(na));
  });
}

// --- selective scan -------------------------------------------------------

template <typename T>
Tensor<T> selective_scan_core(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a,
                              const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& skip) {
  require_rank2(u, "selective_scan");
  require_same_shape(u, delta, "selective_scan (u vs delta)");
  require_rank2(a, "selective_scan");
  const int len = u.dim(0), d = u.dim(1), n = a.dim(1);
  if (len < 1) throw ArgumentError("selective_scan: empty sequence (L = 0)");
  if (a.dim(0) != d || b.rank() != 2 || c.rank() != 2 || b.dim(0) != len || b.dim(1) != n ||
      c.dim(0) != len || c.dim(1) != n || skip.numel() != d) {
    throw DimensionError("selective_scan: inconsistent shapes u " + shape_str(u.shape()) + ", A " +
                         shape_str(a.shape()) + ", B " + shape_str(b.shape()) + ", C " +
                         shape_str(c.shape()) + ", D " + shape_str(skip.shape()));
  }
  const auto& uv = u.values();
  const auto& dv = delta.values();
  const auto& av = a.values();
  const auto& bv = b.values();
  const auto& cv = c.values();
  const auto& sv = skip.values();
  const std::size_t plane = static_cast<std::size_t>(d) * n;

  // Discretized transition and input terms for every (t, channel, state),
  // each step stored as a [d, n] plane.
  using Plane = Eigen::Map<RowMat<T>>;
  using CPlane = Eigen::Map<const RowMat<T>>;
  using Col = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  using Row = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
  const CPlane am(av.data(), d, n);
  auto decay = std::make_shared<std::vector<T>>(plane * len);
  auto states = std::make_shared<std::vector<T>>(plane * len);
  for (int t = 0; t < len; ++t) {
    const Col dt(dv.data() + static_cast<std::size_t>(t) * d, d);
    const Col ut(uv.data() + static_cast<std::size_t>(t) * d, d);
    Plane dA(decay->data() + t * plane, d, n);
    dA.noalias() = dt.asDiagonal() * am;
    // exp over the flat plane; through the product expression it is scalar.
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> flat(dA.data(), static_cast<Eigen::Index>(plane));
    flat = flat.exp();
    Plane(states->data() + t * plane, d, n).noalias() =
        dt.cwiseProduct(ut) * Row(bv.data() + static_cast<std::size_t>(t) * n, n);
  }
  // In-place recurrence: states[t] <- decay[t] * states[t-1] + states[t].
  for (int t = 1; t < len; ++t) {
    Plane(states->data() + t * plane, d, n).array() +=
        CPlane(decay->data() + t * plane, d, n).array() * CPlane(states->data() + (t - 1) * plane, d, n).array();
  }
  std::vector<T> out(static_cast<std::size_t>(len) * d);
  const Col sk(sv.data(), d);
  for (int t = 0; t < len; ++t) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(out.data() + static_cast<std::size_t>(t) * d, d).noalias() =
        CPlane(states->data() + t * plane, d, n) * Row(cv.data() + static_cast<std::size_t>(t) * n, n).transpose() +
        sk.cwiseProduct(Col(uv.data() + static_cast<std::size_t>(t) * d, d));
  }
  add_flops(static_cast<std::uint64_t>(len) * plane * 4);

  auto* un = u.node();
  auto* dn = delta.node();
  auto* an = a.node();
  auto* bn = b.node();
  auto* cn = c.node();
  auto* sn = skip.node();
  return make_result<T>(
      {len, d}, std::move(out), {&u, &delta, &a, &b, &c, &skip},
      [un, dn, an, bn, cn, sn, decay, states, len, d, n, plane](Node<T>& self) {
        using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
        using MVec = Eigen::Map<Vec>;
        using MRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
        auto gu = grad_of(un);
        auto gd = grad_of(dn);
        auto ga = grad_of(an);
        auto gb = grad_of(bn);
        auto gc = grad_of(cn);
        auto gs = grad_of(sn);
        const auto& uv = un->value;
        const auto& dv = dn->value;
        const CPlane am(an->value.data(), d, n);
        const auto& bv = bn->value;
        const auto& cv = cn->value;
        const Col sk(sn->value.data(), d);
        RowMat<T> carry = RowMat<T>::Zero(d, n);  // dL/dh_t contributed through h_{t+1}
        RowMat<T> gh(d, n), gdecay(d, n);
        Vec gdt(d), gut(d);
        for (int t = len - 1; t >= 0; --t) {
          const std::size_t td = static_cast<std::size_t>(t) * d;
          const std::size_t tn = static_cast<std::size_t>(t) * n;
          const CPlane h(states->data() + t * plane, d, n);
          const CPlane dA(decay->data() + t * plane, d, n);
          const Col gy(self.grad.data() + td, d);
          const Col dt(dv.data() + td, d);
          const Col ut(uv.data() + td, d);
          const Row bt(bv.data() + tn, n);
          const Row ct(cv.data() + tn, n);
          if (!gu.empty()) MVec(gu.data() + td, d) += sk.cwiseProduct(gy);
          if (!gs.empty()) MVec(gs.data(), d) += gy.cwiseProduct(ut);
          if (!gc.empty()) MRow(gc.data() + tn, n) += gy.transpose() * h;
          gh.noalias() = gy * ct;
          gh += carry;
          const Vec ghb = gh * bt.transpose();  // sum_s gh * b_t
          if (t > 0) {
            gdecay.array() = gh.array() * CPlane(states->data() + (t - 1) * plane, d, n).array() * dA.array();
            gdt = (gdecay.array() * am.array()).rowwise().sum().matrix();
            if (!ga.empty()) Plane(ga.data(), d, n).noalias() += dt.asDiagonal() * gdecay;
          } else {
            gdt.setZero();
          }
          gdt += ghb.cwiseProduct(ut);
          if (!gb.empty()) MRow(gb.data() + tn, n) += dt.cwiseProduct(ut).transpose() * gh;
          if (!gd.empty()) MVec(gd.data() + td, d) += gdt;
          if (!gu.empty()) MVec(gu.data() + td, d) += ghb.cwiseProduct(dt);
          carry.array() = gh.array() * dA.array();
        }
      });
}

#define INKL_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> transpose(const Tensor<T>&);                                          \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> add_rowvec(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul_rowvec(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul_scalar(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                      \
  template Tensor<T> neg(const Tensor<T>&);                                                \
  template Tensor<T> exp(const Tensor<T>&);                                                \
  template Tensor<T> square(const Tensor<T>&);                                             \
  template Tensor<T> reciprocal(const Tensor<T>&);                                         \
  template Tensor<T> softplus(const Tensor<T>&);                                           \
  template Tensor<T> gelu(const Tensor<T>&);                                               \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                       \
  template Tensor<T> smooth_l1(const Tensor<T>&);                                          \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> mean_rows(const Tensor<T>&);                                          \
  template Tensor<T> max_rows(const Tensor<T>&);                                           \
  template Tensor<T> row_norm(const Tensor<T>&);                                           \
  template Tensor<T> norm(const Tensor<T>&);                                               \
  template Tensor<T> softmax(const Tensor<T>&, int);                                       \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> group_norm(const Tensor<T>&, int, T);                                 \
  template Tensor<T> group_max(const Tensor<T>&, int);                                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> slice_cols(const Tensor<T>&, int, int);                               \
  template Tensor<T> slice_rows(const Tensor<T>&, int, int);                               \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<int>&);               \
  template Tensor<T> repeat_rows(const Tensor<T>&, int);                                   \
  template Tensor<T> reverse_cols(const Tensor<T>&);                                       \
  template Tensor<T> reverse_rows(const Tensor<T>&);                                       \
  template Tensor<T> cross3(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> chamfer(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> chamfer_one_sided(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> selective_scan_core(const Tensor<T>&, const Tensor<T>&,               \
                                         const Tensor<T>&, const Tensor<T>&,               \
                                         const Tensor<T>&, const Tensor<T>&);

INKL_INSTANTIATE_OPS(float)
INKL_INSTANTIATE_OPS(double)

#undef INKL_INSTANTIATE_OPS

}  // namespace inkl::ad
