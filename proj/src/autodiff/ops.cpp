#include "vst/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace vst::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
using BackwardFn = std::function<void(TensorStorage<T>&, std::span<const StoragePtr<T>>)>;

// Wraps freshly computed values into a tensor and, when any input takes part
// in differentiation, attaches the backward rule.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs, BackwardFn<T> fn) {
  auto out = Tensor<T>::from(std::move(shape), std::move(values));
  if (!grad_mode_enabled()) return out;
  bool needs = false;
  for (auto* in : inputs) needs = needs || (in->defined() && in->requires_grad());
  if (!needs) return out;
  auto node = std::make_shared<GraphNode<T>>();
  node->op = op;
  for (auto* in : inputs) node->inputs.push_back(in->defined() ? in->storage() : nullptr);
  node->backward = std::move(fn);
  out.storage()->requires_grad = true;
  out.storage()->node = std::move(node);
  return out;
}

template <typename T>
bool wants_grad(const StoragePtr<T>& s) {
  return s && s->requires_grad;
}

// Number of leading elements `a` has over a trailing-suffix broadcast `b`.
std::int64_t suffix_broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                         shape_str(a));
  }
  return shape_numel(a) / shape_numel(b);
}

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

struct AxisSplit {
  std::int64_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto reps = suffix_broadcast_repeats(a.shape(), b.shape(), "add");
  const auto inner = b.numel();
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::int64_t r = 0; r < reps; ++r) {
    T* o = out.data() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) o[i] += bd[static_cast<std::size_t>(i)];
  }
  return make_result<T>("add", a.shape(), std::move(out), {&a, &b},
                        [reps, inner](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          if (wants_grad(in[0])) {
                            auto& g = in[0]->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                          }
                          if (wants_grad(in[1])) {
                            auto& g = in[1]->grad_buffer();
                            for (std::int64_t r = 0; r < reps; ++r) {
                              const T* src = o.grad.data() + r * inner;
                              for (std::int64_t i = 0; i < inner; ++i) g[static_cast<std::size_t>(i)] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result<T>("sub", a.shape(), std::move(out), {&a, &b},
                        [](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          if (wants_grad(in[0])) {
                            auto& g = in[0]->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                          }
                          if (wants_grad(in[1])) {
                            auto& g = in[1]->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto reps = suffix_broadcast_repeats(a.shape(), b.shape(), "mul");
  const auto inner = b.numel();
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::int64_t r = 0; r < reps; ++r) {
    T* o = out.data() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) o[i] *= bd[static_cast<std::size_t>(i)];
  }
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b},
                        [reps, inner](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          const auto& ad = in[0]->data;
                          const auto& bd = in[1]->data;
                          if (wants_grad(in[0])) {
                            auto& g = in[0]->grad_buffer();
                            for (std::int64_t r = 0; r < reps; ++r)
                              for (std::int64_t i = 0; i < inner; ++i)
                                g[static_cast<std::size_t>(r * inner + i)] +=
                                    o.grad[static_cast<std::size_t>(r * inner + i)] * bd[static_cast<std::size_t>(i)];
                          }
                          if (wants_grad(in[1])) {
                            auto& g = in[1]->grad_buffer();
                            for (std::int64_t r = 0; r < reps; ++r)
                              for (std::int64_t i = 0; i < inner; ++i)
                                g[static_cast<std::size_t>(i)] +=
                                    o.grad[static_cast<std::size_t>(r * inner + i)] * ad[static_cast<std::size_t>(r * inner + i)];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>("scale", a.shape(), std::move(out), {&a},
                        [factor](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  auto* monitor = ReluKinkMonitor::active();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xd[i] > T(0) ? xd[i] : T(0);
    if (monitor) monitor->record(xd[i] > T(0), xd[i] == T(0));
  }
  return make_result<T>("relu", x.shape(), std::move(out), {&x},
                        [](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          const auto& xd = in[0]->data;
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (xd[i] > T(0)) g[i] += o.grad[i];
                        });
}

// ---------------------------------------------------------------------------
// Products

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands must be at least 2-D, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const auto m = a.dim(-2), k = a.dim(-1);
  const auto k2 = b.dim(-2), p = b.dim(-1);
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(p);
  const bool shared_b = b.rank() == 2;
  if (!shared_b) {
    if (a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw DimensionError("matmul: batch dimensions differ for " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
    }
  }
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  if (shared_b) {
    const auto rows = a.numel() / k;
    MapMat<T>(out.data(), rows, p).noalias() = ConstMapMat<T>(a.data().data(), rows, k) *
                                                ConstMapMat<T>(b.data().data(), k, p);
  } else {
    const auto batch = a.numel() / (m * k);
    for (std::int64_t i = 0; i < batch; ++i) {
      MapMat<T>(out.data() + i * m * p, m, p).noalias() =
          ConstMapMat<T>(a.data().data() + i * m * k, m, k) * ConstMapMat<T>(b.data().data() + i * k * p, k, p);
    }
  }
  return make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {&a, &b},
      [m, k, p, shared_b](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
        const auto& A = in[0]->data;
        const auto& B = in[1]->data;
        if (shared_b) {
          const auto rows = static_cast<std::int64_t>(A.size()) / k;
          ConstMapMat<T> dC(o.grad.data(), rows, p);
          if (wants_grad(in[0]))
            MapMat<T>(in[0]->grad_buffer().data(), rows, k).noalias() += dC * ConstMapMat<T>(B.data(), k, p).transpose();
          if (wants_grad(in[1]))
            MapMat<T>(in[1]->grad_buffer().data(), k, p).noalias() += ConstMapMat<T>(A.data(), rows, k).transpose() * dC;
          return;
        }
        const auto batch = static_cast<std::int64_t>(A.size()) / (m * k);
        for (std::int64_t i = 0; i < batch; ++i) {
          ConstMapMat<T> dC(o.grad.data() + i * m * p, m, p);
          if (wants_grad(in[0]))
            MapMat<T>(in[0]->grad_buffer().data() + i * m * k, m, k).noalias() +=
                dC * ConstMapMat<T>(B.data() + i * k * p, k, p).transpose();
          if (wants_grad(in[1]))
            MapMat<T>(in[1]->grad_buffer().data() + i * k * p, k, p).noalias() +=
                ConstMapMat<T>(A.data() + i * m * k, m, k).transpose() * dC;
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  auto y = matmul(x, w);
  if (!bias.defined()) return y;
  if (bias.rank() != 1 || bias.dim(0) != w.dim(1)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  return add(y, bias);
}

// ---------------------------------------------------------------------------
// Normalizers

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  axis = normalize_axis(axis, x.rank());
  auto xd = x.data();
  check_finite<T>(xd, "softmax");
  const auto sp = split_axis(x.shape(), axis);
  std::vector<T> out(xd.size());
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const auto base = o * sp.extent * sp.inner + in;
      T mx = xd[static_cast<std::size_t>(base)];
      for (std::int64_t j = 1; j < sp.extent; ++j) mx = std::max(mx, xd[static_cast<std::size_t>(base + j * sp.inner)]);
      T total = 0;
      for (std::int64_t j = 0; j < sp.extent; ++j) {
        auto idx = static_cast<std::size_t>(base + j * sp.inner);
        out[idx] = std::exp(xd[idx] - mx);
        total += out[idx];
      }
      for (std::int64_t j = 0; j < sp.extent; ++j) out[static_cast<std::size_t>(base + j * sp.inner)] /= total;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {&x},
                        [sp](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          const auto& y = o.data;
                          for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
                            for (std::int64_t inn = 0; inn < sp.inner; ++inn) {
                              const auto base = ou * sp.extent * sp.inner + inn;
                              T dot = 0;
                              for (std::int64_t j = 0; j < sp.extent; ++j) {
                                auto idx = static_cast<std::size_t>(base + j * sp.inner);
                                dot += o.grad[idx] * y[idx];
                              }
                              for (std::int64_t j = 0; j < sp.extent; ++j) {
                                auto idx = static_cast<std::size_t>(base + j * sp.inner);
                                g[idx] += y[idx] * (o.grad[idx] - dot);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  const auto d = x.dim(-1);
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != d || beta.dim(0) != d) {
    throw DimensionError("layer_norm: last dim of " + shape_str(x.shape()) + " vs gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const auto rows = x.numel() / d;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<T> out(xd.size()), xhat(xd.size()), rstd(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xd.data() + r * d;
    T mu = 0;
    for (std::int64_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
    rstd[static_cast<std::size_t>(r)] = rs;
    for (std::int64_t i = 0; i < d; ++i) {
      auto idx = static_cast<std::size_t>(r * d + i);
      xhat[idx] = (xr[i] - mu) * rs;
      out[idx] = xhat[idx] * gd[static_cast<std::size_t>(i)] + bd[static_cast<std::size_t>(i)];
    }
  }
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](TensorStorage<T>& o,
                                                               std::span<const StoragePtr<T>> in) {
        const auto& gd = in[1]->data;
        if (wants_grad(in[1]) || wants_grad(in[2])) {
          for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t i = 0; i < d; ++i) {
              auto idx = static_cast<std::size_t>(r * d + i);
              if (wants_grad(in[1])) in[1]->grad_buffer()[static_cast<std::size_t>(i)] += o.grad[idx] * xhat[idx];
              if (wants_grad(in[2])) in[2]->grad_buffer()[static_cast<std::size_t>(i)] += o.grad[idx];
            }
          }
        }
        if (!wants_grad(in[0])) return;
        auto& g = in[0]->grad_buffer();
        for (std::int64_t r = 0; r < rows; ++r) {
          T mean_dx = 0, mean_dx_xhat = 0;
          for (std::int64_t i = 0; i < d; ++i) {
            auto idx = static_cast<std::size_t>(r * d + i);
            const T dxh = o.grad[idx] * gd[static_cast<std::size_t>(i)];
            mean_dx += dxh;
            mean_dx_xhat += dxh * xhat[idx];
          }
          mean_dx /= static_cast<T>(d);
          mean_dx_xhat /= static_cast<T>(d);
          const T rs = rstd[static_cast<std::size_t>(r)];
          for (std::int64_t i = 0; i < d; ++i) {
            auto idx = static_cast<std::size_t>(r * d + i);
            const T dxh = o.grad[idx] * gd[static_cast<std::size_t>(i)];
            g[idx] += rs * (dxh - mean_dx - xhat[idx] * mean_dx_xhat);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

namespace {

struct ConvGeom {
  std::int64_t c, h, w, kh, kw, oh, ow;
  Conv2dParams p;
  std::int64_t col_rows() const { return c * kh * kw; }
  std::int64_t col_cols() const { return oh * ow; }
};

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* cols) {
  for (std::int64_t ch = 0; ch < g.c; ++ch) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((ch * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::int64_t y = 0; y < g.oh; ++y) {
          const std::int64_t iy = y * g.p.stride_h - g.p.pad_h + ki;
          T* dst = row + y * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = img + (ch * g.h + iy) * g.w;
          for (std::int64_t x = 0; x < g.ow; ++x) {
            const std::int64_t ix = x * g.p.stride_w - g.p.pad_w + kj;
            dst[x] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* img) {
  for (std::int64_t ch = 0; ch < g.c; ++ch) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((ch * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::int64_t y = 0; y < g.oh; ++y) {
          const std::int64_t iy = y * g.p.stride_h - g.p.pad_h + ki;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = img + (ch * g.h + iy) * g.w;
          const T* src = row + y * g.ow;
          for (std::int64_t x = 0; x < g.ow; ++x) {
            const std::int64_t ix = x * g.p.stride_w - g.p.pad_w + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dParams params) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw DimensionError("conv2d: expected 4-D input and weight, got " + shape_str(x.shape()) + " and " +
                         shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input channels of " + shape_str(x.shape()) + " do not match weight " +
                         shape_str(w.shape()));
  }
  if (params.stride_h < 1 || params.stride_w < 1 || params.pad_h < 0 || params.pad_w < 0) {
    throw DimensionError("conv2d: invalid stride/padding");
  }
  const auto batch = x.dim(0), out_ch = w.dim(0);
  ConvGeom g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), 0, 0, params};
  const auto ph = g.h + 2 * params.pad_h, pw = g.w + 2 * params.pad_w;
  if (g.kh > ph || g.kw > pw) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  g.oh = (ph - g.kh) / params.stride_h + 1;
  g.ow = (pw - g.kw) / params.stride_w + 1;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_ch)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(out_ch) +
                         " output channels");
  }

  const auto krows = g.col_rows(), ncols = g.col_cols();
  std::vector<T> cols(static_cast<std::size_t>(krows * ncols));
  std::vector<T> out(static_cast<std::size_t>(batch * out_ch * ncols));
  ConstMapMat<T> W(w.data().data(), out_ch, krows);
  for (std::int64_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * g.c * g.h * g.w, g, cols.data());
    MapMat<T> Y(out.data() + b * out_ch * ncols, out_ch, ncols);
    Y.noalias() = W * ConstMapMat<T>(cols.data(), krows, ncols);
    if (bias.defined()) {
      for (std::int64_t o = 0; o < out_ch; ++o) Y.row(o).array() += bias.data()[static_cast<std::size_t>(o)];
    }
  }
  return make_result<T>(
      "conv2d", {batch, out_ch, g.oh, g.ow}, std::move(out), {&x, &w, &bias},
      [g, batch, out_ch](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
        const auto krows = g.col_rows(), ncols = g.col_cols();
        std::vector<T> cols(static_cast<std::size_t>(krows * ncols));
        ConstMapMat<T> W(in[1]->data.data(), out_ch, krows);
        for (std::int64_t b = 0; b < batch; ++b) {
          ConstMapMat<T> dY(o.grad.data() + b * out_ch * ncols, out_ch, ncols);
          if (wants_grad(in[2])) {
            auto& gb = in[2]->grad_buffer();
            // Plain loop: Eigen's vectorized sum peels by address, so its
            // rounding would depend on allocation alignment.
            const T* row = o.grad.data() + b * out_ch * ncols;
            for (std::int64_t oc = 0; oc < out_ch; ++oc, row += ncols) {
              T acc = T(0);
              for (std::int64_t j = 0; j < ncols; ++j) acc += row[j];
              gb[static_cast<std::size_t>(oc)] += acc;
            }
          }
          if (wants_grad(in[1])) {
            im2col(in[0]->data.data() + b * g.c * g.h * g.w, g, cols.data());
            MapMat<T>(in[1]->grad_buffer().data(), out_ch, krows).noalias() +=
                dY * ConstMapMat<T>(cols.data(), krows, ncols).transpose();
          }
          if (wants_grad(in[0])) {
            MapMat<T>(cols.data(), krows, ncols).noalias() = W.transpose() * dY;
            col2im_add(cols.data(), g, in[0]->grad_buffer().data() + b * g.c * g.h * g.w);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be N x C, got " + shape_str(logits.shape()));
  const auto n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) +
                         " rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= c) throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
  }
  auto ld = logits.data();
  check_finite<T>(ld, "cross_entropy");
  std::vector<T> probs(ld.size());
  T total = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    const T* row = ld.data() + r * c;
    T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const T log_z = std::log(z) + mx;
    for (std::int64_t j = 0; j < c; ++j) probs[static_cast<std::size_t>(r * c + j)] = std::exp(row[j] - log_z);
    total += log_z - row[targets[static_cast<std::size_t>(r)]];
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result<T>("cross_entropy", {1}, {total / static_cast<T>(n)}, {&logits},
                        [n, c, probs = std::move(probs), tgt = std::move(tgt)](TensorStorage<T>& o,
                                                                                std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          const T s = o.grad[0] / static_cast<T>(n);
                          for (std::int64_t r = 0; r < n; ++r) {
                            for (std::int64_t j = 0; j < c; ++j) {
                              auto idx = static_cast<std::size_t>(r * c + j);
                              g[idx] += s * (probs[idx] - (j == tgt[static_cast<std::size_t>(r)] ? T(1) : T(0)));
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one inferred dimension");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0 && x.numel() % known == 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {&x},
                        [](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
  const int r = x.rank();
  axis0 = normalize_axis(axis0, r);
  axis1 = normalize_axis(axis1, r);
  if (axis0 > axis1) std::swap(axis0, axis1);
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<std::size_t>(axis0)], out_shape[static_cast<std::size_t>(axis1)]);
  // Decompose as [outer, A, mid, B, inner] -> [outer, B, mid, A, inner].
  std::int64_t outer = 1, mid = 1, inner = 1;
  for (int i = 0; i < axis0; ++i) outer *= x.shape()[static_cast<std::size_t>(i)];
  for (int i = axis0 + 1; i < axis1; ++i) mid *= x.shape()[static_cast<std::size_t>(i)];
  for (int i = axis1 + 1; i < r; ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
  const auto A = x.shape()[static_cast<std::size_t>(axis0)], B = x.shape()[static_cast<std::size_t>(axis1)];
  auto permute = [=](const T* src, T* dst, bool accumulate) {
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t a = 0; a < A; ++a)
        for (std::int64_t m = 0; m < mid; ++m)
          for (std::int64_t b = 0; b < B; ++b) {
            const T* s = src + (((o * A + a) * mid + m) * B + b) * inner;
            T* d = dst + (((o * B + b) * mid + m) * A + a) * inner;
            if (accumulate)
              for (std::int64_t i = 0; i < inner; ++i) d[i] += s[i];
            else
              std::copy(s, s + inner, d);
          }
  };
  std::vector<T> out(x.data().size());
  permute(x.data().data(), out.data(), false);
  // The inverse permutation of a swap swaps the output-side extents back.
  auto inverse = [=](const T* src, T* dst) {
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t m = 0; m < mid; ++m)
          for (std::int64_t a = 0; a < A; ++a) {
            const T* s = src + (((o * B + b) * mid + m) * A + a) * inner;
            T* d = dst + (((o * A + a) * mid + m) * B + b) * inner;
            for (std::int64_t i = 0; i < inner; ++i) d[i] += s[i];
          }
  };
  return make_result<T>("transpose", std::move(out_shape), std::move(out), {&x},
                        [inverse](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          inverse(o.grad.data(), in[0]->grad_buffer().data());
                        });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const int r = parts[0].rank();
  axis = normalize_axis(axis, r);
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != axis && p.shape()[static_cast<std::size_t>(i)] != parts[0].shape()[static_cast<std::size_t>(i)]) {
        throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " +
                             shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
      }
    }
    extents.push_back(p.shape()[static_cast<std::size_t>(axis)]);
    out_shape[static_cast<std::size_t>(axis)] += extents.back();
  }
  const auto sp = split_axis(out_shape, axis);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto chunk = extents[k] * sp.inner;
    const T* src = parts[k].data().data();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.data() + o * sp.extent * sp.inner + offset);
    }
    offset += chunk;
  }

  auto result = Tensor<T>::from(out_shape, std::move(out));
  if (!grad_mode_enabled()) return result;
  bool needs = std::any_of(parts.begin(), parts.end(), [](const Tensor<T>& p) { return p.requires_grad(); });
  if (!needs) return result;
  auto node = std::make_shared<GraphNode<T>>();
  node->op = "concat";
  for (const auto& p : parts) node->inputs.push_back(p.storage());
  node->backward = [sp, extents](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto chunk = extents[k] * sp.inner;
      if (wants_grad(in[k])) {
        auto& g = in[k]->grad_buffer();
        for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
          const T* src = o.grad.data() + ou * sp.extent * sp.inner + off;
          T* dst = g.data() + ou * chunk;
          for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      off += chunk;
    }
  };
  result.storage()->requires_grad = true;
  result.storage()->node = std::move(node);
  return result;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.rank());
  const auto sp = split_axis(x.shape(), axis);
  if (start < 0 || length <= 0 || start + length > sp.extent) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  const auto chunk = length * sp.inner;
  std::vector<T> out(static_cast<std::size_t>(sp.outer * chunk));
  const T* src = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    const T* s = src + (o * sp.extent + start) * sp.inner;
    std::copy(s, s + chunk, out.data() + o * chunk);
  }
  return make_result<T>("slice", std::move(out_shape), std::move(out), {&x},
                        [sp, start, chunk](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
                            T* d = g.data() + (ou * sp.extent + start) * sp.inner;
                            const T* s = o.grad.data() + ou * chunk;
                            for (std::int64_t i = 0; i < chunk; ++i) d[i] += s[i];
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {1}, {total}, {&x},
                        [](TensorStorage<T>& o, std::span<const StoragePtr<T>> in) {
                          auto& g = in[0]->grad_buffer();
                          for (auto& v : g) v += o.grad[0];
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::mt19937_64& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const T inv = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.data().size());
  for (auto& m : mask) m = keep(rng) ? inv : T(0);
  return mul(x, Tensor<T>::from(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------

namespace {
thread_local ReluKinkMonitor* g_monitor = nullptr;
}

ReluKinkMonitor::ReluKinkMonitor() : previous_(g_monitor) { g_monitor = this; }
ReluKinkMonitor::~ReluKinkMonitor() { g_monitor = previous_; }
ReluKinkMonitor* ReluKinkMonitor::active() { return g_monitor; }

void ReluKinkMonitor::record(bool positive, bool zero) {
  const std::uint64_t v = positive ? 2u : (zero ? 1u : 0u);
  hash_ = (hash_ ^ v) * 1099511628211ull;
}

#define VST_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> softmax(const Tensor<T>&, int);                                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dParams); \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                      \
  template Tensor<T> concat(std::span<const Tensor<T>>, int);                                    \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);                   \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::mt19937_64&);

VST_INSTANTIATE_OPS(float)
VST_INSTANTIATE_OPS(double)

}  // namespace vst::ad
