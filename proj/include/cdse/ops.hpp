// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Differentiable operations on Var<T>: dense matrix product, 1-D
// (transposed) convolution, elementwise arithmetic and activations,
// concatenation, reductions and global layer normalization. Every op
// validates shapes, rejects non-finite outputs and registers an adjoint
// rule with the tape.

#ifndef CDSE_OPS_HPP_
#define CDSE_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdse/autodiff.hpp"
#include "cdse/gemm.hpp"
#include "cdse/tensor.hpp"

namespace cdse {

struct Conv1dSpec {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

inline int Conv1dOutLen(int t_in, int kernel, const Conv1dSpec& s) {
  CDSE_CHECK(s.stride > 0 && s.dilation > 0 && s.groups > 0 && s.padding >= 0,
             ErrorKind::kParameter, "conv1d needs positive stride/dilation/",
             "groups and non-negative padding, got stride=", s.stride,
             " dilation=", s.dilation, " groups=", s.groups,
             " padding=", s.padding);
  const int span = s.dilation * (kernel - 1) + 1;
  CDSE_CHECK(t_in + 2 * s.padding >= span, ErrorKind::kParameter,
             "input length ", t_in, " (+2*", s.padding,
             " padding) shorter than kernel span ", span);
  return (t_in + 2 * s.padding - span) / s.stride + 1;
}

inline int Conv1dTransposeOutLen(int k_in, int kernel, int stride) {
  CDSE_CHECK(stride > 0, ErrorKind::kParameter,
             "transposed conv stride must be >= 1, got ", stride);
  return (k_in - 1) * stride + kernel;
}

namespace kernels {

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> MatmulForward(const Tensor<T>& a, const Tensor<T>& b) {
  CDSE_CHECK(a.rank() == 2 && b.rank() == 2, ErrorKind::kDimension,
             "matmul takes rank-2 tensors, got ", ShapeStr(a.shape()), " and ",
             ShapeStr(b.shape()));
  CDSE_CHECK(a.dim(1) == b.dim(0), ErrorKind::kDimension,
             "matmul inner dimensions disagree: ", ShapeStr(a.shape()),
             " vs ", ShapeStr(b.shape()));
  Tensor<T> c({a.dim(0), b.dim(1)});
  Gemm(false, false, a.dim(0), b.dim(1), a.dim(1), T(1), a.data(), a.dim(1),
       b.data(), b.dim(1), T(0), c.data(), b.dim(1));
  return c;
}

// ---------------------------------------------------------------------------
// conv1d: cross-correlation convention, y[co,t] = sum_{ci,p} w * x[.., t*s +
// p*d - pad]. 1x1/stride-1 instances are routed through GEMM because they
// carry nearly all of the TCN's arithmetic.
// ---------------------------------------------------------------------------

template <typename T>
void CheckConv1dArgs(const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>* bias, const Conv1dSpec& s) {
  CDSE_CHECK(x.rank() == 2, ErrorKind::kDimension,
             "conv1d input must be [channels x time], got ",
             ShapeStr(x.shape()));
  CDSE_CHECK(w.rank() == 3, ErrorKind::kDimension,
             "conv1d weight must be [out x in/groups x kernel], got ",
             ShapeStr(w.shape()));
  const int cin = x.dim(0);
  const int cout = w.dim(0);
  CDSE_CHECK(cin % s.groups == 0 && cout % s.groups == 0,
             ErrorKind::kParameter, "channel counts ", cin, "->", cout,
             " not divisible by groups=", s.groups);
  CDSE_CHECK(w.dim(1) == cin / s.groups, ErrorKind::kDimension,
             "conv1d weight expects ", cin / s.groups,
             " input channels per group, got ", ShapeStr(w.shape()));
  if (bias != nullptr) {
    CDSE_CHECK(bias->rank() == 1 && bias->dim(0) == cout,
               ErrorKind::kDimension, "conv1d bias must be [", cout,
               "], got ", ShapeStr(bias->shape()));
  }
}

inline bool IsPointwiseConv(int kernel, const Conv1dSpec& s) {
  return kernel == 1 && s.stride == 1 && s.padding == 0 && s.groups == 1;
}

template <typename T>
Tensor<T> Conv1dForward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>* bias, const Conv1dSpec& s) {
  CheckConv1dArgs(x, w, bias, s);
  const int cin = x.dim(0), t_in = x.dim(1);
  const int cout = w.dim(0), cg = w.dim(1), kernel = w.dim(2);
  const int t_out = Conv1dOutLen(t_in, kernel, s);
  Tensor<T> y({cout, t_out});

  if (IsPointwiseConv(kernel, s)) {
    Gemm(false, false, cout, t_out, cin, T(1), w.data(), cg, x.data(), t_in,
         T(0), y.data(), t_out);
  } else {
    const int cout_per_group = cout / s.groups;
    for (int co = 0; co < cout; ++co) {
      const int ci0 = (co / cout_per_group) * cg;
      T* yrow = y.data() + static_cast<int64_t>(co) * t_out;
      for (int c = 0; c < cg; ++c) {
        const T* xrow = x.data() + static_cast<int64_t>(ci0 + c) * t_in;
        const T* wrow =
            w.data() + (static_cast<int64_t>(co) * cg + c) * kernel;
        for (int p = 0; p < kernel; ++p) {
          const T wv = wrow[p];
          const int off = p * s.dilation - s.padding;
          int t0 = 0;
          if (off < 0) t0 = (-off + s.stride - 1) / s.stride;
          int t1 = t_out - 1;
          if (off > t_in - 1)
            t1 = -1;
          else
            t1 = std::min(t1, (t_in - 1 - off) / s.stride);
          for (int t = t0; t <= t1; ++t)
            yrow[t] += wv * xrow[t * s.stride + off];
        }
      }
    }
  }
  if (bias != nullptr) {
    for (int co = 0; co < cout; ++co) {
      const T b = (*bias)[co];
      T* yrow = y.data() + static_cast<int64_t>(co) * t_out;
      for (int t = 0; t < t_out; ++t) yrow[t] += b;
    }
  }
  return y;
}

template <typename T>
void Conv1dBackward(const Tensor<T>& x, const Tensor<T>& w,
                    const Conv1dSpec& s, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>* dw, Tensor<T>* dbias) {
  const int cin = x.dim(0), t_in = x.dim(1);
  const int cout = w.dim(0), cg = w.dim(1), kernel = w.dim(2);
  const int t_out = dy.dim(1);

  if (dbias != nullptr) {
    for (int co = 0; co < cout; ++co) {
      const T* gr = dy.data() + static_cast<int64_t>(co) * t_out;
      T acc(0);
      for (int t = 0; t < t_out; ++t) acc += gr[t];
      (*dbias)[co] += acc;
    }
  }

  if (IsPointwiseConv(kernel, s)) {
    // y = W x: dW += dy x^T, dx += W^T dy.
    if (dw != nullptr)
      Gemm(false, true, cout, cin, t_out, T(1), dy.data(), t_out, x.data(),
           t_in, T(1), dw->data(), cin);
    if (dx != nullptr)
      Gemm(true, false, cin, t_out, cout, T(1), w.data(), cg, dy.data(),
           t_out, T(1), dx->data(), t_out);
    return;
  }

  const int cout_per_group = cout / s.groups;
  for (int co = 0; co < cout; ++co) {
    const int ci0 = (co / cout_per_group) * cg;
    const T* gr = dy.data() + static_cast<int64_t>(co) * t_out;
    for (int c = 0; c < cg; ++c) {
      const T* xrow = x.data() + static_cast<int64_t>(ci0 + c) * t_in;
      T* dxrow = dx != nullptr
                     ? dx->data() + static_cast<int64_t>(ci0 + c) * t_in
                     : nullptr;
      for (int p = 0; p < kernel; ++p) {
        const T wv = w.data()[(static_cast<int64_t>(co) * cg + c) * kernel + p];
        const int off = p * s.dilation - s.padding;
        int t0 = 0;
        if (off < 0) t0 = (-off + s.stride - 1) / s.stride;
        int t1 = t_out - 1;
        if (off > t_in - 1)
          t1 = -1;
        else
          t1 = std::min(t1, (t_in - 1 - off) / s.stride);
        T wacc(0);
        for (int t = t0; t <= t1; ++t) {
          const int u = t * s.stride + off;
          if (dxrow != nullptr) dxrow[u] += wv * gr[t];
          wacc += xrow[u] * gr[t];
        }
        if (dw != nullptr)
          dw->data()[(static_cast<int64_t>(co) * cg + c) * kernel + p] += wacc;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv1d_transpose: exact adjoint of conv1d with the same weight buffer
// (layout [in x out x kernel]) and stride; pad/dilation/groups fixed at the
// defaults, which is all the decoders need.
// ---------------------------------------------------------------------------

template <typename T>
void CheckConvTransposeArgs(const Tensor<T>& x, const Tensor<T>& w) {
  CDSE_CHECK(x.rank() == 2 && w.rank() == 3, ErrorKind::kDimension,
             "conv1d_transpose takes x[in x k], w[in x out x kernel], got ",
             ShapeStr(x.shape()), " and ", ShapeStr(w.shape()));
  CDSE_CHECK(x.dim(0) == w.dim(0), ErrorKind::kDimension,
             "conv1d_transpose channel mismatch: input ",
             ShapeStr(x.shape()), " vs weight ", ShapeStr(w.shape()));
}

template <typename T>
Tensor<T> Conv1dTransposeForward(const Tensor<T>& x, const Tensor<T>& w,
                                 int stride) {
  CheckConvTransposeArgs(x, w);
  const int cin = x.dim(0), k_in = x.dim(1);
  const int cout = w.dim(1), kernel = w.dim(2);
  const int t_out = Conv1dTransposeOutLen(k_in, kernel, stride);
  Tensor<T> y({cout, t_out});
  for (int ci = 0; ci < cin; ++ci) {
    const T* xrow = x.data() + static_cast<int64_t>(ci) * k_in;
    for (int co = 0; co < cout; ++co) {
      T* yrow = y.data() + static_cast<int64_t>(co) * t_out;
      const T* wrow =
          w.data() + (static_cast<int64_t>(ci) * cout + co) * kernel;
      for (int p = 0; p < kernel; ++p) {
        const T wv = wrow[p];
        if (wv == T(0)) continue;
        for (int k = 0; k < k_in; ++k) yrow[k * stride + p] += wv * xrow[k];
      }
    }
  }
  return y;
}

template <typename T>
void Conv1dTransposeBackward(const Tensor<T>& x, const Tensor<T>& w,
                             int stride, const Tensor<T>& dy, Tensor<T>* dx,
                             Tensor<T>* dw) {
  const int cin = x.dim(0), k_in = x.dim(1);
  const int cout = w.dim(1), kernel = w.dim(2);
  const int t_out = dy.dim(1);
  (void)t_out;
  for (int ci = 0; ci < cin; ++ci) {
    const T* xrow = x.data() + static_cast<int64_t>(ci) * k_in;
    T* dxrow =
        dx != nullptr ? dx->data() + static_cast<int64_t>(ci) * k_in : nullptr;
    for (int co = 0; co < cout; ++co) {
      const T* gr = dy.data() + static_cast<int64_t>(co) * t_out;
      const T* wrow =
          w.data() + (static_cast<int64_t>(ci) * cout + co) * kernel;
      T* dwrow = dw != nullptr ? dw->data() + (static_cast<int64_t>(ci) * cout
                                               + co) * kernel
                               : nullptr;
      for (int p = 0; p < kernel; ++p) {
        const T wv = wrow[p];
        T wacc(0);
        for (int k = 0; k < k_in; ++k) {
          const T g = gr[k * stride + p];
          if (dxrow != nullptr) dxrow[k] += wv * g;
          wacc += xrow[k] * g;
        }
        if (dwrow != nullptr) dwrow[p] += wacc;
      }
    }
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Var-level ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> Matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> value = kernels::MatmulForward(a.value(), b.value());
  value.CheckFinite("matmul");
  return Var<T>::MakeOp(
      OpKind::kMatmul, std::move(value), {a, b}, [](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const int m = pa.value.dim(0), k = pa.value.dim(1),
                  cols = pb.value.dim(1);
        if (pa.requires_grad) {
          if (pa.grad.empty()) pa.grad = Tensor<T>(pa.value.shape());
          Gemm(false, true, m, k, cols, T(1), n.grad.data(), cols,
               pb.value.data(), cols, T(1), pa.grad.data(), k);
        }
        if (pb.requires_grad) {
          if (pb.grad.empty()) pb.grad = Tensor<T>(pb.value.shape());
          Gemm(true, false, k, cols, m, T(1), pa.value.data(), k,
               n.grad.data(), cols, T(1), pb.grad.data(), cols);
        }
      });
}

template <typename T>
Var<T> Conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              Conv1dSpec spec) {
  const Tensor<T>* bias_t = bias.defined() ? &bias.value() : nullptr;
  Tensor<T> value = kernels::Conv1dForward(x.value(), w.value(), bias_t, spec);
  value.CheckFinite("conv1d");
  std::vector<Var<T>> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return Var<T>::MakeOp(
      OpKind::kConv1d, std::move(value), std::move(parents),
      [spec, has_bias](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        Node<T>* pb = has_bias ? n.parents[2].get() : nullptr;
        Tensor<T>* dx = nullptr;
        Tensor<T>* dw = nullptr;
        Tensor<T>* db = nullptr;
        if (px.requires_grad) {
          if (px.grad.empty()) px.grad = Tensor<T>(px.value.shape());
          dx = &px.grad;
        }
        if (pw.requires_grad) {
          if (pw.grad.empty()) pw.grad = Tensor<T>(pw.value.shape());
          dw = &pw.grad;
        }
        if (pb != nullptr && pb->requires_grad) {
          if (pb->grad.empty()) pb->grad = Tensor<T>(pb->value.shape());
          db = &pb->grad;
        }
        kernels::Conv1dBackward(px.value, pw.value, spec, n.grad, dx, dw, db);
      });
}

template <typename T>
Var<T> Conv1d(const Var<T>& x, const Var<T>& w, Conv1dSpec spec) {
  return Conv1d(x, w, Var<T>(), spec);
}

template <typename T>
Var<T> Conv1dTranspose(const Var<T>& x, const Var<T>& w, int stride) {
  Tensor<T> value =
      kernels::Conv1dTransposeForward(x.value(), w.value(), stride);
  value.CheckFinite("conv1d_transpose");
  return Var<T>::MakeOp(
      OpKind::kConv1dTranspose, std::move(value), {x, w},
      [stride](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        Tensor<T>* dx = nullptr;
        Tensor<T>* dw = nullptr;
        if (px.requires_grad) {
          if (px.grad.empty()) px.grad = Tensor<T>(px.value.shape());
          dx = &px.grad;
        }
        if (pw.requires_grad) {
          if (pw.grad.empty()) pw.grad = Tensor<T>(pw.value.shape());
          dw = &pw.grad;
        }
        kernels::Conv1dTransposeBackward(px.value, pw.value, stride, n.grad,
                                         dx, dw);
      });
}

// ---------------------------------------------------------------------------
// Elementwise binary ops. Shapes must match exactly, or one side must be a
// single-element tensor (scalar broadcast); nothing in between.
// ---------------------------------------------------------------------------

namespace detail_ops {

enum class BinKind { kAdd, kSub, kMul, kDiv };

template <typename T>
void CheckBinaryShapes(const Var<T>& a, const Var<T>& b, const char* name) {
  const bool ok = a.value().SameShape(b.value()) || a.numel() == 1 ||
                  b.numel() == 1;
  CDSE_CHECK(ok, ErrorKind::kDimension, name, ": incompatible shapes ",
             ShapeStr(a.shape()), " and ", ShapeStr(b.shape()),
             " (exact match or scalar broadcast only)");
}

template <typename T, typename F>
Tensor<T> BroadcastApply(const Tensor<T>& a, const Tensor<T>& b, F f) {
  const Shape& shape = a.numel() >= b.numel() ? a.shape() : b.shape();
  Tensor<T> out(shape);
  const int64_t n = out.numel();
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[sa ? 0 : i], pb[sb ? 0 : i]);
  return out;
}

// Accumulates dy*factor into a parent, summing when the parent is scalar.
template <typename T, typename F>
void AccumBroadcast(Node<T>& parent, const Tensor<T>& dy, F factor) {
  if (!parent.requires_grad) return;
  if (parent.grad.empty()) parent.grad = Tensor<T>(parent.value.shape());
  const int64_t n = dy.numel();
  if (parent.grad.numel() == 1 && n > 1) {
    T acc(0);
    for (int64_t i = 0; i < n; ++i) acc += factor(i) * dy[i];
    parent.grad[0] += acc;
  } else {
    for (int64_t i = 0; i < n; ++i) parent.grad[i] += factor(i) * dy[i];
  }
}

}  // namespace detail_ops

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  detail_ops::CheckBinaryShapes(a, b, "add");
  Tensor<T> value = detail_ops::BroadcastApply(
      a.value(), b.value(), [](T x, T y) { return x + y; });
  value.CheckFinite("add");
  return Var<T>::MakeOp(OpKind::kAdd, std::move(value), {a, b},
                        [](Node<T>& n) {
                          auto one = [](int64_t) { return T(1); };
                          detail_ops::AccumBroadcast(*n.parents[0], n.grad,
                                                     one);
                          detail_ops::AccumBroadcast(*n.parents[1], n.grad,
                                                     one);
                        });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  detail_ops::CheckBinaryShapes(a, b, "sub");
  Tensor<T> value = detail_ops::BroadcastApply(
      a.value(), b.value(), [](T x, T y) { return x - y; });
  value.CheckFinite("sub");
  return Var<T>::MakeOp(OpKind::kSub, std::move(value), {a, b},
                        [](Node<T>& n) {
                          detail_ops::AccumBroadcast(
                              *n.parents[0], n.grad,
                              [](int64_t) { return T(1); });
                          detail_ops::AccumBroadcast(
                              *n.parents[1], n.grad,
                              [](int64_t) { return T(-1); });
                        });
}

template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  detail_ops::CheckBinaryShapes(a, b, "mul");
  Tensor<T> value = detail_ops::BroadcastApply(
      a.value(), b.value(), [](T x, T y) { return x * y; });
  value.CheckFinite("mul");
  return Var<T>::MakeOp(
      OpKind::kMul, std::move(value), {a, b}, [](Node<T>& n) {
        const Tensor<T>& av = n.parents[0]->value;
        const Tensor<T>& bv = n.parents[1]->value;
        const bool sa = av.numel() == 1, sb = bv.numel() == 1;
        detail_ops::AccumBroadcast(
            *n.parents[0], n.grad,
            [&bv, sb](int64_t i) { return bv[sb ? 0 : i]; });
        detail_ops::AccumBroadcast(
            *n.parents[1], n.grad,
            [&av, sa](int64_t i) { return av[sa ? 0 : i]; });
      });
}

template <typename T>
Var<T> Div(const Var<T>& a, const Var<T>& b) {
  detail_ops::CheckBinaryShapes(a, b, "div");
  Tensor<T> value = detail_ops::BroadcastApply(
      a.value(), b.value(), [](T x, T y) { return x / y; });
  value.CheckFinite("div");
  return Var<T>::MakeOp(
      OpKind::kDiv, std::move(value), {a, b}, [](Node<T>& n) {
        const Tensor<T>& av = n.parents[0]->value;
        const Tensor<T>& bv = n.parents[1]->value;
        const bool sa = av.numel() == 1, sb = bv.numel() == 1;
        detail_ops::AccumBroadcast(*n.parents[0], n.grad, [&bv, sb](int64_t i) {
          return T(1) / bv[sb ? 0 : i];
        });
        detail_ops::AccumBroadcast(
            *n.parents[1], n.grad, [&av, &bv, sa, sb](int64_t i) {
              const T bi = bv[sb ? 0 : i];
              return -av[sa ? 0 : i] / (bi * bi);
            });
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> Sigmoid(const Var<T>& x) {
  Tensor<T> value(x.shape());
  const T* px = x.value().data();
  T* po = value.data();
  for (int64_t i = 0; i < value.numel(); ++i) {
    const T v = px[i];
    if (v >= T(0)) {
      po[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      po[i] = e / (T(1) + e);
    }
  }
  value.CheckFinite("sigmoid");
  return Var<T>::MakeOp(
      OpKind::kSigmoid, std::move(value), {x}, [](Node<T>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
          const T y = n.value[i];
          p.grad[i] += n.grad[i] * y * (T(1) - y);
        }
      });
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  Tensor<T> value(x.shape());
  const T* px = x.value().data();
  T* po = value.data();
  for (int64_t i = 0; i < value.numel(); ++i) po[i] = px[i] > T(0) ? px[i]
                                                                   : T(0);
  return Var<T>::MakeOp(OpKind::kRelu, std::move(value), {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
    // subgradient at 0 is 0
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      if (p.value[i] > T(0)) p.grad[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> Tanh(const Var<T>& x) {
  Tensor<T> value(x.shape());
  const T* px = x.value().data();
  T* po = value.data();
  for (int64_t i = 0; i < value.numel(); ++i) po[i] = std::tanh(px[i]);
  value.CheckFinite("tanh");
  return Var<T>::MakeOp(
      OpKind::kTanh, std::move(value), {x}, [](Node<T>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
        for (int64_t i = 0; i < n.grad.numel(); ++i)
          p.grad[i] += n.grad[i] * (T(1) - n.value[i] * n.value[i]);
      });
}

template <typename T>
Var<T> Log(const Var<T>& x) {
  Tensor<T> value(x.shape());
  const T* px = x.value().data();
  T* po = value.data();
  for (int64_t i = 0; i < value.numel(); ++i) po[i] = std::log(px[i]);
  value.CheckFinite("log");
  return Var<T>::MakeOp(OpKind::kLog, std::move(value), {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      p.grad[i] += n.grad[i] / p.value[i];
  });
}

// PReLU over [C x T] with one learnable slope per channel.
template <typename T>
Var<T> Prelu(const Var<T>& x, const Var<T>& alpha) {
  CDSE_CHECK(x.value().rank() == 2, ErrorKind::kDimension,
             "prelu expects [channels x time], got ", ShapeStr(x.shape()));
  CDSE_CHECK(alpha.value().rank() == 1 &&
                 alpha.value().dim(0) == x.value().dim(0),
             ErrorKind::kDimension, "prelu slope must be [", x.value().dim(0),
             "], got ", ShapeStr(alpha.shape()));
  const int c_dim = x.value().dim(0), t_dim = x.value().dim(1);
  Tensor<T> value({c_dim, t_dim});
  for (int c = 0; c < c_dim; ++c) {
    const T a = alpha.value()[c];
    const T* px = x.value().data() + static_cast<int64_t>(c) * t_dim;
    T* po = value.data() + static_cast<int64_t>(c) * t_dim;
    for (int t = 0; t < t_dim; ++t) po[t] = px[t] > T(0) ? px[t] : a * px[t];
  }
  value.CheckFinite("prelu");
  return Var<T>::MakeOp(
      OpKind::kPrelu, std::move(value), {x, alpha}, [](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pa = *n.parents[1];
        const int c_dim = px.value.dim(0), t_dim = px.value.dim(1);
        if (px.requires_grad && px.grad.empty())
          px.grad = Tensor<T>(px.value.shape());
        if (pa.requires_grad && pa.grad.empty())
          pa.grad = Tensor<T>(pa.value.shape());
        for (int c = 0; c < c_dim; ++c) {
          const T a = pa.value[c];
          const T* xv = px.value.data() + static_cast<int64_t>(c) * t_dim;
          const T* g = n.grad.data() + static_cast<int64_t>(c) * t_dim;
          T* gx = px.requires_grad
                      ? px.grad.data() + static_cast<int64_t>(c) * t_dim
                      : nullptr;
          T aacc(0);
          for (int t = 0; t < t_dim; ++t) {
            if (xv[t] > T(0)) {
              if (gx != nullptr) gx[t] += g[t];
            } else {
              if (gx != nullptr) gx[t] += a * g[t];
              aacc += xv[t] * g[t];
            }
          }
          if (pa.requires_grad) pa.grad[c] += aacc;
        }
      });
}

// ---------------------------------------------------------------------------
// Concatenation / slicing / reshape
// ---------------------------------------------------------------------------

template <typename T>
Var<T> Concat(const std::vector<Var<T>>& parts, int axis) {
  CDSE_CHECK(!parts.empty(), ErrorKind::kParameter, "concat of zero tensors");
  const int rank = parts[0].value().rank();
  CDSE_CHECK(axis >= 0 && axis < rank, ErrorKind::kParameter, "concat axis ",
             axis, " out of range for rank ", rank);
  CDSE_CHECK(rank <= 2, ErrorKind::kDimension,
             "concat supports rank 1 and 2, got rank ", rank);
  int axis_total = 0;
  for (const auto& p : parts) {
    CDSE_CHECK(p.value().rank() == rank, ErrorKind::kDimension,
               "concat rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis) {
        CDSE_CHECK(p.value().dim(d) == parts[0].value().dim(d),
                   ErrorKind::kDimension,
                   "concat shapes ragged off-axis: ", ShapeStr(p.shape()),
                   " vs ", ShapeStr(parts[0].shape()));
      }
    }
    axis_total += p.value().dim(axis);
  }
  Shape out_shape = parts[0].value().shape();
  out_shape[static_cast<size_t>(axis)] = axis_total;
  Tensor<T> value(out_shape);

  const bool row_axis = (rank == 1) || (axis == 0);
  if (row_axis) {
    // contiguous blocks
    int64_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.value().data(), p.value().data() + p.numel(),
                value.data() + off);
      off += p.numel();
    }
  } else {
    const int rows = out_shape[0];
    int col_off = 0;
    for (const auto& p : parts) {
      const int cols = p.value().dim(1);
      for (int r = 0; r < rows; ++r) {
        std::copy(p.value().data() + static_cast<int64_t>(r) * cols,
                  p.value().data() + static_cast<int64_t>(r + 1) * cols,
                  value.data() + static_cast<int64_t>(r) * axis_total +
                      col_off);
      }
      col_off += cols;
    }
  }

  return Var<T>::MakeOp(
      OpKind::kConcat, std::move(value), parts, [axis](Node<T>& n) {
        const int rank = n.value.rank();
        const bool row_axis = (rank == 1) || (axis == 0);
        if (row_axis) {
          int64_t off = 0;
          for (auto& pp : n.parents) {
            Node<T>& p = *pp;
            if (p.requires_grad) {
              if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
              for (int64_t i = 0; i < p.value.numel(); ++i)
                p.grad[i] += n.grad[off + i];
            }
            off += p.value.numel();
          }
        } else {
          const int rows = n.value.dim(0);
          const int total_cols = n.value.dim(1);
          int col_off = 0;
          for (auto& pp : n.parents) {
            Node<T>& p = *pp;
            const int cols = p.value.dim(1);
            if (p.requires_grad) {
              if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
              for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                  p.grad[static_cast<int64_t>(r) * cols + c] +=
                      n.grad[static_cast<int64_t>(r) * total_cols + col_off +
                             c];
            }
            col_off += cols;
          }
        }
      });
}

// Rows [row0, row1) of a rank-2 tensor.
template <typename T>
Var<T> SliceRows(const Var<T>& x, int row0, int row1) {
  CDSE_CHECK(x.value().rank() == 2, ErrorKind::kDimension,
             "slice_rows expects rank 2, got ", ShapeStr(x.shape()));
  CDSE_CHECK(0 <= row0 && row0 < row1 && row1 <= x.value().dim(0),
             ErrorKind::kParameter, "slice_rows [", row0, ",", row1,
             ") out of range for ", ShapeStr(x.shape()));
  const int cols = x.value().dim(1);
  Tensor<T> value({row1 - row0, cols});
  std::copy(x.value().data() + static_cast<int64_t>(row0) * cols,
            x.value().data() + static_cast<int64_t>(row1) * cols,
            value.data());
  return Var<T>::MakeOp(
      OpKind::kSliceRows, std::move(value), {x}, [row0, cols](Node<T>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
        T* dst = p.grad.data() + static_cast<int64_t>(row0) * cols;
        for (int64_t i = 0; i < n.grad.numel(); ++i) dst[i] += n.grad[i];
      });
}

template <typename T>
Var<T> Reshape(const Var<T>& x, Shape shape) {
  CDSE_CHECK(NumelOf(shape) == x.numel(), ErrorKind::kDimension,
             "reshape to ", ShapeStr(shape), " changes element count from ",
             x.numel());
  Tensor<T> value(shape, x.value().vec());
  return Var<T>::MakeOp(OpKind::kReshape, std::move(value), {x},
                        [](Node<T>& n) {
                          auto& p = *n.parents[0];
                          if (!p.requires_grad) return;
                          if (p.grad.empty())
                            p.grad = Tensor<T>(p.value.shape());
                          for (int64_t i = 0; i < n.grad.numel(); ++i)
                            p.grad[i] += n.grad[i];
                        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail_ops {

template <typename T>
Var<T> Reduce(const Var<T>& x, int axis, bool is_mean, bool full) {
  const Tensor<T>& xv = x.value();
  Tensor<T> value;
  if (full) {
    T acc(0);
    for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    if (is_mean) acc /= static_cast<T>(xv.numel());
    value = Tensor<T>::Scalar(acc);
  } else {
    CDSE_CHECK(axis >= 0 && axis < xv.rank(), ErrorKind::kParameter,
               "reduce axis ", axis, " out of range for rank ", xv.rank());
    CDSE_CHECK(xv.rank() == 2, ErrorKind::kDimension,
               "axis reduce supports rank 2, got ", ShapeStr(xv.shape()));
    const int rows = xv.dim(0), cols = xv.dim(1);
    if (axis == 0) {
      value = Tensor<T>({cols});
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) value[c] += xv.at(r, c);
      if (is_mean)
        for (int c = 0; c < cols; ++c) value[c] /= static_cast<T>(rows);
    } else {
      value = Tensor<T>({rows});
      for (int r = 0; r < rows; ++r) {
        T acc(0);
        for (int c = 0; c < cols; ++c) acc += xv.at(r, c);
        value[r] = is_mean ? acc / static_cast<T>(cols) : acc;
      }
    }
  }
  value.CheckFinite(is_mean ? "mean" : "sum");
  return Var<T>::MakeOp(
      is_mean ? OpKind::kMean : OpKind::kSum, std::move(value), {x},
      [axis, is_mean, full](Node<T>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
        const Tensor<T>& xv = p.value;
        if (full) {
          const T g = is_mean ? n.grad[0] / static_cast<T>(xv.numel())
                              : n.grad[0];
          for (int64_t i = 0; i < xv.numel(); ++i) p.grad[i] += g;
        } else {
          const int rows = xv.dim(0), cols = xv.dim(1);
          if (axis == 0) {
            const T scale = is_mean ? T(1) / static_cast<T>(rows) : T(1);
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < cols; ++c)
                p.grad[static_cast<int64_t>(r) * cols + c] +=
                    scale * n.grad[c];
          } else {
            const T scale = is_mean ? T(1) / static_cast<T>(cols) : T(1);
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < cols; ++c)
                p.grad[static_cast<int64_t>(r) * cols + c] +=
                    scale * n.grad[r];
          }
        }
      });
}

}  // namespace detail_ops

template <typename T>
Var<T> Sum(const Var<T>& x) {
  return detail_ops::Reduce(x, -1, false, true);
}
template <typename T>
Var<T> Sum(const Var<T>& x, int axis) {
  return detail_ops::Reduce(x, axis, false, false);
}
template <typename T>
Var<T> Mean(const Var<T>& x) {
  return detail_ops::Reduce(x, -1, true, true);
}
template <typename T>
Var<T> Mean(const Var<T>& x, int axis) {
  return detail_ops::Reduce(x, axis, true, false);
}

// ---------------------------------------------------------------------------
// Global layer norm: normalize [C x T] by the mean/variance of all C*T
// elements, then scale/shift per channel.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> GlobalLayerNorm(const Var<T>& x, const Var<T>& gamma,
                       const Var<T>& beta, T eps) {
  CDSE_CHECK(eps > T(0), ErrorKind::kParameter, "gLN eps must be > 0");
  const Tensor<T>& xv = x.value();
  CDSE_CHECK(xv.rank() == 2, ErrorKind::kDimension,
             "gLN expects [channels x time], got ", ShapeStr(xv.shape()));
  const int c_dim = xv.dim(0), t_dim = xv.dim(1);
  CDSE_CHECK(gamma.value().rank() == 1 && gamma.value().dim(0) == c_dim &&
                 beta.value().rank() == 1 && beta.value().dim(0) == c_dim,
             ErrorKind::kDimension, "gLN gamma/beta must be [", c_dim, "]");
  const int64_t n = xv.numel();
  // Statistics in double: single-precision accumulation over C*T elements
  // loses enough bits to disturb the float32 gradient checks.
  double mu = 0;
  for (int64_t i = 0; i < n; ++i) mu += static_cast<double>(xv[i]);
  mu /= static_cast<double>(n);
  double var = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(xv[i]) - mu;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_sigma = 1.0 / std::sqrt(var + static_cast<double>(eps));

  Tensor<T> xhat({c_dim, t_dim});
  Tensor<T> value({c_dim, t_dim});
  for (int c = 0; c < c_dim; ++c) {
    const T g = gamma.value()[c];
    const T b = beta.value()[c];
    const T* xr = xv.data() + static_cast<int64_t>(c) * t_dim;
    T* hr = xhat.data() + static_cast<int64_t>(c) * t_dim;
    T* yr = value.data() + static_cast<int64_t>(c) * t_dim;
    for (int t = 0; t < t_dim; ++t) {
      hr[t] = static_cast<T>((static_cast<double>(xr[t]) - mu) * inv_sigma);
      yr[t] = g * hr[t] + b;
    }
  }
  value.CheckFinite("global_layer_norm");
  return Var<T>::MakeOp(
      OpKind::kGlobalLayerNorm, std::move(value), {x, gamma, beta},
      [xhat = std::move(xhat), inv_sigma](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        const int c_dim = px.value.dim(0), t_dim = px.value.dim(1);
        const int64_t count = px.value.numel();

        if (pg.requires_grad || pb.requires_grad) {
          if (pg.requires_grad && pg.grad.empty())
            pg.grad = Tensor<T>(pg.value.shape());
          if (pb.requires_grad && pb.grad.empty())
            pb.grad = Tensor<T>(pb.value.shape());
          for (int c = 0; c < c_dim; ++c) {
            const T* g = n.grad.data() + static_cast<int64_t>(c) * t_dim;
            const T* h = xhat.data() + static_cast<int64_t>(c) * t_dim;
            double dg = 0, db = 0;
            for (int t = 0; t < t_dim; ++t) {
              dg += static_cast<double>(g[t]) * h[t];
              db += static_cast<double>(g[t]);
            }
            if (pg.requires_grad) pg.grad[c] += static_cast<T>(dg);
            if (pb.requires_grad) pb.grad[c] += static_cast<T>(db);
          }
        }

        if (px.requires_grad) {
          if (px.grad.empty()) px.grad = Tensor<T>(px.value.shape());
          // h = dL/dxhat; dx = inv_sigma*(h - mean(h) - xhat*mean(h.xhat))
          double mean_h = 0, mean_hx = 0;
          for (int c = 0; c < c_dim; ++c) {
            const T gc = pg.value[c];
            const T* g = n.grad.data() + static_cast<int64_t>(c) * t_dim;
            const T* h = xhat.data() + static_cast<int64_t>(c) * t_dim;
            for (int t = 0; t < t_dim; ++t) {
              const double hv = static_cast<double>(gc) * g[t];
              mean_h += hv;
              mean_hx += hv * h[t];
            }
          }
          mean_h /= static_cast<double>(count);
          mean_hx /= static_cast<double>(count);
          for (int c = 0; c < c_dim; ++c) {
            const T gc = pg.value[c];
            const T* g = n.grad.data() + static_cast<int64_t>(c) * t_dim;
            const T* h = xhat.data() + static_cast<int64_t>(c) * t_dim;
            T* gx = px.grad.data() + static_cast<int64_t>(c) * t_dim;
            for (int t = 0; t < t_dim; ++t) {
              const double hv = static_cast<double>(gc) * g[t];
              gx[t] += static_cast<T>(inv_sigma *
                                      (hv - mean_h - h[t] * mean_hx));
            }
          }
        }
      });
}

// Convenience operators used by the loss code.
template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return Add(a, b);
}
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return Sub(a, b);
}
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  return Mul(a, b);
}
template <typename T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) {
  return Div(a, b);
}

}  // namespace cdse

#endif  // CDSE_OPS_HPP_
