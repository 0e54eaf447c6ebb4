// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "meshpose/backend.hpp"
#include "meshpose/kernels.hpp"
#include "meshpose/tape.hpp"
#include "meshpose/tensor.hpp"

// Recorded primitive ops. Forward values are always computed; a backward node
// is appended only when a tape is bound and some input requires a gradient.

namespace meshpose {

namespace detail {

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> ins) {
  if (active_tape<T>() == nullptr) return false;
  for (const Tensor<T>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// Node id if the input needs gradients, else -1.
template <typename T>
int grad_node(Tape<T>& tape, const Tensor<T>& t) {
  return t.requires_grad() ? tape.ensure_node(t) : -1;
}

inline void check_same_shape(const char* op, const Shape& a, const Shape& b) {
  check(a == b, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

// Parallel gemm wrappers: block over output rows; each output element is
// still reduced in the kernel-documented order.
template <typename T>
void pgemm_nn(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc, int64_t m,
              int64_t k, int64_t n, bool acc) {
  const auto& K = kern::get<T>();
  if (m * n * k < (1 << 15)) {
    K.gemm_nn(a, lda, b, ldb, c, ldc, m, k, n, acc);
    return;
  }
  kern::parallel_for(m, [&](int64_t i0, int64_t i1) {
    K.gemm_nn(a + i0 * lda, lda, b, ldb, c + i0 * ldc, ldc, i1 - i0, k, n, acc);
  });
}

template <typename T>
void pgemm_tn(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc, int64_t m,
              int64_t k, int64_t n, bool acc) {
  const auto& K = kern::get<T>();
  if (m * n * k < (1 << 15)) {
    K.gemm_tn(a, lda, b, ldb, c, ldc, m, k, n, acc);
    return;
  }
  kern::parallel_for(m, [&](int64_t i0, int64_t i1) {
    K.gemm_tn(a + i0, lda, b, ldb, c + i0 * ldc, ldc, i1 - i0, k, n, acc);
  });
}

template <typename T>
void pgemm_nt(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc, int64_t m,
              int64_t k, int64_t n, bool acc) {
  const auto& K = kern::get<T>();
  if (m * n * k < (1 << 15)) {
    K.gemm_nt(a, lda, b, ldb, c, ldc, m, k, n, acc);
    return;
  }
  kern::parallel_for(m, [&](int64_t i0, int64_t i1) {
    K.gemm_nt(a + i0 * lda, lda, b, ldb, c + i0 * ldc, ldc, i1 - i0, k, n, acc);
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a.shape(), b.shape());
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  kern::get<T>().add(a.data(), b.data(), y.data(), y.numel());
  if (detail::should_record<T>({&a, &b})) {
    Tape<T>& tp = *active_tape<T>();
    int na = detail::grad_node(tp, a), nb = detail::grad_node(tp, b);
    y.set_requires_grad(true);
    int64_t n = y.numel();
    tp.record(y, [na, nb, n](Tape<T>& t, const T* g) {
      if (na >= 0) kern::get<T>().axpy(T(1), g, t.grad_buf(na).data(), n);
      if (nb >= 0) kern::get<T>().axpy(T(1), g, t.grad_buf(nb).data(), n);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a.shape(), b.shape());
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  kern::get<T>().sub(a.data(), b.data(), y.data(), y.numel());
  if (detail::should_record<T>({&a, &b})) {
    Tape<T>& tp = *active_tape<T>();
    int na = detail::grad_node(tp, a), nb = detail::grad_node(tp, b);
    y.set_requires_grad(true);
    int64_t n = y.numel();
    tp.record(y, [na, nb, n](Tape<T>& t, const T* g) {
      if (na >= 0) kern::get<T>().axpy(T(1), g, t.grad_buf(na).data(), n);
      if (nb >= 0) kern::get<T>().axpy(T(-1), g, t.grad_buf(nb).data(), n);
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a.shape(), b.shape());
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  kern::get<T>().mul(a.data(), b.data(), y.data(), y.numel());
  if (detail::should_record<T>({&a, &b})) {
    Tape<T>& tp = *active_tape<T>();
    int na = detail::grad_node(tp, a), nb = detail::grad_node(tp, b);
    y.set_requires_grad(true);
    Tensor<T> av = a, bv = b;  // keep values alive
    tp.record(y, [na, nb, av, bv](Tape<T>& t, const T* g) {
      int64_t n = av.numel();
      if (na >= 0) {
        T* ga = t.grad_buf(na).data();
        const T* bd = bv.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bd[i];
      }
      if (nb >= 0) {
        T* gb = t.grad_buf(nb).data();
        const T* ad = av.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * ad[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Scalar affine: y = alpha*x + beta

template <typename T>
Tensor<T> affine(const Tensor<T>& x, T alpha, T beta) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  kern::get<T>().scale_shift(x.data(), alpha, beta, y.data(), y.numel());
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    int64_t n = y.numel();
    tp.record(y, [nx, alpha, n](Tape<T>& t, const T* g) {
      kern::get<T>().axpy(alpha, g, t.grad_buf(nx).data(), n);
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T alpha) {
  return affine(x, alpha, T(0));
}
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T beta) {
  return affine(x, T(1), beta);
}
template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return affine(x, T(-1), T(0));
}
// y = beta - x
template <typename T>
Tensor<T> rsub_scalar(const Tensor<T>& x, T beta) {
  return affine(x, T(-1), beta);
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  kern::get<T>().relu(x.data(), y.data(), y.numel());
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    Tensor<T> xv = x;
    tp.record(y, [nx, xv](Tape<T>& t, const T* g) {
      kern::get<T>().lrelu_bwd(xv.data(), g, T(0), t.grad_buf(nx).data(), xv.numel());
    });
  }
  return y;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  kern::get<T>().lrelu(x.data(), slope, y.data(), y.numel());
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    Tensor<T> xv = x;
    tp.record(y, [nx, xv, slope](Tape<T>& t, const T* g) {
      kern::get<T>().lrelu_bwd(xv.data(), g, slope, t.grad_buf(nx).data(), xv.numel());
    });
  }
  return y;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data();
  T* yd = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) yd[i] = std::tanh(xd[i]);
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    Tensor<T> yv = y;
    tp.record(y, [nx, yv](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      const T* yd2 = yv.data();
      for (int64_t i = 0; i < yv.numel(); ++i) gx[i] += g[i] * (T(1) - yd2[i] * yd2[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data();
  T* yd = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) yd[i] = T(1) / (T(1) + std::exp(-xd[i]));
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    Tensor<T> yv = y;
    tp.record(y, [nx, yv](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      const T* yd2 = yv.data();
      for (int64_t i = 0; i < yv.numel(); ++i) gx[i] += g[i] * yd2[i] * (T(1) - yd2[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data();
  T* yd = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) yd[i] = xd[i] < T(0) ? -xd[i] : xd[i];
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    Tensor<T> xv = x;
    tp.record(y, [nx, xv](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      const T* xd2 = xv.data();
      for (int64_t i = 0; i < xv.numel(); ++i) {
        if (xd2[i] > T(0)) gx[i] += g[i];
        else if (xd2[i] < T(0)) gx[i] -= g[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// matmul: [m,k] x [k,n] -> [m,n]

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
        "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> y = Tensor<T>::zeros({m, n});
  pgemm_nn(a.data(), k, b.data(), n, y.data(), n, m, k, n, false);
  if (detail::should_record<T>({&a, &b})) {
    Tape<T>& tp = *active_tape<T>();
    int na = detail::grad_node(tp, a), nb = detail::grad_node(tp, b);
    y.set_requires_grad(true);
    Tensor<T> av = a, bv = b;
    tp.record(y, [na, nb, av, bv, m, k, n](Tape<T>& t, const T* g) {
      if (na >= 0)  // ga += g * b^T
        pgemm_nt(g, n, bv.data(), n, t.grad_buf(na).data(), k, m, n, k, true);
      if (nb >= 0)  // gb += a^T * g
        pgemm_tn(av.data(), k, g, n, t.grad_buf(nb).data(), n, k, m, n, true);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::scalar(kern::get<T>().sum(x.data(), x.numel()));
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    int64_t n = x.numel();
    tp.record(y, [nx, n](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[0];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  check(x.numel() > 0, "mean of empty tensor");
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> y = Tensor<T>::scalar(kern::get<T>().sum(x.data(), x.numel()) * inv);
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    int64_t n = x.numel();
    tp.record(y, [nx, n, inv](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      const T gv = g[0] * inv;
      for (int64_t i = 0; i < n; ++i) gx[i] += gv;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape s) {
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i] == -1) {
      int64_t rest = 1;
      for (size_t j = 0; j < s.size(); ++j)
        if (j != i) rest *= s[j];
      s[i] = x.numel() / rest;
    }
  check(numel_of(s) == x.numel(),
        "reshape: " + shape_str(x.shape()) + " -> " + shape_str(s));
  Tensor<T> y = Tensor<T>::from_data(s, x.vec());
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    int64_t n = x.numel();
    tp.record(y, [nx, n](Tape<T>& t, const T* g) {
      kern::get<T>().axpy(T(1), g, t.grad_buf(nx).data(), n);
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  check(!xs.empty(), "concat: no inputs");
  const int rank = xs[0].rank();
  check(axis >= 0 && axis < rank, "concat: bad axis");
  Shape out_shape = xs[0].shape();
  int64_t axis_total = 0;
  for (const auto& x : xs) {
    check(x.rank() == rank, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis)
        check(x.dim(d) == out_shape[d], "concat: shape mismatch " + shape_str(x.shape()));
    axis_total += x.dim(axis);
  }
  out_shape[axis] = axis_total;

  int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  int64_t inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  std::vector<int64_t> blocks(xs.size());
  {
    T* yd = y.data();
    const int64_t row = axis_total * inner;
    int64_t off = 0;
    for (size_t s = 0; s < xs.size(); ++s) {
      blocks[s] = xs[s].dim(axis) * inner;
      const T* xd = xs[s].data();
      for (int64_t o = 0; o < outer; ++o)
        std::copy(xd + o * blocks[s], xd + (o + 1) * blocks[s], yd + o * row + off);
      off += blocks[s];
    }
  }

  bool rec = false;
  for (const auto& x : xs)
    if (x.requires_grad()) rec = true;
  if (rec && active_tape<T>() != nullptr) {
    Tape<T>& tp = *active_tape<T>();
    std::vector<int> nodes(xs.size(), -1);
    for (size_t s = 0; s < xs.size(); ++s)
      if (xs[s].requires_grad()) nodes[s] = tp.ensure_node(xs[s]);
    y.set_requires_grad(true);
    const int64_t row = axis_total * inner;
    tp.record(y, [nodes, blocks, outer, row](Tape<T>& t, const T* g) {
      int64_t off = 0;
      for (size_t s = 0; s < nodes.size(); ++s) {
        if (nodes[s] >= 0) {
          T* gx = t.grad_buf(nodes[s]).data();
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = g + o * row + off;
            T* dst = gx + o * blocks[s];
            for (int64_t i = 0; i < blocks[s]; ++i) dst[i] += src[i];
          }
        }
        off += blocks[s];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  const int rank = x.rank();
  check(axis >= 0 && axis < rank, "slice: bad axis");
  check(start >= 0 && len > 0 && start + len <= x.dim(axis),
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  int64_t inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);
  const int64_t in_row = x.dim(axis) * inner;
  const int64_t out_row = len * inner;
  const int64_t off = start * inner;

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  {
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(xd + o * in_row + off, xd + o * in_row + off + out_row, yd + o * out_row);
  }
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    tp.record(y, [nx, outer, in_row, out_row, off](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = g + o * out_row;
        T* dst = gx + o * in_row + off;
        for (int64_t i = 0; i < out_row; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Broadcast helpers

// x: [m,n], v: [n] -> x + v per row. Used as the bias of dense layers.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  check(x.rank() == 2 && v.rank() == 1 && x.dim(1) == v.dim(0),
        "add_rowvec: " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data();
  const T* vd = v.data();
  T* yd = y.data();
  for (int64_t i = 0; i < m; ++i)
    kern::get<T>().add(xd + i * n, vd, yd + i * n, n);
  if (detail::should_record<T>({&x, &v})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x), nv = detail::grad_node(tp, v);
    y.set_requires_grad(true);
    tp.record(y, [nx, nv, m, n](Tape<T>& t, const T* g) {
      if (nx >= 0) kern::get<T>().axpy(T(1), g, t.grad_buf(nx).data(), m * n);
      if (nv >= 0) {
        T* gv = t.grad_buf(nv).data();
        std::vector<T> colsum(n);
        kern::get<T>().col_sum(g, m, n, colsum.data());
        kern::get<T>().axpy(T(1), colsum.data(), gv, n);
      }
    });
  }
  return y;
}

// x: [b,c,h,w], bias: [c]
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  check(x.rank() == 4 && bias.rank() == 1 && x.dim(1) == bias.dim(0),
        "add_channel_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data();
  T* yd = y.data();
  const T* bd = bias.data();
  for (int64_t i = 0; i < b * c; ++i)
    kern::get<T>().scale_shift(xd + i * hw, T(1), bd[i % c], yd + i * hw, hw);
  if (detail::should_record<T>({&x, &bias})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x), nb = detail::grad_node(tp, bias);
    y.set_requires_grad(true);
    tp.record(y, [nx, nb, b, c, hw](Tape<T>& t, const T* g) {
      if (nx >= 0) kern::get<T>().axpy(T(1), g, t.grad_buf(nx).data(), b * c * hw);
      if (nb >= 0) {
        T* gb = t.grad_buf(nb).data();
        for (int64_t i = 0; i < b * c; ++i)
          gb[i % c] += kern::get<T>().sum(g + i * hw, hw);
      }
    });
  }
  return y;
}

// x: [b,c,h,w] * m: [b,1,h,w], mask broadcast over channels.
template <typename T>
Tensor<T> mul_mask(const Tensor<T>& x, const Tensor<T>& m) {
  check(x.rank() == 4 && m.rank() == 4 && m.dim(1) == 1 && x.dim(0) == m.dim(0) &&
            x.dim(2) == m.dim(2) && x.dim(3) == m.dim(3),
        "mul_mask: " + shape_str(x.shape()) + " * " + shape_str(m.shape()));
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  {
    const T* xd = x.data();
    const T* md = m.data();
    T* yd = y.data();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t ci = 0; ci < c; ++ci)
        kern::get<T>().mul(xd + (bi * c + ci) * hw, md + bi * hw, yd + (bi * c + ci) * hw, hw);
  }
  if (detail::should_record<T>({&x, &m})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x), nm = detail::grad_node(tp, m);
    y.set_requires_grad(true);
    Tensor<T> xv = x, mv = m;
    tp.record(y, [nx, nm, xv, mv, b, c, hw](Tape<T>& t, const T* g) {
      if (nx >= 0) {
        T* gx = t.grad_buf(nx).data();
        const T* md = mv.data();
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t ci = 0; ci < c; ++ci) {
            const T* gp = g + (bi * c + ci) * hw;
            const T* mp = md + bi * hw;
            T* gxp = gx + (bi * c + ci) * hw;
            for (int64_t i = 0; i < hw; ++i) gxp[i] += gp[i] * mp[i];
          }
      }
      if (nm >= 0) {
        T* gm = t.grad_buf(nm).data();
        const T* xd = xv.data();
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t ci = 0; ci < c; ++ci) {
            const T* gp = g + (bi * c + ci) * hw;
            const T* xp = xd + (bi * c + ci) * hw;
            T* gmp = gm + bi * hw;
            for (int64_t i = 0; i < hw; ++i) gmp[i] += gp[i] * xp[i];
          }
      }
    });
  }
  return y;
}

// Global average pool [b,c,h,w] -> [b,c]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  check(x.rank() == 4, "global_avg_pool: want [b,c,h,w], got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(hw);
  Tensor<T> y = Tensor<T>::zeros({b, c});
  const T* xd = x.data();
  T* yd = y.data();
  for (int64_t i = 0; i < b * c; ++i) yd[i] = kern::get<T>().sum(xd + i * hw, hw) * inv;
  if (detail::should_record<T>({&x})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = detail::grad_node(tp, x);
    y.set_requires_grad(true);
    tp.record(y, [nx, b, c, hw, inv](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      for (int64_t i = 0; i < b * c; ++i) {
        const T gv = g[i] * inv;
        T* p = gx + i * hw;
        for (int64_t j = 0; j < hw; ++j) p[j] += gv;
      }
    });
  }
  return y;
}

}  // namespace meshpose
