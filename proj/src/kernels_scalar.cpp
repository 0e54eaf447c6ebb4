// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. These define the arithmetic and reduction orders that
// the SIMD variants must reproduce exactly; keep them boring.

#include <cmath>
#include <cstdint>

#include "meshpose/kernels.hpp"

namespace meshpose::kern {
namespace {

template <typename T>
void gemm_nn_ref(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                 int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T s = acc ? c[i * ldc + j] : T(0);
      for (int64_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
  }
}

template <typename T>
void gemm_tn_ref(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                 int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T s = acc ? c[i * ldc + j] : T(0);
      for (int64_t p = 0; p < k; ++p) s += a[p * lda + i] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
  }
}

// Striped-8 reduction: lane j accumulates elements with index % 8 == j, the
// lanes then collapse through a fixed tree. This is the documented order for
// every long reduction in the project.
template <typename T, typename Load>
T striped8(int64_t n, Load&& load) {
  T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += load(i + j);
  for (; i < n; ++i) acc[i & 7] += load(i);
  T s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
  T s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
  return (s01 + s23) + (s45 + s67);
}

template <typename T>
void gemm_nt_ref(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                 int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      const T* ra = a + i * lda;
      const T* rb = b + j * ldb;
      T s = striped8<T>(k, [&](int64_t p) { return ra[p] * rb[p]; });
      c[i * ldc + j] = acc ? c[i * ldc + j] + s : s;
    }
  }
}

template <typename T>
void add_ref(const T* a, const T* b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
template <typename T>
void sub_ref(const T* a, const T* b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}
template <typename T>
void mul_ref(const T* a, const T* b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
template <typename T>
void axpy_ref(T alpha, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <typename T>
void scale_shift_ref(const T* x, T a, T b, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}
template <typename T>
void relu_ref(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}
template <typename T>
void lrelu_ref(const T* x, T slope, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}
template <typename T>
void lrelu_bwd_ref(const T* x, const T* g, T slope, T* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? g[i] : slope * g[i];
}

template <typename T>
T sum_ref(const T* x, int64_t n) {
  return striped8<T>(n, [&](int64_t i) { return x[i]; });
}
template <typename T>
T dot_ref(const T* a, const T* b, int64_t n) {
  return striped8<T>(n, [&](int64_t i) { return a[i] * b[i]; });
}
template <typename T>
T sum_abs_ref(const T* x, int64_t n) {
  return striped8<T>(n, [&](int64_t i) { return x[i] < T(0) ? -x[i] : x[i]; });
}
template <typename T>
T sum_sq_diff_ref(const T* x, T mu, int64_t n) {
  return striped8<T>(n, [&](int64_t i) {
    T d = x[i] - mu;
    return d * d;
  });
}

template <typename T>
void col_sum_ref(const T* x, int64_t rows, int64_t cols, T* y) {
  for (int64_t c = 0; c < cols; ++c) y[c] = T(0);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t c = 0; c < cols; ++c) y[c] += x[i * cols + c];
}

template <typename T>
void col_sum_sq_diff_ref(const T* x, const T* mu, int64_t rows, int64_t cols, T* y) {
  for (int64_t c = 0; c < cols; ++c) y[c] = T(0);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t c = 0; c < cols; ++c) {
      T d = x[i * cols + c] - mu[c];
      y[c] += d * d;
    }
}

template <typename T>
void spmm_ref(const int32_t* rowptr, const int32_t* cols, const T* vals, const T* x, T* y,
              int64_t n_rows, int64_t channels) {
  for (int64_t i = 0; i < n_rows; ++i) {
    T* out = y + i * channels;
    for (int64_t c = 0; c < channels; ++c) out[c] = T(0);
    for (int32_t e = rowptr[i]; e < rowptr[i + 1]; ++e) {
      const T v = vals[e];
      const T* row = x + int64_t(cols[e]) * channels;
      for (int64_t c = 0; c < channels; ++c) out[c] += v * row[c];
    }
  }
}

template <typename T>
Kernels<T> make_scalar_table() {
  Kernels<T> t;
  t.gemm_nn = gemm_nn_ref<T>;
  t.gemm_tn = gemm_tn_ref<T>;
  t.gemm_nt = gemm_nt_ref<T>;
  t.add = add_ref<T>;
  t.sub = sub_ref<T>;
  t.mul = mul_ref<T>;
  t.axpy = axpy_ref<T>;
  t.scale_shift = scale_shift_ref<T>;
  t.relu = relu_ref<T>;
  t.lrelu = lrelu_ref<T>;
  t.lrelu_bwd = lrelu_bwd_ref<T>;
  t.sum = sum_ref<T>;
  t.dot = dot_ref<T>;
  t.sum_abs = sum_abs_ref<T>;
  t.sum_sq_diff = sum_sq_diff_ref<T>;
  t.col_sum = col_sum_ref<T>;
  t.col_sum_sq_diff = col_sum_sq_diff_ref<T>;
  t.spmm = spmm_ref<T>;
  return t;
}

}  // namespace

const Kernels<float>& scalar_f32() {
  static const Kernels<float> t = make_scalar_table<float>();
  return t;
}

const Kernels<double>& scalar_f64() {
  static const Kernels<double> t = make_scalar_table<double>();
  return t;
}

}  // namespace meshpose::kern
