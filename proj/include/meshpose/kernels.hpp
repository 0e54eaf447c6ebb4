// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "meshpose/backend.hpp"

namespace meshpose::kern {

// Low-level arithmetic kernels behind the tensor ops. Every kernel has a
// scalar reference implementation; hot f32 kernels additionally have an AVX2
// variant selected at runtime. The two variants are bit-identical by
// construction, which the equivalence tests assert:
//
//  - gemm_nn / gemm_tn accumulate each output element sequentially over k
//    (the SIMD variant assigns one output element per lane).
//  - gemm_nt, sum, dot and friends reduce in a striped-8 order: eight
//    accumulators fed round-robin (lane j takes elements i with i%8 == j),
//    combined at the end by the fixed tree ((0+1)+(2+3)) + ((4+5)+(6+7)).
//  - col_* kernels reduce each column sequentially over rows.
//
// Float contraction is disabled project-wide (-ffp-contract=off) so the
// scalar path cannot silently fuse into FMA.

template <typename T>
struct Kernels {
  // c[i*ldc+j] (+)= sum_p a[i*lda+p] * b[p*ldb+j],  i<m, j<n, p<k
  void (*gemm_nn)(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                  int64_t m, int64_t k, int64_t n, bool accumulate);
  // c[i*ldc+j] (+)= sum_p a[p*lda+i] * b[p*ldb+j]
  void (*gemm_tn)(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                  int64_t m, int64_t k, int64_t n, bool accumulate);
  // c[i*ldc+j] (+)= sum_p a[i*lda+p] * b[j*ldb+p]   (striped-8 over p)
  void (*gemm_nt)(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                  int64_t m, int64_t k, int64_t n, bool accumulate);

  void (*add)(const T* a, const T* b, T* y, int64_t n);
  void (*sub)(const T* a, const T* b, T* y, int64_t n);
  void (*mul)(const T* a, const T* b, T* y, int64_t n);
  void (*axpy)(T alpha, const T* x, T* y, int64_t n);        // y += alpha*x
  void (*scale_shift)(const T* x, T a, T b, T* y, int64_t n);  // y = a*x + b

  void (*relu)(const T* x, T* y, int64_t n);
  void (*lrelu)(const T* x, T slope, T* y, int64_t n);
  // gx += g * (x > 0 ? 1 : slope); relu is slope = 0
  void (*lrelu_bwd)(const T* x, const T* g, T slope, T* gx, int64_t n);

  T (*sum)(const T* x, int64_t n);                    // striped-8
  T (*dot)(const T* a, const T* b, int64_t n);         // striped-8
  T (*sum_abs)(const T* x, int64_t n);                 // striped-8
  T (*sum_sq_diff)(const T* x, T mu, int64_t n);       // striped-8, sum (x-mu)^2

  // y[c] = sum_i x[i*cols + c] for c in [0, cols): per-column sequential.
  void (*col_sum)(const T* x, int64_t rows, int64_t cols, T* y);
  // y[c] = sum_i (x[i*cols+c] - mu[c])^2
  void (*col_sum_sq_diff)(const T* x, const T* mu, int64_t rows, int64_t cols, T* y);

  // CSR row-average propagation: y[i,:] = sum_e vals[e] * x[cols[e],:],
  // e in [rowptr[i], rowptr[i+1]), per-channel sequential over neighbors.
  void (*spmm)(const int32_t* rowptr, const int32_t* cols, const T* vals,
               const T* x, T* y, int64_t n_rows, int64_t channels);
};

template <typename T>
const Kernels<T>& get();

template <>
const Kernels<float>& get<float>();
template <>
const Kernels<double>& get<double>();

// Exposed for the dispatch table and equivalence tests.
const Kernels<float>& scalar_f32();
const Kernels<double>& scalar_f64();
const Kernels<float>& avx2_f32();  // throws if unsupported

}  // namespace meshpose::kern
