// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2 f32 kernel variants. Compiled with -mavx2 but without FMA codegen so
// every lane performs the same mul-then-add sequence as the scalar reference;
// the equivalence suite asserts bit-identical outputs. gemm_nn/gemm_tn give
// each output element its own lane with a sequential k loop; reductions use
// the striped-8 order (lane j owns indices i with i%8 == j, fixed combine
// tree), which is what _mm_hadd_ps pairs compute.

#include <cstdint>

#include "meshpose/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace meshpose::kern {
namespace {

// ((l0+l1)+(l2+l3)) + ((l4+l5)+(l6+l7))
inline float tree_hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 h1 = _mm_hadd_ps(lo, hi);  // s01 s23 s45 s67
  __m128 h2 = _mm_hadd_ps(h1, h1);  // s0123 s4567 ..
  return _mm_cvtss_f32(h2) + _mm_cvtss_f32(_mm_shuffle_ps(h2, h2, 1));
}

// Finishes a striped-8 reduction that has a tail: spill lanes, fold the tail
// into lane (i & 7) exactly like the scalar reference, then the scalar tree.
inline float tree_hsum_with_tail(__m256 v, int64_t i, int64_t n, const float* tail_src,
                                 float (*load1)(const float*, int64_t)) {
  alignas(32) float acc[8];
  _mm256_store_ps(acc, v);
  for (; i < n; ++i) acc[i & 7] += load1(tail_src, i);
  float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
  float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
  return (s01 + s23) + (s45 + s67);
}

void gemm_nn_avx2(const float* a, int64_t lda, const float* b, int64_t ldb, float* c,
                  int64_t ldc, int64_t m, int64_t k, int64_t n, bool acc) {
  int64_t j = 0;
  for (; j + 8 <= n; j += 8) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      __m256 c0 = acc ? _mm256_loadu_ps(c + (i + 0) * ldc + j) : _mm256_setzero_ps();
      __m256 c1 = acc ? _mm256_loadu_ps(c + (i + 1) * ldc + j) : _mm256_setzero_ps();
      __m256 c2 = acc ? _mm256_loadu_ps(c + (i + 2) * ldc + j) : _mm256_setzero_ps();
      __m256 c3 = acc ? _mm256_loadu_ps(c + (i + 3) * ldc + j) : _mm256_setzero_ps();
      for (int64_t p = 0; p < k; ++p) {
        __m256 bv = _mm256_loadu_ps(b + p * ldb + j);
        c0 = _mm256_add_ps(c0, _mm256_mul_ps(_mm256_set1_ps(a[(i + 0) * lda + p]), bv));
        c1 = _mm256_add_ps(c1, _mm256_mul_ps(_mm256_set1_ps(a[(i + 1) * lda + p]), bv));
        c2 = _mm256_add_ps(c2, _mm256_mul_ps(_mm256_set1_ps(a[(i + 2) * lda + p]), bv));
        c3 = _mm256_add_ps(c3, _mm256_mul_ps(_mm256_set1_ps(a[(i + 3) * lda + p]), bv));
      }
      _mm256_storeu_ps(c + (i + 0) * ldc + j, c0);
      _mm256_storeu_ps(c + (i + 1) * ldc + j, c1);
      _mm256_storeu_ps(c + (i + 2) * ldc + j, c2);
      _mm256_storeu_ps(c + (i + 3) * ldc + j, c3);
    }
    for (; i < m; ++i) {
      __m256 cv = acc ? _mm256_loadu_ps(c + i * ldc + j) : _mm256_setzero_ps();
      for (int64_t p = 0; p < k; ++p) {
        __m256 bv = _mm256_loadu_ps(b + p * ldb + j);
        cv = _mm256_add_ps(cv, _mm256_mul_ps(_mm256_set1_ps(a[i * lda + p]), bv));
      }
      _mm256_storeu_ps(c + i * ldc + j, cv);
    }
  }
  for (; j < n; ++j) {
    for (int64_t i = 0; i < m; ++i) {
      float s = acc ? c[i * ldc + j] : 0.0f;
      for (int64_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
  }
}

void gemm_tn_avx2(const float* a, int64_t lda, const float* b, int64_t ldb, float* c,
                  int64_t ldc, int64_t m, int64_t k, int64_t n, bool acc) {
  int64_t j = 0;
  for (; j + 8 <= n; j += 8) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      __m256 c0 = acc ? _mm256_loadu_ps(c + (i + 0) * ldc + j) : _mm256_setzero_ps();
      __m256 c1 = acc ? _mm256_loadu_ps(c + (i + 1) * ldc + j) : _mm256_setzero_ps();
      __m256 c2 = acc ? _mm256_loadu_ps(c + (i + 2) * ldc + j) : _mm256_setzero_ps();
      __m256 c3 = acc ? _mm256_loadu_ps(c + (i + 3) * ldc + j) : _mm256_setzero_ps();
      for (int64_t p = 0; p < k; ++p) {
        __m256 bv = _mm256_loadu_ps(b + p * ldb + j);
        const float* ap = a + p * lda + i;
        c0 = _mm256_add_ps(c0, _mm256_mul_ps(_mm256_set1_ps(ap[0]), bv));
        c1 = _mm256_add_ps(c1, _mm256_mul_ps(_mm256_set1_ps(ap[1]), bv));
        c2 = _mm256_add_ps(c2, _mm256_mul_ps(_mm256_set1_ps(ap[2]), bv));
        c3 = _mm256_add_ps(c3, _mm256_mul_ps(_mm256_set1_ps(ap[3]), bv));
      }
      _mm256_storeu_ps(c + (i + 0) * ldc + j, c0);
      _mm256_storeu_ps(c + (i + 1) * ldc + j, c1);
      _mm256_storeu_ps(c + (i + 2) * ldc + j, c2);
      _mm256_storeu_ps(c + (i + 3) * ldc + j, c3);
    }
    for (; i < m; ++i) {
      __m256 cv = acc ? _mm256_loadu_ps(c + i * ldc + j) : _mm256_setzero_ps();
      for (int64_t p = 0; p < k; ++p) {
        __m256 bv = _mm256_loadu_ps(b + p * ldb + j);
        cv = _mm256_add_ps(cv, _mm256_mul_ps(_mm256_set1_ps(a[p * lda + i]), bv));
      }
      _mm256_storeu_ps(c + i * ldc + j, cv);
    }
  }
  for (; j < n; ++j) {
    for (int64_t i = 0; i < m; ++i) {
      float s = acc ? c[i * ldc + j] : 0.0f;
      for (int64_t p = 0; p < k; ++p) s += a[p * lda + i] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
  }
}

inline float striped_dot(const float* ra, const float* rb, int64_t k) {
  if (k < 8) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int64_t p = 0; p < k; ++p) acc[p & 7] += ra[p] * rb[p];
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  __m256 v = _mm256_setzero_ps();
  int64_t p = 0;
  for (; p + 8 <= k; p += 8)
    v = _mm256_add_ps(v, _mm256_mul_ps(_mm256_loadu_ps(ra + p), _mm256_loadu_ps(rb + p)));
  if (p < k) {
    alignas(32) float acc[8];
    _mm256_store_ps(acc, v);
    for (; p < k; ++p) acc[p & 7] += ra[p] * rb[p];
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  return tree_hsum(v);
}

void gemm_nt_avx2(const float* a, int64_t lda, const float* b, int64_t ldb, float* c,
                  int64_t ldc, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      float s = striped_dot(a + i * lda, b + j * ldb, k);
      c[i * ldc + j] = acc ? c[i * ldc + j] + s : s;
    }
  }
}

void add_avx2(const float* a, const float* b, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}
void sub_avx2(const float* a, const float* b, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}
void mul_avx2(const float* a, const float* b, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}
void axpy_avx2(float alpha, const float* x, float* y, int64_t n) {
  __m256 av = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_mul_ps(av, _mm256_loadu_ps(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}
void scale_shift_avx2(const float* x, float a, float b, float* y, int64_t n) {
  __m256 av = _mm256_set1_ps(a), bv = _mm256_set1_ps(b);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_mul_ps(av, _mm256_loadu_ps(x + i)), bv));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}
void relu_avx2(const float* x, float* y, int64_t n) {
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  // maxps(x, 0) returns the second operand on equality/NaN, matching x>0?x:0.
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void lrelu_avx2(const float* x, float slope, float* y, int64_t n) {
  __m256 z = _mm256_setzero_ps(), sv = _mm256_set1_ps(slope);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 xv = _mm256_loadu_ps(x + i);
    __m256 mask = _mm256_cmp_ps(xv, z, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(sv, xv), xv, mask));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}
void lrelu_bwd_avx2(const float* x, const float* g, float slope, float* gx, int64_t n) {
  __m256 z = _mm256_setzero_ps(), sv = _mm256_set1_ps(slope);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 xv = _mm256_loadu_ps(x + i);
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mask = _mm256_cmp_ps(xv, z, _CMP_GT_OQ);
    __m256 d = _mm256_blendv_ps(_mm256_mul_ps(sv, gv), gv, mask);
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), d));
  }
  for (; i < n; ++i) gx[i] += x[i] > 0.0f ? g[i] : slope * g[i];
}

float load_plain(const float* x, int64_t i) { return x[i]; }

float sum_avx2(const float* x, int64_t n) {
  if (n < 8) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int64_t i = 0; i < n; ++i) acc[i & 7] += x[i];
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  __m256 v = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) v = _mm256_add_ps(v, _mm256_loadu_ps(x + i));
  if (i < n) return tree_hsum_with_tail(v, i, n, x, load_plain);
  return tree_hsum(v);
}

float dot_avx2(const float* a, const float* b, int64_t n) { return striped_dot(a, b, n); }

float sum_abs_avx2(const float* x, int64_t n) {
  const __m256 signmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  if (n < 8) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int64_t i = 0; i < n; ++i) acc[i & 7] += x[i] < 0.0f ? -x[i] : x[i];
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  __m256 v = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    v = _mm256_add_ps(v, _mm256_and_ps(_mm256_loadu_ps(x + i), signmask));
  if (i < n) {
    alignas(32) float acc[8];
    _mm256_store_ps(acc, v);
    for (; i < n; ++i) acc[i & 7] += x[i] < 0.0f ? -x[i] : x[i];
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  return tree_hsum(v);
}

float sum_sq_diff_avx2(const float* x, float mu, int64_t n) {
  __m256 mv = _mm256_set1_ps(mu);
  if (n < 8) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int64_t i = 0; i < n; ++i) {
      float d = x[i] - mu;
      acc[i & 7] += d * d;
    }
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  __m256 v = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), mv);
    v = _mm256_add_ps(v, _mm256_mul_ps(d, d));
  }
  if (i < n) {
    alignas(32) float acc[8];
    _mm256_store_ps(acc, v);
    for (; i < n; ++i) {
      float d = x[i] - mu;
      acc[i & 7] += d * d;
    }
    float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
  }
  return tree_hsum(v);
}

void col_sum_avx2(const float* x, int64_t rows, int64_t cols, float* y) {
  int64_t c = 0;
  for (; c + 8 <= cols; c += 8) {
    __m256 acc = _mm256_setzero_ps();
    for (int64_t i = 0; i < rows; ++i)
      acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i * cols + c));
    _mm256_storeu_ps(y + c, acc);
  }
  for (; c < cols; ++c) {
    float s = 0.0f;
    for (int64_t i = 0; i < rows; ++i) s += x[i * cols + c];
    y[c] = s;
  }
}

void col_sum_sq_diff_avx2(const float* x, const float* mu, int64_t rows, int64_t cols, float* y) {
  int64_t c = 0;
  for (; c + 8 <= cols; c += 8) {
    __m256 acc = _mm256_setzero_ps();
    __m256 mv = _mm256_loadu_ps(mu + c);
    for (int64_t i = 0; i < rows; ++i) {
      __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i * cols + c), mv);
      acc = _mm256_add_ps(acc, _mm256_mul_ps(d, d));
    }
    _mm256_storeu_ps(y + c, acc);
  }
  for (; c < cols; ++c) {
    float s = 0.0f;
    for (int64_t i = 0; i < rows; ++i) {
      float d = x[i * cols + c] - mu[c];
      s += d * d;
    }
    y[c] = s;
  }
}

void spmm_avx2(const int32_t* rowptr, const int32_t* cols, const float* vals, const float* x,
               float* y, int64_t n_rows, int64_t channels) {
  for (int64_t i = 0; i < n_rows; ++i) {
    float* out = y + i * channels;
    int64_t c = 0;
    for (; c + 8 <= channels; c += 8) {
      __m256 acc = _mm256_setzero_ps();
      for (int32_t e = rowptr[i]; e < rowptr[i + 1]; ++e) {
        __m256 vv = _mm256_set1_ps(vals[e]);
        const float* row = x + int64_t(cols[e]) * channels;
        acc = _mm256_add_ps(acc, _mm256_mul_ps(vv, _mm256_loadu_ps(row + c)));
      }
      _mm256_storeu_ps(out + c, acc);
    }
    for (; c < channels; ++c) {
      float s = 0.0f;
      for (int32_t e = rowptr[i]; e < rowptr[i + 1]; ++e)
        s += vals[e] * x[int64_t(cols[e]) * channels + c];
      out[c] = s;
    }
  }
}

}  // namespace

const Kernels<float>& avx2_f32() {
  static const Kernels<float> t = [] {
    Kernels<float> k;
    k.gemm_nn = gemm_nn_avx2;
    k.gemm_tn = gemm_tn_avx2;
    k.gemm_nt = gemm_nt_avx2;
    k.add = add_avx2;
    k.sub = sub_avx2;
    k.mul = mul_avx2;
    k.axpy = axpy_avx2;
    k.scale_shift = scale_shift_avx2;
    k.relu = relu_avx2;
    k.lrelu = lrelu_avx2;
    k.lrelu_bwd = lrelu_bwd_avx2;
    k.sum = sum_avx2;
    k.dot = dot_avx2;
    k.sum_abs = sum_abs_avx2;
    k.sum_sq_diff = sum_sq_diff_avx2;
    k.col_sum = col_sum_avx2;
    k.col_sum_sq_diff = col_sum_sq_diff_avx2;
    k.spmm = spmm_avx2;
    return k;
  }();
  return t;
}

}  // namespace meshpose::kern

#else  // !__AVX2__

#include <stdexcept>

namespace meshpose::kern {
const Kernels<float>& avx2_f32() {
  throw std::runtime_error("meshpose was built without AVX2 support");
}
}  // namespace meshpose::kern

#endif
