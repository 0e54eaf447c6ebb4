// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar-vs-AVX2 equivalence: the SIMD variants must be bit-identical to the
// reference kernels, since backend selection must never change results.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "meshpose/kernels.hpp"
#include "meshpose/rng.hpp"

using namespace meshpose;

namespace {

std::vector<float> random_vec(RngStream& rng, int64_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("backend selection") {
  kern::set_backend(kern::Backend::kScalar);
  CHECK(kern::active_backend() == kern::Backend::kScalar);
  if (kern::avx2_supported()) {
    kern::set_backend(kern::Backend::kAvx2);
    CHECK(kern::active_backend() == kern::Backend::kAvx2);
  }
  kern::set_backend(kern::Backend::kAuto);
}

TEST_CASE("gemm variants bit-identical across backends") {
  if (!kern::avx2_supported()) {
    MESSAGE("AVX2 unavailable; skipping equivalence checks");
    return;
  }
  const auto& S = kern::scalar_f32();
  const auto& V = kern::avx2_f32();
  RngStream rng(7, "gemm");
  // deliberately awkward sizes to hit every tail path
  const int64_t sizes[][3] = {{1, 1, 1},   {4, 8, 8},    {5, 3, 9},   {16, 17, 24},
                              {33, 40, 7}, {12, 100, 64}, {64, 9, 130}};
  for (auto [m, k, n] : sizes) {
    for (bool acc : {false, true}) {
      auto a = random_vec(rng, m * k);
      auto b = random_vec(rng, k * n);
      auto c0 = random_vec(rng, m * n);
      auto c1 = c0;
      S.gemm_nn(a.data(), k, b.data(), n, c0.data(), n, m, k, n, acc);
      V.gemm_nn(a.data(), k, b.data(), n, c1.data(), n, m, k, n, acc);
      CHECK(bits_equal(c0, c1));

      auto at = random_vec(rng, k * m);
      c1 = c0;
      auto c2 = c0;
      S.gemm_tn(at.data(), m, b.data(), n, c1.data(), n, m, k, n, acc);
      V.gemm_tn(at.data(), m, b.data(), n, c2.data(), n, m, k, n, acc);
      CHECK(bits_equal(c1, c2));

      auto bt = random_vec(rng, n * k);
      c1 = c0;
      c2 = c0;
      S.gemm_nt(a.data(), k, bt.data(), k, c1.data(), n, m, k, n, acc);
      V.gemm_nt(a.data(), k, bt.data(), k, c2.data(), n, m, k, n, acc);
      CHECK(bits_equal(c1, c2));
    }
  }
}

TEST_CASE("elementwise and reduction kernels bit-identical") {
  if (!kern::avx2_supported()) return;
  const auto& S = kern::scalar_f32();
  const auto& V = kern::avx2_f32();
  RngStream rng(11, "elementwise");
  for (int64_t n : {1, 7, 8, 9, 64, 1000, 4097}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    std::vector<float> y0(n), y1(n);

    S.add(a.data(), b.data(), y0.data(), n);
    V.add(a.data(), b.data(), y1.data(), n);
    CHECK(bits_equal(y0, y1));
    S.sub(a.data(), b.data(), y0.data(), n);
    V.sub(a.data(), b.data(), y1.data(), n);
    CHECK(bits_equal(y0, y1));
    S.mul(a.data(), b.data(), y0.data(), n);
    V.mul(a.data(), b.data(), y1.data(), n);
    CHECK(bits_equal(y0, y1));

    y0 = b;
    y1 = b;
    S.axpy(0.37f, a.data(), y0.data(), n);
    V.axpy(0.37f, a.data(), y1.data(), n);
    CHECK(bits_equal(y0, y1));

    S.scale_shift(a.data(), 1.7f, -0.3f, y0.data(), n);
    V.scale_shift(a.data(), 1.7f, -0.3f, y1.data(), n);
    CHECK(bits_equal(y0, y1));

    S.relu(a.data(), y0.data(), n);
    V.relu(a.data(), y1.data(), n);
    CHECK(bits_equal(y0, y1));
    S.lrelu(a.data(), 0.2f, y0.data(), n);
    V.lrelu(a.data(), 0.2f, y1.data(), n);
    CHECK(bits_equal(y0, y1));

    y0 = b;
    y1 = b;
    S.lrelu_bwd(a.data(), b.data(), 0.2f, y0.data(), n);
    V.lrelu_bwd(a.data(), b.data(), 0.2f, y1.data(), n);
    CHECK(bits_equal(y0, y1));

    CHECK(S.sum(a.data(), n) == V.sum(a.data(), n));
    CHECK(S.dot(a.data(), b.data(), n) == V.dot(a.data(), b.data(), n));
    CHECK(S.sum_abs(a.data(), n) == V.sum_abs(a.data(), n));
    CHECK(S.sum_sq_diff(a.data(), 0.25f, n) == V.sum_sq_diff(a.data(), 0.25f, n));
  }
}

TEST_CASE("column and sparse kernels bit-identical") {
  if (!kern::avx2_supported()) return;
  const auto& S = kern::scalar_f32();
  const auto& V = kern::avx2_f32();
  RngStream rng(13, "cols");
  for (auto [rows, cols] : std::initializer_list<std::pair<int64_t, int64_t>>{
           {3, 5}, {17, 8}, {64, 19}, {100, 32}}) {
    auto x = random_vec(rng, rows * cols);
    std::vector<float> mu0(cols), mu1(cols), v0(cols), v1(cols);
    S.col_sum(x.data(), rows, cols, mu0.data());
    V.col_sum(x.data(), rows, cols, mu1.data());
    CHECK(bits_equal(mu0, mu1));
    S.col_sum_sq_diff(x.data(), mu0.data(), rows, cols, v0.data());
    V.col_sum_sq_diff(x.data(), mu0.data(), rows, cols, v1.data());
    CHECK(bits_equal(v0, v1));
  }

  // small random CSR graph
  const int n_rows = 37, channels = 21;
  std::vector<int32_t> rowptr(n_rows + 1, 0);
  std::vector<int32_t> cols;
  std::vector<float> vals;
  for (int i = 0; i < n_rows; ++i) {
    int deg = 1 + static_cast<int>(rng.uniform_index(5));
    for (int d = 0; d < deg; ++d) {
      cols.push_back(static_cast<int32_t>(rng.uniform_index(n_rows)));
      vals.push_back(static_cast<float>(rng.uniform(0.0, 1.0)));
    }
    rowptr[i + 1] = static_cast<int32_t>(cols.size());
  }
  auto x = random_vec(rng, n_rows * channels);
  std::vector<float> y0(n_rows * channels), y1(n_rows * channels);
  S.spmm(rowptr.data(), cols.data(), vals.data(), x.data(), y0.data(), n_rows, channels);
  V.spmm(rowptr.data(), cols.data(), vals.data(), x.data(), y1.data(), n_rows, channels);
  CHECK(bits_equal(y0, y1));
}

TEST_CASE("parallel_for partition covers range once") {
  std::vector<int> hits(1000, 0);
  kern::parallel_for(1000, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) hits[i] += 1;
  });
  for (int h : hits) CHECK(h == 1);
}
