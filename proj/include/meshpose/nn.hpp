// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "meshpose/ops.hpp"
#include "meshpose/rng.hpp"

// Image-domain network kernels: strided conv / transposed conv (im2col +
// gemm), instance normalization, AdaIN, bilinear sampling and dense layers.
// Layout is [B,C,H,W] row-major throughout.

namespace meshpose {
namespace nn {

// out = floor((in + 2p - k)/s) + 1
inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}
// out = (in-1)*s - 2p + k + output_padding
inline int64_t tconv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad, int64_t opad) {
  return (in - 1) * stride - 2 * pad + k + opad;
}

namespace detail {

// col[(c*k+ky)*k+kx, gy*gw+gx] = img[c, gy*s-p+ky, gx*s-p+kx], 0 outside.
// (gh, gw) is the sliding-window grid; for conv it is the output size, for
// the transposed-conv backward it is the input size.
template <typename T>
void im2col(const T* img, int64_t c, int64_t h, int64_t w, int64_t k, int64_t s, int64_t p,
            int64_t gh, int64_t gw, T* col) {
  const int64_t khw = k * k;
  kern::parallel_for(c * khw, [&](int64_t q0, int64_t q1) {
    for (int64_t q = q0; q < q1; ++q) {
      const int64_t ci = q / khw;
      const int64_t ky = (q / k) % k;
      const int64_t kx = q % k;
      T* dst = col + q * gh * gw;
      const T* src = img + ci * h * w;
      for (int64_t gy = 0; gy < gh; ++gy) {
        const int64_t iy = gy * s - p + ky;
        T* drow = dst + gy * gw;
        if (iy < 0 || iy >= h) {
          for (int64_t gx = 0; gx < gw; ++gx) drow[gx] = T(0);
          continue;
        }
        const T* srow = src + iy * w;
        for (int64_t gx = 0; gx < gw; ++gx) {
          const int64_t ix = gx * s - p + kx;
          drow[gx] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
        }
      }
    }
  });
}

// Adjoint of im2col: img[c, gy*s-p+ky, gx*s-p+kx] += col[...]. Each output
// channel is scattered by one worker in a fixed (ky,kx,gy,gx) order.
template <typename T>
void col2im(const T* col, int64_t c, int64_t h, int64_t w, int64_t k, int64_t s, int64_t p,
            int64_t gh, int64_t gw, T* img, bool accumulate) {
  const int64_t khw = k * k;
  kern::parallel_for(c, [&](int64_t c0, int64_t c1) {
    for (int64_t ci = c0; ci < c1; ++ci) {
      T* dst = img + ci * h * w;
      if (!accumulate)
        for (int64_t i = 0; i < h * w; ++i) dst[i] = T(0);
      for (int64_t kk = 0; kk < khw; ++kk) {
        const int64_t ky = kk / k, kx = kk % k;
        const T* src = col + (ci * khw + kk) * gh * gw;
        for (int64_t gy = 0; gy < gh; ++gy) {
          const int64_t iy = gy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          T* drow = dst + iy * w;
          const T* srow = src + gy * gw;
          for (int64_t gx = 0; gx < gw; ++gx) {
            const int64_t ix = gx * s - p + kx;
            if (ix >= 0 && ix < w) drow[ix] += srow[gx];
          }
        }
      }
    }
  });
}

// Blocks a gemm over columns of c (and b), which is the long axis in convs.
template <typename T>
void pgemm_nn_cols(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                   int64_t m, int64_t k, int64_t n, bool acc) {
  const auto& K = kern::get<T>();
  if (m * n * k < (1 << 15)) {
    K.gemm_nn(a, lda, b, ldb, c, ldc, m, k, n, acc);
    return;
  }
  kern::parallel_for(n, [&](int64_t j0, int64_t j1) {
    K.gemm_nn(a, lda, b + j0, ldb, c + j0, ldc, m, k, j1 - j0, acc);
  });
}

template <typename T>
void pgemm_tn_cols(const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
                   int64_t m, int64_t k, int64_t n, bool acc) {
  const auto& K = kern::get<T>();
  if (m * n * k < (1 << 15)) {
    K.gemm_tn(a, lda, b, ldb, c, ldc, m, k, n, acc);
    return;
  }
  kern::parallel_for(n, [&](int64_t j0, int64_t j1) {
    K.gemm_tn(a, lda, b + j0, ldb, c + j0, ldc, m, k, j1 - j0, acc);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x [B,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout]

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t stride, int64_t pad) {
  check(x.rank() == 4 && weight.rank() == 4, "conv2d: want x [B,C,H,W], weight [Co,Ci,k,k]");
  const int64_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = weight.dim(0), k = weight.dim(2);
  check(weight.dim(1) == cin, "conv2d: channel mismatch, x " + shape_str(x.shape()) +
                                  " weight " + shape_str(weight.shape()));
  check(weight.dim(3) == k, "conv2d: non-square kernel");
  check(bias.numel() == cout, "conv2d: bias size");
  const int64_t oh = conv_out_size(h, k, stride, pad);
  const int64_t ow = conv_out_size(w, k, stride, pad);
  check(oh > 0 && ow > 0, "conv2d: empty output for input " + shape_str(x.shape()));

  const int64_t kdim = cin * k * k, ohw = oh * ow;
  Tensor<T> y = Tensor<T>::zeros({b, cout, oh, ow});
  std::vector<T> col(kdim * ohw);
  for (int64_t bi = 0; bi < b; ++bi) {
    detail::im2col(x.data() + bi * cin * h * w, cin, h, w, k, stride, pad, oh, ow, col.data());
    detail::pgemm_nn_cols(weight.data(), kdim, col.data(), ohw, y.data() + bi * cout * ohw, ohw,
                          cout, kdim, ohw, false);
  }
  if (active_tape<T>() != nullptr && (x.requires_grad() || weight.requires_grad())) {
    Tape<T>& tp = *active_tape<T>();
    int nx = meshpose::detail::grad_node(tp, x), nw = meshpose::detail::grad_node(tp, weight);
    y.set_requires_grad(true);
    Tensor<T> xv = x, wv = weight;
    tp.record(y, [nx, nw, xv, wv, b, cin, h, w, cout, k, stride, pad, oh, ow, kdim,
                  ohw](Tape<T>& t, const T* g) {
      std::vector<T> colb(kdim * ohw);
      std::vector<T> gcol(kdim * ohw);
      T* gx = nx >= 0 ? t.grad_buf(nx).data() : nullptr;
      T* gw = nw >= 0 ? t.grad_buf(nw).data() : nullptr;
      for (int64_t bi = 0; bi < b; ++bi) {
        const T* gb = g + bi * cout * ohw;
        if (gx != nullptr) {
          detail::pgemm_tn_cols(wv.data(), kdim, gb, ohw, gcol.data(), ohw, kdim, cout, ohw,
                                false);
          detail::col2im(gcol.data(), cin, h, w, k, stride, pad, oh, ow,
                         gx + bi * cin * h * w, true);
        }
        if (gw != nullptr) {
          detail::im2col(xv.data() + bi * cin * h * w, cin, h, w, k, stride, pad, oh, ow,
                         colb.data());
          pgemm_nt(gb, ohw, colb.data(), ohw, gw, kdim, cout, ohw, kdim, true);
        }
      }
    });
  }
  return add_channel_bias(y, bias);
}

// conv_transpose2d: x [B,Cin,H,W], weight [Cin,Cout,k,k]. output_padding
// keeps stride-2 down/up round trips exact.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           int64_t stride, int64_t pad, int64_t opad = 0) {
  check(x.rank() == 4 && weight.rank() == 4,
        "conv_transpose2d: want x [B,C,H,W], weight [Ci,Co,k,k]");
  const int64_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = weight.dim(1), k = weight.dim(2);
  check(weight.dim(0) == cin, "conv_transpose2d: channel mismatch, x " + shape_str(x.shape()) +
                                  " weight " + shape_str(weight.shape()));
  check(bias.numel() == cout, "conv_transpose2d: bias size");
  const int64_t oh = tconv_out_size(h, k, stride, pad, opad);
  const int64_t ow = tconv_out_size(w, k, stride, pad, opad);
  check(oh > 0 && ow > 0, "conv_transpose2d: empty output");

  const int64_t qdim = cout * k * k, ihw = h * w;
  Tensor<T> y = Tensor<T>::zeros({b, cout, oh, ow});
  std::vector<T> col(qdim * ihw);
  for (int64_t bi = 0; bi < b; ++bi) {
    // col[q, j] = sum_ci W[ci, q] * x[ci, j]
    detail::pgemm_tn_cols(weight.data(), qdim, x.data() + bi * cin * ihw, ihw, col.data(), ihw,
                          qdim, cin, ihw, false);
    detail::col2im(col.data(), cout, oh, ow, k, stride, pad, h, w, y.data() + bi * cout * oh * ow,
                   false);
  }
  if (active_tape<T>() != nullptr && (x.requires_grad() || weight.requires_grad())) {
    Tape<T>& tp = *active_tape<T>();
    int nx = meshpose::detail::grad_node(tp, x), nw = meshpose::detail::grad_node(tp, weight);
    y.set_requires_grad(true);
    Tensor<T> xv = x, wv = weight;
    tp.record(y, [nx, nw, xv, wv, b, cin, h, w, cout, k, stride, pad, oh, ow, qdim,
                  ihw](Tape<T>& t, const T* g) {
      std::vector<T> gcol(qdim * ihw);
      T* gx = nx >= 0 ? t.grad_buf(nx).data() : nullptr;
      T* gw = nw >= 0 ? t.grad_buf(nw).data() : nullptr;
      for (int64_t bi = 0; bi < b; ++bi) {
        const T* gb = g + bi * cout * oh * ow;
        // gcol[q, j] = gout[co, j*s-p+k...] gathered on the input grid
        detail::im2col(gb, cout, oh, ow, k, stride, pad, h, w, gcol.data());
        if (gx != nullptr)
          detail::pgemm_nn_cols(wv.data(), qdim, gcol.data(), ihw, gx + bi * cin * ihw, ihw, cin,
                                qdim, ihw, true);
        if (gw != nullptr)
          pgemm_nt(xv.data() + bi * cin * ihw, ihw, gcol.data(), ihw, gw, qdim, cin, ihw, qdim,
                   true);
      }
    });
  }
  return add_channel_bias(y, bias);
}

// ---------------------------------------------------------------------------
// instance_norm_2d: per (b,c) spatial standardization, no affine term.

template <typename T>
Tensor<T> instance_norm_2d(const Tensor<T>& x, T eps = T(1e-5)) {
  check(x.rank() == 4, "instance_norm_2d: want [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  check(hw >= 1, "instance_norm_2d: empty spatial extent");
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  std::vector<T> inv_std(bc);
  const auto& K = kern::get<T>();
  kern::parallel_for(bc, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const T* xp = x.data() + i * hw;
      const T mu = K.sum(xp, hw) / static_cast<T>(hw);
      const T var = K.sum_sq_diff(xp, mu, hw) / static_cast<T>(hw);
      const T inv = T(1) / std::sqrt(var + eps);
      inv_std[i] = inv;
      K.scale_shift(xp, inv, -mu * inv, y.data() + i * hw, hw);
    }
  });
  if (active_tape<T>() != nullptr && x.requires_grad()) {
    Tape<T>& tp = *active_tape<T>();
    int nx = meshpose::detail::grad_node(tp, x);
    y.set_requires_grad(true);
    Tensor<T> yv = y;  // normalized values double as x-hat
    tp.record(y, [nx, yv, inv_std, bc, hw](Tape<T>& t, const T* g) {
      T* gx = t.grad_buf(nx).data();
      const auto& K2 = kern::get<T>();
      const T invn = T(1) / static_cast<T>(hw);
      for (int64_t i = 0; i < bc; ++i) {
        const T* gp = g + i * hw;
        const T* xh = yv.data() + i * hw;
        const T s1 = K2.sum(gp, hw) * invn;
        const T s2 = K2.dot(gp, xh, hw) * invn;
        T* gxi = gx + i * hw;
        const T inv = inv_std[i];
        for (int64_t j = 0; j < hw; ++j) gxi[j] += inv * (gp[j] - s1 - xh[j] * s2);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// adain: y = gamma_(b,c) * (x - mu)/sqrt(var+eps) + alpha_(b,c)

template <typename T>
Tensor<T> adain(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& alpha,
                T eps = T(1e-5)) {
  check(x.rank() == 4, "adain: want [B,C,H,W]");
  const int64_t bdim = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check(gamma.shape() == Shape{bdim, c} && alpha.shape() == Shape{bdim, c},
        "adain: params must be [B,C]=" + shape_str({bdim, c}) + ", got gamma " +
            shape_str(gamma.shape()) + " alpha " + shape_str(alpha.shape()));
  const int64_t bc = bdim * c;
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  Tensor<T> xhat = Tensor<T>::zeros(x.shape());
  std::vector<T> inv_std(bc);
  const auto& K = kern::get<T>();
  kern::parallel_for(bc, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const T* xp = x.data() + i * hw;
      const T mu = K.sum(xp, hw) / static_cast<T>(hw);
      const T var = K.sum_sq_diff(xp, mu, hw) / static_cast<T>(hw);
      const T inv = T(1) / std::sqrt(var + eps);
      inv_std[i] = inv;
      T* xh = xhat.data() + i * hw;
      K.scale_shift(xp, inv, -mu * inv, xh, hw);
      K.scale_shift(xh, gamma.data()[i], alpha.data()[i], y.data() + i * hw, hw);
    }
  });
  if (meshpose::detail::should_record<T>({&x, &gamma, &alpha})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = meshpose::detail::grad_node(tp, x);
    int ng = meshpose::detail::grad_node(tp, gamma);
    int na = meshpose::detail::grad_node(tp, alpha);
    y.set_requires_grad(true);
    Tensor<T> gv = gamma;
    tp.record(y, [nx, ng, na, xhat, gv, inv_std, bc, hw](Tape<T>& t, const T* g) {
      const auto& K2 = kern::get<T>();
      const T invn = T(1) / static_cast<T>(hw);
      for (int64_t i = 0; i < bc; ++i) {
        const T* gp = g + i * hw;
        const T* xh = xhat.data() + i * hw;
        const T s1 = K2.sum(gp, hw);
        const T s2 = K2.dot(gp, xh, hw);
        if (na >= 0) t.grad_buf(na)[i] += s1;
        if (ng >= 0) t.grad_buf(ng)[i] += s2;
        if (nx >= 0) {
          T* gxi = t.grad_buf(nx).data() + i * hw;
          const T gam = gv.data()[i];
          const T inv = inv_std[i];
          for (int64_t j = 0; j < hw; ++j)
            gxi[j] += gam * inv * (gp[j] - (s1 + xh[j] * s2) * invn);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// mesh feature instance norm: X [N,C], per-channel over vertices, learned
// per-channel scale/shift.

template <typename T>
Tensor<T> mesh_instance_norm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                             T eps = T(1e-5)) {
  check(x.rank() == 2, "mesh_instance_norm: want [N,C]");
  const int64_t n = x.dim(0), c = x.dim(1);
  check(scale.shape() == Shape{c} && shift.shape() == Shape{c},
        "mesh_instance_norm: affine params must be [C]");
  const auto& K = kern::get<T>();
  std::vector<T> mu(c), var(c), inv(c);
  K.col_sum(x.data(), n, c, mu.data());
  for (int64_t j = 0; j < c; ++j) mu[j] /= static_cast<T>(n);
  K.col_sum_sq_diff(x.data(), mu.data(), n, c, var.data());
  for (int64_t j = 0; j < c; ++j) inv[j] = T(1) / std::sqrt(var[j] / static_cast<T>(n) + eps);

  Tensor<T> xhat = Tensor<T>::zeros(x.shape());
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  {
    const T* xd = x.data();
    T* xh = xhat.data();
    T* yd = y.data();
    const T* sc = scale.data();
    const T* sh = shift.data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < c; ++j) {
        const T v = (xd[i * c + j] - mu[j]) * inv[j];
        xh[i * c + j] = v;
        yd[i * c + j] = sc[j] * v + sh[j];
      }
  }
  if (meshpose::detail::should_record<T>({&x, &scale, &shift})) {
    Tape<T>& tp = *active_tape<T>();
    int nx = meshpose::detail::grad_node(tp, x);
    int ns = meshpose::detail::grad_node(tp, scale);
    int nh = meshpose::detail::grad_node(tp, shift);
    y.set_requires_grad(true);
    Tensor<T> sv = scale;
    tp.record(y, [nx, ns, nh, xhat, sv, inv, n, c](Tape<T>& t, const T* g) {
      const auto& K2 = kern::get<T>();
      std::vector<T> s1(c), s2(c);
      K2.col_sum(g, n, c, s1.data());
      std::vector<T> gx_hat(n * c);
      K2.mul(g, xhat.data(), gx_hat.data(), n * c);
      K2.col_sum(gx_hat.data(), n, c, s2.data());
      if (nh >= 0) K2.axpy(T(1), s1.data(), t.grad_buf(nh).data(), c);
      if (ns >= 0) K2.axpy(T(1), s2.data(), t.grad_buf(ns).data(), c);
      if (nx >= 0) {
        T* gx = t.grad_buf(nx).data();
        const T invn = T(1) / static_cast<T>(n);
        const T* xh = xhat.data();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < c; ++j)
            gx[i * c + j] += sv.data()[j] * inv[j] *
                             (g[i * c + j] - (s1[j] + xh[i * c + j] * s2[j]) * invn);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// bilinear_sample: feat [C,H,W], points [M,2] as continuous (x,y) pixel
// coordinates where integer coordinates are pixel centers. Out-of-bounds taps
// read zero. Gradients flow to the feature map only; point coordinates are
// dataset geometry, never learned.

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feat, const Tensor<T>& points) {
  check(feat.rank() == 3, "bilinear_sample: want feat [C,H,W]");
  check(points.rank() == 2 && points.dim(1) == 2, "bilinear_sample: want points [M,2]");
  const int64_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
  const int64_t m = points.dim(0), hw = h * w;

  struct Tap {
    int32_t idx[4];  // offsets into a [H,W] plane, -1 = outside
    T wgt[4];
  };
  std::vector<Tap> taps(m);
  for (int64_t i = 0; i < m; ++i) {
    const T px = points.data()[i * 2 + 0];
    const T py = points.data()[i * 2 + 1];
    check(std::isfinite(static_cast<double>(px)) && std::isfinite(static_cast<double>(py)),
          "bilinear_sample: non-finite point " + std::to_string(i));
    const T fx = std::floor(px), fy = std::floor(py);
    const int64_t x0 = static_cast<int64_t>(fx), y0 = static_cast<int64_t>(fy);
    const T ax = px - fx, ay = py - fy;
    const T w00 = (T(1) - ax) * (T(1) - ay), w01 = ax * (T(1) - ay);
    const T w10 = (T(1) - ax) * ay, w11 = ax * ay;
    auto at = [&](int64_t y, int64_t x) -> int32_t {
      return (x >= 0 && x < w && y >= 0 && y < h) ? static_cast<int32_t>(y * w + x) : -1;
    };
    taps[i] = {{at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)},
               {w00, w01, w10, w11}};
  }

  Tensor<T> y = Tensor<T>::zeros({m, c});
  {
    const T* fd = feat.data();
    T* yd = y.data();
    for (int64_t i = 0; i < m; ++i) {
      const Tap& tp = taps[i];
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* plane = fd + ch * hw;
        T v = T(0);
        for (int t = 0; t < 4; ++t)
          if (tp.idx[t] >= 0) v += tp.wgt[t] * plane[tp.idx[t]];
        yd[i * c + ch] = v;
      }
    }
  }
  if (meshpose::detail::should_record<T>({&feat})) {
    Tape<T>& tp = *active_tape<T>();
    int nf = meshpose::detail::grad_node(tp, feat);
    y.set_requires_grad(true);
    tp.record(y, [nf, taps, m, c, hw](Tape<T>& t, const T* g) {
      T* gf = t.grad_buf(nf).data();
      for (int64_t i = 0; i < m; ++i) {  // fixed point order
        const Tap& tap = taps[i];
        for (int64_t ch = 0; ch < c; ++ch) {
          const T gv = g[i * c + ch];
          T* plane = gf + ch * hw;
          for (int tt = 0; tt < 4; ++tt)
            if (tap.idx[tt] >= 0) plane[tap.idx[tt]] += tap.wgt[tt] * gv;
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Layers

template <typename T>
Tensor<T> init_uniform(Shape shape, int64_t fan_in, RngStream& rng) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight, bias;
  int64_t stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_,
              RngStream& rng)
      : weight(init_uniform<T>({cout, cin, k, k}, cin * k * k, rng)),
        bias(init_uniform<T>({cout}, cin * k * k, rng)),
        stride(stride_),
        pad(pad_) {}

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

template <typename T>
struct ConvTranspose2dLayer {
  Tensor<T> weight, bias;
  int64_t stride = 1, pad = 0, opad = 0;

  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_,
                       int64_t opad_, RngStream& rng)
      : weight(init_uniform<T>({cin, cout, k, k}, cin * k * k, rng)),
        bias(init_uniform<T>({cout}, cin * k * k, rng)),
        stride(stride_),
        pad(pad_),
        opad(opad_) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight, bias, stride, pad, opad);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

// conv -> IN -> relu -> conv -> IN plus identity skip; shape preserving.
template <typename T>
struct ResBlock {
  Conv2dLayer<T> c1, c2;

  ResBlock() = default;
  ResBlock(int64_t c, RngStream& rng) : c1(c, c, 3, 1, 1, rng), c2(c, c, 3, 1, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    auto h = instance_norm_2d(c1.forward(x));
    h = relu(h);
    h = instance_norm_2d(c2.forward(h));
    return add(x, h);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
  }
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight, bias;  // [Din,Dout], [Dout]

  DenseLayer() = default;
  DenseLayer(int64_t din, int64_t dout, RngStream& rng)
      : weight(init_uniform<T>({din, dout}, din, rng)),
        bias(init_uniform<T>({dout}, din, rng)) {}

  Tensor<T> forward(const Tensor<T>& x) const { return add_rowvec(matmul(x, weight), bias); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

// Affine + ReLU stack, final layer linear.
template <typename T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;

  Mlp() = default;
  Mlp(const std::vector<int64_t>& dims, RngStream& rng) {
    check(dims.size() >= 2, "mlp: need at least input and output dims");
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(dims[i], dims[i + 1], rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".l" + std::to_string(i), out);
  }
};

}  // namespace nn
}  // namespace meshpose
