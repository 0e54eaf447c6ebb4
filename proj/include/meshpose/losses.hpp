// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "meshpose/models.hpp"

// Training losses. Norms are means over elements so the weights are
// resolution-independent, except the total-variation term which keeps its
// per-sample double-sum form (matching the hand-checkable 2x2 case).

namespace meshpose::losses {

template <typename T>
struct LossWeights {
  T rec = T(10.0);
  T perc = T(10.0);
  T adv = T(1.0);
  T mask = T(1.0);
  T face = T(5.0);  // carried in the interface; no face extractor ships here
};

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return mul(x, x);
}

// mean |a - b|
template <typename T>
Tensor<T> rec_loss(const Tensor<T>& a, const Tensor<T>& b) {
  return mean(abs(sub(a, b)));
}

// sum over pyramid levels of mean |phi_j(a) - phi_j(b)|
template <typename T>
Tensor<T> perc_loss(const models::PerceptualExtractor<T>& ext, const Tensor<T>& a,
                    const Tensor<T>& b) {
  auto fa = ext.features(a);
  auto fb = ext.features(b);
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (size_t j = 0; j < fa.size(); ++j) total = add(total, mean(abs(sub(fa[j], fb[j]))));
  return total;
}

// Least-squares targets: real -> +1, fake -> -1, generator pushes fake -> 0.
template <typename T>
Tensor<T> lsgan_d_loss_scores(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  return add(mean(square(add_scalar(real_scores, T(-1)))),
             mean(square(add_scalar(fake_scores, T(1)))));
}

template <typename T>
Tensor<T> lsgan_g_loss_scores(const Tensor<T>& fake_scores) {
  return mean(square(fake_scores));
}

template <typename T>
Tensor<T> lsgan_d_loss(const models::PatchDiscriminator<T>& d, const Tensor<T>& real,
                       const Tensor<T>& fake, const Tensor<T>& cond) {
  return lsgan_d_loss_scores(d.forward(real, cond), d.forward(fake, cond));
}

template <typename T>
Tensor<T> lsgan_g_loss(const models::PatchDiscriminator<T>& d, const Tensor<T>& fake,
                       const Tensor<T>& cond) {
  return lsgan_g_loss_scores(d.forward(fake, cond));
}

// TV(A) = sum_ij (A_ij - A_{i-1,j})^2 + (A_ij - A_{i,j-1})^2 over valid index
// pairs, summed per sample and averaged over the batch.
template <typename T>
Tensor<T> tv_loss(const Tensor<T>& a) {
  check(a.rank() == 4, "tv_loss: want [B,1,H,W]");
  const int64_t b = a.dim(0), h = a.dim(2), w = a.dim(3);
  auto dv = sub(slice(a, 2, 1, h - 1), slice(a, 2, 0, h - 1));
  auto dh = sub(slice(a, 3, 1, w - 1), slice(a, 3, 0, w - 1));
  auto total = add(sum(square(dv)), sum(square(dh)));
  return mul_scalar(total, T(1) / static_cast<T>(b));
}

// mean squared error against the silhouette pseudolabel plus total variation
template <typename T>
Tensor<T> mask_loss(const Tensor<T>& mask, const Tensor<T>& sil) {
  check(mask.shape() == sil.shape(), "mask_loss: shape mismatch " + shape_str(mask.shape()) +
                                         " vs " + shape_str(sil.shape()));
  return add(mean(square(sub(mask, sil))), tv_loss(mask));
}

template <typename T>
struct GLossParts {
  Tensor<T> rec, perc, adv, mask;
  Tensor<T> face;  // defaults to zero below
};

template <typename T>
Tensor<T> total_g_loss(const GLossParts<T>& parts, const LossWeights<T>& w) {
  Tensor<T> face = parts.face.defined() ? parts.face : Tensor<T>::scalar(T(0));
  auto total = mul_scalar(parts.rec, w.rec);
  total = add(total, mul_scalar(parts.perc, w.perc));
  total = add(total, mul_scalar(parts.adv, w.adv));
  total = add(total, mul_scalar(parts.mask, w.mask));
  total = add(total, mul_scalar(face, w.face));
  return total;
}

}  // namespace meshpose::losses
