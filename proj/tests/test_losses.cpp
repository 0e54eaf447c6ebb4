// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "meshpose/gradcheck.hpp"
#include "meshpose/losses.hpp"

using namespace meshpose;
using namespace meshpose::losses;

namespace {

template <typename T>
Tensor<T> random_tensor(RngStream& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<T>::zeros(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// discriminator with every parameter forced to a constant output 'bias'
models::PatchDiscriminator<double> constant_disc(double bias) {
  RngStream rng(71, "const_disc");
  models::ModelConfig cfg;
  cfg.disc_width = 4;
  models::PatchDiscriminator<double> d(cfg, rng);
  nn::NamedParams<double> params;
  d.collect("d", params);
  for (auto& [name, t] : params)
    for (int64_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  d.head.bias.data()[0] = bias;
  return d;
}

}  // namespace

TEST_CASE("rec_loss: zero on identical, |c| on constant offsets, elementwise oracle") {
  RngStream rng(73, "rec");
  auto a = random_tensor<double>(rng, {1, 3, 8, 8});
  CHECK(rec_loss(a, a).item() == 0.0);

  auto b = add_scalar(a, -0.37);
  CHECK(rec_loss(a, b).item() == doctest::Approx(0.37).epsilon(1e-12));

  auto c = random_tensor<double>(rng, {1, 3, 8, 8});
  double want = 0;
  for (int64_t i = 0; i < a.numel(); ++i) want += std::fabs(a.data()[i] - c.data()[i]);
  want /= a.numel();
  CHECK(rec_loss(a, c).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("perc_loss: zero on identical, symmetric, positive on interior differences") {
  RngStream rng(75, "perc");
  models::PerceptualExtractor<double> ext;
  auto a = random_tensor<double>(rng, {1, 3, 16, 16});
  CHECK(perc_loss(ext, a, a).item() == 0.0);

  auto b = random_tensor<double>(rng, {1, 3, 16, 16});
  CHECK(perc_loss(ext, a, b).item() == doctest::Approx(perc_loss(ext, b, a).item()));
  CHECK(perc_loss(ext, a, b).item() > 0.0);

  // the extractor is seed-pinned: two instances agree exactly
  models::PerceptualExtractor<double> ext2;
  CHECK(perc_loss(ext2, a, b).item() == perc_loss(ext, a, b).item());
}

TEST_CASE("lsgan score targets") {
  // D == +1 on real, -1 on fake -> zero d-loss
  auto ones = TensorD::full({1, 1, 2, 2}, 1.0);
  auto negs = TensorD::full({1, 1, 2, 2}, -1.0);
  CHECK(lsgan_d_loss_scores(ones, negs).item() == 0.0);
  // D == 0 on fake -> zero g-loss
  CHECK(lsgan_g_loss_scores(TensorD::zeros({1, 1, 2, 2})).item() == 0.0);
  // D == 0 everywhere -> d_loss = 2
  auto z = TensorD::zeros({1, 1, 2, 2});
  CHECK(lsgan_d_loss_scores(z, z).item() == doctest::Approx(2.0));

  // via an actual discriminator forced to output 0
  RngStream rng(77, "lsgan");
  auto d0 = constant_disc(0.0);
  auto img = random_tensor<double>(rng, {1, 3, 16, 16});
  auto cond = random_tensor<double>(rng, {1, 3, 16, 16});
  CHECK(lsgan_d_loss(d0, img, img, cond).item() == doctest::Approx(2.0));
  CHECK(lsgan_g_loss(d0, img, cond).item() == doctest::Approx(0.0));
}

TEST_CASE("d-loss is minimized exactly at the (+1,-1) targets") {
  RngStream rng(79, "lsgan_convex");
  auto base = lsgan_d_loss_scores(TensorD::full({1, 1, 3, 3}, 1.0),
                                  TensorD::full({1, 1, 3, 3}, -1.0))
                  .item();
  CHECK(base == 0.0);
  for (int trial = 0; trial < 5; ++trial) {
    auto dr = random_tensor<double>(rng, {1, 1, 3, 3}, -0.3, 0.3);
    auto df = random_tensor<double>(rng, {1, 1, 3, 3}, -0.3, 0.3);
    auto perturbed =
        lsgan_d_loss_scores(add_scalar(dr, 1.0), add_scalar(df, -1.0)).item();
    CHECK(perturbed > base);
  }
}

TEST_CASE("tv_loss: hand-computed 2x2 case returns exactly 2") {
  auto a = TensorD::from_data({1, 1, 2, 2}, {0, 1, 0, 1});
  CHECK(tv_loss(a).item() == doctest::Approx(2.0).epsilon(1e-12));
  // constant mask has zero tv
  CHECK(tv_loss(TensorD::full({1, 1, 5, 5}, 0.7)).item() == 0.0);
}

TEST_CASE("mask_loss components") {
  // A == S and constant -> exactly zero
  auto s = TensorD::full({1, 1, 4, 4}, 1.0);
  CHECK(mask_loss(s, s).item() == 0.0);

  // A = 1 - S with S == 0: MSE term 1, TV 0
  auto s0 = TensorD::zeros({1, 1, 4, 4});
  auto a1 = TensorD::full({1, 1, 4, 4}, 1.0);
  CHECK(mask_loss(a1, s0).item() == doctest::Approx(1.0));

  // the 2x2 case through the whole mask loss: MSE 0 + TV 2
  auto m = TensorD::from_data({1, 1, 2, 2}, {0, 1, 0, 1});
  CHECK(mask_loss(m, m).item() == doctest::Approx(2.0));
}

TEST_CASE("total_g_loss weighting") {
  LossWeights<double> w;
  GLossParts<double> parts;
  parts.rec = TensorD::scalar(0.0);
  parts.perc = TensorD::scalar(0.0);
  parts.adv = TensorD::scalar(0.0);
  parts.mask = TensorD::scalar(0.0);
  CHECK(total_g_loss(parts, w).item() == 0.0);

  parts.perc = TensorD::scalar(0.3);
  CHECK(total_g_loss(parts, w).item() == doctest::Approx(3.0));

  parts.rec = TensorD::scalar(0.11);
  parts.perc = TensorD::scalar(0.22);
  parts.adv = TensorD::scalar(0.33);
  parts.mask = TensorD::scalar(0.44);
  CHECK(total_g_loss(parts, w).item() ==
        doctest::Approx(10 * 0.11 + 10 * 0.22 + 1 * 0.33 + 1 * 0.44));
}

TEST_CASE("losses are nonnegative and differentiable w.r.t. generated images") {
  RngStream rng(81, "loss_gc");
  models::PerceptualExtractor<double> ext;
  auto target = random_tensor<double>(rng, {1, 3, 16, 16});
  auto x0 = random_tensor<double>(rng, {1, 3, 16, 16});

  CHECK(rec_loss(x0, target).item() >= 0.0);
  CHECK(perc_loss(ext, x0, target).item() >= 0.0);

  CHECK(grad_check("rec", [&](const TensorD& x) { return rec_loss(x, target); }, x0, 1e-5)
            .pass);
  CHECK(grad_check("perc", [&](const TensorD& x) { return perc_loss(ext, x, target); }, x0,
                   1e-4)
            .pass);

  auto sil = TensorD::zeros({1, 1, 8, 8});
  for (int64_t i = 20; i < 40; ++i) sil.data()[i] = 1.0;
  auto m0 = random_tensor<double>(rng, {1, 1, 8, 8}, 0.05, 0.95);
  CHECK(mask_loss(m0, sil).item() >= 0.0);
  CHECK(grad_check("mask", [&](const TensorD& m) { return mask_loss(m, sil); }, m0, 1e-5).pass);

  RngStream drng(83, "loss_gc_d");
  models::ModelConfig cfg;
  cfg.disc_width = 4;
  models::PatchDiscriminator<double> d(cfg, drng);
  auto cond = random_tensor<double>(rng, {1, 3, 16, 16});
  CHECK(grad_check("g_adv", [&](const TensorD& x) { return lsgan_g_loss(d, x, cond); }, x0,
                   1e-4)
            .pass);
  CHECK(grad_check("d_fake", [&](const TensorD& x) { return lsgan_d_loss(d, target, x, cond); },
                   x0, 1e-4)
            .pass);
}
