// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "meshpose/gradcheck.hpp"
#include "meshpose/losses.hpp"
#include "meshpose/models.hpp"

using namespace meshpose;
using namespace meshpose::models;

namespace {

struct Scene {
  body::BodyTemplate tmpl;
  graph::MeshGraph g;
  body::BodyMesh mesh_s, mesh_t;
  std::vector<PoseIO> poses;

  explicit Scene(uint64_t seed) {
    tmpl = body::make_template({.coarse = true});
    g = graph::build_graph(tmpl.faces, tmpl.n_verts());
    RngStream rng(seed, "scene");
    body::BodyParams ps, pt;
    for (int i = 0; i < 72; ++i) {
      ps.theta[i] = rng.uniform(-0.4, 0.4);
      pt.theta[i] = rng.uniform(-0.4, 0.4);
    }
    ps.cam = {0.8, 0.0, 0.0};
    pt.cam = {0.85, 0.02, -0.03};
    mesh_s = body::lbs(tmpl, ps);
    mesh_t = body::lbs(tmpl, pt);
    poses.push_back({&mesh_s, &mesh_t, ps.cam, pt.cam});
  }
};

template <typename T>
Tensor<T> random_tensor(RngStream& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<T>::zeros(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.width_base = 4;
  cfg.adc_width = 4;
  cfg.disc_width = 4;
  return cfg;
}

}  // namespace

TEST_CASE("foreground outputs live in the activation codomains") {
  Scene sc(1);
  RngStream rng(2, "fg");
  ForegroundGenerator<float> fg(tiny_config(), rng);
  auto i_fg = random_tensor<float>(rng, {1, 3, 16, 16});
  auto c_s = random_tensor<float>(rng, {1, 3, 16, 16});
  auto [rgb, mask] = fg.forward(i_fg, c_s, sc.poses, sc.g);
  CHECK(rgb.shape() == Shape{1, 3, 16, 16});
  CHECK(mask.shape() == Shape{1, 1, 16, 16});
  for (int64_t i = 0; i < rgb.numel(); ++i) {
    CHECK(rgb.data()[i] >= -1.0f);
    CHECK(rgb.data()[i] <= 1.0f);
  }
  for (int64_t i = 0; i < mask.numel(); ++i) {
    CHECK(mask.data()[i] > 0.0f);
    CHECK(mask.data()[i] < 1.0f);
  }
}

TEST_CASE("fresh nets with a fixed seed reproduce outputs bit-exactly") {
  auto run = [] {
    Scene sc(3);
    RngStream rng(4, "det");
    ForegroundGenerator<float> fg(tiny_config(), rng);
    RngStream drng(5, "data");
    auto i_fg = random_tensor<float>(drng, {1, 3, 16, 16});
    auto c_s = random_tensor<float>(drng, {1, 3, 16, 16});
    auto [rgb, mask] = fg.forward(i_fg, c_s, sc.poses, sc.g);
    return rgb;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.numel() == b.numel());
  CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
}

TEST_CASE("adcnet: zero image with zero biases gives zero modulation") {
  RngStream rng(6, "adc");
  ADCNet<double> adc(4, 8, rng);
  nn::NamedParams<double> params;
  adc.collect("adc", params);
  for (auto& [name, t] : params)
    if (name.find("bias") != std::string::npos)
      for (int64_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  auto [gamma, alpha] = adc.forward(TensorD::zeros({1, 3, 16, 16}));
  for (int64_t i = 0; i < gamma.numel(); ++i) CHECK(gamma.data()[i] == 0.0);
  for (int64_t i = 0; i < alpha.numel(); ++i) CHECK(alpha.data()[i] == 0.0);
}

TEST_CASE("adcnet params depend only on the source image; distinct sources differ") {
  RngStream rng(7, "adc2");
  ADCNet<double> adc(4, 8, rng);
  auto img1 = random_tensor<double>(rng, {1, 3, 16, 16});
  auto [g1, a1] = adc.forward(img1);
  auto [g2, a2] = adc.forward(img1);
  for (int64_t i = 0; i < g1.numel(); ++i) CHECK(g1.data()[i] == g2.data()[i]);

  auto batch = concat<double>({img1, random_tensor<double>(rng, {1, 3, 16, 16})}, 0);
  auto [gb, ab] = adc.forward(batch);
  bool rows_differ = false;
  for (int64_t c = 0; c < 8; ++c)
    if (gb.data()[c] != gb.data()[8 + c] || ab.data()[c] != ab.data()[8 + c])
      rows_differ = true;
  CHECK(rows_differ);
}

TEST_CASE("background generator: shape, range, gradient flow") {
  RngStream rng(8, "bg");
  BackgroundGenerator<double> bg(tiny_config(), rng);
  auto x = random_tensor<double>(rng, {1, 3, 16, 16});
  auto y = bg.forward(x);
  CHECK(y.shape() == x.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y.data()[i] >= -1.0);
    CHECK(y.data()[i] <= 1.0);
  }

  nn::NamedParams<double> params;
  bg.collect("bg", params);
  std::vector<TensorD*> ptrs;
  for (auto& [name, t] : params) ptrs.push_back(t);
  auto u = random_tensor<double>(rng, {1, 3, 16, 16});
  RngStream gcr(9, "bg_gc");
  auto rep = grad_check_params(
      "bg_params", [&] { return sum(mul(bg.forward(x), u)); }, ptrs, 1e-4, 2, gcr);
  INFO(rep.summary());
  CHECK(rep.pass);
  // every parameter actually received a finite gradient
  {
    for (auto* p : ptrs) p->set_requires_grad(true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = sum(mul(bg.forward(x), u));
    tape.backward(loss);
    for (auto* p : ptrs) {
      auto g = tape.grad_of(*p);
      double mag = 0;
      for (int64_t i = 0; i < g.numel(); ++i) {
        CHECK(std::isfinite(g.data()[i]));
        mag += std::fabs(g.data()[i]);
      }
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("fuse: boundary masks, convexity, range validation") {
  RngStream rng(10, "fuse");
  auto fg = random_tensor<double>(rng, {1, 3, 4, 4});
  auto bg = random_tensor<double>(rng, {1, 3, 4, 4});

  auto all1 = fuse(fg, bg, TensorD::full({1, 1, 4, 4}, 1.0));
  for (int64_t i = 0; i < fg.numel(); ++i) CHECK(all1.data()[i] == fg.data()[i]);
  auto all0 = fuse(fg, bg, TensorD::zeros({1, 1, 4, 4}));
  for (int64_t i = 0; i < bg.numel(); ++i) CHECK(all0.data()[i] == bg.data()[i]);
  auto half = fuse(fg, bg, TensorD::full({1, 1, 4, 4}, 0.5));
  for (int64_t i = 0; i < fg.numel(); ++i)
    CHECK(half.data()[i] == doctest::Approx(0.5 * (fg.data()[i] + bg.data()[i])));

  auto m = random_tensor<double>(rng, {1, 1, 4, 4}, 0.0, 1.0);
  auto mixed = fuse(fg, bg, m);
  for (int64_t i = 0; i < fg.numel(); ++i) {
    CHECK(mixed.data()[i] >= std::min(fg.data()[i], bg.data()[i]) - 1e-12);
    CHECK(mixed.data()[i] <= std::max(fg.data()[i], bg.data()[i]) + 1e-12);
  }

  CHECK_THROWS_AS(fuse(fg, bg, TensorD::full({1, 1, 4, 4}, 1.5)), std::runtime_error);
}

TEST_CASE("ablation models are constructible by config flag alone") {
  Scene sc(11);
  RngStream rng(12, "abl");
  auto cfg = tiny_config();

  cfg.disable_3dp = true;
  ForegroundGenerator<float> no3dp(cfg, rng);
  RngStream drng(13, "abl_data");
  auto i_fg = random_tensor<float>(drng, {1, 3, 16, 16});
  auto c_s = random_tensor<float>(drng, {1, 3, 16, 16});
  auto [r1, m1] = no3dp.forward(i_fg, c_s, sc.poses, sc.g);
  CHECK(r1.shape() == Shape{1, 3, 16, 16});

  cfg.disable_3dp = false;
  cfg.disable_adcnet = true;
  RngStream rng2(12, "abl");
  ForegroundGenerator<float> noadc(cfg, rng2);
  auto [r2, m2] = noadc.forward(i_fg, c_s, sc.poses, sc.g);
  CHECK(r2.shape() == Shape{1, 3, 16, 16});

  // adc parameters drop out of the trainable set when disabled
  nn::NamedParams<float> p_full, p_noadc;
  cfg.disable_adcnet = false;
  RngStream rng3(12, "abl");
  ForegroundGenerator<float> full(cfg, rng3);
  full.collect("fg", p_full);
  noadc.collect("fg", p_noadc);
  CHECK(p_full.size() > p_noadc.size());
}

TEST_CASE("end-to-end foreground gradients are finite and match finite differences") {
  Scene sc(14);
  RngStream rng(15, "fg_gc");
  ForegroundGenerator<double> fg(tiny_config(), rng);
  auto i_fg = random_tensor<double>(rng, {1, 3, 16, 16});
  auto c_s = random_tensor<double>(rng, {1, 3, 16, 16});
  auto u_rgb = random_tensor<double>(rng, {1, 3, 16, 16});
  auto u_m = random_tensor<double>(rng, {1, 1, 16, 16});

  auto forward = [&] {
    auto [rgb, mask] = fg.forward(i_fg, c_s, sc.poses, sc.g);
    return add(sum(mul(rgb, u_rgb)), sum(mul(mask, u_m)));
  };

  nn::NamedParams<double> params;
  fg.collect("fg", params);
  std::vector<TensorD*> ptrs;
  for (auto& [name, t] : params) ptrs.push_back(t);

  // finite gradient everywhere
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = forward();
    tape.backward(loss);
    for (size_t i = 0; i < ptrs.size(); ++i) {
      auto g = tape.grad_of(*ptrs[i]);
      for (int64_t j = 0; j < g.numel(); ++j) {
        REQUIRE(std::isfinite(g.data()[j]));
      }
    }
  }

  RngStream gcr(16, "fg_gc_pick");
  auto rep = grad_check_params("fg_params", forward, ptrs, 1e-4, 1, gcr);
  INFO(rep.summary());
  CHECK(rep.pass);
}
