// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "meshpose/graph.hpp"
#include "meshpose/nn.hpp"

// The image-synthesis networks: a foreground generator built around four
// lifting-and-projection blocks with a detail-compensation branch, a
// background inpainting generator, a conditional patch discriminator and the
// frozen feature pyramid behind the perceptual loss.

namespace meshpose::models {

struct ModelConfig {
  int64_t width_base = 32;  // stem width; encoder scale l runs at base << l
  int64_t adc_width = 32;
  int64_t disc_width = 32;
  bool disable_3dp = false;     // "no 3D processing" ablation
  bool disable_adcnet = false;  // "LPNet only" ablation

  int64_t width(int64_t scale) const { return width_base << scale; }
};

// Per-sample geometry feeding the LPBs.
struct PoseIO {
  const body::BodyMesh* mesh_s = nullptr;
  const body::BodyMesh* mesh_t = nullptr;
  std::array<double, 3> cam_s{1, 0, 0};
  std::array<double, 3> cam_t{1, 0, 0};
};

namespace detail {

// conv/tconv -> instance norm -> relu
template <typename T>
Tensor<T> cir(const nn::Conv2dLayer<T>& c, const Tensor<T>& x) {
  return relu(nn::instance_norm_2d(c.forward(x)));
}
template <typename T>
Tensor<T> tir(const nn::ConvTranspose2dLayer<T>& c, const Tensor<T>& x) {
  return relu(nn::instance_norm_2d(c.forward(x)));
}

// Runs one LPB over every sample of a batched feature map.
template <typename T>
Tensor<T> lpb_batch(const graph::LPBlock<T>& block, const graph::MeshGraph& g,
                    const Tensor<T>& fmap, const std::vector<PoseIO>& poses, bool use_3dp) {
  const int64_t b = fmap.dim(0), c = fmap.dim(1), h = fmap.dim(2), w = fmap.dim(3);
  check(b == static_cast<int64_t>(poses.size()), "lpb_batch: pose count != batch");
  std::vector<Tensor<T>> outs;
  outs.reserve(b);
  for (int64_t bi = 0; bi < b; ++bi) {
    auto f = reshape(slice(fmap, 0, bi, 1), {c, h, w});
    auto o = graph::lpb_forward(block, g, f, *poses[bi].mesh_s, *poses[bi].mesh_t,
                                poses[bi].cam_s, poses[bi].cam_t, use_3dp);
    outs.push_back(reshape(o, {1, c, h, w}));
  }
  return concat(outs, 0);
}

}  // namespace detail

// Source-image branch that predicts the AdaIN modulation pair.
template <typename T>
struct ADCNet {
  nn::Conv2dLayer<T> stem;
  nn::ResBlock<T> r1, r2;
  nn::Mlp<T> gamma_mlp, alpha_mlp;

  ADCNet() = default;
  ADCNet(int64_t width, int64_t out_channels, RngStream& rng)
      : stem(3, width, 7, 1, 3, rng),
        r1(width, rng),
        r2(width, rng),
        gamma_mlp({width, width, out_channels}, rng),
        alpha_mlp({width, width, out_channels}, rng) {}

  // (gamma, alpha), each [B, out_channels]
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& i_fg) const {
    auto h = detail::cir(stem, i_fg);
    h = r2.forward(r1.forward(h));
    auto pooled = global_avg_pool(h);
    return {gamma_mlp.forward(pooled), alpha_mlp.forward(pooled)};
  }

  void collect(const std::string& p, nn::NamedParams<T>& out) {
    stem.collect(p + ".stem", out);
    r1.collect(p + ".r1", out);
    r2.collect(p + ".r2", out);
    gamma_mlp.collect(p + ".gamma", out);
    alpha_mlp.collect(p + ".alpha", out);
  }
};

// Encoder over concat(I_FG, C_s), one LPB per scale, U-Net style decoder with
// the projected maps as skips, AdaIN modulation, masking head.
template <typename T>
struct ForegroundGenerator {
  ModelConfig cfg;
  nn::Conv2dLayer<T> stem;                       // 6 -> w0, scale 0
  std::vector<nn::Conv2dLayer<T>> down;          // 3 stride-2 convs
  std::vector<graph::LPBlock<T>> blocks;         // 4, one per scale
  std::vector<nn::ConvTranspose2dLayer<T>> up;   // 3 stride-2 tconvs
  std::vector<nn::Conv2dLayer<T>> fuse_skip;     // merge skip concat per scale
  std::vector<nn::ResBlock<T>> res;              // one per decoder stage
  ADCNet<T> adc;
  nn::Conv2dLayer<T> head;  // w0 -> 4 (rgb + mask)

  ForegroundGenerator() = default;
  ForegroundGenerator(const ModelConfig& cfg_, RngStream& rng)
      : cfg(cfg_), stem(6, cfg_.width(0), 7, 1, 3, rng) {
    for (int l = 0; l < 3; ++l)
      down.emplace_back(cfg.width(l), cfg.width(l + 1), 4, 2, 1, rng);
    for (int l = 0; l < 4; ++l) blocks.emplace_back(cfg.width(l), l, rng);
    for (int l = 3; l >= 1; --l)
      up.emplace_back(cfg.width(l), cfg.width(l - 1), 4, 2, 1, 0, rng);
    for (int l = 2; l >= 0; --l)
      fuse_skip.emplace_back(2 * cfg.width(l), cfg.width(l), 3, 1, 1, rng);
    for (int l = 3; l >= 0; --l) res.emplace_back(cfg.width(l), rng);
    adc = ADCNet<T>(cfg.adc_width, cfg.width(0), rng);
    head = nn::Conv2dLayer<T>(cfg.width(0), 4, 7, 1, 3, rng);
  }

  // (rgb in (-1,1) [B,3,H,W], soft mask in (0,1) [B,1,H,W])
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& i_fg, const Tensor<T>& c_s,
                                          const std::vector<PoseIO>& poses,
                                          const graph::MeshGraph& g) const {
    // encoder: stem output counts as scale 0
    std::vector<Tensor<T>> f(4);
    f[0] = detail::cir(stem, concat<T>({i_fg, c_s}, 1));
    for (int l = 0; l < 3; ++l) f[l + 1] = detail::cir(down[l], f[l]);

    // per-scale lift / process / project into the target pose
    std::vector<Tensor<T>> proj(4);
    for (int l = 0; l < 4; ++l)
      proj[l] = detail::lpb_batch(blocks[l], g, f[l], poses, !cfg.disable_3dp);

    // decoder with skip fusion
    Tensor<T> d = res[0].forward(proj[3]);
    for (int stage = 0; stage < 3; ++stage) {
      d = detail::tir(up[stage], d);
      const int l = 2 - stage;
      d = detail::cir(fuse_skip[stage], concat<T>({d, proj[l]}, 1));
      d = res[stage + 1].forward(d);
    }

    if (!cfg.disable_adcnet) {
      auto [gamma, alpha] = adc.forward(i_fg);
      d = nn::adain(d, gamma, alpha);
    }
    auto out = head.forward(d);
    auto rgb = tanh(slice(out, 1, 0, 3));
    auto mask = sigmoid(slice(out, 1, 3, 1));
    return {rgb, mask};
  }

  void collect(const std::string& p, nn::NamedParams<T>& out) {
    stem.collect(p + ".stem", out);
    for (size_t i = 0; i < down.size(); ++i)
      down[i].collect(p + ".down" + std::to_string(i), out);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(p + ".lpb" + std::to_string(i), out);
    for (size_t i = 0; i < up.size(); ++i) up[i].collect(p + ".up" + std::to_string(i), out);
    for (size_t i = 0; i < fuse_skip.size(); ++i)
      fuse_skip[i].collect(p + ".fuse" + std::to_string(i), out);
    for (size_t i = 0; i < res.size(); ++i) res[i].collect(p + ".res" + std::to_string(i), out);
    if (!cfg.disable_adcnet) adc.collect(p + ".adc", out);
    head.collect(p + ".head", out);
  }
};

// Encoder-decoder inpainter: 3 stride-2 convs, 6 residual blocks, 3 stride-2
// transposed convs.
template <typename T>
struct BackgroundGenerator {
  nn::Conv2dLayer<T> stem;
  std::vector<nn::Conv2dLayer<T>> down;
  std::vector<nn::ResBlock<T>> res;
  std::vector<nn::ConvTranspose2dLayer<T>> up;
  nn::Conv2dLayer<T> head;

  BackgroundGenerator() = default;
  BackgroundGenerator(const ModelConfig& cfg, RngStream& rng)
      : stem(3, cfg.width(0), 7, 1, 3, rng) {
    for (int l = 0; l < 3; ++l)
      down.emplace_back(cfg.width(l), cfg.width(l + 1), 4, 2, 1, rng);
    for (int i = 0; i < 6; ++i) res.emplace_back(cfg.width(3), rng);
    for (int l = 3; l >= 1; --l)
      up.emplace_back(cfg.width(l), cfg.width(l - 1), 4, 2, 1, 0, rng);
    head = nn::Conv2dLayer<T>(cfg.width(0), 3, 7, 1, 3, rng);
  }

  Tensor<T> forward(const Tensor<T>& i_bg) const {
    auto h = detail::cir(stem, i_bg);
    for (const auto& c : down) h = detail::cir(c, h);
    for (const auto& r : res) h = r.forward(h);
    for (const auto& u : up) h = detail::tir(u, h);
    return tanh(head.forward(h));
  }

  void collect(const std::string& p, nn::NamedParams<T>& out) {
    stem.collect(p + ".stem", out);
    for (size_t i = 0; i < down.size(); ++i)
      down[i].collect(p + ".down" + std::to_string(i), out);
    for (size_t i = 0; i < res.size(); ++i) res[i].collect(p + ".res" + std::to_string(i), out);
    for (size_t i = 0; i < up.size(); ++i) up[i].collect(p + ".up" + std::to_string(i), out);
    head.collect(p + ".head", out);
  }
};

// Conditional PatchGAN: 4 stride-2 convs + a 1-channel head, input
// concat(image, coordinate map), score map at H/16 x W/16.
template <typename T>
struct PatchDiscriminator {
  std::vector<nn::Conv2dLayer<T>> convs;
  nn::Conv2dLayer<T> head;

  PatchDiscriminator() = default;
  PatchDiscriminator(const ModelConfig& cfg, RngStream& rng) {
    int64_t c = 6;
    int64_t w = cfg.disc_width;
    for (int l = 0; l < 4; ++l) {
      convs.emplace_back(c, w, 4, 2, 1, rng);
      c = w;
      w = std::min<int64_t>(w * 2, cfg.disc_width * 8);
    }
    head = nn::Conv2dLayer<T>(c, 1, 3, 1, 1, rng);
  }

  Tensor<T> forward(const Tensor<T>& img, const Tensor<T>& cond) const {
    auto h = concat<T>({img, cond}, 1);
    for (size_t i = 0; i < convs.size(); ++i) {
      h = convs[i].forward(h);
      if (i > 0) h = nn::instance_norm_2d(h);
      h = leaky_relu(h, T(0.2));
    }
    return head.forward(h);
  }

  void collect(const std::string& p, nn::NamedParams<T>& out) {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect(p + ".c" + std::to_string(i), out);
    head.collect(p + ".head", out);
  }

  void set_requires_grad(bool b) {
    nn::NamedParams<T> all;
    collect("d", all);
    for (auto& [name, t] : all) t->set_requires_grad(b);
  }
};

// Frozen seeded 3-level conv pyramid standing in for a pretrained backbone in
// the perceptual loss. Weights are seed-pinned and never trained.
template <typename T>
struct PerceptualExtractor {
  std::vector<nn::Conv2dLayer<T>> convs;

  explicit PerceptualExtractor(uint64_t seed = 101) {
    RngStream rng(seed, "perceptual");
    int64_t dims[4] = {3, 8, 16, 32};
    for (int l = 0; l < 3; ++l) {
      convs.emplace_back(dims[l], dims[l + 1], 3, 2, 1, rng);
      convs.back().weight.set_requires_grad(false);
      convs.back().bias.set_requires_grad(false);
    }
  }

  std::vector<Tensor<T>> features(const Tensor<T>& x) const {
    std::vector<Tensor<T>> out;
    Tensor<T> h = x;
    for (const auto& c : convs) {
      h = relu(c.forward(h));
      out.push_back(h);
    }
    return out;
  }
};

// I_hat = fg * mask + bg * (1 - mask); the mask must already live in [0,1].
template <typename T>
Tensor<T> fuse(const Tensor<T>& fg, const Tensor<T>& bg, const Tensor<T>& mask) {
  check(fg.shape() == bg.shape(), "fuse: fg/bg shape mismatch");
  check(mask.rank() == 4 && mask.dim(1) == 1, "fuse: mask must be [B,1,H,W]");
  for (int64_t i = 0; i < mask.numel(); ++i) {
    const T v = mask.data()[i];
    check(v >= T(0) && v <= T(1), "fuse: mask value outside [0,1]");
  }
  return add(mul_mask(fg, mask), mul_mask(bg, rsub_scalar(mask, T(1))));
}

}  // namespace meshpose::models
