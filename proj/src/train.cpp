// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/train.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "meshpose/metrics.hpp"
#include "meshpose/raster.hpp"

namespace meshpose::train {

namespace fs = std::filesystem;

std::string stats_to_json(const StepStats& s) {
  nlohmann::json j;
  j["step"] = s.step;
  j["lr_g"] = s.lr_g;
  j["lr_d"] = s.lr_d;
  j["d_loss"] = s.d_loss;
  j["adv"] = s.adv;
  j["rec"] = s.rec;
  j["perc"] = s.perc;
  j["mask"] = s.mask;
  j["g_total"] = s.g_total;
  return j.dump();
}

namespace {

models::ModelConfig model_config(const TrainConfig& cfg) {
  models::ModelConfig m;
  m.width_base = cfg.width_base;
  m.adc_width = cfg.adc_width;
  m.disc_width = cfg.disc_width;
  m.disable_3dp = cfg.disable_3dp;
  m.disable_adcnet = cfg.disable_adcnet;
  return m;
}

// mask-separated copies of an image batch slice: fg = img*mask, bg = img*(1-mask)
void split_by_mask(const Tensor<float>& img, const std::vector<uint8_t>& dil, int64_t hw,
                   int64_t bi, Tensor<float>& fg, Tensor<float>& bg) {
  for (int64_t c = 0; c < 3; ++c) {
    const float* src = img.data() + (bi * 3 + c) * hw;
    float* fo = fg.data() + (bi * 3 + c) * hw;
    float* bo = bg.data() + (bi * 3 + c) * hw;
    for (int64_t i = 0; i < hw; ++i) {
      fo[i] = dil[i] ? src[i] : 0.0f;
      bo[i] = dil[i] ? 0.0f : src[i];
    }
  }
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const data::Dataset& dataset)
    : cfg_(cfg), ds_(&dataset), perc_() {
  check(dataset.cfg.resolution == cfg.resolution,
        "trainer: config resolution " + std::to_string(cfg.resolution) +
            " != dataset resolution " + std::to_string(dataset.cfg.resolution));
  if (cfg.threads > 0) kern::set_num_threads(cfg.threads);
  graph_ = graph::build_graph(dataset.tmpl.faces, dataset.tmpl.n_verts());

  const auto mcfg = model_config(cfg);
  RngStream rng_fg(cfg.seed, "init_fg");
  fg_ = models::ForegroundGenerator<float>(mcfg, rng_fg);
  RngStream rng_bg(cfg.seed, "init_bg");
  bg_ = models::BackgroundGenerator<float>(mcfg, rng_bg);
  RngStream rng_d(cfg.seed, "init_disc");
  disc_ = models::PatchDiscriminator<float>(mcfg, rng_d);

  fg_.collect("fg", g_params_);
  bg_.collect("bg", g_params_);
  disc_.collect("disc", d_params_);

  weights_.rec = static_cast<float>(cfg.lambda_rec);
  weights_.perc = static_cast<float>(cfg.lambda_perc);
  weights_.adv = static_cast<float>(cfg.lambda_adv);
  weights_.mask = static_cast<float>(cfg.lambda_mask);
  weights_.face = static_cast<float>(cfg.lambda_face);

  pairs_ = std::make_unique<data::PairSampler>(dataset, data::PairMode::kSelf, "train",
                                               cfg.seed ^ 0x7061697273ull);
  const int64_t train_size = static_cast<int64_t>(dataset.split("train").size());
  steps_per_epoch_ = std::max<int64_t>(1, train_size / cfg.batch_size);
  total_steps_ = cfg.steps > 0 ? cfg.steps : cfg.epochs * steps_per_epoch_;
}

const Tensor<float>& Trainer::image_of(const data::SampleRecord* rec) {
  auto it = image_cache_.find(rec);
  if (it != image_cache_.end()) return it->second;
  auto [ins, ok] = image_cache_.emplace(rec, data::load_image(rec->image_path));
  return ins->second;
}

Trainer::SampleTensors Trainer::prepare_batch(int64_t step) {
  const int64_t b = cfg_.batch_size;
  const int64_t res = cfg_.resolution, hw = res * res;
  SampleTensors st;
  st.i_s = Tensor<float>::zeros({b, 3, res, res});
  st.i_t = Tensor<float>::zeros({b, 3, res, res});
  st.i_fg = Tensor<float>::zeros({b, 3, res, res});
  st.i_bg = Tensor<float>::zeros({b, 3, res, res});
  st.c_s = Tensor<float>::zeros({b, 3, res, res});
  st.c_t = Tensor<float>::zeros({b, 3, res, res});
  st.s_t = Tensor<float>::zeros({b, 1, res, res});

  for (int64_t bi = 0; bi < b; ++bi) {
    data::Pair pr = pairs_->at(static_cast<uint64_t>(step) * b + bi);
    const auto& img_s = image_of(pr.source);
    const auto& img_t = image_of(pr.target);
    std::copy(img_s.data(), img_s.data() + 3 * hw, st.i_s.data() + bi * 3 * hw);
    std::copy(img_t.data(), img_t.data() + 3 * hw, st.i_t.data() + bi * 3 * hw);

    auto mesh_s = std::make_unique<body::BodyMesh>(
        body::lbs(ds_->tmpl, pr.source->params.theta.data(), pr.source->params.beta.data()));
    auto mesh_t = std::make_unique<body::BodyMesh>(
        body::lbs(ds_->tmpl, pr.target->params.theta.data(), pr.source->params.beta.data()));
    const auto cam_s = pr.source->params.cam;
    const auto cam_t = pr.target->params.cam;

    raster::Geometry geo_s = raster::rasterize_geometry(*mesh_s, cam_s, res, res);
    raster::Geometry geo_t = raster::rasterize_geometry(*mesh_t, cam_t, res, res);

    // foreground/background split over a slightly dilated source silhouette
    auto dil = raster::dilate1(geo_s.coverage, res, res);
    split_by_mask(st.i_s, dil, hw, bi, st.i_fg, st.i_bg);

    // coordinate maps; shared geometry with the silhouettes above
    auto write_coordmap = [&](const body::BodyMesh& mesh, const raster::Geometry& geo,
                              Tensor<float>& dst) {
      auto vrel = Tensor<float>::zeros({ds_->tmpl.n_verts(), 3});
      for (int64_t i = 0; i < vrel.numel(); ++i)
        vrel.data()[i] = static_cast<float>(mesh.verts_rel[i]);
      auto cm = raster::rasterize_features(vrel, geo, ds_->tmpl.faces);
      std::copy(cm.data(), cm.data() + 3 * hw, dst.data() + bi * 3 * hw);
    };
    write_coordmap(*mesh_s, geo_s, st.c_s);
    write_coordmap(*mesh_t, geo_t, st.c_t);

    for (int64_t i = 0; i < hw; ++i)
      st.s_t.data()[bi * hw + i] = geo_t.coverage[i] ? 1.0f : 0.0f;

    st.pose_st.push_back({mesh_s.get(), mesh_t.get(), cam_s, cam_t});
    st.pose_ss.push_back({mesh_s.get(), mesh_s.get(), cam_s, cam_s});
    st.meshes.push_back(std::move(mesh_s));
    st.meshes.push_back(std::move(mesh_t));
  }
  return st;
}

StepStats Trainer::train_step() {
  const int64_t step = step_;
  SampleTensors st = prepare_batch(step);

  StepStats stats;
  stats.step = step;
  stats.lr_g = lr_schedule(cfg_, step + 1, steps_per_epoch_, total_steps_);
  stats.lr_d = cfg_.lr_d;

  // generator graph: one tape spans both synthesis passes
  Tape<float> g_tape;
  Tensor<float> i_hat_t, i_hat_s, mask_t;
  {
    TapeScope<float> scope(g_tape);
    auto i_bg_hat = bg_.forward(st.i_bg);
    auto [fg_t, m_t] = fg_.forward(st.i_fg, st.c_s, st.pose_st, graph_);
    i_hat_t = models::fuse(fg_t, i_bg_hat, m_t);
    auto [fg_s, m_s] = fg_.forward(st.i_fg, st.c_s, st.pose_ss, graph_);
    i_hat_s = models::fuse(fg_s, i_bg_hat, m_s);
    mask_t = m_t;
  }

  // discriminator update on detached fakes
  {
    disc_.set_requires_grad(true);
    Tape<float> d_tape;
    TapeScope<float> scope(d_tape);
    auto d_loss = losses::lsgan_d_loss(disc_, st.i_t, i_hat_t.detach(), st.c_t);
    stats.d_loss = d_loss.item();
    check(std::isfinite(stats.d_loss),
          "train: non-finite discriminator loss at step " + std::to_string(step));
    d_tape.backward(d_loss);
    std::vector<Tensor<float>> grads;
    grads.reserve(d_params_.size());
    for (auto& [name, p] : d_params_) grads.push_back(d_tape.grad_of(*p));
    adam_step(adam_d_, d_params_, grads, static_cast<float>(stats.lr_d));
  }

  // generator update through the updated discriminator
  {
    disc_.set_requires_grad(false);
    TapeScope<float> scope(g_tape);
    losses::GLossParts<float> parts;
    parts.adv = losses::lsgan_g_loss(disc_, i_hat_t, st.c_t);
    parts.rec = losses::rec_loss(i_hat_s, st.i_s);
    parts.perc = losses::perc_loss(perc_, i_hat_t, st.i_t);
    parts.mask = losses::mask_loss(mask_t, st.s_t);
    auto total = losses::total_g_loss(parts, weights_);
    stats.adv = parts.adv.item();
    stats.rec = parts.rec.item();
    stats.perc = parts.perc.item();
    stats.mask = parts.mask.item();
    stats.g_total = total.item();
    check(std::isfinite(stats.g_total),
          "train: non-finite generator loss at step " + std::to_string(step));
    g_tape.backward(total);
    std::vector<Tensor<float>> grads;
    grads.reserve(g_params_.size());
    for (auto& [name, p] : g_params_) grads.push_back(g_tape.grad_of(*p));
    adam_step(adam_g_, g_params_, grads, static_cast<float>(stats.lr_g));
  }

  ++step_;
  return stats;
}

void Trainer::run() {
  fs::create_directories(cfg_.out_dir);
  {
    std::ofstream cf(fs::path(cfg_.out_dir) / "config.txt");
    cf << canonical_config(cfg_);
  }
  std::ofstream log(fs::path(cfg_.out_dir) / "loss_log.jsonl",
                    step_ == 0 ? std::ios::trunc : std::ios::app);
  check(log.good(), "train: cannot open loss log");
  while (step_ < total_steps_) {
    StepStats s = train_step();
    log << stats_to_json(s) << "\n";
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 &&
        step_ < total_steps_) {
      save((fs::path(cfg_.out_dir) / ("ckpt_" + std::to_string(step_) + ".bin")).string());
    }
  }
  log.flush();
  save((fs::path(cfg_.out_dir) / "ckpt_final.bin").string());
}

void Trainer::save(const std::string& path) const {
  auto ck = pack_checkpoint(config_hash(cfg_), static_cast<uint64_t>(step_), g_params_,
                            d_params_, adam_g_, adam_d_);
  save_checkpoint(ck, path);
}

void Trainer::resume(const std::string& path) {
  auto ck = load_checkpoint(path);
  check(ck.config_hash == config_hash(cfg_),
        "resume: checkpoint was written under a different config");
  unpack_checkpoint(ck, g_params_, d_params_, adam_g_, adam_d_);
  step_ = static_cast<int64_t>(ck.step);
}

Tensor<float> Trainer::infer(const data::SampleRecord& src, const data::SampleRecord& tgt,
                             Tensor<float>* coord_vis, Tensor<float>* mask_out) {
  const int64_t res = cfg_.resolution, hw = res * res;
  // target mesh combines the source shape with the target pose/camera
  body::BodyMesh mesh_s =
      body::lbs(ds_->tmpl, src.params.theta.data(), src.params.beta.data());
  body::BodyMesh mesh_t =
      body::lbs(ds_->tmpl, tgt.params.theta.data(), src.params.beta.data());

  auto img_s = data::load_image(src.image_path);
  auto i_s = reshape(img_s, {1, 3, res, res});
  raster::Geometry geo_s = raster::rasterize_geometry(mesh_s, src.params.cam, res, res);
  raster::Geometry geo_t = raster::rasterize_geometry(mesh_t, tgt.params.cam, res, res);
  auto dil = raster::dilate1(geo_s.coverage, res, res);

  auto i_fg = Tensor<float>::zeros({1, 3, res, res});
  auto i_bg = Tensor<float>::zeros({1, 3, res, res});
  split_by_mask(i_s, dil, hw, 0, i_fg, i_bg);

  auto cm_of = [&](const body::BodyMesh& mesh, const raster::Geometry& geo) {
    auto vrel = Tensor<float>::zeros({ds_->tmpl.n_verts(), 3});
    for (int64_t i = 0; i < vrel.numel(); ++i)
      vrel.data()[i] = static_cast<float>(mesh.verts_rel[i]);
    return reshape(raster::rasterize_features(vrel, geo, ds_->tmpl.faces), {1, 3, res, res});
  };
  auto c_s = cm_of(mesh_s, geo_s);
  if (coord_vis != nullptr) *coord_vis = cm_of(mesh_t, geo_t);

  std::vector<models::PoseIO> poses{{&mesh_s, &mesh_t, src.params.cam, tgt.params.cam}};
  auto i_bg_hat = bg_.forward(i_bg);
  auto [fg_rgb, mask] = fg_.forward(i_fg, c_s, poses, graph_);
  if (mask_out != nullptr) *mask_out = mask;
  auto fused = models::fuse(fg_rgb, i_bg_hat, mask);
  return reshape(fused, {3, res, res});
}

Trainer::EvalResult Trainer::evaluate(const std::string& split, int pairs, uint64_t seed) {
  data::PairSampler sampler(*ds_, data::PairMode::kSelf, split, seed);
  EvalResult res;
  for (int i = 0; i < pairs; ++i) {
    auto pr = sampler.at(i);
    auto out = infer(*pr.source, *pr.target);
    auto gt = data::load_image(pr.target->image_path);
    res.ssim += metrics::ssim(metrics::to_unit_range(out), metrics::to_unit_range(gt));
    res.l1 += metrics::l1(out, gt);
  }
  res.ssim /= pairs;
  res.l1 /= pairs;
  res.pairs = pairs;
  return res;
}

}  // namespace meshpose::train
