// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
//
// meshpose command line: dataset generation, training, transfer, gradient
// audits and evaluation over the synthetic pose-transfer pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "meshpose/gradsuite.hpp"
#include "meshpose/metrics.hpp"
#include "meshpose/png.hpp"
#include "meshpose/raster.hpp"
#include "meshpose/train.hpp"

namespace fs = std::filesystem;
using namespace meshpose;

namespace {

// seed is the one knob that may come from the environment
void apply_env_seed(train::TrainConfig& cfg) {
  if (const char* s = std::getenv("MESHPOSE_SEED")) cfg.seed = std::strtoull(s, nullptr, 10);
}

png::Image tensor_to_png(const Tensor<float>& img) {
  const int64_t h = img.dim(1), w = img.dim(2);
  png::Image out{w, h, 3, {}};
  out.data.resize(h * w * 3);
  const int64_t hw = h * w;
  for (int64_t pix = 0; pix < hw; ++pix)
    for (int c = 0; c < 3; ++c) {
      float v = (img.data()[c * hw + pix] + 1.0f) * 0.5f * 255.0f;
      v = std::round(v);
      out.data[pix * 3 + c] = static_cast<uint8_t>(std::min(255.0f, std::max(0.0f, v)));
    }
  return out;
}

// side-by-side grid of equally sized [3,H,W] tensors
png::Image make_grid(const std::vector<Tensor<float>>& imgs) {
  const int64_t h = imgs[0].dim(1), w = imgs[0].dim(2);
  const int64_t gw = w * static_cast<int64_t>(imgs.size()) + (imgs.size() - 1) * 2;
  png::Image out{gw, h, 3, {}};
  out.data.assign(h * gw * 3, 32);
  for (size_t k = 0; k < imgs.size(); ++k) {
    auto tile = tensor_to_png(imgs[k]);
    const int64_t x0 = static_cast<int64_t>(k) * (w + 2);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          out.data[(y * gw + x0 + x) * 3 + c] = tile.data[(y * w + x) * 3 + c];
  }
  return out;
}

// coordinate map scaled into visible range
Tensor<float> coord_vis(const Tensor<float>& cm) {
  auto out = Tensor<float>::zeros(cm.shape());
  for (int64_t i = 0; i < cm.numel(); ++i) {
    float v = cm.data()[i] * 1.4f;
    out.data()[i] = std::min(1.0f, std::max(-1.0f, v));
  }
  return out;
}

int cmd_gen_data(const data::DatasetConfig& cfg, const std::string& out_dir) {
  data::generate_dataset(cfg, out_dir);
  auto ds = data::load_dataset(out_dir);
  std::printf("wrote %zu samples to %s (%lld x %lld, %d figures, %d backgrounds)\n",
              ds.records.size(), out_dir.c_str(), (long long)cfg.resolution,
              (long long)cfg.resolution, cfg.figures, cfg.backgrounds);
  return 0;
}

int cmd_train(train::TrainConfig cfg, const std::string& resume_path) {
  apply_env_seed(cfg);
  auto ds = data::load_dataset(cfg.data_dir);
  train::Trainer trainer(cfg, ds);
  if (!resume_path.empty()) trainer.resume(resume_path);
  std::printf("training: %lld steps (%lld/epoch), batch %lld, res %lld, out %s\n",
              (long long)trainer.total_steps(), (long long)trainer.steps_per_epoch(),
              (long long)cfg.batch_size, (long long)cfg.resolution, cfg.out_dir.c_str());
  trainer.run();
  std::printf("done; final checkpoint at %s/ckpt_final.bin\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_transfer(train::TrainConfig cfg, const std::string& ckpt, int64_t src_idx,
                 int64_t tgt_idx, const std::string& mode, const std::string& out_png) {
  apply_env_seed(cfg);
  auto ds = data::load_dataset(cfg.data_dir);
  check(src_idx >= 0 && src_idx < (int64_t)ds.records.size(), "transfer: bad source index");
  check(tgt_idx >= 0 && tgt_idx < (int64_t)ds.records.size(), "transfer: bad target index");
  const auto& src = ds.records[src_idx];
  const auto& tgt = ds.records[tgt_idx];
  const bool same_figure = src.figure_id == tgt.figure_id;
  if (mode == "self") check(same_figure, "transfer: self mode needs records of one figure");
  if (mode == "cross") check(!same_figure, "transfer: cross mode needs records of two figures");

  train::Trainer trainer(cfg, ds);
  trainer.resume(ckpt);
  Tensor<float> cm;
  auto out = trainer.infer(src, tgt, &cm);

  std::vector<Tensor<float>> tiles;
  tiles.push_back(data::load_image(src.image_path));
  tiles.push_back(coord_vis(reshape(cm, {3, cfg.resolution, cfg.resolution})));
  tiles.push_back(out);
  if (same_figure) tiles.push_back(data::load_image(tgt.image_path));
  png::write(out_png, make_grid(tiles));
  std::printf("transfer grid written to %s%s\n", out_png.c_str(),
              same_figure ? " (source | target pose | output | ground truth)"
                          : " (source | target pose | output)");
  return 0;
}

int cmd_eval(train::TrainConfig cfg, const std::string& ckpt, const std::string& split,
             int pairs, uint64_t seed) {
  apply_env_seed(cfg);
  auto ds = data::load_dataset(cfg.data_dir);
  train::Trainer trainer(cfg, ds);
  trainer.resume(ckpt);
  auto res = trainer.evaluate(split, pairs, seed);
  std::printf("split=%s pairs=%d ssim=%.6f l1=%.6f\n", split.c_str(), res.pairs, res.ssim,
              res.l1);
  return 0;
}

int cmd_gradcheck() {
  auto results = gradsuite::run_all();
  for (const auto& r : results)
    std::printf("%-28s %s  max_err=%.3e (tol %.1e)\n", r.name.c_str(),
                r.pass ? "PASS" : "FAIL", r.max_err, r.tol);
  const bool ok = gradsuite::all_pass(results);
  std::printf("gradcheck: %s (%zu checks)\n", ok ? "all passed" : "FAILURES", results.size());
  return ok ? 0 : 1;
}

int cmd_debug_raster(const std::string& data_dir, int64_t index, const std::string& prefix) {
  auto ds = data::load_dataset(data_dir);
  check(index >= 0 && index < (int64_t)ds.records.size(), "debug-raster: bad record index");
  const auto& rec = ds.records[index];
  auto mesh = body::lbs(ds.tmpl, rec.params.theta.data(), rec.params.beta.data());
  const int64_t res = ds.cfg.resolution;
  auto geom = raster::rasterize_geometry(mesh, rec.params.cam, res, res);

  png::Image cov{res, res, 1, {}};
  cov.data.resize(res * res);
  for (int64_t i = 0; i < res * res; ++i) cov.data[i] = geom.coverage[i] ? 255 : 0;
  png::write(prefix + "_coverage.png", cov);

  png::Image fid{res, res, 3, {}};
  fid.data.assign(res * res * 3, 0);
  for (int64_t i = 0; i < res * res; ++i) {
    const int32_t f = geom.face_id[i];
    if (f < 0) continue;
    const uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(&f), 4));
    fid.data[i * 3 + 0] = uint8_t(64 + (h & 0xbf));
    fid.data[i * 3 + 1] = uint8_t(64 + ((h >> 8) & 0xbf));
    fid.data[i * 3 + 2] = uint8_t(64 + ((h >> 16) & 0xbf));
  }
  png::write(prefix + "_faceid.png", fid);
  std::printf("wrote %s_coverage.png and %s_faceid.png\n", prefix.c_str(), prefix.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshpose: lifting-and-projection pose transfer on synthetic bodies"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic paired dataset");
  data::DatasetConfig dcfg;
  std::string gen_out = "data";
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--resolution", dcfg.resolution);
  gen->add_option("--figures", dcfg.figures);
  gen->add_option("--backgrounds", dcfg.backgrounds);
  gen->add_option("--poses", dcfg.train_poses_per_figure, "training poses per figure");
  gen->add_option("--test-poses", dcfg.test_poses_per_figure);
  gen->add_option("--seed", dcfg.seed);

  // shared train-config options
  auto add_cfg_opts = [](CLI::App* cmd, std::string* config_path, train::TrainConfig* /*cfg*/,
                         std::vector<std::string>* sets) {
    cmd->add_option("--config", *config_path, "key = value config file");
    cmd->add_option("--set", *sets, "inline override, key=value")->take_all();
  };
  auto resolve_cfg = [](const std::string& config_path, const std::vector<std::string>& sets) {
    train::TrainConfig cfg = train::desk_defaults();
    if (!config_path.empty()) cfg = train::parse_config_file(config_path, cfg);
    for (const auto& s : sets) {
      auto eq = s.find('=');
      check(eq != std::string::npos, "--set wants key=value, got '" + s + "'");
      train::apply_config_line(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    return cfg;
  };

  // train
  auto* tr = app.add_subcommand("train", "train the full model (desk-scale defaults)");
  std::string tr_config, tr_resume;
  std::vector<std::string> tr_sets;
  train::TrainConfig dummy;
  add_cfg_opts(tr, &tr_config, &dummy, &tr_sets);
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");

  // transfer
  auto* tf = app.add_subcommand("transfer", "synthesize a target-pose image");
  std::string tf_config, tf_ckpt, tf_mode = "self", tf_out = "transfer.png";
  std::vector<std::string> tf_sets;
  int64_t tf_src = 0, tf_tgt = 1;
  add_cfg_opts(tf, &tf_config, &dummy, &tf_sets);
  tf->add_option("--checkpoint", tf_ckpt)->required();
  tf->add_option("--source", tf_src, "manifest index of the source sample");
  tf->add_option("--target-pose", tf_tgt, "manifest index providing the target pose");
  tf->add_option("--mode", tf_mode)->check(CLI::IsMember({"self", "cross"}));
  tf->add_option("--out", tf_out);

  // eval
  auto* ev = app.add_subcommand("eval", "self-transfer SSIM / L1 over a split");
  std::string ev_config, ev_ckpt, ev_split = "test";
  std::vector<std::string> ev_sets;
  int ev_pairs = 40;
  uint64_t ev_seed = 7;
  add_cfg_opts(ev, &ev_config, &dummy, &ev_sets);
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--split", ev_split);
  ev->add_option("--pairs", ev_pairs);
  ev->add_option("--seed", ev_seed);

  // gradcheck
  app.add_subcommand("gradcheck", "finite-difference audit of every differentiable op");

  // debug-raster
  auto* dbg = app.add_subcommand("debug-raster", "dump coverage / face-id maps for a record");
  std::string dbg_data = "data", dbg_prefix = "raster";
  int64_t dbg_index = 0;
  dbg->add_option("--data", dbg_data);
  dbg->add_option("--record", dbg_index);
  dbg->add_option("--out-prefix", dbg_prefix);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(dcfg, gen_out);
    if (tr->parsed()) return cmd_train(resolve_cfg(tr_config, tr_sets), tr_resume);
    if (tf->parsed())
      return cmd_transfer(resolve_cfg(tf_config, tf_sets), tf_ckpt, tf_src, tf_tgt, tf_mode,
                          tf_out);
    if (ev->parsed())
      return cmd_eval(resolve_cfg(ev_config, ev_sets), ev_ckpt, ev_split, ev_pairs, ev_seed);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
    if (dbg->parsed()) return cmd_debug_raster(dbg_data, dbg_index, dbg_prefix);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
