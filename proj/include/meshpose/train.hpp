// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <unordered_map>

#include "meshpose/checkpoint.hpp"
#include "meshpose/config.hpp"
#include "meshpose/data.hpp"
#include "meshpose/losses.hpp"
#include "meshpose/models.hpp"

// Training harness. Each step draws a source/target pair batch from a
// history-free pair stream, runs the discriminator update and then the
// generator update, and appends one JSONL record to the loss log. All
// randomness flows from named streams derived from (seed, purpose, step), so
// runs are reproducible and resumable.

namespace meshpose::train {

struct StepStats {
  int64_t step = 0;
  double lr_g = 0, lr_d = 0;
  double d_loss = 0, adv = 0, rec = 0, perc = 0, mask = 0, g_total = 0;
};

std::string stats_to_json(const StepStats& s);

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const data::Dataset& dataset);

  // Full run: trains to total_steps(), logging to <out_dir>/loss_log.jsonl
  // and checkpointing every cfg.checkpoint_every steps plus at the end.
  void run();

  StepStats train_step();  // single step at the current counter
  int64_t current_step() const { return step_; }
  int64_t total_steps() const { return total_steps_; }
  int64_t steps_per_epoch() const { return steps_per_epoch_; }

  void save(const std::string& path) const;
  void resume(const std::string& path);

  struct EvalResult {
    double ssim = 0, l1 = 0;
    int pairs = 0;
  };
  // Self-transfer metrics over a deterministic pair stream from `split`.
  EvalResult evaluate(const std::string& split, int pairs, uint64_t seed);

  // One source->target synthesis. Returns the fused image [3,H,W]; optional
  // outputs for the transfer grid.
  Tensor<float> infer(const data::SampleRecord& src, const data::SampleRecord& tgt,
                      Tensor<float>* coord_vis = nullptr, Tensor<float>* mask_out = nullptr);

  const TrainConfig& config() const { return cfg_; }
  const data::Dataset& dataset() const { return *ds_; }

 private:
  struct SampleTensors {
    Tensor<float> i_s, i_t, i_fg, i_bg, c_s, c_t, s_t;
    std::vector<std::unique_ptr<body::BodyMesh>> meshes;  // stable addresses
    std::vector<models::PoseIO> pose_st, pose_ss;
  };
  SampleTensors prepare_batch(int64_t step);
  const Tensor<float>& image_of(const data::SampleRecord* rec);

  TrainConfig cfg_;
  const data::Dataset* ds_;
  graph::MeshGraph graph_;
  models::ForegroundGenerator<float> fg_;
  models::BackgroundGenerator<float> bg_;
  models::PatchDiscriminator<float> disc_;
  models::PerceptualExtractor<float> perc_;
  losses::LossWeights<float> weights_;
  nn::NamedParams<float> g_params_, d_params_;
  AdamState<float> adam_g_, adam_d_;
  std::unique_ptr<data::PairSampler> pairs_;
  std::unordered_map<const data::SampleRecord*, Tensor<float>> image_cache_;
  int64_t step_ = 0;
  int64_t steps_per_epoch_ = 1;
  int64_t total_steps_ = 1;
};

}  // namespace meshpose::train
