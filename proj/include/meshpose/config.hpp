// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace meshpose::train {

// Training configuration. The constructor defaults mirror the published
// full-scale recipe (30 epochs, generator lr 2e-3 held 5 epochs then decaying
// linearly to 2e-6, discriminator lr fixed at 2e-3, loss weights
// 10/10/1/1/5); desk_defaults() swaps in the minutes-scale CPU setup used by
// the bundled synthetic dataset and the acceptance runs.
struct TrainConfig {
  std::string data_dir = "data";
  std::string out_dir = "runs/default";
  int64_t resolution = 256;
  int64_t batch_size = 4;

  int64_t epochs = 30;
  int64_t steps = 0;  // 0: derive from epochs; nonzero overrides
  int64_t hold_epochs = 5;
  double lr_g = 2e-3;
  double lr_g_final = 2e-6;
  double lr_d = 2e-3;

  double lambda_rec = 10.0;
  double lambda_perc = 10.0;
  double lambda_adv = 1.0;
  double lambda_mask = 1.0;
  double lambda_face = 5.0;  // the face feature extractor is not part of this build

  int64_t width_base = 32;
  int64_t adc_width = 32;
  int64_t disc_width = 32;
  bool disable_3dp = false;
  bool disable_adcnet = false;

  uint64_t seed = 17;
  int64_t checkpoint_every = 500;
  int threads = 0;  // 0 = hardware
};

// Desk-scale profile: 2,000 steps at 64x64 on the default synthetic set.
TrainConfig desk_defaults();

// `key = value` per line, '#' comments. Unknown keys are errors.
TrainConfig parse_config_file(const std::string& path, const TrainConfig& base);
void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value);

// Canonical serialization (sorted keys); its FNV hash is pinned into
// checkpoints so mismatched resumes fail loudly.
std::string canonical_config(const TrainConfig& cfg);
uint64_t config_hash(const TrainConfig& cfg);

// Per-step generator learning rate: held for hold_epochs, then linear from
// lr_g down to lr_g_final at the final step.
double lr_schedule(const TrainConfig& cfg, int64_t step, int64_t steps_per_epoch,
                   int64_t total_steps);

}  // namespace meshpose::train
